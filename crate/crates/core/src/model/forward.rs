use crate::color::luma;
use crate::error::Result;
use crate::exif::NormalizedCondition;
use crate::image::{check_shape, clamp01, Image, Plane, Rgb};
use crate::luminance::{pixel_gain, GainMap, DEFAULT_EPSILON};
use crate::scalar::Real;

use super::branch::BranchTrace;
use super::curve::{eval_segment, locate, slope_knots, Segment};
use super::{EnhancerParams, COLOR_CURVES};

/// Per-pixel intermediates of a forward pass.
#[derive(Clone, Debug)]
pub struct PixelTrace<T> {
    pub input: [T; 3],
    pub luma: T,
    pub luma_segment: Segment<T>,
    /// Source luma was at least epsilon, so the gain is `Y' / Y`.
    pub active: bool,
    pub gain: T,
    pub bright: [T; 3],
    pub bright_segments: [Segment<T>; 3],
    /// `curve_values[o][i] = g_oi(bright_i)`.
    pub curve_values: [[T; 3]; 3],
    /// Pre-clamp output.
    pub output: [T; 3],
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub width: usize,
    pub height: usize,
    /// Stage-1 knots after condition offsets.
    pub luma_knots: Vec<T>,
    /// Stage-2 curve gains `γ_oi`, indexed `o * 3 + i`.
    pub gammas: [T; COLOR_CURVES],
    pub stage1_branch: BranchTrace<T>,
    pub stage2_branch: BranchTrace<T>,
    pub pixels: Vec<PixelTrace<T>>,
}

#[inline]
fn coords<T: Real>(x: usize, y: usize, width: usize, height: usize) -> (T, T) {
    (
        T::lit(x as f64) / T::lit(width as f64),
        T::lit(y as f64) / T::lit(height as f64),
    )
}

#[inline]
fn spatial_term<T: Real>(s: &[T; 4], u: T, v: T) -> T {
    s[0] * u + s[1] * v + s[2] * u * v + s[3]
}

fn effective_luma_knots<T: Real>(p: &EnhancerParams<T>, branch: &BranchTrace<T>) -> Vec<T> {
    p.stage1_curve
        .knots()
        .iter()
        .zip(&branch.output)
        .map(|(&k, &off)| k + off)
        .collect()
}

fn curve_gains<T: Real>(branch: &BranchTrace<T>) -> [T; COLOR_CURVES] {
    std::array::from_fn(|k| T::one() + branch.output[k])
}

struct Stage1Pixel<T> {
    luma: T,
    segment: Segment<T>,
    active: bool,
    gain: T,
    bright: [T; 3],
}

#[inline]
fn stage1_pixel<T: Real>(px: [T; 3], knots: &[T]) -> Stage1Pixel<T> {
    let y = luma(px);
    let segment = locate(knots.len(), y);
    let eps = T::lit(DEFAULT_EPSILON);
    let target = eval_segment(knots, segment);
    let gain = pixel_gain(target, y, eps);
    Stage1Pixel {
        luma: y,
        segment,
        active: y >= eps,
        gain,
        bright: px.map(|v| v * gain),
    }
}

struct Stage2Pixel<T> {
    segments: [Segment<T>; 3],
    values: [[T; 3]; 3],
    output: [T; 3],
}

#[inline]
fn stage2_pixel<T: Real>(
    bright: [T; 3],
    u: T,
    v: T,
    p: &EnhancerParams<T>,
    gammas: &[T; COLOR_CURVES],
) -> Stage2Pixel<T> {
    let segments = bright.map(|b| locate(p.knots, b));
    let values: [[T; 3]; 3] =
        std::array::from_fn(|o| std::array::from_fn(|i| eval_segment(p.color_curves[o * 3 + i].knots(), segments[i])));
    let output = std::array::from_fn(|o| {
        let mut acc = gammas[o * 3] * values[o][0];
        acc = acc + gammas[o * 3 + 1] * values[o][1];
        acc = acc + gammas[o * 3 + 2] * values[o][2];
        acc + spatial_term(&p.spatial[o], u, v)
    });
    Stage2Pixel {
        segments,
        values,
        output,
    }
}

/// Brightening stage: luma curve → gain map → gained (unclamped) image.
pub fn stage1_forward<T: Real>(
    img: &Image<Rgb, T>,
    cond: &NormalizedCondition<T>,
    p: &EnhancerParams<T>,
) -> (Image<Rgb, T>, GainMap<T>) {
    let branch = p.stage1_condition.forward(cond);
    let knots = effective_luma_knots(p, &branch);
    let mut gains = Vec::with_capacity(img.pixel_count());
    let bright = img.map_pixels(|px| {
        let s = stage1_pixel(px, &knots);
        gains.push(s.gain);
        s.bright
    });
    let plane = Plane::new(img.width(), img.height(), gains).expect("one gain per pixel");
    (bright, GainMap::from_plane(plane))
}

/// Color stage without the final clamp.
pub fn stage2_forward_unclamped<T: Real>(
    bright: &Image<Rgb, T>,
    cond: &NormalizedCondition<T>,
    p: &EnhancerParams<T>,
) -> Image<Rgb, T> {
    let gammas = curve_gains(&p.stage2_condition.forward(cond));
    let (w, h) = bright.dims();
    Image::from_fn(w, h, |x, y| {
        let (u, v) = coords(x, y, w, h);
        stage2_pixel(bright.pixel(x, y), u, v, p, &gammas).output
    })
}

pub fn stage2_forward<T: Real>(
    bright: &Image<Rgb, T>,
    cond: &NormalizedCondition<T>,
    p: &EnhancerParams<T>,
) -> Image<Rgb, T> {
    stage2_forward_unclamped(bright, cond, p).clamped()
}

/// Full cascade, clamped to `[0, 1]` only at the end.
pub fn forward<T: Real>(img: &Image<Rgb, T>, cond: &NormalizedCondition<T>, p: &EnhancerParams<T>) -> Image<Rgb, T> {
    forward_trace(img, cond, p).output()
}

pub fn forward_trace<T: Real>(
    img: &Image<Rgb, T>,
    cond: &NormalizedCondition<T>,
    p: &EnhancerParams<T>,
) -> ForwardTrace<T> {
    let stage1_branch = p.stage1_condition.forward(cond);
    let stage2_branch = p.stage2_condition.forward(cond);
    let luma_knots = effective_luma_knots(p, &stage1_branch);
    let gammas = curve_gains(&stage2_branch);
    let (w, h) = img.dims();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let input = img.pixel(x, y);
            let s1 = stage1_pixel(input, &luma_knots);
            let (u, v) = coords(x, y, w, h);
            let s2 = stage2_pixel(s1.bright, u, v, p, &gammas);
            pixels.push(PixelTrace {
                input,
                luma: s1.luma,
                luma_segment: s1.segment,
                active: s1.active,
                gain: s1.gain,
                bright: s1.bright,
                bright_segments: s2.segments,
                curve_values: s2.values,
                output: s2.output,
            });
        }
    }
    ForwardTrace {
        width: w,
        height: h,
        luma_knots,
        gammas,
        stage1_branch,
        stage2_branch,
        pixels,
    }
}

impl<T: Real> ForwardTrace<T> {
    pub fn output_unclamped(&self) -> Image<Rgb, T> {
        Image::from_pixels(self.width, self.height, self.pixels.iter().map(|p| p.output)).expect("shape")
    }

    pub fn output(&self) -> Image<Rgb, T> {
        Image::from_pixels(self.width, self.height, self.pixels.iter().map(|p| p.output.map(clamp01)))
            .expect("shape")
    }

    pub fn bright(&self) -> Image<Rgb, T> {
        Image::from_pixels(self.width, self.height, self.pixels.iter().map(|p| p.bright)).expect("shape")
    }

    pub fn gain(&self) -> GainMap<T> {
        GainMap::from_plane(
            Plane::new(self.width, self.height, self.pixels.iter().map(|p| p.gain).collect()).expect("shape"),
        )
    }

    /// Discrete state of every piecewise-linear choice made in the pass:
    /// curve segments, the epsilon guard, clamp sides and ReLU signs. Within
    /// a region of parameter space where this is constant the output is a
    /// smooth function of the parameters.
    pub fn regime(&self) -> Vec<i64> {
        let mut r = Vec::with_capacity(self.pixels.len() * 8 + 64);
        for p in &self.pixels {
            r.push(p.luma_segment.index as i64);
            r.push(p.active as i64);
            for s in &p.bright_segments {
                r.push(s.index as i64);
            }
            for o in p.output {
                r.push(if o < T::zero() {
                    -1
                } else if o > T::one() {
                    1
                } else {
                    0
                });
            }
        }
        for z in self.stage1_branch.pre_activation.iter().chain(&self.stage2_branch.pre_activation) {
            r.push((*z > T::zero()) as i64);
        }
        r
    }
}

/// Gradient of `Σ grad_out ⊙ forward(img)` with respect to every parameter.
/// Pixels clamped at the output pass no gradient.
pub fn backward<T: Real>(
    img: &Image<Rgb, T>,
    cond: &NormalizedCondition<T>,
    p: &EnhancerParams<T>,
    grad_out: &Image<Rgb, T>,
) -> Result<EnhancerParams<T>> {
    let trace = forward_trace(img, cond, p);
    backward_with(p, cond, &trace, Some(grad_out), None)
}

/// Backward pass from a recorded trace. `grad_out` is the gradient at the
/// final (clamped) output; `grad_bright` optionally adds a gradient at the
/// unclamped stage-1 output.
pub fn backward_with<T: Real>(
    p: &EnhancerParams<T>,
    cond: &NormalizedCondition<T>,
    trace: &ForwardTrace<T>,
    grad_out: Option<&Image<Rgb, T>>,
    grad_bright: Option<&Image<Rgb, T>>,
) -> Result<EnhancerParams<T>> {
    let dims = (trace.width, trace.height);
    if let Some(g) = grad_out {
        check_shape(dims, g.dims())?;
    }
    if let Some(g) = grad_bright {
        check_shape(dims, g.dims())?;
    }
    let m = p.knots;
    let mut grad = p.zeros_like();
    let mut d_knots1 = vec![T::zero(); m];
    let mut d_gamma = [T::zero(); COLOR_CURVES];
    let zero = T::zero();

    for (idx, px) in trace.pixels.iter().enumerate() {
        let (x, y) = (idx % trace.width, idx / trace.width);
        let (u, v) = coords::<T>(x, y, trace.width, trace.height);

        let delta: [T; 3] = match grad_out {
            Some(g) => {
                let g = g.pixel_at(idx);
                std::array::from_fn(|o| {
                    let out = px.output[o];
                    if out >= zero && out <= T::one() {
                        g[o]
                    } else {
                        zero
                    }
                })
            }
            None => [zero; 3],
        };

        let mut d_bright = match grad_bright {
            Some(g) => g.pixel_at(idx),
            None => [zero; 3],
        };

        for o in 0..3 {
            let d = delta[o];
            if d == zero {
                continue;
            }
            let s = &mut grad.spatial[o];
            s[0] = s[0] + d * u;
            s[1] = s[1] + d * v;
            s[2] = s[2] + d * u * v;
            s[3] = s[3] + d;
            for i in 0..3 {
                let k = o * 3 + i;
                let gamma = trace.gammas[k];
                d_gamma[k] = d_gamma[k] + d * px.curve_values[o][i];
                let seg = px.bright_segments[i];
                let dv = d * gamma;
                let knots = grad.color_curves[k].knots_mut();
                knots[seg.index] = knots[seg.index] + dv * (T::one() - seg.frac);
                knots[seg.index + 1] = knots[seg.index + 1] + dv * seg.frac;
                d_bright[i] = d_bright[i] + dv * slope_knots(p.color_curves[k].knots(), seg);
            }
        }

        if px.active {
            // bright_c = input_c · Y'/Y
            let d_gain = d_bright[0] * px.input[0] + d_bright[1] * px.input[1] + d_bright[2] * px.input[2];
            let d_target = d_gain / px.luma;
            let seg = px.luma_segment;
            d_knots1[seg.index] = d_knots1[seg.index] + d_target * (T::one() - seg.frac);
            d_knots1[seg.index + 1] = d_knots1[seg.index + 1] + d_target * seg.frac;
        }
    }

    for (g, d) in grad.stage1_curve.knots_mut().iter_mut().zip(&d_knots1) {
        *g = *g + *d;
    }
    p.stage1_condition
        .backward(cond, &trace.stage1_branch, &d_knots1, &mut grad.stage1_condition);
    p.stage2_condition
        .backward(cond, &trace.stage2_branch, &d_gamma, &mut grad.stage2_condition);
    Ok(grad)
}
