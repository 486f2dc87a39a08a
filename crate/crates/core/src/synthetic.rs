//! Synthetic paired datasets with a known answer, for convergence checks and
//! loss ablations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::rgb_to_hsv_px;
use crate::exif::{ExifVector, NormalizedCondition};
use crate::image::{Image, Rgb};
use crate::model::{forward, EnhancerParams, ToneCurve, COLOR_CURVES};
use crate::train::SamplePair;

/// Plausible camera settings; shutter speed is the APEX value of the exposure time.
pub fn random_exif<R: Rng>(rng: &mut R) -> ExifVector {
    let exposure_time = 2f64.powf(-rng.gen_range(3.0..10.0));
    ExifVector {
        iso: [100.0, 200.0, 400.0, 800.0, 1600.0][rng.gen_range(0..5)],
        exposure_time,
        fnumber: rng.gen_range(1.8..11.0),
        shutter_speed: -exposure_time.log2(),
        focal_length: rng.gen_range(18.0..200.0),
        bias_value: rng.gen_range(-1.0..1.0),
    }
}

/// Smooth image: bilinear blend of four random corner colors plus mild noise.
pub fn random_photo<R: Rng>(rng: &mut R, width: usize, height: usize) -> Image<Rgb, f64> {
    let corners: [[f64; 3]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.02..0.98)));
    Image::from_fn(width, height, |x, y| {
        let u = x as f64 / (width.max(2) - 1) as f64;
        let v = y as f64 / (height.max(2) - 1) as f64;
        std::array::from_fn(|c| {
            let top = corners[0][c] * (1.0 - u) + corners[1][c] * u;
            let bottom = corners[2][c] * (1.0 - u) + corners[3][c] * u;
            let noise = rng.gen_range(-0.03..0.03);
            (top * (1.0 - v) + bottom * v + noise).clamp(0.0, 1.0)
        })
    })
}

/// A fixed in-family retouch: a brightening luma curve, mildly bent
/// per-channel curves with small cross-channel terms, no spatial term and
/// inert condition branches.
pub fn hidden_retouch(knots: usize, hidden: usize) -> EnhancerParams<f64> {
    let mut p = EnhancerParams::zeros(knots, hidden);
    let n = (knots - 1) as f64;
    let xs: Vec<f64> = (0..knots).map(|i| i as f64 / n).collect();
    p.stage1_curve = ToneCurve::from_knots(xs.iter().map(|&x| x.powf(0.75)).collect()).expect("knots");
    let bend = [0.06, -0.04, 0.05];
    let cross = [[0.0, 0.05, -0.03], [0.02, 0.0, 0.03], [-0.04, 0.02, 0.0]];
    for k in 0..COLOR_CURVES {
        let (o, i) = (k / 3, k % 3);
        let knots: Vec<f64> = xs
            .iter()
            .map(|&x| {
                if o == i {
                    x + bend[o] * (std::f64::consts::PI * x).sin()
                } else {
                    cross[o][i] * x
                }
            })
            .collect();
        p.color_curves[k] = ToneCurve::from_knots(knots).expect("knots");
    }
    p
}

#[derive(Clone, Debug)]
pub struct CurveDataset {
    pub pairs: Vec<SamplePair<f64>>,
    /// The retouch that produced every ground truth.
    pub target: EnhancerParams<f64>,
}

/// `count` pairs whose ground truth is [`hidden_retouch`] applied to a random
/// photo. Conditions are random camera settings; the retouch ignores them.
pub fn curve_dataset(count: usize, width: usize, height: usize, knots: usize, hidden: usize, seed: u64) -> CurveDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = hidden_retouch(knots, hidden);
    let pairs = (0..count)
        .map(|i| {
            let input = random_photo(&mut rng, width, height);
            let cond: NormalizedCondition = random_exif(&mut rng).normalize();
            let gt = forward(&input, &cond, &target);
            SamplePair::new(input, gt, cond, format!("synthetic-{i:03}")).expect("same shape")
        })
        .collect();
    CurveDataset { pairs, target }
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Clone, Debug)]
pub struct SpotDataset {
    pub pairs: Vec<SamplePair<f64>>,
    pub spots: Vec<Region>,
}

/// Mostly warm, low-saturation scenes with one small dull-blue spot. In the
/// ground truth the scene is brightened and the spot becomes a saturated
/// blue. The spot covers about `spot_fraction` of each image.
pub fn saturated_spot_dataset(count: usize, width: usize, height: usize, spot_fraction: f64, seed: u64) -> SpotDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = |len: usize| ((len as f64 * spot_fraction.sqrt()).round() as usize).clamp(1, len);
    let (sw, sh) = (side(width), side(height));
    let mut pairs = Vec::with_capacity(count);
    let mut spots = Vec::with_capacity(count);
    for i in 0..count {
        let x0 = rng.gen_range(0..=width - sw);
        let y0 = rng.gen_range(0..=height - sh);
        let spot = Region {
            x0,
            y0,
            x1: x0 + sw,
            y1: y0 + sh,
        };
        let mut input = Image::filled(width, height, [0.0; 3]);
        let mut gt = Image::filled(width, height, [0.0; 3]);
        for y in 0..height {
            for x in 0..width {
                let jitter = rng.gen_range(-0.03..0.03);
                let (a, b) = if spot.contains(x, y) {
                    let l = 0.5 + jitter;
                    ([l - 0.12, l - 0.04, l + 0.1], [l - 0.38, l - 0.12, l + 0.3])
                } else {
                    let l = rng.gen_range(0.25..0.65);
                    let a = [l + 0.06, l + 0.02, l - 0.05];
                    (a, a.map(|v: f64| (v * 1.25 + 0.03).min(1.0)))
                };
                input.set_pixel(x, y, a.map(|v: f64| v.clamp(0.0, 1.0)));
                gt.set_pixel(x, y, b.map(|v: f64| v.clamp(0.0, 1.0)));
            }
        }
        let cond = random_exif(&mut rng).normalize();
        pairs.push(SamplePair::new(input, gt, cond, format!("spot-{i:03}")).expect("same shape"));
        spots.push(spot);
    }
    SpotDataset { pairs, spots }
}

/// Mean HSV saturation over a region.
pub fn mean_saturation(img: &Image<Rgb, f64>, region: &Region) -> f64 {
    let mut sum = 0.0;
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            sum += rgb_to_hsv_px(img.pixel(x, y))[1];
        }
    }
    sum / region.area() as f64
}
