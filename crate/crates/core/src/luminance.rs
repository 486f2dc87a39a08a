//! Gain maps: per-pixel luma ratios `Y' / Y` applied equally to R, G and B,
//! so brightness moves without disturbing channel proportions (hue).

use crate::error::Result;
use crate::image::{check_shape, clamp01, Image, Plane, Rgb};
use crate::scalar::Real;

/// Pixels whose source luma falls below this get a unit gain.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GainMap<T = f64> {
    gain: Plane<T>,
}

impl<T: Real> GainMap<T> {
    pub fn from_plane(gain: Plane<T>) -> Self {
        Self { gain }
    }

    pub fn uniform(width: usize, height: usize, g: T) -> Self {
        Self {
            gain: Plane::filled(width, height, g),
        }
    }

    pub fn plane(&self) -> &Plane<T> {
        &self.gain
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gain.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.gain.get(x, y)
    }

    pub fn values(&self) -> &[T] {
        self.gain.data()
    }

    /// All gains finite and non-negative.
    pub fn is_valid(&self) -> bool {
        self.values().iter().all(|g| g.is_finite() && *g >= T::zero())
    }

    pub fn max(&self) -> T {
        self.values().iter().fold(T::zero(), |m, &g| m.max(g))
    }

    /// Gains divided by the maximum gain (for 16-bit export), and that maximum.
    /// An all-zero map is returned unchanged with maximum 0.
    pub fn normalized(&self) -> (Plane<T>, T) {
        let max = self.max();
        if max == T::zero() {
            return (self.gain.clone(), max);
        }
        (self.gain.map(|&g| g / max), max)
    }
}

/// Gain for one pixel: `target / source`, or 1 where `source < epsilon`.
#[inline]
pub fn pixel_gain<T: Real>(target: T, source: T, epsilon: T) -> T {
    if source >= epsilon {
        target / source
    } else {
        T::one()
    }
}

pub fn compute_gainmap<T: Real>(y_target: &Plane<T>, y_source: &Plane<T>, epsilon: T) -> Result<GainMap<T>> {
    check_shape(y_source.dims(), y_target.dims())?;
    if !(epsilon > T::zero()) {
        return Err(crate::Error::invalid("epsilon must be positive"));
    }
    let data = y_target
        .data()
        .iter()
        .zip(y_source.data())
        .map(|(&t, &s)| pixel_gain(t, s, epsilon))
        .collect();
    let (w, h) = y_source.dims();
    Ok(GainMap {
        gain: Plane::new(w, h, data)?,
    })
}

/// Gain map that carries `source`'s luma onto `target`'s.
pub fn gainmap_between<T: Real>(target: &Image<Rgb, T>, source: &Image<Rgb, T>, epsilon: T) -> Result<GainMap<T>> {
    compute_gainmap(&crate::color::luma_plane(target), &crate::color::luma_plane(source), epsilon)
}

/// Multiplies every channel of each pixel by that pixel's gain.
pub fn apply_gainmap<T: Real>(img: &Image<Rgb, T>, g: &GainMap<T>, clamp: bool) -> Result<Image<Rgb, T>> {
    check_shape(img.dims(), g.dims())?;
    let mut out = img.clone();
    for (px, &gain) in out.data_mut().chunks_exact_mut(3).zip(g.values()) {
        for v in px.iter_mut() {
            *v = *v * gain;
            if clamp {
                *v = clamp01(*v);
            }
        }
    }
    Ok(out)
}
