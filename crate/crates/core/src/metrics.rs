//! Full-reference quality metrics on unit-range RGB images.

use crate::color::luma_plane;
use crate::error::Result;
use crate::image::{ColorSpace, Image, Plane, Rgb};
use crate::scalar::Real;

pub fn mse<T: Real>(a: &Image<Rgb, T>, b: &Image<Rgb, T>) -> Result<T> {
    a.ensure_same_shape(b)?;
    let n = T::lit(a.data().len() as f64);
    Ok(compensated_sum(a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y) * (x - y))) / n)
}

/// Neumaier summation. A plain running sum of many equal squares drifts by
/// several ulps, which shows up directly in PSNR.
fn compensated_sum<T: Real>(values: impl Iterator<Item = T>) -> T {
    let (mut sum, mut carry) = (T::zero(), T::zero());
    for v in values {
        let t = sum + v;
        carry = carry + if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + carry
}

/// Largest absolute per-channel difference.
pub fn max_abs_diff<S: ColorSpace, T: Real>(a: &Image<S, T>, b: &Image<S, T>) -> Result<T> {
    a.ensure_same_shape(b)?;
    Ok(a.data().iter().zip(b.data()).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs())))
}

/// `10·log10(1 / MSE)` in dB over all pixels and channels; `+∞` for identical images.
pub fn psnr<T: Real>(a: &Image<Rgb, T>, b: &Image<Rgb, T>) -> Result<T> {
    let m = mse(a, b)?;
    if m == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (T::one() / m).log10())
}

#[derive(Clone, Debug)]
pub struct SsimConfig {
    pub radius: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    /// 11×11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 1.
    fn default() -> Self {
        Self {
            radius: 5,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

pub fn ssim<T: Real>(a: &Image<Rgb, T>, b: &Image<Rgb, T>) -> Result<T> {
    ssim_with(a, b, &SsimConfig::default())
}

/// Mean SSIM on luma. Windows are truncated at the borders and their weights
/// renormalized, so every pixel contributes and tiny images are handled.
pub fn ssim_with<T: Real>(a: &Image<Rgb, T>, b: &Image<Rgb, T>, cfg: &SsimConfig) -> Result<T> {
    a.ensure_same_shape(b)?;
    let map = ssim_map(&luma_plane(a), &luma_plane(b), cfg);
    let n = T::lit(map.data().len() as f64);
    Ok(map.data().iter().copied().sum::<T>() / n)
}

pub fn gaussian_weights(radius: usize, sigma: f64) -> Vec<f64> {
    (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Separable normalized Gaussian blur with border truncation.
fn blur<T: Real>(src: &[T], width: usize, height: usize, w: &[T], r: usize) -> Vec<T> {
    let pass = |src: &[T], along_x: bool| -> Vec<T> {
        let mut out = vec![T::zero(); src.len()];
        for y in 0..height {
            for x in 0..width {
                let (pos, len) = if along_x { (x, width) } else { (y, height) };
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(len - 1);
                let mut acc = T::zero();
                let mut norm = T::zero();
                for q in lo..=hi {
                    let wt = w[q + r - pos];
                    let idx = if along_x { y * width + q } else { q * width + x };
                    acc = acc + wt * src[idx];
                    norm = norm + wt;
                }
                out[y * width + x] = acc / norm;
            }
        }
        out
    };
    let h = pass(src, true);
    pass(&h, false)
}

/// Per-pixel SSIM of two planes.
pub fn ssim_map<T: Real>(a: &Plane<T>, b: &Plane<T>, cfg: &SsimConfig) -> Plane<T> {
    let (w, h) = a.dims();
    let weights: Vec<T> = gaussian_weights(cfg.radius, cfg.sigma).into_iter().map(T::lit).collect();
    let r = cfg.radius;
    let (xa, xb) = (a.data(), b.data());
    let sq = |u: &[T], v: &[T]| -> Vec<T> { u.iter().zip(v).map(|(&p, &q)| p * q).collect() };
    let mu_a = blur(xa, w, h, &weights, r);
    let mu_b = blur(xb, w, h, &weights, r);
    let e_aa = blur(&sq(xa, xa), w, h, &weights, r);
    let e_bb = blur(&sq(xb, xb), w, h, &weights, r);
    let e_ab = blur(&sq(xa, xb), w, h, &weights, r);
    let c1 = T::lit((cfg.k1 * cfg.dynamic_range).powi(2));
    let c2 = T::lit((cfg.k2 * cfg.dynamic_range).powi(2));
    let two = T::lit(2.0);
    let data = (0..w * h)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((two * ma * mb + c1) * (two * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect();
    Plane::new(w, h, data).expect("one value per pixel")
}
