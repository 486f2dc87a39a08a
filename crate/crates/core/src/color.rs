//! Color-space conversions (YUV, HSV, CIE Lab) and the Lab color difference.
//!
//! Every conversion exists at pixel level (`*_px`, operating on `[T; 3]`) and
//! image level. Image-level functions are pure and allocate a fresh output.
//!
//! YUV uses the three-decimal BT.601 matrix below verbatim; its inverse is
//! derived from that matrix at compile time rather than taken from the
//! higher-precision standard, so the forward and backward maps are exact
//! inverses of each other up to rounding.

use crate::image::{clamp01, Hsv, Image, Lab, Rgb, Yuv};
use crate::scalar::Real;

pub type Mat3 = [[f64; 3]; 3];

/// RGB → YUV, rows produce Y, U, V.
pub const RGB_TO_YUV: Mat3 = [
    [0.299, 0.587, 0.114],
    [-0.169, -0.331, 0.5],
    [0.5, -0.419, -0.081],
];

/// [`RGB_TO_YUV`] in thousandths. The forward transform evaluates
/// `(M·p) / 1000` on these integers so that the decimal entries are not
/// rounded before summation: white lands on exactly `(1, 0, 0)`.
const RGB_TO_YUV_MILLI: Mat3 = [
    [299.0, 587.0, 114.0],
    [-169.0, -331.0, 500.0],
    [500.0, -419.0, -81.0],
];

/// Numerical inverse of [`RGB_TO_YUV`].
pub const YUV_TO_RGB: Mat3 = invert3(&RGB_TO_YUV);

/// Linear sRGB → CIE XYZ (D65).
pub const LINEAR_SRGB_TO_XYZ: Mat3 = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

pub const XYZ_TO_LINEAR_SRGB: Mat3 = invert3(&LINEAR_SRGB_TO_XYZ);

/// Reference white: the image of linear `(1, 1, 1)`, so the gray axis maps to
/// `a = b = 0` without residual from rounding in the published constants.
pub const D65_WHITE: [f64; 3] = [
    LINEAR_SRGB_TO_XYZ[0][0] + LINEAR_SRGB_TO_XYZ[0][1] + LINEAR_SRGB_TO_XYZ[0][2],
    LINEAR_SRGB_TO_XYZ[1][0] + LINEAR_SRGB_TO_XYZ[1][1] + LINEAR_SRGB_TO_XYZ[1][2],
    LINEAR_SRGB_TO_XYZ[2][0] + LINEAR_SRGB_TO_XYZ[2][1] + LINEAR_SRGB_TO_XYZ[2][2],
];

const LAB_DELTA: f64 = 6.0 / 29.0;

/// Inverse of a 3×3 matrix by the adjugate. Panics (at compile time when used
/// in a const) on a singular matrix.
pub const fn invert3(m: &Mat3) -> Mat3 {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    assert!(det != 0.0, "singular matrix");
    let inv = 1.0 / det;
    [
        [
            c00 * inv,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv,
        ],
        [
            c01 * inv,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv,
        ],
        [
            c02 * inv,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv,
        ],
    ]
}

#[inline]
fn mul3<T: Real>(m: &Mat3, p: [T; 3]) -> [T; 3] {
    std::array::from_fn(|r| T::lit(m[r][0]) * p[0] + T::lit(m[r][1]) * p[1] + T::lit(m[r][2]) * p[2])
}

/// Luma of an RGB pixel; bit-identical to the Y output of [`rgb_to_yuv_px`].
#[inline]
pub fn luma<T: Real>(p: [T; 3]) -> T {
    yuv_row(0, p)
}

#[inline]
fn yuv_row<T: Real>(r: usize, p: [T; 3]) -> T {
    let m = &RGB_TO_YUV_MILLI[r];
    (T::lit(m[0]) * p[0] + T::lit(m[1]) * p[1] + T::lit(m[2]) * p[2]) / T::lit(1000.0)
}

#[inline]
pub fn rgb_to_yuv_px<T: Real>(p: [T; 3]) -> [T; 3] {
    std::array::from_fn(|r| yuv_row(r, p))
}

/// Inverse YUV transform without clamping.
#[inline]
pub fn yuv_to_rgb_px_unclamped<T: Real>(p: [T; 3]) -> [T; 3] {
    mul3(&YUV_TO_RGB, p)
}

#[inline]
pub fn yuv_to_rgb_px<T: Real>(p: [T; 3]) -> [T; 3] {
    yuv_to_rgb_px_unclamped(p).map(clamp01)
}

pub fn rgb_to_yuv<T: Real>(img: &Image<Rgb, T>) -> Image<Yuv, T> {
    img.map_pixels(rgb_to_yuv_px)
}

/// Y plane of an RGB image.
pub fn luma_plane<T: Real>(img: &Image<Rgb, T>) -> crate::image::Plane<T> {
    crate::image::Plane::new(img.width(), img.height(), img.pixels().map(luma).collect())
        .expect("luma plane has one value per pixel")
}

pub fn yuv_to_rgb<T: Real>(img: &Image<Yuv, T>) -> Image<Rgb, T> {
    img.map_pixels(yuv_to_rgb_px)
}

/// Hexcone HSV; hue in degrees `[0, 360)`. Achromatic pixels get `H = 0, S = 0`.
pub fn rgb_to_hsv_px<T: Real>([r, g, b]: [T; 3]) -> [T; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let zero = T::zero();
    let s = if max > zero { delta / max } else { zero };
    if delta <= zero {
        return [zero, zero, max];
    }
    let sixty = T::lit(60.0);
    let mut h = if max == r {
        sixty * ((g - b) / delta)
    } else if max == g {
        sixty * ((b - r) / delta + T::lit(2.0))
    } else {
        sixty * ((r - g) / delta + T::lit(4.0))
    };
    let full = T::lit(360.0);
    if h < zero {
        h = h + full;
    }
    if h >= full {
        h = h - full;
    }
    [h, s, max]
}

pub fn hsv_to_rgb_px<T: Real>([h, s, v]: [T; 3]) -> [T; 3] {
    let c = v * s;
    let six = T::lit(6.0);
    let hp = h / T::lit(60.0) % six;
    let hp = if hp < T::zero() { hp + six } else { hp };
    let x = c * (T::one() - ((hp % T::lit(2.0)) - T::one()).abs());
    let m = v - c;
    let z = T::zero();
    let sector = hp.floor().to_usize().unwrap_or(0).min(5);
    let [r, g, b] = match sector {
        0 => [c, x, z],
        1 => [x, c, z],
        2 => [z, c, x],
        3 => [z, x, c],
        4 => [x, z, c],
        _ => [c, z, x],
    };
    [r + m, g + m, b + m]
}

pub fn rgb_to_hsv<T: Real>(img: &Image<Rgb, T>) -> Image<Hsv, T> {
    img.map_pixels(rgb_to_hsv_px)
}

pub fn hsv_to_rgb<T: Real>(img: &Image<Hsv, T>) -> Image<Rgb, T> {
    img.map_pixels(hsv_to_rgb_px)
}

/// sRGB electro-optical transfer (encoded → linear).
#[inline]
pub fn srgb_to_linear<T: Real>(c: T) -> T {
    if c <= T::lit(0.04045) {
        c / T::lit(12.92)
    } else {
        ((c + T::lit(0.055)) / T::lit(1.055)).powf(T::lit(2.4))
    }
}

#[inline]
fn srgb_to_linear_deriv<T: Real>(c: T) -> T {
    if c <= T::lit(0.04045) {
        T::one() / T::lit(12.92)
    } else {
        T::lit(2.4 / 1.055) * ((c + T::lit(0.055)) / T::lit(1.055)).powf(T::lit(1.4))
    }
}

#[inline]
pub fn linear_to_srgb<T: Real>(c: T) -> T {
    if c <= T::lit(0.003_130_8) {
        c * T::lit(12.92)
    } else {
        T::lit(1.055) * c.powf(T::lit(1.0 / 2.4)) - T::lit(0.055)
    }
}

#[inline]
fn lab_f<T: Real>(t: T) -> T {
    let d = LAB_DELTA;
    if t > T::lit(d * d * d) {
        t.cbrt()
    } else {
        t / T::lit(3.0 * d * d) + T::lit(4.0 / 29.0)
    }
}

#[inline]
fn lab_f_deriv<T: Real>(t: T) -> T {
    let d = LAB_DELTA;
    if t > T::lit(d * d * d) {
        T::one() / (T::lit(3.0) * t.cbrt() * t.cbrt())
    } else {
        T::one() / T::lit(3.0 * d * d)
    }
}

#[inline]
fn lab_f_inv<T: Real>(f: T) -> T {
    let d = LAB_DELTA;
    if f > T::lit(d) {
        f * f * f
    } else {
        T::lit(3.0 * d * d) * (f - T::lit(4.0 / 29.0))
    }
}

#[inline]
fn fxyz<T: Real>(p: [T; 3]) -> [T; 3] {
    let xyz = mul3(&LINEAR_SRGB_TO_XYZ, p.map(srgb_to_linear));
    std::array::from_fn(|i| lab_f(xyz[i] / T::lit(D65_WHITE[i])))
}

#[inline]
fn lab_from_f<T: Real>([fx, fy, fz]: [T; 3]) -> [T; 3] {
    [
        T::lit(116.0) * fy - T::lit(16.0),
        T::lit(500.0) * (fx - fy),
        T::lit(200.0) * (fy - fz),
    ]
}

/// sRGB (D65) → CIE Lab. Accepts values outside `[0, 1]`.
pub fn rgb_to_lab_px<T: Real>(p: [T; 3]) -> [T; 3] {
    lab_from_f(fxyz(p))
}

/// Lab value of a pixel together with the Jacobian `∂(L, a, b) / ∂(R, G, B)`.
pub fn rgb_to_lab_jacobian<T: Real>(p: [T; 3]) -> ([T; 3], [[T; 3]; 3]) {
    let lin = p.map(srgb_to_linear);
    let dlin = p.map(srgb_to_linear_deriv);
    let xyz = mul3(&LINEAR_SRGB_TO_XYZ, lin);
    let t: [T; 3] = std::array::from_fn(|i| xyz[i] / T::lit(D65_WHITE[i]));
    let f = t.map(lab_f);
    // ∂f_i/∂rgb_j = f'(t_i) / white_i · M[i][j] · lin'(rgb_j)
    let df: [[T; 3]; 3] = std::array::from_fn(|i| {
        let s = lab_f_deriv(t[i]) / T::lit(D65_WHITE[i]);
        std::array::from_fn(|j| s * T::lit(LINEAR_SRGB_TO_XYZ[i][j]) * dlin[j])
    });
    let cols: [[T; 3]; 3] = std::array::from_fn(|j| {
        [
            T::lit(116.0) * df[1][j],
            T::lit(500.0) * (df[0][j] - df[1][j]),
            T::lit(200.0) * (df[1][j] - df[2][j]),
        ]
    });
    // built column-major; transpose into rows L, a, b
    let jac: [[T; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| cols[c][r]));
    (lab_from_f(f), jac)
}

/// CIE Lab → sRGB without clamping.
pub fn lab_to_rgb_px_unclamped<T: Real>([l, a, b]: [T; 3]) -> [T; 3] {
    let fy = (l + T::lit(16.0)) / T::lit(116.0);
    let fx = fy + a / T::lit(500.0);
    let fz = fy - b / T::lit(200.0);
    let xyz: [T; 3] = std::array::from_fn(|i| lab_f_inv([fx, fy, fz][i]) * T::lit(D65_WHITE[i]));
    mul3(&XYZ_TO_LINEAR_SRGB, xyz).map(linear_to_srgb)
}

pub fn lab_to_rgb_px<T: Real>(p: [T; 3]) -> [T; 3] {
    lab_to_rgb_px_unclamped(p).map(clamp01)
}

pub fn rgb_to_lab<T: Real>(img: &Image<Rgb, T>) -> Image<Lab, T> {
    img.map_pixels(rgb_to_lab_px)
}

pub fn lab_to_rgb<T: Real>(img: &Image<Lab, T>) -> Image<Rgb, T> {
    img.map_pixels(lab_to_rgb_px)
}

/// Euclidean distance in CIE Lab (CIE76 ΔE).
pub fn delta_e<T: Real>(p1: [T; 3], p2: [T; 3]) -> T {
    let dl = p1[0] - p2[0];
    let da = p1[1] - p2[1];
    let db = p1[2] - p2[2];
    (dl * dl + da * da + db * db).sqrt()
}
