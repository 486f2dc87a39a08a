//! Pixel containers: three-channel images tagged with their color space, and
//! single-channel planes.

use std::fmt::Debug;
use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compile-time tag naming the meaning of an image's three channels.
pub trait ColorSpace: Copy + Clone + Debug + Default + PartialEq + Send + Sync + 'static {
    const NAME: &'static str;
    const CHANNELS: [&'static str; 3];
}

macro_rules! color_space {
    ($(#[$doc:meta])* $name:ident, $label:literal, [$a:literal, $b:literal, $c:literal]) => {
        $(#[$doc])*
        #[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
        pub struct $name;

        impl ColorSpace for $name {
            const NAME: &'static str = $label;
            const CHANNELS: [&'static str; 3] = [$a, $b, $c];
        }
    };
}

color_space!(
    /// Nonlinear sRGB-encoded R, G, B in `[0, 1]`.
    Rgb, "rgb", ["R", "G", "B"]
);
color_space!(
    /// Luma plus two color differences; Y in `[0, 1]`, U and V in `[-0.5, 0.5]`.
    Yuv, "yuv", ["Y", "U", "V"]
);
color_space!(
    /// Hexcone hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
    Hsv, "hsv", ["H", "S", "V"]
);
color_space!(
    /// CIE L*a*b* relative to D65, L in `[0, 100]`.
    Lab, "lab", ["L", "a", "b"]
);

/// Row-major `height × width × 3` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<S, T = f64> {
    width: usize,
    height: usize,
    data: Vec<T>,
    _space: PhantomData<S>,
}

impl<S: ColorSpace, T: Real> Image<S, T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "{} image data has {} values, expected {}×{}×3 = {}",
                S::NAME,
                data.len(),
                width,
                height,
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            _space: PhantomData,
        })
    }

    pub fn filled(width: usize, height: usize, px: [T; 3]) -> Self {
        Self::from_fn(width, height, |_, _| px)
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel in row-major order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
            _space: PhantomData,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: impl IntoIterator<Item = [T; 3]>) -> Result<Self> {
        let data: Vec<T> = pixels.into_iter().flatten().collect();
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn pixel_at(&self, index: usize) -> [T; 3] {
        let i = index * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, px: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [T; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Per-pixel map into another (or the same) color space.
    pub fn map_pixels<S2: ColorSpace, U: Real>(&self, mut f: impl FnMut([T; 3]) -> [U; 3]) -> Image<S2, U> {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.pixels() {
            data.extend_from_slice(&f(px));
        }
        Image {
            width: self.width,
            height: self.height,
            data,
            _space: PhantomData,
        }
    }

    pub fn cast<U: Real>(&self) -> Image<S, U> {
        self.map_pixels(|p| p.map(|v| U::lit(v.as_f64())))
    }

    /// Reinterprets the channels as another color space without touching values.
    pub fn retag<S2: ColorSpace>(self) -> Image<S2, T> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data,
            _space: PhantomData,
        }
    }

    pub fn channel(&self, c: usize) -> Plane<T> {
        assert!(c < 3, "channel index {c} out of range");
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn ensure_same_shape<S2: ColorSpace, U: Real>(&self, other: &Image<S2, U>) -> Result<()> {
        check_shape(self.dims(), other.dims())
    }

    /// Nearest-neighbor upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        Self::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.pixel(x / factor, y / factor)
        })
    }

    /// Keeps every `factor`-th pixel, starting from the top-left one.
    pub fn decimate(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        Self::from_fn(self.width.div_ceil(factor), self.height.div_ceil(factor), |x, y| {
            self.pixel(x * factor, y * factor)
        })
    }

    /// Bilinear resampling with pixel-center alignment and edge replication.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let sample = |pos: f64, len: usize| -> (usize, usize, T) {
            let p = (pos.max(0.0)).min((len - 1) as f64);
            let i0 = p.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, T::lit(p - i0 as f64))
        };
        Self::from_fn(width, height, |x, y| {
            let (x0, x1, fx) = sample((x as f64 + 0.5) * sx - 0.5, self.width);
            let (y0, y1, fy) = sample((y as f64 + 0.5) * sy - 0.5, self.height);
            let (p00, p10, p01, p11) = (
                self.pixel(x0, y0),
                self.pixel(x1, y0),
                self.pixel(x0, y1),
                self.pixel(x1, y1),
            );
            std::array::from_fn(|c| {
                let top = p00[c] + (p10[c] - p00[c]) * fx;
                let bottom = p01[c] + (p11[c] - p01[c]) * fx;
                top + (bottom - top) * fy
            })
        })
    }

    /// Resizes so the longer side equals `long_edge`, keeping the aspect ratio.
    pub fn resize_long_edge(&self, long_edge: usize) -> Result<Self> {
        if long_edge == 0 {
            return Err(Error::invalid("long edge must be positive"));
        }
        let (w, h) = self.dims();
        if w == 0 || h == 0 {
            return Err(Error::invalid("cannot resize an empty image"));
        }
        let (nw, nh) = if w >= h {
            (long_edge, ((h as f64 * long_edge as f64 / w as f64).round() as usize).max(1))
        } else {
            (((w as f64 * long_edge as f64 / h as f64).round() as usize).max(1), long_edge)
        };
        Ok(self.resize_bilinear(nw, nh))
    }
}

impl<T: Real> Image<Rgb, T> {
    pub fn clamped(&self) -> Self {
        self.map_pixels(|p| p.map(clamp01))
    }

    pub fn is_in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| v >= T::zero() && v <= T::one())
    }
}

#[inline]
pub fn clamp01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

pub(crate) fn check_shape(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, actual })
    }
}

/// Row-major `height × width` single-channel plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T = f64> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "plane data has {} values, expected {}×{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: T) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type Img = Image<Rgb, f64>;

    #[test]
    fn rejects_wrong_length() {
        assert!(Img::new(2, 2, vec![0.0; 11]).is_err());
        assert!(Plane::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn long_edge_resize_keeps_aspect() {
        let img = Img::filled(1000, 500, [0.25, 0.5, 0.75]);
        let small = img.resize_long_edge(500).unwrap();
        assert_eq!(small.dims(), (500, 250));
        assert!(small.pixels().all(|p| p == [0.25, 0.5, 0.75]));

        let tall = Img::filled(30, 90, [0.0; 3]).resize_long_edge(60).unwrap();
        assert_eq!(tall.dims(), (20, 60));
    }

    #[test]
    fn bilinear_preserves_linear_ramps() {
        let img = Img::from_fn(8, 4, |x, _| [x as f64 / 7.0; 3]);
        let big = img.resize_bilinear(16, 4);
        for x in 1..15 {
            let a = big.pixel(x, 0)[0];
            let b = big.pixel(x + 1, 0)[0];
            assert!(b >= a);
        }
    }

    #[test]
    fn decimate_inverts_nearest_upsample() {
        let img = Img::from_fn(5, 3, |x, y| [x as f64 / 5.0, y as f64 / 3.0, 0.5]);
        assert_eq!(img.upsample_nearest(2).decimate(2), img);
    }

    #[test]
    fn channel_extracts_plane() {
        let img = Img::from_fn(3, 2, |x, y| [x as f64, y as f64, 7.0]);
        let g = img.channel(1);
        assert_eq!(g.get(2, 1), 1.0);
        assert_eq!(img.channel(2).data(), &[7.0; 6]);
    }
}
