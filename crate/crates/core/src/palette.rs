//! Hue-palette loss and dominant-color extraction.
//!
//! The loss splits the hue circle of a reference image into equal bins. Each
//! bin selects a set of pixels (its coordinate mask); the L1 difference over
//! those pixels, summed over all three channels, is divided by the bin's pixel
//! count. Summing the per-bin terms gives every hue present in the reference
//! the same weight regardless of how much of the frame it covers.

use crate::color::{rgb_to_hsv_px, rgb_to_lab_px};
use crate::error::{Error, Result};
use crate::image::{check_shape, Image, Plane, Rgb};
use crate::kmeans::kmeans;
use crate::scalar::{sign, Real};

pub const DEFAULT_BINS: usize = 10;

/// Per-pixel hue-bin labels of a reference image, with bin populations.
#[derive(Clone, Debug, PartialEq)]
pub struct HuePaletteMask {
    width: usize,
    height: usize,
    bins: usize,
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl HuePaletteMask {
    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Degrees per bin.
    pub fn bin_width(&self) -> f64 {
        360.0 / self.bins as f64
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Bin of each pixel, row-major.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    /// Number of pixels in each bin.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Binary coordinate mask of bin `j`.
    pub fn mask(&self, j: usize) -> Plane<u8> {
        Plane::new(
            self.width,
            self.height,
            self.labels.iter().map(|&l| u8::from(l == j)).collect(),
        )
        .expect("labels cover the image")
    }

    pub fn masks(&self) -> Vec<Plane<u8>> {
        (0..self.bins).map(|j| self.mask(j)).collect()
    }
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 || 360 % bins != 0 {
        return Err(Error::invalid(format!(
            "hue bin count must divide 360 evenly, got {bins}"
        )));
    }
    Ok(())
}

/// Bin index for a hue in degrees; bins are half-open `[w·j, w·(j+1))` and a
/// hue of 360 wraps to bin 0.
pub fn hue_bin<T: Real>(hue: T, bins: usize) -> usize {
    let h = hue.as_f64().rem_euclid(360.0);
    let width = (360 / bins) as f64;
    let mut j = (h / width).floor() as usize;
    // division can round across an edge; the products below are exact
    if j as f64 * width > h {
        j -= 1;
    } else if (j + 1) as f64 * width <= h {
        j += 1;
    }
    j.min(bins - 1)
}

pub fn build_masks<T: Real>(reference: &Image<Rgb, T>, bins: usize) -> Result<HuePaletteMask> {
    check_bins(bins)?;
    let mut counts = vec![0usize; bins];
    let labels = reference
        .pixels()
        .map(|p| {
            let j = hue_bin(rgb_to_hsv_px(p)[0], bins);
            counts[j] += 1;
            j
        })
        .collect();
    Ok(HuePaletteMask {
        width: reference.width(),
        height: reference.height(),
        bins,
        labels,
        counts,
    })
}

fn check_inputs<T: Real>(output: &Image<Rgb, T>, gt: &Image<Rgb, T>, masks: &HuePaletteMask) -> Result<()> {
    check_shape(gt.dims(), output.dims())?;
    check_shape(masks.dims(), output.dims())
}

/// Loss contributed by each bin; empty bins contribute 0.
pub fn hue_palette_loss_per_bin<T: Real>(
    output: &Image<Rgb, T>,
    gt: &Image<Rgb, T>,
    masks: &HuePaletteMask,
) -> Result<Vec<T>> {
    check_inputs(output, gt, masks)?;
    let mut sums = vec![T::zero(); masks.bins];
    for ((o, g), &j) in output.pixels().zip(gt.pixels()).zip(&masks.labels) {
        let d = (o[0] - g[0]).abs() + (o[1] - g[1]).abs() + (o[2] - g[2]).abs();
        sums[j] = sums[j] + d;
    }
    Ok(sums
        .into_iter()
        .zip(&masks.counts)
        .map(|(s, &n)| if n == 0 { T::zero() } else { s / T::lit(n as f64) })
        .collect())
}

pub fn hue_palette_loss<T: Real>(output: &Image<Rgb, T>, gt: &Image<Rgb, T>, masks: &HuePaletteMask) -> Result<T> {
    Ok(hue_palette_loss_per_bin(output, gt, masks)?.into_iter().sum())
}

/// `∂loss/∂output` with masks held fixed: `sign(output − gt) / count` of the
/// pixel's bin, per channel.
pub fn hue_palette_loss_grad<T: Real>(
    output: &Image<Rgb, T>,
    gt: &Image<Rgb, T>,
    masks: &HuePaletteMask,
) -> Result<Image<Rgb, T>> {
    check_inputs(output, gt, masks)?;
    let inv: Vec<T> = masks
        .counts
        .iter()
        .map(|&n| if n == 0 { T::zero() } else { T::one() / T::lit(n as f64) })
        .collect();
    let mut grad = Vec::with_capacity(output.data().len());
    for ((o, g), &j) in output.pixels().zip(gt.pixels()).zip(&masks.labels) {
        for c in 0..3 {
            grad.push(sign(o[c] - g[c]) * inv[j]);
        }
    }
    Image::new(output.width(), output.height(), grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaletteColor<T = f64> {
    pub lab: [T; 3],
    /// Fraction of pixels assigned to this color.
    pub weight: T,
}

/// Dominant colors, sorted by weight descending.
#[derive(Clone, Debug, PartialEq)]
pub struct PaletteColors<T = f64> {
    pub colors: Vec<PaletteColor<T>>,
    /// k-means inertia in Lab units².
    pub inertia: T,
}

pub const DEFAULT_PALETTE_SIZE: usize = 6;

/// Lab rescaled for plotting: `(L/50 − 1, a/128, b/128)`, putting typical
/// colors in `[-1, 1]` on every axis.
pub fn plot_coordinates<T: Real>([l, a, b]: [T; 3]) -> [T; 3] {
    [l / T::lit(50.0) - T::one(), a / T::lit(128.0), b / T::lit(128.0)]
}

/// k-means over the image's Lab pixels.
pub fn major_colors<T: Real>(img: &Image<Rgb, T>, k: usize, seed: u64) -> Result<PaletteColors<T>> {
    if k == 0 {
        return Err(Error::invalid("palette size must be at least 1"));
    }
    if k > img.pixel_count() {
        return Err(Error::invalid(format!(
            "palette size {k} exceeds pixel count {}",
            img.pixel_count()
        )));
    }
    let lab: Vec<[T; 3]> = img.pixels().map(rgb_to_lab_px).collect();
    let km = kmeans(&lab, k, seed)?;
    let n = T::lit(lab.len() as f64);
    let mut colors: Vec<(usize, PaletteColor<T>)> = km
        .cluster_sizes()
        .into_iter()
        .zip(&km.centroids)
        .map(|(size, c)| {
            (
                size,
                PaletteColor {
                    lab: *c,
                    weight: T::lit(size as f64) / n,
                },
            )
        })
        .collect();
    colors.sort_by(|a, b| b.0.cmp(&a.0));
    Ok(PaletteColors {
        colors: colors.into_iter().map(|(_, c)| c).collect(),
        inertia: km.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Img = Image<Rgb, f64>;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Img {
        Image::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    /// Straight transcription of the per-bin formula with explicit masks.
    fn oracle_loss(output: &Img, gt: &Img, reference: &Img, bins: usize) -> f64 {
        let width = 360.0 / bins as f64;
        let mut total = 0.0;
        for j in 0..bins {
            let mut d1 = 0.0;
            let mut count = 0.0;
            for y in 0..output.height() {
                for x in 0..output.width() {
                    let h = rgb_to_hsv_px(reference.pixel(x, y))[0];
                    let cm = if ((h / width).floor() as usize) % bins == j { 1.0 } else { 0.0 };
                    count += cm;
                    let (o, g) = (output.pixel(x, y), gt.pixel(x, y));
                    for c in 0..3 {
                        d1 += (o[c] * cm - g[c] * cm).abs();
                    }
                }
            }
            if count > 0.0 {
                total += d1 / count;
            }
        }
        total
    }

    #[test]
    fn uniform_red_lands_in_bin_zero() {
        let img = Img::filled(4, 3, [1.0, 0.0, 0.0]);
        let m = build_masks(&img, 10).unwrap();
        assert_eq!(m.counts(), &[12, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(m.mask(0).data().iter().all(|&v| v == 1));
        assert!(m.mask(1).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn red_green_halves() {
        let img = Img::from_fn(4, 2, |x, _| if x < 2 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] });
        let m = build_masks(&img, 10).unwrap();
        let left = Plane::from_fn(4, 2, |x, _| u8::from(x < 2));
        let right = Plane::from_fn(4, 2, |x, _| u8::from(x >= 2));
        assert_eq!(m.mask(0), left);
        assert_eq!(m.mask(3), right);
        assert_eq!(m.counts()[0] + m.counts()[3], 8);
    }

    #[test]
    fn bin_edges_are_half_open() {
        assert_eq!(hue_bin(0.0f64, 10), 0);
        assert_eq!(hue_bin(35.999_999_999_999_99f64, 10), 0);
        assert_eq!(hue_bin(36.0f64, 10), 1);
        assert_eq!(hue_bin(359.999f64, 10), 9);
        assert_eq!(hue_bin(360.0f64, 10), 0);
        assert_eq!(hue_bin(120.0f64, 10), 3);
        assert_eq!(hue_bin(120.0f64, 3), 1);
        assert_eq!(hue_bin(270.0f32, 1), 0);
    }

    #[test]
    fn bins_must_divide_360() {
        let img = Img::filled(1, 1, [0.5; 3]);
        assert!(build_masks(&img, 7).is_err());
        assert!(build_masks(&img, 0).is_err());
        for ok in [1, 5, 6, 8, 9, 10, 12, 20, 30, 360] {
            assert!(build_masks(&img, ok).is_ok());
        }
    }

    #[test]
    fn masks_match_brute_force_binning() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 9, 7);
        let m = build_masks(&img, 10).unwrap();
        for y in 0..7 {
            for x in 0..9 {
                let h = rgb_to_hsv_px(img.pixel(x, y))[0];
                assert_eq!(m.label(x, y), (h / 36.0).floor() as usize % 10);
            }
        }
    }

    #[test]
    fn loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_image(&mut rng, 8, 8);
        let m = build_masks(&gt, 10).unwrap();
        assert_eq!(hue_palette_loss(&gt, &gt, &m).unwrap(), 0.0);

        for (w, h) in [(1, 1), (5, 3), (16, 16)] {
            let gt = Img::filled(w, h, [0.2, 0.4, 0.6]);
            let out = Img::filled(w, h, [0.25, 0.35, 0.65]);
            let m = build_masks(&gt, 10).unwrap();
            let loss = hue_palette_loss(&out, &gt, &m).unwrap();
            assert!((loss - 3.0 * 0.05).abs() < 1e-12, "{loss}");
        }
    }

    #[test]
    fn loss_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let out = random_image(&mut rng, 8, 8);
            let gt = random_image(&mut rng, 8, 8);
            let m = build_masks(&gt, 10).unwrap();
            let loss = hue_palette_loss(&out, &gt, &m).unwrap();
            assert!((loss - oracle_loss(&out, &gt, &gt, 10)).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_errors() {
        let a = Img::filled(2, 2, [0.1; 3]);
        let b = Img::filled(2, 3, [0.1; 3]);
        let m = build_masks(&a, 10).unwrap();
        assert!(hue_palette_loss(&a, &b, &m).is_err());
        assert!(hue_palette_loss(&b, &b, &m).is_err());
        assert!(hue_palette_loss_grad(&b, &b, &m).is_err());
    }

    #[test]
    fn gradient_examples() {
        let gt = Img::filled(1, 1, [0.5, 0.2, 0.1]);
        let m = build_masks(&gt, 10).unwrap();
        let g = hue_palette_loss_grad(&gt, &gt, &m).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
        let out = Img::filled(1, 1, [0.6, 0.2, 0.1]);
        assert_eq!(hue_palette_loss_grad(&out, &gt, &m).unwrap().pixel(0, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = random_image(&mut rng, 4, 4);
        let gt = random_image(&mut rng, 4, 4);
        let m = build_masks(&gt, 10).unwrap();
        let grad = hue_palette_loss_grad(&out, &gt, &m).unwrap();
        let h = 1e-6;
        for i in 0..out.data().len() {
            if (out.data()[i] - gt.data()[i]).abs() < 1e-3 {
                continue;
            }
            let mut hi = out.clone();
            let mut lo = out.clone();
            hi.data_mut()[i] += h;
            lo.data_mut()[i] -= h;
            let fd = (hue_palette_loss(&hi, &gt, &m).unwrap() - hue_palette_loss(&lo, &gt, &m).unwrap()) / (2.0 * h);
            let a = grad.data()[i];
            assert!((fd - a).abs() <= 1e-5 * a.abs().max(1e-12), "{i}: fd {fd} vs {a}");
        }
    }

    #[test]
    fn area_invariance() {
        // two hues: a gray-blue background and a red spot of 10% vs 50% area
        let make = |spot: usize, err: f64| {
            Img::from_fn(10, 10, |x, y| {
                if y * 10 + x < spot {
                    [0.9 - err, 0.1, 0.1]
                } else {
                    [0.3, 0.4, 0.7]
                }
            })
        };
        let mut per_bin = Vec::new();
        for spot in [10, 50] {
            let gt = make(spot, 0.0);
            let out = make(spot, 0.2);
            let m = build_masks(&gt, 10).unwrap();
            per_bin.push(hue_palette_loss_per_bin(&out, &gt, &m).unwrap());
        }
        for (a, b) in per_bin[0].iter().zip(&per_bin[1]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((per_bin[0][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn major_colors_uniform() {
        let img = Img::filled(4, 4, [0.2, 0.6, 0.3]);
        let p = major_colors(&img, 1, 6).unwrap();
        assert_eq!(p.colors.len(), 1);
        assert_eq!(p.colors[0].weight, 1.0);
        let lab = rgb_to_lab_px([0.2, 0.6, 0.3]);
        for c in 0..3 {
            assert!((p.colors[0].lab[c] - lab[c]).abs() < 1e-12);
        }
        assert!(major_colors(&img, 17, 6).is_err());
    }

    #[test]
    fn major_colors_two_tone() {
        let (a, b) = ([0.9, 0.1, 0.1], [0.1, 0.2, 0.9]);
        let img = Img::from_fn(10, 10, |x, _| if x < 6 { a } else { b });
        let p = major_colors(&img, 2, 6).unwrap();
        assert!((p.colors[0].weight - 0.6).abs() < 1e-9);
        assert!((p.colors[1].weight - 0.4).abs() < 1e-9);
        let (la, lb) = (rgb_to_lab_px(a), rgb_to_lab_px(b));
        for c in 0..3 {
            assert!((p.colors[0].lab[c] - la[c]).abs() < 1e-9);
            assert!((p.colors[1].lab[c] - lb[c]).abs() < 1e-9);
        }
        assert_eq!(p.inertia, 0.0);
        let sum: f64 = p.colors.iter().map(|c| c.weight).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn masks_partition_the_image(seed in 0u64..10_000, bins in prop::sample::select(vec![1usize, 5, 6, 10, 12, 36])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, 6, 5);
            let m = build_masks(&img, bins).unwrap();
            let masks = m.masks();
            for i in 0..30 {
                let total: u32 = masks.iter().map(|p| p.data()[i] as u32).sum();
                prop_assert_eq!(total, 1);
            }
            for (j, mask) in masks.iter().enumerate() {
                prop_assert_eq!(mask.data().iter().filter(|&&v| v == 1).count(), m.counts()[j]);
            }
            prop_assert_eq!(m.counts().iter().sum::<usize>(), 30);
        }

        #[test]
        fn loss_is_nonnegative_and_additive(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = random_image(&mut rng, 5, 5);
            let gt = random_image(&mut rng, 5, 5);
            let m = build_masks(&gt, 10).unwrap();
            let per = hue_palette_loss_per_bin(&out, &gt, &m).unwrap();
            let total = hue_palette_loss(&out, &gt, &m).unwrap();
            prop_assert!(per.iter().all(|&v| v >= 0.0));
            prop_assert!((per.iter().sum::<f64>() - total).abs() < 1e-12);
        }
    }
}
