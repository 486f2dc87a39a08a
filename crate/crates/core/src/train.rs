//! Dataset loading, losses and the Adam training loop.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{luma, rgb_to_lab_jacobian, rgb_to_lab_px, RGB_TO_YUV};
use crate::error::{Error, Result};
use crate::exif::{self, NormalizedCondition};
use crate::image::{check_shape, Image, Rgb};
use crate::io::{is_image_path, load_rgb};
use crate::metrics::psnr;
use crate::model::{backward_with, forward, forward_trace, EnhancerParams, DEFAULT_HIDDEN, DEFAULT_KNOTS};
use crate::palette::{build_masks, hue_palette_loss, hue_palette_loss_grad, HuePaletteMask, DEFAULT_BINS};
use crate::scalar::{sign, Real};

pub const DEFAULT_SEED: u64 = 6;
pub const DEFAULT_LONG_EDGE: usize = 500;

#[derive(Clone, Debug)]
pub struct SamplePair<T = f64> {
    pub input: Image<Rgb, T>,
    pub gt: Image<Rgb, T>,
    pub cond: NormalizedCondition<T>,
    pub id: String,
}

impl<T: Real> SamplePair<T> {
    pub fn new(input: Image<Rgb, T>, gt: Image<Rgb, T>, cond: NormalizedCondition<T>, id: impl Into<String>) -> Result<Self> {
        input.ensure_same_shape(&gt)?;
        Ok(Self {
            input,
            gt,
            cond,
            id: id.into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipEntry {
    pub stem: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct Dataset<T = f64> {
    pub pairs: Vec<SamplePair<T>>,
    pub skipped: Vec<SkipEntry>,
}

fn image_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || !is_image_path(&path) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Loads `dir/input/*` and `dir/gt/*` pairs matched by file stem, sorted by
/// stem. EXIF comes from `dir/<stem>.exif.json`, else from beside the input
/// image (sidecar or embedded JPEG EXIF), else zeros. With `long_edge > 0`
/// both images are resized bilinearly so their longer side equals it.
pub fn load_dataset<T: Real>(dir: impl AsRef<Path>, long_edge: usize) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let inputs = image_stems(&dir.join("input"))?;
    let gts = image_stems(&dir.join("gt"))?;
    let mut data = Dataset {
        pairs: Vec::new(),
        skipped: Vec::new(),
    };
    for stem in gts.keys().filter(|s| !inputs.contains_key(*s)) {
        data.skipped.push(SkipEntry {
            stem: stem.clone(),
            reason: "no matching input image".into(),
        });
    }
    for (stem, in_path) in &inputs {
        let Some(gt_path) = gts.get(stem) else {
            data.skipped.push(SkipEntry {
                stem: stem.clone(),
                reason: "no matching gt image".into(),
            });
            continue;
        };
        let mut input = load_rgb::<T>(in_path)?;
        let mut gt = load_rgb::<T>(gt_path)?;
        if long_edge > 0 {
            input = input.resize_long_edge(long_edge)?;
            gt = gt.resize_long_edge(long_edge)?;
        }
        if input.dims() != gt.dims() {
            data.skipped.push(SkipEntry {
                stem: stem.clone(),
                reason: format!("input is {:?} but gt is {:?}", input.dims(), gt.dims()),
            });
            continue;
        }
        let root_sidecar = dir.join(format!("{stem}.exif.json"));
        let vector = if root_sidecar.is_file() {
            exif::load_exif(&root_sidecar)?
        } else {
            exif::load_for_image(in_path)?
        };
        data.pairs.push(SamplePair {
            input,
            gt,
            cond: vector.normalize().cast(),
            id: stem.clone(),
        });
    }
    data.skipped.sort_by(|a, b| a.stem.cmp(&b.stem));
    Ok(data)
}

/// Splits off the first `n_train` pairs for training, the rest for testing.
pub fn split_first<T: Clone>(pairs: &[T], n_train: usize) -> (Vec<T>, Vec<T>) {
    let n = n_train.min(pairs.len());
    (pairs[..n].to_vec(), pairs[n..].to_vec())
}

/// Mean absolute luma difference.
pub fn stage1_loss<T: Real>(bright: &Image<Rgb, T>, gt: &Image<Rgb, T>) -> Result<T> {
    bright.ensure_same_shape(gt)?;
    let n = T::lit(bright.pixel_count() as f64);
    Ok(bright.pixels().zip(gt.pixels()).map(|(a, b)| (luma(a) - luma(b)).abs()).sum::<T>() / n)
}

pub fn stage1_loss_grad<T: Real>(bright: &Image<Rgb, T>, gt: &Image<Rgb, T>) -> Result<Image<Rgb, T>> {
    bright.ensure_same_shape(gt)?;
    let inv_n = T::one() / T::lit(bright.pixel_count() as f64);
    let w = RGB_TO_YUV[0].map(T::lit);
    let grads = bright.pixels().zip(gt.pixels()).map(|(a, b)| {
        let s = sign(luma(a) - luma(b)) * inv_n;
        w.map(|c| c * s)
    });
    Image::from_pixels(bright.width(), bright.height(), grads)
}

/// Mean over pixels and channels of `|Lab(output) − Lab(gt)|`.
pub fn l1_lab<T: Real>(output: &Image<Rgb, T>, gt: &Image<Rgb, T>) -> Result<T> {
    output.ensure_same_shape(gt)?;
    let n = T::lit(output.data().len() as f64);
    let sum: T = output
        .pixels()
        .zip(gt.pixels())
        .map(|(a, b)| {
            let (la, lb) = (rgb_to_lab_px(a), rgb_to_lab_px(b));
            (0..3).map(|c| (la[c] - lb[c]).abs()).sum::<T>()
        })
        .sum();
    Ok(sum / n)
}

pub fn l1_lab_grad<T: Real>(output: &Image<Rgb, T>, gt: &Image<Rgb, T>) -> Result<Image<Rgb, T>> {
    output.ensure_same_shape(gt)?;
    let gt_lab: Vec<[T; 3]> = gt.pixels().map(rgb_to_lab_px).collect();
    Ok(lab_grad(output, &gt_lab))
}

fn lab_grad<T: Real>(output: &Image<Rgb, T>, gt_lab: &[[T; 3]]) -> Image<Rgb, T> {
    let inv_n = T::one() / T::lit(output.data().len() as f64);
    let grads = output.pixels().zip(gt_lab).map(|(p, g)| {
        let (lab, jac) = rgb_to_lab_jacobian(p);
        let d: [T; 3] = std::array::from_fn(|r| sign(lab[r] - g[r]) * inv_n);
        std::array::from_fn(|c| d[0] * jac[0][c] + d[1] * jac[1][c] + d[2] * jac[2][c])
    });
    Image::from_pixels(output.width(), output.height(), grads).expect("same shape")
}

/// Lab L1 plus hue-palette loss, equally weighted.
pub fn stage2_loss<T: Real>(output: &Image<Rgb, T>, gt: &Image<Rgb, T>, masks: &HuePaletteMask) -> Result<T> {
    Ok(l1_lab(output, gt)? + hue_palette_loss(output, gt, masks)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Pairs per Adam step; the whole set when at least its size.
    pub batch_size: usize,
    pub w_lab: f64,
    pub w_hue: f64,
    pub bins: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Train stage 1 alone for `epochs`, then freeze it and train stage 2 for `epochs`.
    pub stage_wise: bool,
    /// Weight of `Σ max(0, k_i − k_{i+1})` on the base stage-1 knots. Added to
    /// the optimized objective only, not to the logged total.
    pub monotone_weight: f64,
    pub knots: usize,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            w_lab: 1.0,
            w_hue: 1.0,
            bins: DEFAULT_BINS,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            stage_wise: false,
            monotone_weight: 0.0,
            knots: DEFAULT_KNOTS,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.w_lab) && finite_nonneg(self.w_hue) && finite_nonneg(self.monotone_weight)) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.bins == 0 || 360 % self.bins != 0 {
            return Err(Error::invalid(format!("bins = {} does not divide 360", self.bins)));
        }
        if self.knots < 2 {
            return Err(Error::invalid("knot count must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::invalid("Adam betas must lie in [0, 1) and eps be positive"));
        }
        Ok(())
    }
}

/// Mean losses over the training set at one parameter state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub stage1: f64,
    pub l1lab: f64,
    pub hue: f64,
    /// `stage1 + w_lab · l1lab + w_hue · hue`.
    pub total: f64,
    /// Mean PSNR over the validation pairs; `None` without validation data.
    pub psnr_val: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T = f64> {
    pub params: EnhancerParams<T>,
    /// Row `e` holds the losses at the start of epoch `e` (averaged over that
    /// epoch's batches); the last row is the final parameters.
    pub history: Vec<EpochStats>,
}

pub const HISTORY_HEADER: &str = "epoch,stage1,l1lab,hue,total,psnr_val";

pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochStats]) -> std::io::Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for s in history {
        let psnr = s.psnr_val.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(w, "{},{:?},{:?},{:?},{:?},{}", s.epoch, s.stage1, s.l1lab, s.hue, s.total, psnr)?;
    }
    w.flush()
}

struct Prepared<'a, T> {
    pair: &'a SamplePair<T>,
    masks: HuePaletteMask,
    gt_lab: Vec<[T; 3]>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Joint,
    Stage1,
    Stage2,
}

#[derive(Clone, Copy, Default)]
struct Parts {
    stage1: f64,
    l1lab: f64,
    hue: f64,
}

fn sample_pass<T: Real>(
    p: &EnhancerParams<T>,
    s: &Prepared<'_, T>,
    cfg: &TrainConfig,
    phase: Phase,
) -> Result<(Parts, EnhancerParams<T>)> {
    let trace = forward_trace(&s.pair.input, &s.pair.cond, p);
    let bright = trace.bright();
    let out = trace.output();
    let gt = &s.pair.gt;
    let parts = Parts {
        stage1: stage1_loss(&bright, gt)?.as_f64(),
        l1lab: l1_lab(&out, gt)?.as_f64(),
        hue: hue_palette_loss(&out, gt, &s.masks)?.as_f64(),
    };
    let grad_bright = (phase != Phase::Stage2).then(|| stage1_loss_grad(&bright, gt)).transpose()?;
    let grad_out = if phase == Phase::Stage1 {
        None
    } else {
        let (wl, wh) = (T::lit(cfg.w_lab), T::lit(cfg.w_hue));
        let lab = lab_grad(&out, &s.gt_lab);
        let hue = hue_palette_loss_grad(&out, gt, &s.masks)?;
        let data = lab.data().iter().zip(hue.data()).map(|(&a, &b)| wl * a + wh * b).collect();
        Some(Image::new(out.width(), out.height(), data)?)
    };
    let grad = backward_with(p, &s.pair.cond, &trace, grad_out.as_ref(), grad_bright.as_ref())?;
    Ok((parts, grad))
}

fn mean_psnr<T: Real>(p: &EnhancerParams<T>, val: &[SamplePair<T>]) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let values: Vec<f64> = val
        .par_iter()
        .map(|s| psnr(&forward(&s.input, &s.cond, p), &s.gt).map(|v| v.as_f64()))
        .collect::<Result<_>>()?;
    Ok(Some(values.iter().sum::<f64>() / values.len() as f64))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], trainable: std::ops::Range<usize>, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in trainable {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

fn monotone_penalty_grad(knots: &[f64], weight: f64, grad: &mut [f64]) {
    for i in 0..knots.len() - 1 {
        if knots[i] > knots[i + 1] {
            grad[i] += weight;
            grad[i + 1] -= weight;
        }
    }
}

pub fn train<T: Real>(data: &[SamplePair<T>], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with_validation(data, &[], cfg)
}

/// Adam on the mean per-pair loss. Parameters start at the identity model
/// seeded by `cfg.seed`; batch order is drawn from the same seed. Per-pair
/// passes run in parallel and are reduced in dataset order, so results do not
/// depend on the thread count.
pub fn train_with_validation<T: Real>(
    data: &[SamplePair<T>],
    val: &[SamplePair<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for s in data.iter().chain(val) {
        check_shape(s.input.dims(), s.gt.dims())?;
    }
    let prepared: Vec<Prepared<'_, T>> = data
        .iter()
        .map(|pair| {
            Ok(Prepared {
                pair,
                masks: build_masks(&pair.gt, cfg.bins)?,
                gt_lab: pair.gt.pixels().map(rgb_to_lab_px).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let init = EnhancerParams::<T>::identity(cfg.knots, cfg.hidden, cfg.seed);
    let mut theta: Vec<f64> = init.flatten().iter().map(|v| v.as_f64()).collect();
    let stage1_len = init.stage1_len();
    let mut adam = Adam::new(theta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = cfg.batch_size.min(data.len());

    let phases: Vec<Phase> = if cfg.stage_wise {
        vec![Phase::Stage1, Phase::Stage2]
    } else {
        vec![Phase::Joint]
    };
    let to_params = |theta: &[f64]| -> EnhancerParams<T> {
        let flat: Vec<T> = theta.iter().map(|&v| T::lit(v)).collect();
        EnhancerParams::from_flat(cfg.knots, cfg.hidden, &flat).expect("fixed shape")
    };
    let mut history = Vec::new();
    let mut epoch = 0;
    for &phase in &phases {
        let trainable = match phase {
            Phase::Joint => 0..theta.len(),
            Phase::Stage1 => 0..stage1_len,
            Phase::Stage2 => stage1_len..theta.len(),
        };
        for _ in 0..cfg.epochs {
            let psnr_val = mean_psnr(&to_params(&theta), val)?;
            if batch < data.len() {
                order.shuffle(&mut rng);
            }
            let mut sums = Parts::default();
            for chunk in order.chunks(batch) {
                let p = to_params(&theta);
                let results: Vec<(Parts, EnhancerParams<T>)> = chunk
                    .par_iter()
                    .map(|&i| sample_pass(&p, &prepared[i], cfg, phase))
                    .collect::<Result<_>>()?;
                let mut grad = vec![0.0; theta.len()];
                for (parts, g) in &results {
                    sums.stage1 += parts.stage1;
                    sums.l1lab += parts.l1lab;
                    sums.hue += parts.hue;
                    for (acc, v) in grad.iter_mut().zip(g.flatten()) {
                        *acc += v.as_f64();
                    }
                }
                let inv = 1.0 / chunk.len() as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
                if cfg.monotone_weight > 0.0 && phase != Phase::Stage2 {
                    monotone_penalty_grad(&theta[..cfg.knots], cfg.monotone_weight, &mut grad[..cfg.knots]);
                }
                adam.step(&mut theta, &grad, trainable.clone(), cfg);
            }
            history.push(stats(epoch, sums, data.len(), cfg, psnr_val));
            epoch += 1;
        }
    }

    let params = to_params(&theta);
    let results: Vec<Parts> = prepared
        .par_iter()
        .map(|s| sample_pass(&params, s, cfg, Phase::Stage1).map(|r| r.0))
        .collect::<Result<_>>()?;
    let mut sums = Parts::default();
    for r in &results {
        sums.stage1 += r.stage1;
        sums.l1lab += r.l1lab;
        sums.hue += r.hue;
    }
    history.push(stats(epoch, sums, data.len(), cfg, mean_psnr(&params, val)?));
    Ok(TrainOutcome { params, history })
}

/// Bin counts compared by default in a hue-bin sweep.
pub const SWEEP_BINS: [usize; 8] = [5, 6, 8, 9, 10, 12, 20, 30];

/// Final losses and held-out PSNR of one sweep run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinSweepRow {
    pub bins: usize,
    pub l1lab: f64,
    pub hue: f64,
    pub psnr_val: Option<f64>,
}

pub const BIN_SWEEP_HEADER: &str = "bins,l1lab,hue,psnr_val";

/// Trains once per bin count, all other settings taken from `cfg`.
pub fn bin_count_sweep<T: Real>(
    data: &[SamplePair<T>],
    val: &[SamplePair<T>],
    bins: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<BinSweepRow>> {
    bins.iter()
        .map(|&bins| {
            let run = train_with_validation(data, val, &TrainConfig { bins, ..cfg.clone() })?;
            let last = run.history.last().expect("history ends with the final parameters");
            Ok(BinSweepRow {
                bins,
                l1lab: last.l1lab,
                hue: last.hue,
                psnr_val: last.psnr_val,
            })
        })
        .collect()
}

pub fn write_bin_sweep_csv<W: Write>(mut w: W, rows: &[BinSweepRow]) -> std::io::Result<()> {
    writeln!(w, "{BIN_SWEEP_HEADER}")?;
    for r in rows {
        let psnr = r.psnr_val.map(|v| format!("{v:?}")).unwrap_or_default();
        writeln!(w, "{},{:?},{:?},{}", r.bins, r.l1lab, r.hue, psnr)?;
    }
    w.flush()
}

fn stats(epoch: usize, sums: Parts, n: usize, cfg: &TrainConfig, psnr_val: Option<f64>) -> EpochStats {
    let n = n as f64;
    let (stage1, l1lab, hue) = (sums.stage1 / n, sums.l1lab / n, sums.hue / n);
    EpochStats {
        epoch,
        stage1,
        l1lab,
        hue,
        total: stage1 + cfg.w_lab * l1lab + cfg.w_hue * hue,
        psnr_val,
    }
}
