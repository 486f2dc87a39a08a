//! Two-stage curve enhancer.
//!
//! Stage 1 maps the luma of the input through a tone curve and turns the
//! result into a gain map, so the brightened image keeps the input's channel
//! proportions. Stage 2 mixes the brightened channels through nine curves
//! (output channel `o` ← input channel `i`) and adds a smooth function of the
//! normalized pixel coordinates:
//!
//! ```text
//! O_o(x, y) = Σ_i γ_oi · g_oi(bright_i(x, y)) + a_o·u + b_o·v + c_o·u·v + d_o,   u = x/W, v = y/H
//! ```
//!
//! The condition vector enters through two small fully-connected branches:
//! additive offsets on the stage-1 knots and multiplicative gains
//! `γ_oi = 1 + branch_oi(cond)` on the stage-2 curves. Both branches start
//! with a zero output layer, so an initialized model is the identity.

mod branch;
mod checkpoint;
mod curve;
mod forward;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use branch::{BranchTrace, ConditionBranch, COND_DIM};
pub use checkpoint::{load_params, load_params_json, read_params, save_params, save_params_json, write_params, MAGIC};
pub use curve::{eval_knots, locate, slope_knots, Segment, ToneCurve};
pub use forward::{
    backward, backward_with, forward, forward_trace, stage1_forward, stage2_forward, stage2_forward_unclamped,
    ForwardTrace, PixelTrace,
};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_KNOTS: usize = 17;
pub const DEFAULT_HIDDEN: usize = 16;
/// Stage-2 curves, indexed `o * 3 + i`.
pub const COLOR_CURVES: usize = 9;

/// Every learnable parameter of the enhancer. Gradients use the same type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancerParams<T> {
    pub knots: usize,
    pub hidden: usize,
    /// Base luma curve (before condition offsets).
    pub stage1_curve: ToneCurve<T>,
    /// Emits one additive offset per stage-1 knot.
    pub stage1_condition: ConditionBranch<T>,
    pub color_curves: Vec<ToneCurve<T>>,
    /// `[a, b, c, d]` per output channel.
    pub spatial: [[T; 4]; 3],
    /// Emits the nine curve gains minus one.
    pub stage2_condition: ConditionBranch<T>,
}

impl<T: Real> EnhancerParams<T> {
    /// Identity model. The seed drives the first layer of both condition
    /// branches only.
    pub fn identity(knots: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stage1_condition = ConditionBranch::zero_output(hidden, knots, &mut rng);
        let stage2_condition = ConditionBranch::zero_output(hidden, COLOR_CURVES, &mut rng);
        let color_curves = (0..COLOR_CURVES)
            .map(|k| {
                if k / 3 == k % 3 {
                    ToneCurve::identity(knots)
                } else {
                    ToneCurve::zero(knots)
                }
            })
            .collect();
        Self {
            knots,
            hidden,
            stage1_curve: ToneCurve::identity(knots),
            stage1_condition,
            color_curves,
            spatial: [[T::zero(); 4]; 3],
            stage2_condition,
        }
    }

    pub fn default_identity(seed: u64) -> Self {
        Self::identity(DEFAULT_KNOTS, DEFAULT_HIDDEN, seed)
    }

    /// All-zero parameters of the given shape (a gradient accumulator).
    pub fn zeros(knots: usize, hidden: usize) -> Self {
        Self {
            knots,
            hidden,
            stage1_curve: ToneCurve::zero(knots),
            stage1_condition: ConditionBranch::zeros(hidden, knots),
            color_curves: vec![ToneCurve::zero(knots); COLOR_CURVES],
            spatial: [[T::zero(); 4]; 3],
            stage2_condition: ConditionBranch::zeros(hidden, COLOR_CURVES),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.knots, self.hidden)
    }

    pub fn param_count_for(knots: usize, hidden: usize) -> usize {
        let stage1 = knots + hidden * COND_DIM + hidden + knots * hidden + knots;
        let stage2 = COLOR_CURVES * knots + 12 + hidden * COND_DIM + hidden + COLOR_CURVES * hidden + COLOR_CURVES;
        stage1 + stage2
    }

    pub fn param_count(&self) -> usize {
        Self::param_count_for(self.knots, self.hidden)
    }

    /// Number of leading flat parameters that belong to stage 1.
    pub fn stage1_len(&self) -> usize {
        self.knots + self.stage1_condition.param_count()
    }

    /// Visits every parameter block in canonical order (the flat and on-disk order).
    pub fn for_each_block_mut(&mut self, mut f: impl FnMut(&mut [T])) {
        f(self.stage1_curve.knots_mut());
        for s in self.stage1_condition.slices_mut() {
            f(s);
        }
        for c in &mut self.color_curves {
            f(c.knots_mut());
        }
        for row in &mut self.spatial {
            f(row);
        }
        for s in self.stage2_condition.slices_mut() {
            f(s);
        }
    }

    pub fn for_each_block(&self, mut f: impl FnMut(&[T])) {
        f(self.stage1_curve.knots());
        for s in self.stage1_condition.slices() {
            f(s);
        }
        for c in &self.color_curves {
            f(c.knots());
        }
        for row in &self.spatial {
            f(row);
        }
        for s in self.stage2_condition.slices() {
            f(s);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_block(|b| out.extend_from_slice(b));
        out
    }

    pub fn from_flat(knots: usize, hidden: usize, values: &[T]) -> Result<Self> {
        if knots < 2 {
            return Err(Error::invalid("knot count must be at least 2"));
        }
        let expected = Self::param_count_for(knots, hidden);
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters for {knots} knots / {hidden} hidden, got {}",
                values.len()
            )));
        }
        let mut p = Self::zeros(knots, hidden);
        p.assign_flat(values);
        Ok(p)
    }

    /// Overwrites all parameters from a flat slice of the right length.
    pub fn assign_flat(&mut self, values: &[T]) {
        assert_eq!(values.len(), self.param_count());
        let mut pos = 0;
        self.for_each_block_mut(|b| {
            b.copy_from_slice(&values[pos..pos + b.len()]);
            pos += b.len();
        });
    }

    /// `self += other`, elementwise.
    pub fn accumulate(&mut self, other: &Self) {
        let flat = other.flatten();
        let mut pos = 0;
        self.for_each_block_mut(|b| {
            for v in b.iter_mut() {
                *v = *v + flat[pos];
                pos += 1;
            }
        });
    }

    pub fn scale(&mut self, s: T) {
        self.for_each_block_mut(|b| b.iter_mut().for_each(|v| *v = *v * s));
    }

    pub fn cast<U: Real>(&self) -> EnhancerParams<U> {
        let flat: Vec<U> = self.flatten().into_iter().map(|v| U::lit(v.as_f64())).collect();
        EnhancerParams::from_flat(self.knots, self.hidden, &flat).expect("same shape")
    }
}
