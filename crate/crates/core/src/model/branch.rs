use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exif::NormalizedCondition;
use crate::scalar::Real;

pub const COND_DIM: usize = 6;

/// Two-layer fully-connected map `6 → hidden (ReLU) → outputs` turning the
/// condition vector into global modulation coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBranch<T> {
    pub hidden: usize,
    pub outputs: usize,
    /// `hidden × 6`, row-major.
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    /// `outputs × hidden`, row-major.
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct BranchTrace<T> {
    pub pre_activation: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Real> ConditionBranch<T> {
    pub fn zeros(hidden: usize, outputs: usize) -> Self {
        Self {
            hidden,
            outputs,
            w1: vec![T::zero(); hidden * COND_DIM],
            b1: vec![T::zero(); hidden],
            w2: vec![T::zero(); outputs * hidden],
            b2: vec![T::zero(); outputs],
        }
    }

    /// Random first layer, zero output layer: the branch emits exactly zero for
    /// every condition but still receives gradient through `w2`.
    pub fn zero_output<R: Rng>(hidden: usize, outputs: usize, rng: &mut R) -> Self {
        let mut b = Self::zeros(hidden, outputs);
        let scale = 1.0 / (COND_DIM as f64).sqrt();
        for w in &mut b.w1 {
            *w = T::lit(rng.gen_range(-scale..scale));
        }
        b
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn forward(&self, cond: &NormalizedCondition<T>) -> BranchTrace<T> {
        let c = cond.values();
        let pre: Vec<T> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * COND_DIM..(h + 1) * COND_DIM];
                let mut z = self.b1[h];
                for k in 0..COND_DIM {
                    z = z + row[k] * c[k];
                }
                z
            })
            .collect();
        let hidden: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
        let output = (0..self.outputs)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                let mut y = self.b2[o];
                for (w, a) in row.iter().zip(&hidden) {
                    y = y + *w * *a;
                }
                y
            })
            .collect();
        BranchTrace {
            pre_activation: pre,
            hidden,
            output,
        }
    }

    /// Accumulates parameter gradients into `grad` given `∂L/∂output`.
    pub fn backward(
        &self,
        cond: &NormalizedCondition<T>,
        trace: &BranchTrace<T>,
        d_out: &[T],
        grad: &mut ConditionBranch<T>,
    ) {
        let c = cond.values();
        let mut d_hidden = vec![T::zero(); self.hidden];
        for o in 0..self.outputs {
            let d = d_out[o];
            grad.b2[o] = grad.b2[o] + d;
            for h in 0..self.hidden {
                let idx = o * self.hidden + h;
                grad.w2[idx] = grad.w2[idx] + d * trace.hidden[h];
                d_hidden[h] = d_hidden[h] + d * self.w2[idx];
            }
        }
        for h in 0..self.hidden {
            if trace.pre_activation[h] <= T::zero() {
                continue;
            }
            let d = d_hidden[h];
            grad.b1[h] = grad.b1[h] + d;
            for k in 0..COND_DIM {
                let idx = h * COND_DIM + k;
                grad.w1[idx] = grad.w1[idx] + d * c[k];
            }
        }
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [T]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub(crate) fn slices(&self) -> [&[T]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_branch_ignores_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = ConditionBranch::<f64>::zero_output(16, 9, &mut rng);
        let cond = NormalizedCondition([0.4, 242.3, 6.4, 7.0, 5.6, 0.02]);
        assert!(b.forward(&cond).output.iter().all(|&v| v == 0.0));
        assert!(b.w1.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = ConditionBranch::<f64>::zero_output(5, 3, &mut rng);
        for w in b.w2.iter_mut().chain(b.b1.iter_mut()).chain(b.b2.iter_mut()) {
            *w = rng.gen_range(-0.5..0.5);
        }
        let cond = NormalizedCondition([0.3, 1.2, -0.4, 0.8, 0.5, -1.0]);
        let d_out = [0.7, -1.3, 0.25];
        let loss = |b: &ConditionBranch<f64>| -> f64 {
            b.forward(&cond).output.iter().zip(&d_out).map(|(y, d)| y * d).sum()
        };
        let mut grad = ConditionBranch::zeros(5, 3);
        b.backward(&cond, &b.forward(&cond), &d_out, &mut grad);
        let h = 1e-6;
        for s in 0..4 {
            for i in 0..b.slices()[s].len() {
                let mut hi = b.clone();
                hi.slices_mut()[s][i] += h;
                let mut lo = b.clone();
                lo.slices_mut()[s][i] -= h;
                let fd = (loss(&hi) - loss(&lo)) / (2.0 * h);
                let an = grad.slices()[s][i];
                assert!((fd - an).abs() < 1e-7, "slice {s} idx {i}: {fd} vs {an}");
            }
        }
    }
}
