use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Piecewise-linear map sampled at `M` uniform abscissae `i / (M − 1)`.
/// Outside `[0, 1]` the end segments extend linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ToneCurve<T> {
    knots: Vec<T>,
}

/// Position of an input on the knot grid: segment `index` (left knot) and the
/// offset `frac` within it. `frac` leaves `[0, 1)` only when extrapolating.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Segment<T> {
    pub index: usize,
    pub frac: T,
}

impl<T: Real> ToneCurve<T> {
    pub fn from_knots(knots: Vec<T>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("a tone curve needs at least two knots"));
        }
        Ok(Self { knots })
    }

    pub fn identity(m: usize) -> Self {
        assert!(m >= 2, "a tone curve needs at least two knots");
        let n = (m - 1) as f64;
        Self {
            knots: (0..m).map(|i| T::lit(i as f64 / n)).collect(),
        }
    }

    pub fn zero(m: usize) -> Self {
        assert!(m >= 2, "a tone curve needs at least two knots");
        Self {
            knots: vec![T::zero(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn knots_mut(&mut self) -> &mut [T] {
        &mut self.knots
    }

    pub fn eval(&self, x: T) -> T {
        eval_knots(&self.knots, x)
    }

    pub fn slope(&self, x: T) -> T {
        slope_knots(&self.knots, locate(self.knots.len(), x))
    }
}

#[inline]
fn abscissa<T: Real>(i: usize, m: usize) -> T {
    T::lit(i as f64) / T::lit((m - 1) as f64)
}

/// Locates `x` on an `m`-knot grid. Inputs equal to a knot abscissa land on
/// that knot with `frac = 0`.
pub fn locate<T: Real>(m: usize, x: T) -> Segment<T> {
    let n = T::lit((m - 1) as f64);
    let t = x * n;
    let last = m - 2;
    let mut index = if t <= T::zero() {
        0
    } else {
        t.floor().to_usize().unwrap_or(last).min(last)
    };
    // keep `index` consistent with the abscissae as computed by division
    if index < last && x >= abscissa(index + 1, m) {
        index += 1;
    } else if index > 0 && x < abscissa(index, m) {
        index -= 1;
    }
    let frac = if x == abscissa(index, m) {
        T::zero()
    } else {
        t - T::lit(index as f64)
    };
    Segment { index, frac }
}

#[inline]
pub fn eval_segment<T: Real>(knots: &[T], s: Segment<T>) -> T {
    let (a, b) = (knots[s.index], knots[s.index + 1]);
    if s.frac == T::one() {
        return b;
    }
    a + (b - a) * s.frac
}

#[inline]
pub fn eval_knots<T: Real>(knots: &[T], x: T) -> T {
    eval_segment(knots, locate(knots.len(), x))
}

/// `d curve / d x` on the segment.
#[inline]
pub fn slope_knots<T: Real>(knots: &[T], s: Segment<T>) -> T {
    (knots[s.index + 1] - knots[s.index]) * T::lit((knots.len() - 1) as f64)
}
