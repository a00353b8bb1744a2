//! Explicitly enumerable hypothesis classes over gridded or finite feature
//! spaces. Exact suprema over these classes are computed by full
//! enumeration, so the classes are kept small by construction.

use crate::bound::BoundError;
use crate::diffcore::Tensor;

/// A single binary hypothesis.
#[derive(Clone, Debug)]
pub enum Hypothesis {
    /// Axis-aligned threshold on points in feature space.
    Stump { axis: usize, threshold: f64, positive_above: bool },
    /// Explicit subset of a finite support, one bit per point (support <= 64).
    Mask { bits: u64, support: usize },
}

impl Hypothesis {
    pub fn eval_point(&self, x: &[f64]) -> bool {
        match self {
            Hypothesis::Stump { axis, threshold, positive_above } => {
                (x[*axis] > *threshold) == *positive_above
            }
            Hypothesis::Mask { .. } => {
                panic!("mask hypotheses are defined over finite supports, not points")
            }
        }
    }

    pub fn eval_index(&self, i: usize) -> bool {
        match self {
            Hypothesis::Mask { bits, support } => {
                debug_assert!(i < *support);
                bits >> i & 1 == 1
            }
            Hypothesis::Stump { axis, threshold, positive_above } => {
                debug_assert_eq!(*axis, 0);
                ((i as f64) > *threshold) == *positive_above
            }
        }
    }
}

/// Explicit list of binary hypotheses plus the capacity value used in the
/// concentration term.
#[derive(Clone, Debug)]
pub struct FiniteHypothesisClass {
    pub hypotheses: Vec<Hypothesis>,
    pub vc_dim: usize,
}

impl FiniteHypothesisClass {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn ensure_nonempty(&self) -> Result<(), BoundError> {
        if self.is_empty() {
            Err(BoundError::EmptyClass)
        } else {
            Ok(())
        }
    }

    /// Signed axis-aligned stumps with thresholds on a regular grid spanning
    /// the given per-axis bounds.
    pub fn stump_grid(bounds: &[(f64, f64)], resolution: usize) -> Self {
        let mut hypotheses = Vec::new();
        for (axis, (lo, hi)) in bounds.iter().enumerate() {
            for i in 0..=resolution {
                let threshold = lo + (hi - lo) * i as f64 / resolution as f64;
                for positive_above in [false, true] {
                    hypotheses.push(Hypothesis::Stump { axis, threshold, positive_above });
                }
            }
        }
        // signed 2-D stumps shatter 3 points but not 4
        FiniteHypothesisClass { hypotheses, vc_dim: 3 }
    }

    /// Stump grid spanning the union of two samples (symmetric in the two).
    pub fn stump_grid_from_samples(a: &Tensor, b: &Tensor, resolution: usize) -> Self {
        let dims = a.cols();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
        for t in [a, b] {
            for i in 0..t.rows() {
                for (j, bound) in bounds.iter_mut().enumerate() {
                    bound.0 = bound.0.min(t.get(i, j));
                    bound.1 = bound.1.max(t.get(i, j));
                }
            }
        }
        Self::stump_grid(&bounds, resolution)
    }

    /// Every subset of a finite support (support <= 16 to keep 2^n sane).
    pub fn all_subsets(support: usize) -> Result<Self, BoundError> {
        if support > 16 {
            return Err(BoundError::BadInput(format!(
                "all-subsets class over {support} points is too large"
            )));
        }
        let hypotheses = (0u64..1 << support)
            .map(|bits| Hypothesis::Mask { bits, support })
            .collect();
        Ok(FiniteHypothesisClass { hypotheses, vc_dim: support })
    }

    /// Signed prefix stumps over an ordered finite support of the given size.
    pub fn finite_stumps(support: usize) -> Result<Self, BoundError> {
        if support > 64 {
            return Err(BoundError::BadInput(format!(
                "finite stump support {support} exceeds 64"
            )));
        }
        let mut hypotheses = Vec::new();
        for cut in 0..=support {
            // prefix {0..cut} and its complement
            let prefix: u64 = if cut == 0 { 0 } else { (!0u64) >> (64 - cut) };
            let full: u64 = if support == 64 { !0 } else { (1 << support) - 1 };
            hypotheses.push(Hypothesis::Mask { bits: prefix, support });
            hypotheses.push(Hypothesis::Mask { bits: full ^ prefix, support });
        }
        Ok(FiniteHypothesisClass { hypotheses, vc_dim: 2 })
    }
}

/// A bounded regression stump: constant on each side of an axis threshold,
/// both values drawn from a small discrete set in [0, 1].
#[derive(Clone, Copy, Debug)]
pub struct RegressionStump {
    pub axis: usize,
    pub threshold: f64,
    pub below: f64,
    pub above: f64,
}

impl RegressionStump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x[self.axis] > self.threshold {
            self.above
        } else {
            self.below
        }
    }
}

/// Enumerable class of bounded regression stumps.
#[derive(Clone, Debug)]
pub struct RegressionStumpClass {
    pub hypotheses: Vec<RegressionStump>,
    pub pdim: usize,
}

impl RegressionStumpClass {
    /// Stumps on a regular threshold grid with output levels
    /// {0, 0.25, 0.5, 0.75, 1}.
    pub fn grid(bounds: &[(f64, f64)], resolution: usize) -> Self {
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut hypotheses = Vec::new();
        for (axis, (lo, hi)) in bounds.iter().enumerate() {
            for i in 0..=resolution {
                let threshold = lo + (hi - lo) * i as f64 / resolution as f64;
                for &below in &levels {
                    for &above in &levels {
                        hypotheses.push(RegressionStump { axis, threshold, below, above });
                    }
                }
            }
        }
        RegressionStumpClass { hypotheses, pdim: 3 }
    }

    pub fn grid_from_samples(a: &Tensor, b: &Tensor, resolution: usize) -> Self {
        let dims = a.cols();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
        for t in [a, b] {
            for i in 0..t.rows() {
                for (j, bound) in bounds.iter_mut().enumerate() {
                    bound.0 = bound.0.min(t.get(i, j));
                    bound.1 = bound.1.max(t.get(i, j));
                }
            }
        }
        Self::grid(&bounds, resolution)
    }
}
