//! Semi-supervised domain adaptation tasks: the (S, labeled-target,
//! unlabeled-target) triple plus a held-out target test set.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::common::{Domain, TaskKind};
use crate::data::scenario::{Labels, Scenario};
use crate::data::DataError;
use crate::diffcore::Tensor;

/// Labeled examples from one domain.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub features: Tensor,
    pub labels: Labels,
    pub domain: Domain,
}

impl LabeledSet {
    pub fn new(features: Tensor, labels: Labels, domain: Domain) -> Result<Self, DataError> {
        if features.rows() != labels.len() {
            return Err(DataError::InvalidSizes(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(DataError::InvalidSizes("non-finite feature values".into()));
        }
        Ok(LabeledSet { features, labels, domain })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        let features = Tensor::from_fn(idx.len(), self.features.cols(), |i, j| {
            self.features.get(idx[i], j)
        });
        LabeledSet { features, labels: self.labels.subset(idx), domain: self.domain }
    }

    /// Regression labels as an n x 1 tensor.
    pub fn label_column(&self) -> Option<Tensor> {
        self.labels.as_reals().map(Tensor::column)
    }
}

/// Unlabeled examples from one domain.
#[derive(Clone, Debug)]
pub struct UnlabeledSet {
    pub features: Tensor,
    pub domain: Domain,
}

impl UnlabeledSet {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn subset(&self, idx: &[usize]) -> UnlabeledSet {
        let features = Tensor::from_fn(idx.len(), self.features.cols(), |i, j| {
            self.features.get(idx[i], j)
        });
        UnlabeledSet { features, domain: self.domain }
    }
}

/// A full Semi-DA problem instance with known generative ground truth.
#[derive(Clone, Debug)]
pub struct SemiDaTask {
    pub scenario: Scenario,
    pub seed: u64,
    pub source: LabeledSet,
    pub target_labeled: LabeledSet,
    pub target_unlabeled: UnlabeledSet,
    pub test_target: LabeledSet,
}

impl SemiDaTask {
    pub fn task_kind(&self) -> TaskKind {
        self.scenario.task_kind()
    }

    pub fn n(&self) -> usize {
        self.source.len()
    }

    pub fn m(&self) -> usize {
        self.target_labeled.len()
    }

    pub fn k(&self) -> usize {
        self.target_unlabeled.len()
    }
}

/// Sample counts for task generation.
#[derive(Clone, Copy, Debug)]
pub struct GenOptions {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub test_size: usize,
    /// Require m <= n / 10. Ratio sweeps that deliberately grow the labeled
    /// target share disable this.
    pub enforce_small_m: bool,
}

impl GenOptions {
    pub fn new(n: usize, m: usize, k: usize) -> Self {
        GenOptions { n, m, k, test_size: 2000, enforce_small_m: true }
    }
}

/// Generates a task deterministically from the scenario and seed.
pub fn gen_task(scenario: &Scenario, opts: GenOptions, seed: u64) -> Result<SemiDaTask, DataError> {
    if opts.n == 0 || opts.k == 0 || opts.test_size == 0 {
        return Err(DataError::InvalidSizes(format!(
            "n, k, test_size must be >= 1 (got n={}, k={}, test={})",
            opts.n, opts.k, opts.test_size
        )));
    }
    if opts.m == 0 || opts.m > opts.k {
        return Err(DataError::InvalidSizes(format!(
            "need 1 <= m <= k, got m={}, k={}",
            opts.m, opts.k
        )));
    }
    if opts.enforce_small_m && opts.m > opts.n / 10 {
        return Err(DataError::InvalidSizes(format!(
            "m = {} exceeds n/10 = {}; labeled target sets are small by regime",
            opts.m,
            opts.n / 10
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (src_x, src_y) = scenario.sample(Domain::Source, opts.n, &mut rng);
    let (tl_x, tl_y) = scenario.sample(Domain::Target, opts.m, &mut rng);
    let (tu_x, _) = scenario.sample(Domain::Target, opts.k, &mut rng);
    let (test_x, test_y) = scenario.sample(Domain::Target, opts.test_size, &mut rng);

    Ok(SemiDaTask {
        scenario: scenario.clone(),
        seed,
        source: LabeledSet::new(src_x, src_y, Domain::Source)?,
        target_labeled: LabeledSet::new(tl_x, tl_y, Domain::Target)?,
        target_unlabeled: UnlabeledSet { features: tu_x, domain: Domain::Target },
        test_target: LabeledSet::new(test_x, test_y, Domain::Target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_task(seed: u64) -> SemiDaTask {
        let scenario = Scenario::default_for("label_shift").unwrap();
        gen_task(&scenario, GenOptions::new(500, 20, 500), seed).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_tasks() {
        let a = default_task(7);
        let b = default_task(7);
        assert_eq!(a.source.features.data(), b.source.features.data());
        assert_eq!(a.source.labels, b.source.labels);
        assert_eq!(a.test_target.features.data(), b.test_target.features.data());
    }

    #[test]
    fn different_seed_differs() {
        let a = default_task(7);
        let b = default_task(8);
        assert_ne!(a.source.features.data(), b.source.features.data());
    }

    #[test]
    fn size_validation() {
        let scenario = Scenario::default_for("label_shift").unwrap();
        assert!(gen_task(&scenario, GenOptions::new(100, 0, 100), 1).is_err());
        assert!(gen_task(&scenario, GenOptions::new(100, 200, 100), 1).is_err());
        // m > n/10 rejected under the default regime guard
        assert!(gen_task(&scenario, GenOptions::new(100, 50, 100), 1).is_err());
        let mut opts = GenOptions::new(100, 50, 100);
        opts.enforce_small_m = false;
        assert!(gen_task(&scenario, opts, 1).is_ok());
    }

    #[test]
    fn train_and_test_rows_are_disjoint() {
        let task = default_task(3);
        let train_rows: Vec<&[f64]> = (0..task.source.len())
            .map(|i| task.source.features.row(i))
            .chain((0..task.target_labeled.len()).map(|i| task.target_labeled.features.row(i)))
            .chain((0..task.target_unlabeled.len()).map(|i| task.target_unlabeled.features.row(i)))
            .collect();
        for i in 0..task.test_target.len() {
            let test_row = task.test_target.features.row(i);
            assert!(!train_rows.iter().any(|r| *r == test_row));
        }
    }

    #[test]
    fn label_shift_priors_show_up_in_samples() {
        let task = default_task(11);
        let ones = |labels: &Labels| {
            labels.as_classes().unwrap().iter().sum::<usize>() as f64
                / labels.len() as f64
        };
        assert!((ones(&task.source.labels) - 0.5).abs() < 0.06);
        assert!((ones(&task.test_target.labels) - 0.1).abs() < 0.04);
    }
}
