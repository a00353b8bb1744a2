//! Training loop realizing the min-max objective and all baselines with a
//! single SGD optimizer over every parameter group.
//!
//! Runs are deterministic in (method, task bytes, configs, seed): the batch
//! sampler consumes an identical RNG stream for every method, so degenerate
//! configurations of the joint objective reproduce the supervised baseline
//! bit for bit.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::common::{mix_seed, TaskKind};
use crate::data::{LabeledSet, SemiDaTask};
use crate::diffcore::{Graph, Tensor};
use crate::models::{
    init_model, LirrModel, ModelConfig, ModelError, DEFAULT_COSINE_TEMPERATURE,
};
use crate::objectives::{
    assemble_irm, assemble_lirr, AssembledLoss, Batches, LirrConfig, LossReport, ObjectiveError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Lirr,
    LirrCosc,
    Dann,
    Irm,
    SPlusT,
    FullT,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lirr => "lirr",
            Method::LirrCosc => "lirr_cosc",
            Method::Dann => "dann",
            Method::Irm => "irm",
            Method::SPlusT => "s_plus_t",
            Method::FullT => "full_t",
        }
    }

    pub const ALL: [Method; 6] = [
        Method::Lirr,
        Method::LirrCosc,
        Method::Dann,
        Method::Irm,
        Method::SPlusT,
        Method::FullT,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Optimizer recipe: SGD with momentum and weight decay, learning rate
/// multiplied by 0.1 once training reaches three quarters of the iterations.
#[derive(Clone, Copy, Debug)]
pub struct OptimConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub total_iters: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            total_iters: 4000,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0) {
            return Err(TrainError::BadConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::BadConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.total_iters == 0 || self.batch_size == 0 {
            return Err(TrainError::BadConfig("iters and batch size must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::BadConfig("weight decay must be >= 0".into()));
        }
        Ok(())
    }

    pub fn decay_point(&self) -> usize {
        (0.75 * self.total_iters as f64).floor() as usize
    }

    pub fn lr_at(&self, iter: usize) -> f64 {
        if iter >= self.decay_point() {
            self.lr * 0.1
        } else {
            self.lr
        }
    }
}

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
    #[error("training diverged at iteration {iter}: loss {loss}")]
    Diverged { iter: usize, loss: f64 },
}

/// Momentum buffers aligned with the model's parameter order.
pub struct SgdState {
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(model: &LirrModel) -> Self {
        SgdState {
            velocity: model
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }
}

/// One SGD step: v <- momentum v + grad + weight_decay param;
/// param <- param - lr v.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(TrainError::BadConfig("parameter/gradient count mismatch".into()));
    }
    for ((param, grad), velocity) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if param.shape() != grad.shape() {
            return Err(TrainError::BadConfig(format!(
                "gradient shape {} does not match parameter {}",
                grad, param
            )));
        }
        for ((p, g), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(velocity.data_mut())
        {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}

/// Loss components logged for one iteration.
#[derive(Clone, Copy, Debug)]
pub struct IterRow {
    pub iter: usize,
    pub report: LossReport,
    pub lr: f64,
}

/// Everything a single training run produces.
pub struct RunRecord {
    pub method: Method,
    pub rows: Vec<IterRow>,
    pub final_src: f64,
    pub final_tgt: f64,
    pub model: LirrModel,
    pub wall_ms: u128,
}

impl RunRecord {
    /// Metrics stream: one row per iteration plus a final metrics line.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("iter,l_i,l_d,l_rep,l_risk,l_total,lr\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                row.iter,
                row.report.l_i,
                row.report.l_d,
                row.report.l_rep,
                row.report.l_risk,
                row.report.l_total,
                row.lr
            ));
        }
        out.push_str(&format!("final,{:.17e},{:.17e}\n", self.final_src, self.final_tgt));
        out
    }
}

/// Accuracy (classification) or mean absolute error (regression) of the
/// invariant route on a labeled set.
pub fn evaluate(model: &LirrModel, set: &LabeledSet, kind: TaskKind) -> Result<f64, TrainError> {
    if set.is_empty() {
        return Err(TrainError::BadConfig("evaluation set is empty".into()));
    }
    let pred = model.predict(&set.features)?;
    match kind {
        TaskKind::Classification => {
            let labels = set
                .labels
                .as_classes()
                .ok_or_else(|| TrainError::BadConfig("expected class labels".into()))?;
            let mut correct = 0usize;
            for i in 0..set.len() {
                let row = pred.row(i);
                let mut argmax = 0;
                for j in 1..row.len() {
                    if row[j] > row[argmax] {
                        argmax = j;
                    }
                }
                if argmax == labels[i] {
                    correct += 1;
                }
            }
            Ok(correct as f64 / set.len() as f64)
        }
        TaskKind::Regression => {
            let labels = set
                .labels
                .as_reals()
                .ok_or_else(|| TrainError::BadConfig("expected real labels".into()))?;
            let mae = labels
                .iter()
                .enumerate()
                .map(|(i, y)| (pred.get(i, 0) - y).abs())
                .sum::<f64>()
                / set.len() as f64;
            Ok(mae)
        }
    }
}

/// Draws with-replacement index batches; every method consumes the same
/// stream so runs differing only in loss branches stay comparable.
struct BatchSampler {
    rng: ChaCha12Rng,
    batch_size: usize,
}

impl BatchSampler {
    fn new(seed: u64, batch_size: usize) -> Self {
        BatchSampler { rng: ChaCha12Rng::seed_from_u64(seed), batch_size }
    }

    fn indices(&mut self, len: usize) -> Vec<usize> {
        (0..self.batch_size).map(|_| self.rng.gen_range(0..len)).collect()
    }
}

/// Trains one method on one task.
pub fn train(
    method: Method,
    task: &SemiDaTask,
    lirr_cfg: &LirrConfig,
    optim: &OptimConfig,
) -> Result<RunRecord, TrainError> {
    optim.validate()?;
    lirr_cfg.validate()?;
    let start = Instant::now();
    let kind = task.task_kind();
    if kind != lirr_cfg.task_kind {
        return Err(TrainError::BadConfig(format!(
            "objective task kind {} does not match task {}",
            lirr_cfg.task_kind, kind
        )));
    }
    if method == Method::LirrCosc && kind == TaskKind::Regression {
        return Err(TrainError::BadConfig(
            "the cosine head is a classification module".into(),
        ));
    }

    // effective objective per method
    let cfg = match method {
        Method::Lirr | Method::LirrCosc => *lirr_cfg,
        Method::Dann => LirrConfig { lambda_risk: 0.0, ..*lirr_cfg },
        Method::Irm | Method::SPlusT | Method::FullT => {
            LirrConfig { lambda_risk: 0.0, lambda_rep: 0.0, ..*lirr_cfg }
        }
    };

    let mut model_cfg = ModelConfig::new(
        task.source.features.cols(),
        kind,
        task.scenario.n_classes(),
        mix_seed(optim.seed, &["model-init"]),
    );
    model_cfg.grl_lambda_rep = cfg.lambda_rep;
    model_cfg.grl_lambda_risk = cfg.lambda_risk;
    if method == Method::LirrCosc {
        model_cfg = model_cfg.with_cosine_head(DEFAULT_COSINE_TEMPERATURE);
    }
    let mut model = init_model(&model_cfg)?;
    let mut state = SgdState::new(&model);
    let mut sampler = BatchSampler::new(mix_seed(optim.seed, &["batch-stream"]), optim.batch_size);

    // the fully-labeled-target reference trains on half of the target test
    // set and is evaluated on the other half
    let full_t_split = if method == Method::FullT {
        let half = task.test_target.len() / 2;
        let train_idx: Vec<usize> = (0..half).collect();
        let eval_idx: Vec<usize> = (half..task.test_target.len()).collect();
        Some((task.test_target.subset(&train_idx), task.test_target.subset(&eval_idx)))
    } else {
        None
    };

    let mut rows = Vec::with_capacity(optim.total_iters);
    for iter in 0..optim.total_iters {
        let src_idx = sampler.indices(task.source.len());
        let tl_idx = sampler.indices(task.target_labeled.len());
        let tu_idx = sampler.indices(task.target_unlabeled.len());

        let batches = match &full_t_split {
            Some((train_half, _)) => {
                let idx: Vec<usize> =
                    src_idx.iter().map(|i| i % train_half.len()).collect();
                Batches {
                    source: train_half.subset(&idx),
                    target_labeled: train_half.subset(&[]),
                    target_unlabeled: Tensor::zeros(0, task.source.features.cols()),
                }
            }
            None => Batches {
                source: task.source.subset(&src_idx),
                target_labeled: task.target_labeled.subset(&tl_idx),
                target_unlabeled: task.target_unlabeled.subset(&tu_idx).features,
            },
        };

        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let assembled: AssembledLoss = match method {
            Method::Irm => {
                // gradient penalty ramps from 1 to its full weight halfway in
                let weight = if iter * 2 < optim.total_iters { 1.0 } else { 100.0 };
                assemble_irm(&mut g, &bound, &batches, weight)?
            }
            _ => assemble_lirr(&mut g, &bound, &batches, &cfg)?,
        };
        let report = assembled.report(&g, &cfg, &batches);
        if !report.l_total.is_finite() || report.l_total.abs() > 1e6 {
            return Err(TrainError::Diverged { iter, loss: report.l_total });
        }

        let grads = g.backward(assembled.backward_root)?;
        let grad_refs: Vec<&Tensor> = bound
            .param_ids()
            .iter()
            .map(|id| grads.wrt(*id).expect("parameter gradient present"))
            .collect();
        let lr = optim.lr_at(iter);
        sgd_step(
            &mut model.params_mut(),
            &grad_refs,
            &mut state,
            lr,
            optim.momentum,
            optim.weight_decay,
        )?;
        if !model.all_finite() {
            return Err(TrainError::Diverged { iter, loss: report.l_total });
        }
        rows.push(IterRow { iter, report, lr });
    }

    let (final_src, final_tgt) = match &full_t_split {
        Some((_, eval_half)) => {
            (evaluate(&model, &task.source, kind)?, evaluate(&model, eval_half, kind)?)
        }
        None => (
            evaluate(&model, &task.source, kind)?,
            evaluate(&model, &task.test_target, kind)?,
        ),
    };

    Ok(RunRecord {
        method,
        rows,
        final_src,
        final_tgt,
        model,
        wall_ms: start.elapsed().as_millis(),
    })
}
