//! Training losses: the adversarial invariant-representation loss, the
//! invariant-risk losses built on the two predictors, their combination
//! into the full joint objective, and the supervised / adversarial-only /
//! gradient-penalty baselines.
//!
//! The min-max structure is realized in a single backward pass: both heads
//! descend their own losses at full strength, while gradient reversal
//! layers between the encoder and each adversarial head feed the opposing,
//! coefficient-scaled gradient into the encoder. A loss branch whose
//! coefficient is exactly zero is omitted from the graph, so degenerate
//! configurations reduce bit-exactly to the supervised baseline.

use thiserror::Error;

use crate::common::TaskKind;
use crate::data::{LabeledSet, Labels};
use crate::diffcore::{DiffError, Graph, NodeId, Tensor};
use crate::models::BoundModel;

#[derive(Error, Debug)]
pub enum ObjectiveError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{0}: batch must be nonempty")]
    EmptyBatch(&'static str),
    #[error("bad objective config: {0}")]
    BadConfig(String),
}

/// Trade-off weights and task kind for the joint objective.
#[derive(Clone, Copy, Debug)]
pub struct LirrConfig {
    pub lambda_risk: f64,
    pub lambda_rep: f64,
    pub task_kind: TaskKind,
    /// Whether the domain classifier also sees labeled-target features.
    pub rep_includes_labeled_target: bool,
}

impl LirrConfig {
    pub fn new(task_kind: TaskKind) -> Self {
        LirrConfig {
            lambda_risk: 1.0,
            lambda_rep: 1.0,
            task_kind,
            rep_includes_labeled_target: true,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.lambda_risk < 0.0 || self.lambda_rep < 0.0 {
            return Err(ObjectiveError::BadConfig(format!(
                "lambdas must be >= 0, got risk={} rep={}",
                self.lambda_risk, self.lambda_rep
            )));
        }
        Ok(())
    }
}

/// One step's worth of data: equal-sized draws from the labeled source,
/// the labeled target (with replacement), and the unlabeled target.
#[derive(Clone, Debug)]
pub struct Batches {
    pub source: LabeledSet,
    pub target_labeled: LabeledSet,
    pub target_unlabeled: Tensor,
}

/// Per-batch component values of the joint objective.
#[derive(Clone, Copy, Debug)]
pub struct LossReport {
    pub l_i: f64,
    pub l_d: f64,
    pub l_rep: f64,
    pub l_risk: f64,
    pub l_total: f64,
    pub n_s: usize,
    pub n_t_lab: usize,
    pub n_t_unlab: usize,
}

/// Node handles of an assembled objective graph.
pub struct AssembledLoss {
    /// Scalar whose single backward realizes the min-max updates.
    pub backward_root: NodeId,
    pub l_i: NodeId,
    pub l_d: Option<NodeId>,
    pub l_rep: Option<NodeId>,
    pub irm_penalty: Option<NodeId>,
}

impl AssembledLoss {
    /// Component values plus the bookkeeping identities
    /// l_risk = l_i + lambda_risk (l_i - l_d) and
    /// l_total = l_risk + lambda_rep l_rep.
    pub fn report(&self, g: &Graph, cfg: &LirrConfig, batches: &Batches) -> LossReport {
        let l_i = g.value(self.l_i).item();
        let l_d = self.l_d.map(|n| g.value(n).item()).unwrap_or(0.0);
        let l_rep = self.l_rep.map(|n| g.value(n).item()).unwrap_or(0.0);
        let l_risk = l_i + cfg.lambda_risk * (l_i - l_d);
        let mut l_total = l_risk + cfg.lambda_rep * l_rep;
        if self.irm_penalty.is_some() {
            // gradient-penalty baseline: the optimized scalar is the total
            l_total = g.value(self.backward_root).item();
        }
        LossReport {
            l_i,
            l_d,
            l_rep,
            l_risk,
            l_total,
            n_s: batches.source.len(),
            n_t_lab: batches.target_labeled.len(),
            n_t_unlab: batches.target_unlabeled.rows(),
        }
    }
}

/// Concatenates the labeled batches (equal per-example weight) and returns
/// features, labels, and the per-row domain channel column.
fn labeled_union(
    src: &LabeledSet,
    tgt: &LabeledSet,
) -> Result<(Tensor, Labels, Tensor), ObjectiveError> {
    match (src.is_empty(), tgt.is_empty()) {
        (true, true) => Err(ObjectiveError::EmptyBatch("labeled union")),
        (false, true) => Ok((
            src.features.clone(),
            src.labels.clone(),
            Tensor::filled(src.len(), 1, src.domain.channel_value()),
        )),
        (true, false) => Ok((
            tgt.features.clone(),
            tgt.labels.clone(),
            Tensor::filled(tgt.len(), 1, tgt.domain.channel_value()),
        )),
        (false, false) => {
            let features = Tensor::vstack(&src.features, &tgt.features);
            let labels = match (&src.labels, &tgt.labels) {
                (Labels::Classes(a), Labels::Classes(b)) => {
                    Labels::Classes(a.iter().chain(b).copied().collect())
                }
                (Labels::Reals(a), Labels::Reals(b)) => {
                    Labels::Reals(a.iter().chain(b).copied().collect())
                }
                _ => return Err(ObjectiveError::BadConfig("mixed label kinds".into())),
            };
            let channel = Tensor::from_fn(src.len() + tgt.len(), 1, |i, _| {
                if i < src.len() {
                    src.domain.channel_value()
                } else {
                    tgt.domain.channel_value()
                }
            });
            Ok((features, labels, channel))
        }
    }
}

/// Mean task loss of predictions against labels: cross-entropy for class
/// labels, mean absolute error for real labels.
fn task_loss(g: &mut Graph, pred: NodeId, labels: &Labels) -> Result<NodeId, ObjectiveError> {
    match labels {
        Labels::Classes(classes) => Ok(g.softmax_cross_entropy(pred, classes)?),
        Labels::Reals(values) => {
            let target = g.input(Tensor::column(values));
            Ok(g.l1_loss(pred, target)?)
        }
    }
}

/// Mean task loss of the invariant predictor over the union of both labeled
/// batches, every example weighted equally.
pub fn loss_invariant(
    g: &mut Graph,
    bound: &BoundModel,
    src: &LabeledSet,
    tgt: &LabeledSet,
) -> Result<NodeId, ObjectiveError> {
    let (features, labels, _) = labeled_union(src, tgt)?;
    let z = bound.encode(g, &features)?;
    let pred = bound.predict_invariant(g, z)?;
    task_loss(g, pred, &labels)
}

/// The supervised baseline: labeled source plus the few labeled target
/// samples, unlabeled data ignored.
pub fn loss_s_plus_t(
    g: &mut Graph,
    bound: &BoundModel,
    src: &LabeledSet,
    tgt: &LabeledSet,
) -> Result<NodeId, ObjectiveError> {
    loss_invariant(g, bound, src, tgt)
}

fn dependent_core(
    g: &mut Graph,
    bound: &BoundModel,
    src: &LabeledSet,
    tgt: &LabeledSet,
    grl_lambda: Option<f64>,
) -> Result<NodeId, ObjectiveError> {
    let (features, labels, channel) = labeled_union(src, tgt)?;
    let mut z = bound.encode(g, &features)?;
    if let Some(lambda) = grl_lambda {
        z = g.grad_reverse(z, lambda)?;
    }
    let ch = g.input(channel);
    let zd = g.concat_cols(z, ch)?;
    let pred = bound.forward_fd_on(g, zd)?;
    task_loss(g, pred, &labels)
}

/// Mean task loss of the domain-dependent predictor, each example routed
/// through its true domain channel.
pub fn loss_dependent(
    g: &mut Graph,
    bound: &BoundModel,
    src: &LabeledSet,
    tgt: &LabeledSet,
) -> Result<NodeId, ObjectiveError> {
    dependent_core(g, bound, src, tgt, None)
}

/// Domain-confusion loss: balanced binary cross-entropy of the domain
/// classifier on real domain labels, with gradient reversal between the
/// encoder and the classifier. One backward trains the classifier to
/// discriminate and the encoder to confuse.
pub fn loss_rep(
    g: &mut Graph,
    bound: &BoundModel,
    x_source: &Tensor,
    x_target: &Tensor,
    grl_lambda: f64,
) -> Result<NodeId, ObjectiveError> {
    if x_source.rows() == 0 || x_target.rows() == 0 {
        return Err(ObjectiveError::EmptyBatch("domain-confusion"));
    }
    let z_s = bound.encode(g, x_source)?;
    let p_s = bound.domain_prob(g, z_s, grl_lambda)?;
    let ones = g.input(Tensor::filled(x_source.rows(), 1, 1.0));
    let bce_s = g.bce_loss(p_s, ones)?;

    let z_t = bound.encode(g, x_target)?;
    let p_t = bound.domain_prob(g, z_t, grl_lambda)?;
    let zeros = g.input(Tensor::filled(x_target.rows(), 1, 0.0));
    let bce_t = g.bce_loss(p_t, zeros)?;

    let sum = g.add(bce_s, bce_t)?;
    Ok(g.scale(sum, 0.5))
}

/// Squared gradient of one environment's risk with respect to a dummy unit
/// scale on the predictions, expressed as an explicit first-order graph.
fn irm_penalty_env(
    g: &mut Graph,
    bound: &BoundModel,
    env: &LabeledSet,
) -> Result<NodeId, ObjectiveError> {
    let z = bound.encode(g, &env.features)?;
    let pred = bound.predict_invariant(g, z)?;
    let grad_s = match &env.labels {
        Labels::Classes(classes) => {
            // d/ds CE(s . logits) at s = 1: mean_i sum_c (p_ic - y_ic) logit_ic
            let c = g.value(pred).cols();
            let onehot = Tensor::from_fn(env.len(), c, |i, j| f64::from(classes[i] == j));
            let onehot = g.input(onehot);
            let probs = g.softmax_rows(pred);
            let diff = g.sub(probs, onehot)?;
            let prod = g.mul(diff, pred)?;
            let m = g.mean(prod);
            g.scale(m, c as f64)
        }
        Labels::Reals(values) => {
            // d/ds mean |s . pred - y| at s = 1: mean_i sign(pred - y) pred
            let target = g.input(Tensor::column(values));
            let resid = g.sub(pred, target)?;
            let sg = g.sign(resid);
            let prod = g.mul(sg, pred)?;
            g.mean(prod)
        }
    };
    Ok(g.mul(grad_s, grad_s)?)
}

/// Gradient-penalty baseline over the two labeled environments.
pub fn assemble_irm(
    g: &mut Graph,
    bound: &BoundModel,
    batches: &Batches,
    penalty_weight: f64,
) -> Result<AssembledLoss, ObjectiveError> {
    if penalty_weight < 0.0 {
        return Err(ObjectiveError::BadConfig(format!(
            "penalty weight must be >= 0, got {penalty_weight}"
        )));
    }
    let l_i = loss_invariant(g, bound, &batches.source, &batches.target_labeled)?;
    if penalty_weight == 0.0 {
        return Ok(AssembledLoss {
            backward_root: l_i,
            l_i,
            l_d: None,
            l_rep: None,
            irm_penalty: None,
        });
    }
    let mut penalty: Option<NodeId> = None;
    for env in [&batches.source, &batches.target_labeled] {
        if env.is_empty() {
            continue;
        }
        let p = irm_penalty_env(g, bound, env)?;
        penalty = Some(match penalty {
            Some(total) => g.add(total, p)?,
            None => p,
        });
    }
    let Some(penalty) = penalty else {
        return Ok(AssembledLoss {
            backward_root: l_i,
            l_i,
            l_d: None,
            l_rep: None,
            irm_penalty: None,
        });
    };
    let weighted = g.scale(penalty, penalty_weight);
    let mut total = g.add(l_i, weighted)?;
    if penalty_weight > 1.0 {
        // keep the effective step size stable once the penalty dominates
        total = g.scale(total, 1.0 / penalty_weight);
    }
    Ok(AssembledLoss {
        backward_root: total,
        l_i,
        l_d: None,
        l_rep: None,
        irm_penalty: Some(penalty),
    })
}

/// Assembles the joint objective.
///
/// The backward root is (1 + lambda_risk) L_i plus, when the coefficients
/// are nonzero, the domain-dependent loss behind a gradient reversal of
/// coefficient lambda_risk and the domain-confusion loss with reversal
/// coefficient lambda_rep. Heads therefore descend their own losses while
/// the encoder receives the opposing scaled gradients; with both
/// coefficients zero the graph is exactly the supervised baseline.
pub fn assemble_lirr(
    g: &mut Graph,
    bound: &BoundModel,
    batches: &Batches,
    cfg: &LirrConfig,
) -> Result<AssembledLoss, ObjectiveError> {
    cfg.validate()?;
    let l_i = loss_invariant(g, bound, &batches.source, &batches.target_labeled)?;
    let mut root = g.scale(l_i, 1.0 + cfg.lambda_risk);

    let l_d = if cfg.lambda_risk > 0.0 {
        let l_d = dependent_core(
            g,
            bound,
            &batches.source,
            &batches.target_labeled,
            Some(cfg.lambda_risk),
        )?;
        root = g.add(root, l_d)?;
        Some(l_d)
    } else {
        None
    };

    let l_rep = if cfg.lambda_rep > 0.0 {
        let x_target = if cfg.rep_includes_labeled_target && !batches.target_labeled.is_empty() {
            Tensor::vstack(&batches.target_labeled.features, &batches.target_unlabeled)
        } else {
            batches.target_unlabeled.clone()
        };
        let l_rep = loss_rep(g, bound, &batches.source.features, &x_target, cfg.lambda_rep)?;
        root = g.add(root, l_rep)?;
        Some(l_rep)
    } else {
        None
    };

    Ok(AssembledLoss { backward_root: root, l_i, l_d, l_rep, irm_penalty: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::common::{Domain, TaskKind};
    use crate::data::{gen_task, GenOptions, Scenario};
    use crate::models::{init_model, LirrModel, ModelConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn small_model(seed: u64) -> LirrModel {
        let mut cfg = ModelConfig::new(2, TaskKind::Classification, 2, seed);
        cfg.encoder_hidden = vec![8];
        cfg.z_dim = 4;
        cfg.head_hidden = vec![6];
        init_model(&cfg).unwrap()
    }

    fn small_batches(seed: u64) -> Batches {
        let scenario = Scenario::default_for("conditional_shift").unwrap();
        let task = gen_task(&scenario, GenOptions::new(120, 12, 120), seed).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        Batches {
            source: task.source.subset(&idx),
            target_labeled: task.target_labeled.subset(&(0..12).collect::<Vec<_>>()),
            target_unlabeled: task.target_unlabeled.subset(&idx).features,
        }
    }

    fn zero_domain_classifier(model: &mut LirrModel) {
        let groups = model.param_groups();
        let c_range = groups.iter().find(|(n, _)| *n == "c").unwrap().1.clone();
        let mut params = model.params_mut();
        for i in c_range {
            for v in params[i].data_mut() {
                *v = 0.0;
            }
        }
    }

    #[test]
    fn uniform_discriminator_gives_ln2() {
        let mut model = small_model(3);
        zero_domain_classifier(&mut model);
        let batches = small_batches(1);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let l = loss_rep(
            &mut g,
            &bound,
            &batches.source.features,
            &batches.target_unlabeled,
            1.0,
        )
        .unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn identical_feature_distributions_keep_bce_above_ln2() {
        // indistinguishable inputs: any classifier scores >= ln 2 balanced BCE
        let model = small_model(5);
        let x = Tensor::from_fn(32, 2, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let l = loss_rep(&mut g, &bound, &x, &x, 1.0).unwrap();
        assert!(g.value(l).item() >= std::f64::consts::LN_2 - 1e-12);
    }

    #[test]
    fn rep_loss_rejects_empty_batches() {
        let model = small_model(5);
        let batches = small_batches(2);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let empty = Tensor::zeros(0, 2);
        assert!(matches!(
            loss_rep(&mut g, &bound, &batches.source.features, &empty, 1.0),
            Err(ObjectiveError::EmptyBatch(_))
        ));
    }

    #[test]
    fn invariant_loss_matches_manual_recomputation() {
        let model = small_model(7);
        let batches = small_batches(3);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let l = loss_invariant(&mut g, &bound, &batches.source, &batches.target_labeled).unwrap();

        // oracle: weighted mean of the two per-side cross-entropies
        let side = |set: &LabeledSet| {
            let logits = model.predict(&set.features).unwrap();
            let mut total = 0.0;
            for i in 0..set.len() {
                let row = logits.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                let label = set.labels.as_classes().unwrap()[i];
                total -= (row[label] - max) - denom.ln();
            }
            total
        };
        let n = (batches.source.len() + batches.target_labeled.len()) as f64;
        let manual = (side(&batches.source) + side(&batches.target_labeled)) / n;
        assert!((g.value(l).item() - manual).abs() < 1e-12);
    }

    #[test]
    fn invariant_loss_uniform_logits_is_ln2() {
        let mut model = small_model(7);
        // zero the invariant head so logits are uniformly zero
        let groups = model.param_groups();
        let fi_range = groups.iter().find(|(n, _)| *n == "fi").unwrap().1.clone();
        {
            let mut params = model.params_mut();
            for i in fi_range {
                for v in params[i].data_mut() {
                    *v = 0.0;
                }
            }
        }
        let batches = small_batches(4);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let l = loss_invariant(&mut g, &bound, &batches.source, &batches.target_labeled).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn invariant_loss_needs_some_labels() {
        let model = small_model(7);
        let batches = small_batches(4);
        let empty = batches.source.subset(&[]);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        assert!(matches!(
            loss_invariant(&mut g, &bound, &empty, &empty),
            Err(ObjectiveError::EmptyBatch(_))
        ));
        // one side empty is fine
        assert!(loss_invariant(&mut g, &bound, &batches.source, &empty).is_ok());
    }

    #[test]
    fn dependent_equals_invariant_when_channel_ignored_and_heads_equal() {
        // zero the domain-channel input weights of f_d and copy f_i's weights
        // into f_d's feature part: the two losses coincide exactly
        let mut model = small_model(9);
        let groups = model.param_groups();
        let fi_range = groups.iter().find(|(n, _)| *n == "fi").unwrap().1.clone();
        let fd_range = groups.iter().find(|(n, _)| *n == "fd").unwrap().1.clone();
        {
            let mut params = model.params_mut();
            // fi.w0 is 4x6, fd.w0 is 5x6 (feature rows then channel row)
            let fi_w0 = params[fi_range.start].clone();
            let fd_w0 = params[fd_range.start].data_mut();
            for r in 0..4 {
                for c in 0..6 {
                    fd_w0[r * 6 + c] = fi_w0.get(r, c);
                }
            }
            for c in 0..6 {
                fd_w0[4 * 6 + c] = 0.0;
            }
            // remaining layers: copy verbatim (same shapes)
            for (offset, src_idx) in (fi_range.start + 1..fi_range.end).enumerate() {
                let src = params[src_idx].clone();
                params[fd_range.start + 1 + offset].data_mut().copy_from_slice(src.data());
            }
        }
        let batches = small_batches(5);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let li = loss_invariant(&mut g, &bound, &batches.source, &batches.target_labeled).unwrap();
        let ld = loss_dependent(&mut g, &bound, &batches.source, &batches.target_labeled).unwrap();
        assert_eq!(g.value(li).item(), g.value(ld).item());
    }

    #[test]
    fn dependent_with_empty_target_is_pure_source() {
        let model = small_model(9);
        let batches = small_batches(6);
        let empty = batches.target_labeled.subset(&[]);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let with_empty =
            loss_dependent(&mut g, &bound, &batches.source, &empty).unwrap();
        let source_only =
            dependent_core(&mut g, &bound, &batches.source, &empty, None).unwrap();
        assert_eq!(g.value(with_empty).item(), g.value(source_only).item());
    }

    #[test]
    fn degenerate_lambdas_reduce_to_supervised_baseline_bit_exactly() {
        let model = small_model(11);
        let batches = small_batches(7);
        let mut cfg = LirrConfig::new(TaskKind::Classification);
        cfg.lambda_risk = 0.0;
        cfg.lambda_rep = 0.0;

        let mut g1 = Graph::new();
        let bound1 = model.bind(&mut g1);
        let assembled = assemble_lirr(&mut g1, &bound1, &batches, &cfg).unwrap();

        let mut g2 = Graph::new();
        let bound2 = model.bind(&mut g2);
        let baseline =
            loss_s_plus_t(&mut g2, &bound2, &batches.source, &batches.target_labeled).unwrap();

        assert_eq!(
            g1.value(assembled.backward_root).item().to_bits(),
            g2.value(baseline).item().to_bits()
        );

        // gradients agree bit-exactly too
        let grads1 = g1.backward(assembled.backward_root).unwrap();
        let grads2 = g2.backward(baseline).unwrap();
        for (a, b) in bound1.param_ids().iter().zip(bound2.param_ids()) {
            let ga = grads1.wrt(*a).unwrap();
            let gb = grads2.wrt(*b).unwrap();
            for (x, y) in ga.data().iter().zip(gb.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn report_identities_hold() {
        let model = small_model(13);
        let batches = small_batches(8);
        let cfg = LirrConfig::new(TaskKind::Classification);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let assembled = assemble_lirr(&mut g, &bound, &batches, &cfg).unwrap();
        let report = assembled.report(&g, &cfg, &batches);
        assert!(
            (report.l_risk - (report.l_i + cfg.lambda_risk * (report.l_i - report.l_d))).abs()
                < 1e-12
        );
        assert!(
            (report.l_total - (report.l_risk + cfg.lambda_rep * report.l_rep)).abs() < 1e-12
        );

        // parts recomputed separately agree
        let mut g2 = Graph::new();
        let bound2 = model.bind(&mut g2);
        let li = loss_invariant(&mut g2, &bound2, &batches.source, &batches.target_labeled)
            .unwrap();
        let ld =
            loss_dependent(&mut g2, &bound2, &batches.source, &batches.target_labeled).unwrap();
        let x_target =
            Tensor::vstack(&batches.target_labeled.features, &batches.target_unlabeled);
        let lrep =
            loss_rep(&mut g2, &bound2, &batches.source.features, &x_target, 1.0).unwrap();
        assert!((report.l_i - g2.value(li).item()).abs() < 1e-12);
        assert!((report.l_d - g2.value(ld).item()).abs() < 1e-12);
        assert!((report.l_rep - g2.value(lrep).item()).abs() < 1e-12);
    }

    #[test]
    fn lambda_rep_zero_reduces_to_risk_only() {
        let model = small_model(15);
        let batches = small_batches(9);
        let mut cfg = LirrConfig::new(TaskKind::Classification);
        cfg.lambda_rep = 0.0;
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let assembled = assemble_lirr(&mut g, &bound, &batches, &cfg).unwrap();
        assert!(assembled.l_rep.is_none());
        let report = assembled.report(&g, &cfg, &batches);
        assert_eq!(report.l_total, report.l_risk);
    }

    #[test]
    fn single_backward_matches_manual_sign_flip_references() {
        // the dual-run oracle: each parameter group's gradient from one
        // backward of the assembled objective equals the gradient of its
        // effective objective computed on plain graphs with manual signs
        let model = small_model(17);
        let batches = small_batches(10);
        let mut cfg = LirrConfig::new(TaskKind::Classification);
        cfg.lambda_risk = 0.7;
        cfg.lambda_rep = 0.3;

        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let assembled = assemble_lirr(&mut g, &bound, &batches, &cfg).unwrap();
        let grads = g.backward(assembled.backward_root).unwrap();

        let x_target =
            Tensor::vstack(&batches.target_labeled.features, &batches.target_unlabeled);

        // reference 1: minimizer groups see (1 + l_risk) L_i - l_risk L_d - l_rep L_rep,
        // with the confusion branch built by hand without any reversal layer
        let mut gr = Graph::new();
        let br = model.bind(&mut gr);
        let li = loss_invariant(&mut gr, &br, &batches.source, &batches.target_labeled).unwrap();
        let ld = loss_dependent(&mut gr, &br, &batches.source, &batches.target_labeled).unwrap();
        let lrep = {
            let cb = model.domain_classifier().bind(&mut gr);
            let z_s = br.encode(&mut gr, &batches.source.features).unwrap();
            let logit_s = cb.forward(&mut gr, z_s).unwrap();
            let p_s = gr.sigmoid(logit_s);
            let ones = gr.input(Tensor::filled(batches.source.len(), 1, 1.0));
            let bce_s = gr.bce_loss(p_s, ones).unwrap();
            let z_t = br.encode(&mut gr, &x_target).unwrap();
            let logit_t = cb.forward(&mut gr, z_t).unwrap();
            let p_t = gr.sigmoid(logit_t);
            let zeros = gr.input(Tensor::filled(x_target.rows(), 1, 0.0));
            let bce_t = gr.bce_loss(p_t, zeros).unwrap();
            let sum = gr.add(bce_s, bce_t).unwrap();
            gr.scale(sum, 0.5)
        };
        let t1 = gr.scale(li, 1.0 + cfg.lambda_risk);
        let t2 = gr.scale(ld, -cfg.lambda_risk);
        let t3 = gr.scale(lrep, -cfg.lambda_rep);
        let partial = gr.add(t1, t2).unwrap();
        let total = gr.add(partial, t3).unwrap();
        let ref_min = gr.backward(total).unwrap();

        // reference 2: f_d sees L_d alone, C sees L_rep alone
        let mut gd = Graph::new();
        let bd = model.bind(&mut gd);
        let ld_alone =
            loss_dependent(&mut gd, &bd, &batches.source, &batches.target_labeled).unwrap();
        let ref_fd = gd.backward(ld_alone).unwrap();

        let mut gc = Graph::new();
        let bc = model.bind(&mut gc);
        let lrep_alone =
            loss_rep(&mut gc, &bc, &batches.source.features, &x_target, 0.0).unwrap();
        let ref_c = gc.backward(lrep_alone).unwrap();

        let groups = model.param_groups();
        for (name, range) in groups {
            for i in range {
                let got = grads.wrt(bound.param_ids()[i]).unwrap();
                let want = match name {
                    "encoder" | "fi" => ref_min.wrt(br.param_ids()[i]).unwrap(),
                    "fd" => ref_fd.wrt(bd.param_ids()[i]).unwrap(),
                    "c" => ref_c.wrt(bc.param_ids()[i]).unwrap(),
                    _ => unreachable!(),
                };
                for (a, b) in got.data().iter().zip(want.data()) {
                    assert!(
                        (a - b).abs() < 1e-10,
                        "group {name} param {i}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn irm_penalty_weight_zero_equals_invariant_loss() {
        let model = small_model(19);
        let batches = small_batches(11);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let assembled = assemble_irm(&mut g, &bound, &batches, 0.0).unwrap();
        let li = g.value(assembled.l_i).item();
        assert_eq!(g.value(assembled.backward_root).item().to_bits(), li.to_bits());
    }

    #[test]
    fn irm_penalty_is_nonnegative() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        for seed in 0..10 {
            let model = small_model(seed);
            let batches = small_batches(rng.gen());
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let assembled = assemble_irm(&mut g, &bound, &batches, 100.0).unwrap();
            assert!(g.value(assembled.irm_penalty.unwrap()).item() >= 0.0);
        }
    }

    #[test]
    fn irm_penalty_vanishes_for_posterior_matched_logits() {
        // analytic scenario: feed logits equal to the true log-odds and
        // sample labels from that posterior; the dummy-scale gradient is an
        // O(1/sqrt(n)) quantity, so its square is tiny
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let n = 20_000;
        let mut logits = Tensor::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let p1: f64 = rng.gen_range(0.1..0.9);
            logits.set(i, 1, (p1 / (1.0 - p1)).ln());
            labels.push(usize::from(rng.gen_bool(p1)));
        }
        let mut g = Graph::new();
        let pred = g.input(logits);
        let onehot = {
            let t = Tensor::from_fn(n, 2, |i, j| f64::from(labels[i] == j));
            g.input(t)
        };
        let probs = g.softmax_rows(pred);
        let diff = g.sub(probs, onehot).unwrap();
        let prod = g.mul(diff, pred).unwrap();
        let m = g.mean(prod);
        let grad_s = g.scale(m, 2.0);
        let penalty = g.mul(grad_s, grad_s).unwrap();
        assert!(g.value(penalty).item() < 1e-3, "penalty {}", g.value(penalty).item());
    }

    #[test]
    fn regression_losses_flow() {
        let scenario = Scenario::default_for("regression_sine_shift").unwrap();
        let task = gen_task(&scenario, GenOptions::new(100, 10, 100), 3).unwrap();
        let mut mcfg = ModelConfig::new(2, TaskKind::Regression, 1, 21);
        mcfg.encoder_hidden = vec![8];
        mcfg.z_dim = 4;
        mcfg.head_hidden = vec![6];
        let model = init_model(&mcfg).unwrap();
        let idx: Vec<usize> = (0..16).collect();
        let batches = Batches {
            source: task.source.subset(&idx),
            target_labeled: task.target_labeled.subset(&(0..10).collect::<Vec<_>>()),
            target_unlabeled: task.target_unlabeled.subset(&idx).features,
        };
        let cfg = LirrConfig::new(TaskKind::Regression);
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let assembled = assemble_lirr(&mut g, &bound, &batches, &cfg).unwrap();
        let report = assembled.report(&g, &cfg, &batches);
        assert!(report.l_total.is_finite());
        let grads = g.backward(assembled.backward_root).unwrap();
        for id in bound.param_ids() {
            assert!(grads.wrt(*id).unwrap().is_finite());
        }

        let mut g2 = Graph::new();
        let bound2 = model.bind(&mut g2);
        let irm = assemble_irm(&mut g2, &bound2, &batches, 50.0).unwrap();
        assert!(g2.value(irm.backward_root).item().is_finite());
    }

    /// A perfect regression predictor has zero invariant loss.
    #[test]
    fn perfect_regression_predictor_loss_is_zero() {
        let x = Tensor::from_fn(8, 2, |i, _| i as f64 * 0.2);
        let labels = Labels::Reals((0..8).map(|i| (i as f64 * 0.2) * 2.0).collect());
        let set = LabeledSet::new(x, labels, Domain::Source).unwrap();
        // identity-ish model: single linear layer summing inputs with weight 1 each
        let mut g = Graph::new();
        let xin = g.input(set.features.clone());
        let w = g.param(Tensor::from_vec(2, 1, vec![2.0, 0.0]));
        let pred = g.matmul(xin, w).unwrap();
        let target = g.input(Tensor::column(set.labels.as_reals().unwrap()));
        let loss = g.l1_loss(pred, target).unwrap();
        assert_eq!(g.value(loss).item(), 0.0);
    }
}
