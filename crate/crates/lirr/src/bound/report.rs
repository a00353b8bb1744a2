//! Assembly of every bound term for a trained hypothesis on a task, in
//! population mode (no concentration term) or finite-sample mode (with the
//! explicit combined radical).

use std::fmt;

use crate::bound::divergence::{dh_delta_h, dh_tilde};
use crate::bound::hypothesis::{FiniteHypothesisClass, Hypothesis, RegressionStumpClass};
use crate::bound::joint::DiscreteJoint;
use crate::bound::BoundError;
use crate::common::{Domain, TaskKind};
use crate::data::{LabeledSet, Labels, SemiDaTask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    Population,
    FiniteSample,
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundMode::Population => write!(f, "population"),
            BoundMode::FiniteSample => write!(f, "finite_sample"),
        }
    }
}

/// All terms of the generalization bound for one hypothesis on one task.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub weight_t: f64,
    pub weight_s: f64,
    pub emp_risk_t: f64,
    pub emp_risk_s: f64,
    pub distance_term: f64,
    pub disagreement_term: f64,
    pub noise_term: f64,
    pub concentration_term: Option<f64>,
    pub delta: f64,
    pub capacity_d: usize,
    pub mode: BoundMode,
    pub bound_total: f64,
}

impl BoundReport {
    fn assemble(
        n: usize,
        m: usize,
        emp_risk_t: f64,
        emp_risk_s: f64,
        distance_term: f64,
        disagreement_term: f64,
        noise_term: f64,
        concentration_term: Option<f64>,
        delta: f64,
        capacity_d: usize,
        mode: BoundMode,
    ) -> Self {
        let weight_t = m as f64 / (n + m) as f64;
        let weight_s = n as f64 / (n + m) as f64;
        let bound_total = weight_t * emp_risk_t
            + weight_s
                * (emp_risk_s
                    + distance_term
                    + disagreement_term
                    + noise_term
                    + concentration_term.unwrap_or(0.0));
        BoundReport {
            n,
            m,
            weight_t,
            weight_s,
            emp_risk_t,
            emp_risk_s,
            distance_term,
            disagreement_term,
            noise_term,
            concentration_term,
            delta,
            capacity_d,
            mode,
            bound_total,
        }
    }

    pub fn csv_header() -> &'static str {
        "mode,n,m,weight_t,weight_s,emp_risk_t,emp_risk_s,distance,disagreement,noise,concentration,delta,d,bound_total"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{},{:.17e}",
            self.mode,
            self.n,
            self.m,
            self.weight_t,
            self.weight_s,
            self.emp_risk_t,
            self.emp_risk_s,
            self.distance_term,
            self.disagreement_term,
            self.noise_term,
            self.concentration_term.map(|c| format!("{c:.17e}")).unwrap_or_default(),
            self.delta,
            self.capacity_d,
            self.bound_total
        )
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "bound report ({} mode)", self.mode)?;
        writeln!(f, "  n = {}, m = {}  (weights s = {:.4}, t = {:.4})", self.n, self.m, self.weight_s, self.weight_t)?;
        writeln!(f, "  empirical risk   target: {:.6}   source: {:.6}", self.emp_risk_t, self.emp_risk_s)?;
        writeln!(f, "  distance term        {:.6}", self.distance_term)?;
        writeln!(f, "  disagreement term    {:.6}", self.disagreement_term)?;
        writeln!(f, "  noise term           {:.6}", self.noise_term)?;
        match self.concentration_term {
            Some(c) => writeln!(
                f,
                "  concentration term   {:.6}  (d = {}, delta = {})",
                c, self.capacity_d, self.delta
            )?,
            None => writeln!(f, "  concentration term   - (population mode)")?,
        }
        write!(f, "  bound total          {:.6}", self.bound_total)
    }
}

/// Mean disagreement of a hypothesis with the labels: 0-1 error for class
/// labels, mean absolute error for real labels.
pub fn empirical_risk(
    h: &dyn Fn(&[f64]) -> f64,
    set: &LabeledSet,
    kind: TaskKind,
) -> Result<f64, BoundError> {
    if set.is_empty() {
        return Err(BoundError::BadInput("empirical risk over an empty set".into()));
    }
    let mut total = 0.0;
    for i in 0..set.len() {
        let hv = h(set.features.row(i));
        let y = match (&set.labels, kind) {
            (Labels::Classes(v), TaskKind::Classification) => v[i] as f64,
            (Labels::Reals(v), TaskKind::Regression) => v[i],
            _ => return Err(BoundError::BadInput("label kind does not match task".into())),
        };
        total += (hv - y).abs();
    }
    Ok(total / set.len() as f64)
}

/// min over the two feature samples of the empirical mean |f_S - f_T| of the
/// scenario's optimal predictors.
pub fn disagreement_term(
    task: &SemiDaTask,
    sample_s: &crate::diffcore::Tensor,
    sample_t: &crate::diffcore::Tensor,
) -> Result<f64, BoundError> {
    if sample_s.rows() == 0 || sample_t.rows() == 0 {
        return Err(BoundError::BadInput("disagreement needs nonempty samples".into()));
    }
    let gap = |x: &[f64]| {
        let fs = task.scenario.bayes_predict(Domain::Source, x).value();
        let ft = task.scenario.bayes_predict(Domain::Target, x).value();
        (fs - ft).abs()
    };
    let mean_over = |t: &crate::diffcore::Tensor| {
        (0..t.rows()).map(|i| gap(t.row(i))).sum::<f64>() / t.rows() as f64
    };
    Ok(mean_over(sample_s).min(mean_over(sample_t)))
}

/// |n_S + n_T| estimated on labeled samples: per-domain empirical mean
/// |Y - f_domain(X)|, summed, absolute value.
pub fn noise_term(
    task: &SemiDaTask,
    set_s: &LabeledSet,
    set_t: &LabeledSet,
) -> Result<f64, BoundError> {
    let one = |set: &LabeledSet, domain: Domain| -> Result<f64, BoundError> {
        if set.is_empty() {
            return Err(BoundError::BadInput("noise term over an empty set".into()));
        }
        let mut total = 0.0;
        for i in 0..set.len() {
            let f = task.scenario.bayes_predict(domain, set.features.row(i)).value();
            let y = match &set.labels {
                Labels::Classes(v) => v[i] as f64,
                Labels::Reals(v) => v[i],
            };
            total += (y - f).abs();
        }
        Ok(total / set.len() as f64)
    };
    Ok((one(set_s, Domain::Source)? + one(set_t, Domain::Target)?).abs())
}

/// The explicit combined concentration radical:
/// sqrt(8d/m log(em/d) + 2/m log(1/delta) + 8d/n log(en/d) + 2/n log(1/delta)).
pub fn concentration_term(n: usize, m: usize, d: usize, delta: f64) -> Result<f64, BoundError> {
    if d == 0 || n < d || m < d {
        return Err(BoundError::BadInput(format!(
            "need n >= d >= 1 and m >= d, got n={n}, m={m}, d={d}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BoundError::BadInput(format!("delta must be in (0,1), got {delta}")));
    }
    let (n, m, d) = (n as f64, m as f64, d as f64);
    let e = std::f64::consts::E;
    let inner = 8.0 * d / m * (e * m / d).ln()
        + 2.0 / m * (1.0 / delta).ln()
        + 8.0 * d / n * (e * n / d).ln()
        + 2.0 / n * (1.0 / delta).ln();
    Ok(inner.sqrt())
}

/// Full bound report for a hypothesis on a task.
///
/// For classification `h` must return 0 or 1; for regression it must return
/// values on the bound's unit scale (use `normalize_label` to map labels and
/// predictions there). The distance term is computed over an enumerable
/// stump class spanning the source and unlabeled-target feature samples.
pub fn bound_report(
    h: &dyn Fn(&[f64]) -> f64,
    task: &SemiDaTask,
    class: &FiniteHypothesisClass,
    delta: f64,
    mode: BoundMode,
) -> Result<BoundReport, BoundError> {
    let kind = task.task_kind();
    let (emp_risk_s, emp_risk_t, distance, disagreement, noise, d) = match kind {
        TaskKind::Classification => {
            class.ensure_nonempty()?;
            let distance = dh_delta_h(
                class,
                &task.source.features,
                &task.target_unlabeled.features,
            )?;
            (
                empirical_risk(h, &task.source, kind)?,
                empirical_risk(h, &task.target_labeled, kind)?,
                distance,
                disagreement_term(
                    task,
                    &task.source.features,
                    &task.target_unlabeled.features,
                )?,
                noise_term(task, &task.source, &task.target_labeled)?,
                class.vc_dim,
            )
        }
        TaskKind::Regression => {
            let reg_class = RegressionStumpClass::grid_from_samples(
                &task.source.features,
                &task.target_unlabeled.features,
                16,
            );
            let distance = dh_tilde(
                &reg_class,
                &task.source.features,
                &task.target_unlabeled.features,
            )?;
            let (lo, hi) = task
                .scenario
                .label_range()
                .ok_or_else(|| BoundError::BadInput("regression scenario lacks label range".into()))?;
            let scale = hi - lo;
            let norm_set = |set: &LabeledSet| -> LabeledSet {
                let labels = Labels::Reals(
                    set.labels
                        .as_reals()
                        .unwrap()
                        .iter()
                        .map(|y| ((y - lo) / scale).clamp(0.0, 1.0))
                        .collect(),
                );
                LabeledSet { features: set.features.clone(), labels, domain: set.domain }
            };
            let src = norm_set(&task.source);
            let tgt = norm_set(&task.target_labeled);
            // predictors and noise on the same unit scale
            let disagreement = {
                let gap = |x: &[f64]| {
                    let fs = task.scenario.bayes_predict(Domain::Source, x).value();
                    let ft = task.scenario.bayes_predict(Domain::Target, x).value();
                    (fs - ft).abs() / scale
                };
                let mean_over = |t: &crate::diffcore::Tensor| {
                    (0..t.rows()).map(|i| gap(t.row(i))).sum::<f64>() / t.rows() as f64
                };
                mean_over(&task.source.features)
                    .min(mean_over(&task.target_unlabeled.features))
            };
            let noise = {
                let one = |set: &LabeledSet, domain: Domain| {
                    let mut total = 0.0;
                    for i in 0..set.len() {
                        let f = (task.scenario.bayes_predict(domain, set.features.row(i)).value()
                            - lo)
                            / scale;
                        let y = set.labels.as_reals().unwrap()[i];
                        total += (y - f).abs();
                    }
                    total / set.len() as f64
                };
                (one(&src, Domain::Source) + one(&tgt, Domain::Target)).abs()
            };
            (
                empirical_risk(h, &src, kind)?,
                empirical_risk(h, &tgt, kind)?,
                distance,
                disagreement,
                noise,
                reg_class.pdim,
            )
        }
    };

    let concentration = match mode {
        BoundMode::Population => None,
        BoundMode::FiniteSample => Some(concentration_term(task.n(), task.m(), d, delta)?),
    };
    Ok(BoundReport::assemble(
        task.n(),
        task.m(),
        emp_risk_t,
        emp_risk_s,
        distance,
        disagreement,
        noise,
        concentration,
        delta,
        d,
        mode,
    ))
}

/// Maps a regression label or prediction onto the bound's unit scale.
pub fn normalize_label(task: &SemiDaTask, y: f64) -> f64 {
    match task.scenario.label_range() {
        Some((lo, hi)) => ((y - lo) / (hi - lo)).clamp(0.0, 1.0),
        None => y,
    }
}

/// Population-mode report computed exactly from a finite joint: the
/// empirical quantities are the true per-domain values, so the total is a
/// certified upper bound on the target risk for every hypothesis in the
/// class.
pub fn population_report_discrete(
    joint: &DiscreteJoint,
    class: &FiniteHypothesisClass,
    h: &Hypothesis,
    n: usize,
    m: usize,
) -> Result<BoundReport, BoundError> {
    class.ensure_nonempty()?;
    let p_s = joint.z_given_d(0)?;
    let p_t = joint.z_given_d(1)?;
    let distance = crate::bound::divergence::dh_delta_h_discrete(class, &p_s, &p_t)?;
    let noise = (joint.noise(0)? + joint.noise(1)?).abs();
    Ok(BoundReport::assemble(
        n,
        m,
        joint.risk(1, h)?,
        joint.risk(0, h)?,
        distance,
        joint.disagreement()?,
        noise,
        None,
        0.05,
        class.vc_dim,
        BoundMode::Population,
    ))
}
