//! Synthetic shift scenarios with analytic optimal predictors.
//!
//! Every scenario knows how to sample either domain, evaluate the exact
//! Bayes posterior (classification) or conditional median (regression) at a
//! point, and report its per-domain noise levels. Posteriors that lack a
//! closed form (the moons mixture) are evaluated by deterministic quadrature.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::common::{Domain, TaskKind};
use crate::data::DataError;
use crate::diffcore::Tensor;

/// Ground-truth prediction of the labeling function at a point.
#[derive(Clone, Copy, Debug)]
pub enum Prediction {
    /// P(Y = 1 | X = x) for binary classification.
    Posterior(f64),
    /// Conditional median of Y | X = x for regression.
    Real(f64),
}

impl Prediction {
    pub fn value(self) -> f64 {
        match self {
            Prediction::Posterior(p) => p,
            Prediction::Real(v) => v,
        }
    }
}

/// Labels of a sampled set.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    Reals(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(v) => v.len(),
            Labels::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_classes(&self) -> Option<&[usize]> {
        match self {
            Labels::Classes(v) => Some(v),
            Labels::Reals(_) => None,
        }
    }

    pub fn as_reals(&self) -> Option<&[f64]> {
        match self {
            Labels::Reals(v) => Some(v),
            Labels::Classes(_) => None,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes(v) => Labels::Classes(idx.iter().map(|&i| v[i]).collect()),
            Labels::Reals(v) => Labels::Reals(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateShiftParams {
    /// Added to the target feature mean.
    pub shift: [f64; 2],
    pub std: f64,
    /// Steepness of the shared logistic labeling function.
    pub sharpness: f64,
}

impl Default for CovariateShiftParams {
    fn default() -> Self {
        CovariateShiftParams { shift: [1.5, 0.0], std: 1.0, sharpness: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelShiftParams {
    /// P(Y = 1) in the source domain.
    pub source_prior1: f64,
    /// P(Y = 1) in the target domain.
    pub target_prior1: f64,
    pub mean0: [f64; 2],
    pub mean1: [f64; 2],
    pub std: f64,
}

impl Default for LabelShiftParams {
    fn default() -> Self {
        // source prior (0.5, 0.5), target prior (0.9, 0.1), identical
        // class-conditionals: the construction where marginal alignment hurts.
        LabelShiftParams {
            source_prior1: 0.5,
            target_prior1: 0.1,
            mean0: [-1.0, -0.5],
            mean1: [1.0, 0.5],
            std: 1.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalShiftParams {
    /// Major and minor mode centers of class 0.
    pub mean0_major: [f64; 2],
    pub mean0_minor: [f64; 2],
    /// Major and minor mode centers of class 1.
    pub mean1_major: [f64; 2],
    pub mean1_minor: [f64; 2],
    /// Probability of the major mode within each class.
    pub major_weight: f64,
    /// Target class-conditionals are the source ones rotated by this angle.
    pub rotation_deg: f64,
    pub std: f64,
    pub prior1: f64,
}

impl Default for ConditionalShiftParams {
    fn default() -> Self {
        // two modes per class on a ring, classes alternating; the uneven
        // mode weights make the rotation identifiable from the unlabeled
        // marginal while a small labeled sample barely covers the minor modes
        ConditionalShiftParams {
            mean0_major: [1.6, 0.0],
            mean0_minor: [-1.6, 0.0],
            mean1_major: [0.0, 1.6],
            mean1_minor: [0.0, -1.6],
            major_weight: 0.8,
            rotation_deg: 45.0,
            std: 0.35,
            prior1: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoMoonsParams {
    pub angle_deg: f64,
    pub noise_std: f64,
}

impl Default for TwoMoonsParams {
    fn default() -> Self {
        TwoMoonsParams { angle_deg: 30.0, noise_std: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SineShiftParams {
    /// Constant offset added to the target labeling function.
    pub delta: f64,
    pub noise_std: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl Default for SineShiftParams {
    fn default() -> Self {
        SineShiftParams { delta: 0.8, noise_std: 0.1, x_lo: -3.0, x_hi: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    CovariateShift(CovariateShiftParams),
    LabelShift(LabelShiftParams),
    ConditionalShift(ConditionalShiftParams),
    TwoMoonsRotation(TwoMoonsParams),
    RegressionSineShift(SineShiftParams),
}

impl Scenario {
    pub fn default_for(kind: &str) -> Result<Scenario, DataError> {
        match kind {
            "covariate_shift" => Ok(Scenario::CovariateShift(Default::default())),
            "label_shift" => Ok(Scenario::LabelShift(Default::default())),
            "conditional_shift" => Ok(Scenario::ConditionalShift(Default::default())),
            "two_moons_rotation" => Ok(Scenario::TwoMoonsRotation(Default::default())),
            "regression_sine_shift" => Ok(Scenario::RegressionSineShift(Default::default())),
            other => Err(DataError::BadScenario(format!("unknown scenario kind {other:?}"))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::CovariateShift(_) => "covariate_shift",
            Scenario::LabelShift(_) => "label_shift",
            Scenario::ConditionalShift(_) => "conditional_shift",
            Scenario::TwoMoonsRotation(_) => "two_moons_rotation",
            Scenario::RegressionSineShift(_) => "regression_sine_shift",
        }
    }

    pub fn task_kind(&self) -> TaskKind {
        match self {
            Scenario::RegressionSineShift(_) => TaskKind::Regression,
            _ => TaskKind::Classification,
        }
    }

    pub fn input_dim(&self) -> usize {
        2
    }

    pub fn n_classes(&self) -> usize {
        2
    }

    /// Label range used to place regression values on the bound's unit scale.
    pub fn label_range(&self) -> Option<(f64, f64)> {
        match self {
            Scenario::RegressionSineShift(p) => {
                let lo = -1.0 - 4.0 * p.noise_std + p.delta.min(0.0);
                let hi = 1.0 + 4.0 * p.noise_std + p.delta.max(0.0);
                Some((lo, hi))
            }
            _ => None,
        }
    }

    /// Draws `count` i.i.d. examples from one domain.
    pub fn sample(&self, domain: Domain, count: usize, rng: &mut ChaCha12Rng) -> (Tensor, Labels) {
        match self {
            Scenario::CovariateShift(p) => {
                let mean = match domain {
                    Domain::Source => [0.0, 0.0],
                    Domain::Target => p.shift,
                };
                let mut xs = Vec::with_capacity(count * 2);
                let mut ys = Vec::with_capacity(count);
                for _ in 0..count {
                    let x = [
                        mean[0] + p.std * normal(rng),
                        mean[1] + p.std * normal(rng),
                    ];
                    let f = sigmoid(p.sharpness * (x[0] + x[1]) / 2f64.sqrt());
                    ys.push(usize::from(rng.gen_bool(f.clamp(0.0, 1.0))));
                    xs.extend_from_slice(&x);
                }
                (Tensor::from_vec(count, 2, xs), Labels::Classes(ys))
            }
            Scenario::LabelShift(p) => {
                let prior1 = match domain {
                    Domain::Source => p.source_prior1,
                    Domain::Target => p.target_prior1,
                };
                self.sample_gaussian_classes(count, prior1, p.mean0, p.mean1, p.std, rng)
            }
            Scenario::ConditionalShift(p) => {
                let mut xs = Vec::with_capacity(count * 2);
                let mut ys = Vec::with_capacity(count);
                for _ in 0..count {
                    let y = usize::from(rng.gen_bool(p.prior1));
                    let major = rng.gen_bool(p.major_weight);
                    let mean = p.mode_center(domain, y, major);
                    xs.push(mean[0] + p.std * normal(rng));
                    xs.push(mean[1] + p.std * normal(rng));
                    ys.push(y);
                }
                (Tensor::from_vec(count, 2, xs), Labels::Classes(ys))
            }
            Scenario::TwoMoonsRotation(p) => {
                let mut xs = Vec::with_capacity(count * 2);
                let mut ys = Vec::with_capacity(count);
                for _ in 0..count {
                    let y = usize::from(rng.gen_bool(0.5));
                    let t = rng.gen_range(0.0..PI);
                    let arc = moon_arc(y, t);
                    let mut x = [
                        arc[0] + p.noise_std * normal(rng),
                        arc[1] + p.noise_std * normal(rng),
                    ];
                    if domain == Domain::Target {
                        x = rotate(x, p.angle_deg.to_radians());
                    }
                    xs.extend_from_slice(&x);
                    ys.push(y);
                }
                (Tensor::from_vec(count, 2, xs), Labels::Classes(ys))
            }
            Scenario::RegressionSineShift(p) => {
                let offset = match domain {
                    Domain::Source => 0.0,
                    Domain::Target => p.delta,
                };
                let mut xs = Vec::with_capacity(count * 2);
                let mut ys = Vec::with_capacity(count);
                for _ in 0..count {
                    let x1 = rng.gen_range(p.x_lo..p.x_hi);
                    let x2 = rng.gen_range(p.x_lo..p.x_hi);
                    xs.extend_from_slice(&[x1, x2]);
                    ys.push(x1.sin() + offset + p.noise_std * normal(rng));
                }
                (Tensor::from_vec(count, 2, xs), Labels::Reals(ys))
            }
        }
    }

    fn sample_gaussian_classes(
        &self,
        count: usize,
        prior1: f64,
        mean0: [f64; 2],
        mean1: [f64; 2],
        std: f64,
        rng: &mut ChaCha12Rng,
    ) -> (Tensor, Labels) {
        let mut xs = Vec::with_capacity(count * 2);
        let mut ys = Vec::with_capacity(count);
        for _ in 0..count {
            let y = usize::from(rng.gen_bool(prior1));
            let mean = if y == 1 { mean1 } else { mean0 };
            xs.push(mean[0] + std * normal(rng));
            xs.push(mean[1] + std * normal(rng));
            ys.push(y);
        }
        (Tensor::from_vec(count, 2, xs), Labels::Classes(ys))
    }

    /// Exact Bayes posterior (classification) or conditional median
    /// (regression) of the generative law at a point.
    pub fn bayes_predict(&self, domain: Domain, x: &[f64]) -> Prediction {
        match self {
            Scenario::CovariateShift(p) => {
                Prediction::Posterior(sigmoid(p.sharpness * (x[0] + x[1]) / 2f64.sqrt()))
            }
            Scenario::LabelShift(p) => {
                let prior1 = match domain {
                    Domain::Source => p.source_prior1,
                    Domain::Target => p.target_prior1,
                };
                Prediction::Posterior(gaussian_posterior(x, prior1, p.mean0, p.mean1, p.std))
            }
            Scenario::ConditionalShift(p) => {
                let q = |class: usize| -> f64 {
                    p.modes(domain)
                        .iter()
                        .filter(|(_, _, y)| *y == class)
                        .map(|(center, weight, _)| weight * isotropic_density(x, *center, p.std))
                        .sum()
                };
                let (q0, q1) = (q(0), q(1));
                Prediction::Posterior(if q0 + q1 == 0.0 { 0.5 } else { q1 / (q0 + q1) })
            }
            Scenario::TwoMoonsRotation(p) => {
                let local = match domain {
                    Domain::Source => [x[0], x[1]],
                    Domain::Target => rotate([x[0], x[1]], -p.angle_deg.to_radians()),
                };
                let p1 = moon_class_density(1, local, p.noise_std);
                let p0 = moon_class_density(0, local, p.noise_std);
                Prediction::Posterior(if p0 + p1 == 0.0 { 0.5 } else { p1 / (p0 + p1) })
            }
            Scenario::RegressionSineShift(p) => {
                let offset = match domain {
                    Domain::Source => 0.0,
                    Domain::Target => p.delta,
                };
                Prediction::Real(x[0].sin() + offset)
            }
        }
    }

    /// Per-domain noise levels (n_S, n_T): expected absolute deviation of
    /// labels from the conditional mean/median under the generative law.
    /// Evaluated by deterministic quadrature, no sampling involved.
    pub fn noise_levels(&self) -> (f64, f64) {
        match self {
            Scenario::CovariateShift(p) => {
                let dir = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
                let n_of = |mean: [f64; 2]| {
                    let mu = mean[0] * dir[0] + mean[1] * dir[1];
                    gauss_expect(mu, p.std, |t| {
                        let f = sigmoid(p.sharpness * t);
                        2.0 * f * (1.0 - f)
                    })
                };
                (n_of([0.0, 0.0]), n_of(p.shift))
            }
            Scenario::LabelShift(p) => (
                gaussian_pair_noise(p.source_prior1, p.mean0, p.mean1, p.std),
                gaussian_pair_noise(p.target_prior1, p.mean0, p.mean1, p.std),
            ),
            Scenario::ConditionalShift(p) => {
                // rotation is an isometry: both domains share one noise level
                let n = gaussian_mixture_noise(&p.modes(Domain::Source), p.std);
                (n, n)
            }
            Scenario::TwoMoonsRotation(p) => {
                // rotation is an isometry, so source and target noise agree
                let n = moons_noise(p.noise_std);
                (n, n)
            }
            Scenario::RegressionSineShift(p) => {
                let n = p.noise_std * (2.0 / PI).sqrt();
                (n, n)
            }
        }
    }

    /// Sidecar serialization: key = value lines.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let f = |v: f64| format!("{v:.16e}");
        let mut kv = vec![("kind".to_string(), self.kind().to_string())];
        match self {
            Scenario::CovariateShift(p) => {
                kv.push(("shift".into(), format!("{},{}", f(p.shift[0]), f(p.shift[1]))));
                kv.push(("std".into(), f(p.std)));
                kv.push(("sharpness".into(), f(p.sharpness)));
            }
            Scenario::LabelShift(p) => {
                kv.push(("source_prior1".into(), f(p.source_prior1)));
                kv.push(("target_prior1".into(), f(p.target_prior1)));
                kv.push(("mean0".into(), format!("{},{}", f(p.mean0[0]), f(p.mean0[1]))));
                kv.push(("mean1".into(), format!("{},{}", f(p.mean1[0]), f(p.mean1[1]))));
                kv.push(("std".into(), f(p.std)));
            }
            Scenario::ConditionalShift(p) => {
                let pair = |m: [f64; 2]| format!("{},{}", f(m[0]), f(m[1]));
                kv.push(("mean0_major".into(), pair(p.mean0_major)));
                kv.push(("mean0_minor".into(), pair(p.mean0_minor)));
                kv.push(("mean1_major".into(), pair(p.mean1_major)));
                kv.push(("mean1_minor".into(), pair(p.mean1_minor)));
                kv.push(("major_weight".into(), f(p.major_weight)));
                kv.push(("rotation_deg".into(), f(p.rotation_deg)));
                kv.push(("std".into(), f(p.std)));
                kv.push(("prior1".into(), f(p.prior1)));
            }
            Scenario::TwoMoonsRotation(p) => {
                kv.push(("angle_deg".into(), f(p.angle_deg)));
                kv.push(("noise_std".into(), f(p.noise_std)));
            }
            Scenario::RegressionSineShift(p) => {
                kv.push(("delta".into(), f(p.delta)));
                kv.push(("noise_std".into(), f(p.noise_std)));
                kv.push(("x_lo".into(), f(p.x_lo)));
                kv.push(("x_hi".into(), f(p.x_hi)));
            }
        }
        kv
    }

    pub fn from_kv(kv: &[(String, String)]) -> Result<Scenario, DataError> {
        let get = |key: &str| -> Result<&str, DataError> {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| DataError::BadScenario(format!("missing scenario key {key:?}")))
        };
        let num = |key: &str| -> Result<f64, DataError> {
            get(key)?
                .parse()
                .map_err(|_| DataError::BadScenario(format!("bad number for {key:?}")))
        };
        let pair = |key: &str| -> Result<[f64; 2], DataError> {
            let raw = get(key)?;
            let mut it = raw.split(',');
            let a = it.next().and_then(|s| s.trim().parse().ok());
            let b = it.next().and_then(|s| s.trim().parse().ok());
            match (a, b, it.next()) {
                (Some(a), Some(b), None) => Ok([a, b]),
                _ => Err(DataError::BadScenario(format!("bad pair for {key:?}"))),
            }
        };
        match get("kind")? {
            "covariate_shift" => Ok(Scenario::CovariateShift(CovariateShiftParams {
                shift: pair("shift")?,
                std: num("std")?,
                sharpness: num("sharpness")?,
            })),
            "label_shift" => Ok(Scenario::LabelShift(LabelShiftParams {
                source_prior1: num("source_prior1")?,
                target_prior1: num("target_prior1")?,
                mean0: pair("mean0")?,
                mean1: pair("mean1")?,
                std: num("std")?,
            })),
            "conditional_shift" => Ok(Scenario::ConditionalShift(ConditionalShiftParams {
                mean0_major: pair("mean0_major")?,
                mean0_minor: pair("mean0_minor")?,
                mean1_major: pair("mean1_major")?,
                mean1_minor: pair("mean1_minor")?,
                major_weight: num("major_weight")?,
                rotation_deg: num("rotation_deg")?,
                std: num("std")?,
                prior1: num("prior1")?,
            })),
            "two_moons_rotation" => Ok(Scenario::TwoMoonsRotation(TwoMoonsParams {
                angle_deg: num("angle_deg")?,
                noise_std: num("noise_std")?,
            })),
            "regression_sine_shift" => Ok(Scenario::RegressionSineShift(SineShiftParams {
                delta: num("delta")?,
                noise_std: num("noise_std")?,
                x_lo: num("x_lo")?,
                x_hi: num("x_hi")?,
            })),
            other => Err(DataError::BadScenario(format!("unknown scenario kind {other:?}"))),
        }
    }
}

impl ConditionalShiftParams {
    fn mode_center(&self, domain: Domain, class: usize, major: bool) -> [f64; 2] {
        let base = match (class, major) {
            (0, true) => self.mean0_major,
            (0, false) => self.mean0_minor,
            (_, true) => self.mean1_major,
            (_, false) => self.mean1_minor,
        };
        match domain {
            Domain::Source => base,
            Domain::Target => rotate(base, self.rotation_deg.to_radians()),
        }
    }

    /// All four (center, joint weight, class) modes of one domain.
    fn modes(&self, domain: Domain) -> [([f64; 2], f64, usize); 4] {
        let p0 = 1.0 - self.prior1;
        [
            (self.mode_center(domain, 0, true), p0 * self.major_weight, 0),
            (self.mode_center(domain, 0, false), p0 * (1.0 - self.major_weight), 0),
            (self.mode_center(domain, 1, true), self.prior1 * self.major_weight, 1),
            (self.mode_center(domain, 1, false), self.prior1 * (1.0 - self.major_weight), 1),
        ]
    }
}

fn isotropic_density(x: &[f64], center: [f64; 2], std: f64) -> f64 {
    let d2 = sq(x[0] - center[0]) + sq(x[1] - center[1]);
    (-d2 / (2.0 * std * std)).exp() / (2.0 * PI * std * std)
}

/// E[2 f (1 - f)] for a labeled Gaussian mixture via 2-D grid quadrature of
/// integral 2 q0 q1 / (q0 + q1) dx with q_y the joint class densities.
fn gaussian_mixture_noise(modes: &[([f64; 2], f64, usize); 4], std: f64) -> f64 {
    let pad = 6.0 * std + 0.5;
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (center, _, _) in modes {
        x_lo = x_lo.min(center[0] - pad);
        x_hi = x_hi.max(center[0] + pad);
        y_lo = y_lo.min(center[1] - pad);
        y_hi = y_hi.max(center[1] + pad);
    }
    let n = 260;
    let hx = (x_hi - x_lo) / n as f64;
    let hy = (y_hi - y_lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = x_lo + (i as f64 + 0.5) * hx;
        for j in 0..n {
            let y = y_lo + (j as f64 + 0.5) * hy;
            let mut q = [0.0, 0.0];
            for (center, weight, class) in modes {
                q[*class] += weight * isotropic_density(&[x, y], *center, std);
            }
            if q[0] + q[1] > 0.0 {
                total += 2.0 * q[0] * q[1] / (q[0] + q[1]) * hx * hy;
            }
        }
    }
    total
}

fn normal(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn rotate(x: [f64; 2], theta: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// P(Y=1 | x) for two isotropic Gaussian class-conditionals with shared std.
fn gaussian_posterior(x: &[f64], prior1: f64, mean0: [f64; 2], mean1: [f64; 2], std: f64) -> f64 {
    let d0 = (x[0] - mean0[0]).powi(2) + (x[1] - mean0[1]).powi(2);
    let d1 = (x[0] - mean1[0]).powi(2) + (x[1] - mean1[1]).powi(2);
    let logit = (prior1 / (1.0 - prior1)).ln() + (d0 - d1) / (2.0 * std * std);
    sigmoid(logit)
}

/// E[2 f (1 - f)] for the two-Gaussian family, reduced to a 1-D integral
/// along the discriminant direction.
fn gaussian_pair_noise(prior1: f64, mean0: [f64; 2], mean1: [f64; 2], std: f64) -> f64 {
    let d = [mean1[0] - mean0[0], mean1[1] - mean0[1]];
    let d_norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if d_norm == 0.0 {
        // identical means: posterior is the prior everywhere
        let f = prior1;
        return 2.0 * f * (1.0 - f);
    }
    let bias = (prior1 / (1.0 - prior1)).ln()
        + (sq(mean0[0]) + sq(mean0[1]) - sq(mean1[0]) - sq(mean1[1])) / (2.0 * std * std);
    // t = x . d; per class t ~ N(mean_y . d, (std * |d|)^2)
    let t_std = std * d_norm;
    let f_of = |t: f64| sigmoid(bias + t / (std * std));
    let mut total = 0.0;
    for (prior, mean) in [(1.0 - prior1, mean0), (prior1, mean1)] {
        let mu = mean[0] * d[0] + mean[1] * d[1];
        total += prior
            * gauss_expect(mu, t_std, |t| {
                let f = f_of(t);
                2.0 * f * (1.0 - f)
            });
    }
    total
}

fn sq(x: f64) -> f64 {
    x * x
}

/// E[g(T)] for T ~ N(mu, std^2), by Simpson quadrature over +-10 std.
fn gauss_expect(mu: f64, std: f64, g: impl Fn(f64) -> f64) -> f64 {
    let a = mu - 10.0 * std;
    let b = mu + 10.0 * std;
    let norm = 1.0 / (std * (2.0 * PI).sqrt());
    simpson(
        |t| {
            let z = (t - mu) / std;
            g(t) * norm * (-0.5 * z * z).exp()
        },
        a,
        b,
        2000,
    )
}

/// Composite Simpson rule with n (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    debug_assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut total = f(a) + f(b);
    for i in 1..n {
        let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
        total += weight * f(a + i as f64 * h);
    }
    total * h / 3.0
}

fn moon_arc(class: usize, t: f64) -> [f64; 2] {
    if class == 0 {
        [t.cos(), t.sin()]
    } else {
        [1.0 - t.cos(), 0.5 - t.sin()]
    }
}

/// p(x | Y = class) for the moons: a uniform-arc Gaussian mixture,
/// (1/pi) integral over t of N(x; arc(t), sigma^2 I).
fn moon_class_density(class: usize, x: [f64; 2], sigma: f64) -> f64 {
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    simpson(
        |t| {
            let a = moon_arc(class, t);
            let d2 = sq(x[0] - a[0]) + sq(x[1] - a[1]);
            norm * (-d2 / (2.0 * sigma * sigma)).exp()
        },
        0.0,
        PI,
        256,
    ) / PI
}

/// E[2 f (1 - f)] for the moons mixture via a 2-D grid quadrature of
/// integral p0 p1 / (p0 + p1) dx.
fn moons_noise(sigma: f64) -> f64 {
    let pad = 4.0 * sigma + 0.2;
    let (x_lo, x_hi) = (-1.0 - pad, 2.0 + pad);
    let (y_lo, y_hi) = (-0.5 - 1.0 - pad, 1.0 + pad);
    let n = 200;
    let hx = (x_hi - x_lo) / n as f64;
    let hy = (y_hi - y_lo) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = x_lo + (i as f64 + 0.5) * hx;
        for j in 0..n {
            let y = y_lo + (j as f64 + 0.5) * hy;
            let p0 = moon_class_density(0, [x, y], sigma);
            let p1 = moon_class_density(1, [x, y], sigma);
            if p0 + p1 > 0.0 {
                total += p0 * p1 / (p0 + p1) * hx * hy;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_gaussian_midpoint_posterior_is_half() {
        let spec = Scenario::LabelShift(LabelShiftParams {
            source_prior1: 0.5,
            target_prior1: 0.5,
            mean0: [-1.0, 0.0],
            mean1: [1.0, 0.0],
            std: 1.0,
        });
        let p = spec.bayes_predict(Domain::Source, &[0.0, 0.0]).value();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sine_shift_bayes_matches_construction() {
        let spec = Scenario::RegressionSineShift(SineShiftParams {
            delta: 0.8,
            noise_std: 0.1,
            x_lo: -3.0,
            x_hi: 3.0,
        });
        let x = [1.2, 0.4];
        assert!((spec.bayes_predict(Domain::Source, &x).value() - 1.2f64.sin()).abs() < 1e-12);
        assert!(
            (spec.bayes_predict(Domain::Target, &x).value() - (1.2f64.sin() + 0.8)).abs() < 1e-12
        );
    }

    #[test]
    fn regression_noise_is_closed_form() {
        let spec = Scenario::RegressionSineShift(SineShiftParams::default());
        let (ns, nt) = spec.noise_levels();
        let expected = 0.1 * (2.0 / PI).sqrt();
        assert!((ns - expected).abs() < 1e-12);
        assert_eq!(ns, nt);
    }

    #[test]
    fn two_moons_target_is_rotated_source() {
        let spec = Scenario::TwoMoonsRotation(TwoMoonsParams { angle_deg: 30.0, noise_std: 0.1 });
        // posterior at x in the target equals source posterior at the
        // un-rotated point
        let x = [0.3, 0.8];
        let back = rotate(x, -30f64.to_radians());
        let pt = spec.bayes_predict(Domain::Target, &x).value();
        let ps = spec.bayes_predict(Domain::Source, &back).value();
        assert!((pt - ps).abs() < 1e-12);
    }

    #[test]
    fn covariate_shift_shares_labeling_function() {
        let spec = Scenario::CovariateShift(CovariateShiftParams::default());
        for x in [[-0.5, 0.2], [1.0, 1.0], [2.0, -1.0]] {
            let s = spec.bayes_predict(Domain::Source, &x).value();
            let t = spec.bayes_predict(Domain::Target, &x).value();
            assert_eq!(s, t);
        }
    }

    #[test]
    fn posterior_matches_slab_frequency() {
        // Monte-Carlo oracle: empirical class frequency in a thin slab
        let spec = Scenario::LabelShift(LabelShiftParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let (xs, ys) = spec.sample(Domain::Source, 100_000, &mut rng);
        let labels = ys.as_classes().unwrap();
        // slab around the x1 = 0 cross-section of the discriminant direction
        let probe = [0.0, 0.0];
        let dir = [2.0f64, 1.0];
        let dn = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
        let t0 = (probe[0] * dir[0] + probe[1] * dir[1]) / dn;
        let mut inside = 0usize;
        let mut ones = 0usize;
        for i in 0..xs.rows() {
            let t = (xs.get(i, 0) * dir[0] + xs.get(i, 1) * dir[1]) / dn;
            if (t - t0).abs() < 0.05 {
                inside += 1;
                ones += labels[i];
            }
        }
        assert!(inside > 500, "slab too thin: {inside}");
        let freq = ones as f64 / inside as f64;
        let posterior = spec.bayes_predict(Domain::Source, &probe).value();
        assert!((freq - posterior).abs() < 0.02, "freq {freq} vs posterior {posterior}");
    }

    #[test]
    fn stored_noise_matches_monte_carlo() {
        // every scenario: analytic noise level vs 1e5-sample estimate
        let scenarios = [
            Scenario::CovariateShift(Default::default()),
            Scenario::LabelShift(Default::default()),
            Scenario::ConditionalShift(Default::default()),
            Scenario::TwoMoonsRotation(Default::default()),
            Scenario::RegressionSineShift(Default::default()),
        ];
        for spec in scenarios {
            let (n_s, n_t) = spec.noise_levels();
            for (domain, stored) in [(Domain::Source, n_s), (Domain::Target, n_t)] {
                let mut rng = ChaCha12Rng::seed_from_u64(7);
                let (xs, ys) = spec.sample(domain, 100_000, &mut rng);
                let mut total = 0.0;
                for i in 0..xs.rows() {
                    let f = spec.bayes_predict(domain, xs.row(i)).value();
                    let y = match &ys {
                        Labels::Classes(v) => v[i] as f64,
                        Labels::Reals(v) => v[i],
                    };
                    total += (y - f).abs();
                }
                let mc = total / xs.rows() as f64;
                assert!(
                    (mc - stored).abs() < 1e-2,
                    "{} {domain}: stored {stored} vs mc {mc}",
                    spec.kind()
                );
            }
        }
    }

    #[test]
    fn label_shift_conditionals_match_marginals_differ() {
        // two-sample mean tests: per-class means agree across domains,
        // pooled means do not (alpha = 0.01, chi-square with 2 dof = 9.21)
        let spec = Scenario::LabelShift(LabelShiftParams::default());
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 10_000;
        let (xs, ys) = spec.sample(Domain::Source, n, &mut rng);
        let (xt, yt) = spec.sample(Domain::Target, n, &mut rng);
        let split = |x: &Tensor, y: &Labels| {
            let labels = y.as_classes().unwrap().to_vec();
            let mut by_class: [Vec<[f64; 2]>; 2] = [Vec::new(), Vec::new()];
            for i in 0..x.rows() {
                by_class[labels[i]].push([x.get(i, 0), x.get(i, 1)]);
            }
            by_class
        };
        let source = split(&xs, &ys);
        let target = split(&xt, &yt);

        let chi2_stat = |a: &[[f64; 2]], b: &[[f64; 2]]| {
            let mean = |v: &[[f64; 2]], j: usize| {
                v.iter().map(|p| p[j]).sum::<f64>() / v.len() as f64
            };
            let var = |v: &[[f64; 2]], j: usize, m: f64| {
                v.iter().map(|p| sq(p[j] - m)).sum::<f64>() / (v.len() - 1) as f64
            };
            let mut stat = 0.0;
            for j in 0..2 {
                let (ma, mb) = (mean(a, j), mean(b, j));
                let se2 = var(a, j, ma) / a.len() as f64 + var(b, j, mb) / b.len() as f64;
                stat += sq(ma - mb) / se2;
            }
            stat
        };
        let critical = 9.21; // chi-square(2), alpha = 0.01

        for class in 0..2 {
            let stat = chi2_stat(&source[class], &target[class]);
            assert!(stat < critical, "class {class} conditionals flagged: {stat}");
        }
        let pool = |c: &[Vec<[f64; 2]>; 2]| {
            c[0].iter().chain(&c[1]).copied().collect::<Vec<_>>()
        };
        let stat = chi2_stat(&pool(&source), &pool(&target));
        assert!(stat > critical, "marginals not flagged: {stat}");
    }
}
