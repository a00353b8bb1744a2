//! Exact and estimated computation of the generalization-bound quantities:
//! hypothesis-class distances, mutual-information decompositions, noise and
//! disagreement terms, the concentration radical, and full per-hypothesis
//! bound reports.

pub mod divergence;
pub mod hypothesis;
pub mod joint;
pub mod report;

pub use divergence::{dh, dh_delta_h, dh_delta_h_discrete, dh_discrete, dh_tilde, proxy_a_distance};
pub use hypothesis::{FiniteHypothesisClass, Hypothesis, RegressionStump, RegressionStumpClass};
pub use joint::{lemma_a2_check, DiscreteJoint, LemmaCheck, MiDecomposition};
pub use report::{
    bound_report, concentration_term, disagreement_term, empirical_risk, noise_term,
    normalize_label, population_report_discrete, BoundMode, BoundReport,
};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum BoundError {
    #[error("hypothesis class is empty")]
    EmptyClass,
    #[error("bad bound input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Diff(#[from] crate::diffcore::DiffError),
}
