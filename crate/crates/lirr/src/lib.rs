//! Semi-supervised domain adaptation laboratory.
//!
//! A small differentiable tensor engine drives adversarial and
//! invariant-risk training objectives on synthetic distribution-shift
//! scenarios with known ground truth, alongside exact computation of the
//! generalization-bound quantities those objectives target. A CLI wraps
//! data generation, training, evaluation, bound reports, multi-seed
//! sweeps, and SVG curve plots.

pub mod bound;
pub mod common;
pub mod data;
pub mod diffcore;
pub mod harness;
pub mod models;
pub mod objectives;
pub mod trainer;
