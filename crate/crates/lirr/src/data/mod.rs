//! Synthetic Semi-DA task generators with analytic ground truth, dataset
//! persistence, and (n, m, k) splitting.

mod io;
pub mod scenario;
mod task;

pub use io::{
    load_task, save_task, SIDECAR_FILE, SOURCE_FILE, TARGET_LABELED_FILE, TARGET_UNLABELED_FILE,
    TEST_TARGET_FILE,
};
pub use scenario::{Labels, Prediction, Scenario};
pub use task::{gen_task, GenOptions, LabeledSet, SemiDaTask, UnlabeledSet};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("invalid sizes: {0}")]
    InvalidSizes(String),
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("data io: {0}")]
    Io(#[from] std::io::Error),
}
