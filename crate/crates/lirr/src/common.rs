//! Small shared vocabulary types.

use std::fmt;
use std::str::FromStr;

/// Which side of the shift an example belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    /// Value of the extra input channel fed to the domain-dependent predictor.
    pub fn channel_value(self) -> f64 {
        match self {
            Domain::Source => 0.0,
            Domain::Target => 1.0,
        }
    }

    /// Label used when training the domain classifier (source = 1).
    pub fn classifier_target(self) -> f64 {
        match self {
            Domain::Source => 1.0,
            Domain::Target => 0.0,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => write!(f, "source"),
            Domain::Target => write!(f, "target"),
        }
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

/// Prediction problem the task poses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Classification => write!(f, "classification"),
            TaskKind::Regression => write!(f, "regression"),
        }
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

/// Stable seed mixer for shared-nothing parallel cells: derives independent
/// streams from a root seed and a list of labels, so adding a method or a
/// sweep point never perturbs the seeds of other cells.
pub fn mix_seed(root: u64, parts: &[&str]) -> u64 {
    let mut h = splitmix64(root ^ 0x9e37_79b9_7f4a_7c15);
    for part in parts {
        for byte in part.as_bytes() {
            h = splitmix64(h ^ u64::from(*byte));
        }
        h = splitmix64(h ^ 0xff51_afd7_ed55_8ccd);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
