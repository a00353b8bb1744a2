//! Experiment configuration: UTF-8 `key = value` lines under `[section]`
//! headers, booleans as true/false, lists comma-separated.

use std::path::{Path, PathBuf};

use crate::data::Scenario;
use crate::harness::HarnessError;
use crate::trainer::{Method, OptimConfig};

/// Parsed section/key/value triples, in file order.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    entries: Vec<(String, String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str, name: &str) -> Result<Self, HarnessError> {
        let mut entries = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(end) = rest.find(']') else {
                    return Err(HarnessError::Config(format!(
                        "{name}:{}: unterminated section header",
                        idx + 1
                    )));
                };
                section = rest[..end].trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(HarnessError::Config(format!(
                    "{name}:{}: expected key = value, got {line:?}",
                    idx + 1
                )));
            };
            entries.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
        }
        Ok(ConfigFile { entries })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn section_pairs(&self, section: &str) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter(|(s, _, _)| s == section)
            .map(|(_, k, v)| (k.clone(), v.clone()))
            .collect()
    }

    fn num<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, HarnessError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                HarnessError::Config(format!("bad value for [{section}] {key}: {raw:?}"))
            }),
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, HarnessError> {
        let Some(raw) = self.get(section, key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|item| {
                item.trim().parse().map_err(|_| {
                    HarnessError::Config(format!(
                        "bad list item {item:?} for [{section}] {key}"
                    ))
                })
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

/// A full sweep description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub m_values: Vec<usize>,
    pub root_seed: u64,
    pub n: usize,
    pub k: usize,
    pub test_size: usize,
    pub lambda_risk: f64,
    pub lambda_rep: f64,
    pub lambda_risk_grid: Option<Vec<f64>>,
    pub lambda_rep_grid: Option<Vec<f64>>,
    pub optim: OptimConfig,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self, HarnessError> {
        let file = ConfigFile::parse(text, name)?;

        let kind = file
            .get("experiment", "scenario")
            .ok_or_else(|| HarnessError::Config("missing [experiment] scenario".into()))?;
        let mut scenario_kv = Scenario::default_for(kind)
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .to_kv();
        for (k, v) in file.section_pairs("scenario") {
            match scenario_kv.iter_mut().find(|(key, _)| *key == k) {
                Some(slot) => slot.1 = v,
                None => {
                    return Err(HarnessError::Config(format!(
                        "scenario {kind} has no parameter {k:?}"
                    )))
                }
            }
        }
        let scenario =
            Scenario::from_kv(&scenario_kv).map_err(|e| HarnessError::Config(e.to_string()))?;

        let methods_raw = file
            .get("experiment", "methods")
            .ok_or_else(|| HarnessError::Config("missing [experiment] methods".into()))?;
        let methods: Vec<Method> = methods_raw
            .split(',')
            .map(|m| m.trim().parse().map_err(HarnessError::Config))
            .collect::<Result<_, _>>()?;
        if methods.is_empty() {
            return Err(HarnessError::Config("need at least one method".into()));
        }

        let seeds = file
            .list("experiment", "seeds")?
            .unwrap_or_else(|| (0..5).collect());
        if seeds.is_empty() {
            return Err(HarnessError::Config("need at least one seed".into()));
        }
        let m_values = file
            .list("experiment", "m_values")?
            .unwrap_or_else(|| vec![20, 100]);
        if m_values.is_empty() {
            return Err(HarnessError::Config("need at least one m value".into()));
        }

        let optim = OptimConfig {
            lr: file.num("optim", "lr", 1e-3)?,
            momentum: file.num("optim", "momentum", 0.9)?,
            weight_decay: file.num("optim", "weight_decay", 5e-4)?,
            total_iters: file.num("optim", "total_iters", 4000)?,
            batch_size: file.num("optim", "batch_size", 64)?,
            seed: 0,
        };

        Ok(ExperimentConfig {
            scenario,
            methods,
            seeds,
            m_values,
            root_seed: file.num("experiment", "root_seed", 0)?,
            n: file.num("task", "n", 2000)?,
            k: file.num("task", "k", 2000)?,
            test_size: file.num("task", "test_size", 2000)?,
            lambda_risk: file.num("objective", "lambda_risk", 1.0)?,
            lambda_rep: file.num("objective", "lambda_rep", 1.0)?,
            lambda_risk_grid: file.list("objective", "lambda_risk_grid")?,
            lambda_rep_grid: file.list("objective", "lambda_rep_grid")?,
            optim,
            out_dir: PathBuf::from(file.get("experiment", "out_dir").unwrap_or("sweep_out")),
            jobs: file.num("experiment", "jobs", 0).map(|j: usize| if j == 0 { None } else { Some(j) })?,
        })
    }

    /// The lambda cells this sweep covers: the configured pair, or the full
    /// grid when both grid lists are present.
    pub fn lambda_cells(&self) -> Vec<(f64, f64)> {
        match (&self.lambda_risk_grid, &self.lambda_rep_grid) {
            (Some(risks), Some(reps)) => {
                let mut cells = Vec::new();
                for rep in reps {
                    for risk in risks {
                        cells.push((*risk, *rep));
                    }
                }
                cells
            }
            _ => vec![(self.lambda_risk, self.lambda_rep)],
        }
    }
}
