//! Task persistence: four CSV files plus a key-value scenario sidecar.
//!
//! Floats are printed with 17 significant digits so a save/load/save cycle
//! is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::common::{Domain, TaskKind};
use crate::data::scenario::{Labels, Scenario};
use crate::data::task::{LabeledSet, SemiDaTask, UnlabeledSet};
use crate::data::DataError;
use crate::diffcore::Tensor;

pub const SOURCE_FILE: &str = "source.csv";
pub const TARGET_LABELED_FILE: &str = "target_labeled.csv";
pub const TARGET_UNLABELED_FILE: &str = "target_unlabeled.csv";
pub const TEST_TARGET_FILE: &str = "test_target.csv";
pub const SIDECAR_FILE: &str = "scenario.cfg";

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn labeled_csv(set: &LabeledSet) -> String {
    let mut out = String::from("x1,x2,y,domain\n");
    for i in 0..set.len() {
        let x = set.features.row(i);
        let label = match &set.labels {
            Labels::Classes(v) => v[i].to_string(),
            Labels::Reals(v) => fmt_float(v[i]),
        };
        writeln!(out, "{},{},{},{}", fmt_float(x[0]), fmt_float(x[1]), label, set.domain)
            .unwrap();
    }
    out
}

fn unlabeled_csv(set: &UnlabeledSet) -> String {
    let mut out = String::from("x1,x2,domain\n");
    for i in 0..set.len() {
        let x = set.features.row(i);
        writeln!(out, "{},{},{}", fmt_float(x[0]), fmt_float(x[1]), set.domain).unwrap();
    }
    out
}

/// Writes the four CSVs and the scenario sidecar into `dir`.
pub fn save_task(task: &SemiDaTask, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SOURCE_FILE), labeled_csv(&task.source))?;
    fs::write(dir.join(TARGET_LABELED_FILE), labeled_csv(&task.target_labeled))?;
    fs::write(dir.join(TARGET_UNLABELED_FILE), unlabeled_csv(&task.target_unlabeled))?;
    fs::write(dir.join(TEST_TARGET_FILE), labeled_csv(&task.test_target))?;

    let mut sidecar = String::new();
    for (k, v) in task.scenario.to_kv() {
        writeln!(sidecar, "{k} = {v}").unwrap();
    }
    writeln!(sidecar, "seed = {}", task.seed).unwrap();
    fs::write(dir.join(SIDECAR_FILE), sidecar)?;
    Ok(())
}

struct CsvError {
    line: usize,
    msg: String,
}

fn parse_labeled(
    text: &str,
    kind: TaskKind,
    expect_domain: Domain,
) -> Result<LabeledSet, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x1,x2,y,domain" => {}
        Some((_, header)) => {
            return Err(CsvError {
                line: 1,
                msg: format!("expected header x1,x2,y,domain, got {header:?}"),
            })
        }
        None => return Err(CsvError { line: 1, msg: "empty file".into() }),
    }
    let mut xs = Vec::new();
    let mut classes = Vec::new();
    let mut reals = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CsvError {
                line: lineno,
                msg: format!("expected 4 columns, got {}", fields.len()),
            });
        }
        for j in 0..2 {
            let v: f64 = fields[j].trim().parse().map_err(|_| CsvError {
                line: lineno,
                msg: format!("bad float {:?}", fields[j]),
            })?;
            xs.push(v);
        }
        match kind {
            TaskKind::Classification => classes.push(
                fields[2].trim().parse::<usize>().map_err(|_| CsvError {
                    line: lineno,
                    msg: format!("bad class label {:?}", fields[2]),
                })?,
            ),
            TaskKind::Regression => reals.push(
                fields[2].trim().parse::<f64>().map_err(|_| CsvError {
                    line: lineno,
                    msg: format!("bad real label {:?}", fields[2]),
                })?,
            ),
        }
        let domain: Domain = fields[3]
            .trim()
            .parse()
            .map_err(|e| CsvError { line: lineno, msg: e })?;
        if domain != expect_domain {
            return Err(CsvError {
                line: lineno,
                msg: format!("expected domain {expect_domain}, got {domain}"),
            });
        }
    }
    let rows = xs.len() / 2;
    let labels = match kind {
        TaskKind::Classification => Labels::Classes(classes),
        TaskKind::Regression => Labels::Reals(reals),
    };
    LabeledSet::new(Tensor::from_vec(rows, 2, xs), labels, expect_domain)
        .map_err(|e| CsvError { line: 1, msg: e.to_string() })
}

fn parse_unlabeled(text: &str, expect_domain: Domain) -> Result<UnlabeledSet, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x1,x2,domain" => {}
        Some((_, header)) => {
            return Err(CsvError {
                line: 1,
                msg: format!("expected header x1,x2,domain, got {header:?}"),
            })
        }
        None => return Err(CsvError { line: 1, msg: "empty file".into() }),
    }
    let mut xs = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CsvError {
                line: lineno,
                msg: format!("expected 3 columns, got {}", fields.len()),
            });
        }
        for j in 0..2 {
            let v: f64 = fields[j].trim().parse().map_err(|_| CsvError {
                line: lineno,
                msg: format!("bad float {:?}", fields[j]),
            })?;
            xs.push(v);
        }
        let _: Domain = fields[2]
            .trim()
            .parse()
            .map_err(|e| CsvError { line: lineno, msg: e })?;
    }
    let rows = xs.len() / 2;
    Ok(UnlabeledSet { features: Tensor::from_vec(rows, 2, xs), domain: expect_domain })
}

/// Loads a task directory written by `save_task`.
pub fn load_task(dir: &Path) -> Result<SemiDaTask, DataError> {
    let sidecar_path = dir.join(SIDECAR_FILE);
    let sidecar = fs::read_to_string(&sidecar_path)?;
    let mut kv = Vec::new();
    for (idx, line) in sidecar.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(DataError::Parse {
                file: SIDECAR_FILE.into(),
                line: idx + 1,
                msg: format!("expected key = value, got {line:?}"),
            });
        };
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    let scenario = Scenario::from_kv(&kv)?;
    let seed = kv
        .iter()
        .find(|(k, _)| k == "seed")
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| DataError::Parse {
            file: SIDECAR_FILE.into(),
            line: 1,
            msg: "missing or bad seed".into(),
        })?;
    let kind = scenario.task_kind();

    let read = |name: &str| -> Result<String, DataError> { Ok(fs::read_to_string(dir.join(name))?) };
    let wrap = |name: &str, e: CsvError| DataError::Parse {
        file: name.into(),
        line: e.line,
        msg: e.msg,
    };

    let source = parse_labeled(&read(SOURCE_FILE)?, kind, Domain::Source)
        .map_err(|e| wrap(SOURCE_FILE, e))?;
    let target_labeled = parse_labeled(&read(TARGET_LABELED_FILE)?, kind, Domain::Target)
        .map_err(|e| wrap(TARGET_LABELED_FILE, e))?;
    let target_unlabeled = parse_unlabeled(&read(TARGET_UNLABELED_FILE)?, Domain::Target)
        .map_err(|e| wrap(TARGET_UNLABELED_FILE, e))?;
    let test_target = parse_labeled(&read(TEST_TARGET_FILE)?, kind, Domain::Target)
        .map_err(|e| wrap(TEST_TARGET_FILE, e))?;

    Ok(SemiDaTask { scenario, seed, source, target_labeled, target_unlabeled, test_target })
}
