//! Multi-seed, multi-method sweep execution with shared-nothing parallel
//! cells and deterministic, config-ordered aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::common::{mix_seed, TaskKind};
use crate::data::{gen_task, GenOptions};
use crate::harness::config::ExperimentConfig;
use crate::harness::HarnessError;
use crate::objectives::LirrConfig;
use crate::trainer::{train, Method, OptimConfig};

/// One (method, m, lambda, seed) cell's outcome.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub method: Method,
    pub m: usize,
    pub ratio: f64,
    pub lambda_risk: f64,
    pub lambda_rep: f64,
    pub seed_index: u64,
    pub status: String,
    pub src_metric: Option<f64>,
    pub tgt_metric: Option<f64>,
}

/// Aggregated mean and (n-1)-denominator std over the seeds of one cell
/// group, counting only completed runs.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub method: Method,
    pub m: usize,
    pub ratio: f64,
    pub lambda_risk: f64,
    pub lambda_rep: f64,
    pub completed: usize,
    pub failed: usize,
    pub tgt_mean: f64,
    pub tgt_std: f64,
}

pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    pub task_kind: TaskKind,
}

/// Executes every cell (in parallel when configured), aggregates in config
/// order, and writes results.csv, summary.csv, ranking.txt, and, for lambda
/// grids, lambda_table.csv under the output directory.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    let result = execute(cfg)?;
    write_outputs(cfg, &result)?;
    Ok(result)
}

/// Runs the sweep without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<SweepResult, HarnessError> {
    let lambda_cells = cfg.lambda_cells();
    let task_kind = cfg.scenario.task_kind();

    struct CellSpec {
        method: Method,
        m: usize,
        lambda_risk: f64,
        lambda_rep: f64,
        seed_index: u64,
    }
    let mut specs = Vec::new();
    for method in &cfg.methods {
        for &m in &cfg.m_values {
            for &(lambda_risk, lambda_rep) in &lambda_cells {
                for &seed_index in &cfg.seeds {
                    specs.push(CellSpec {
                        method: *method,
                        m,
                        lambda_risk,
                        lambda_rep,
                        seed_index,
                    });
                }
            }
        }
    }

    let run_cell = |spec: &CellSpec| -> CellResult {
        let ratio = spec.m as f64 / cfg.k as f64;
        let base = CellResult {
            method: spec.method,
            m: spec.m,
            ratio,
            lambda_risk: spec.lambda_risk,
            lambda_rep: spec.lambda_rep,
            seed_index: spec.seed_index,
            status: "ok".into(),
            src_metric: None,
            tgt_metric: None,
        };
        // tasks are shared across methods within a (m, seed) cell so method
        // comparisons see identical data
        let task_seed = mix_seed(
            cfg.root_seed,
            &["task", cfg.scenario.kind(), &spec.m.to_string(), &spec.seed_index.to_string()],
        );
        let mut opts = GenOptions::new(cfg.n, spec.m, cfg.k);
        opts.test_size = cfg.test_size;
        opts.enforce_small_m = false;
        let task = match gen_task(&cfg.scenario, opts, task_seed) {
            Ok(task) => task,
            Err(e) => {
                return CellResult { status: format!("failed: {e}"), ..base };
            }
        };
        let train_seed = mix_seed(
            cfg.root_seed,
            &[
                spec.method.name(),
                &spec.m.to_string(),
                &format!("{:x}", spec.lambda_risk.to_bits()),
                &format!("{:x}", spec.lambda_rep.to_bits()),
                &spec.seed_index.to_string(),
            ],
        );
        let lirr_cfg = LirrConfig {
            lambda_risk: spec.lambda_risk,
            lambda_rep: spec.lambda_rep,
            ..LirrConfig::new(task_kind)
        };
        let optim = OptimConfig { seed: train_seed, ..cfg.optim };
        match train(spec.method, &task, &lirr_cfg, &optim) {
            Ok(record) => CellResult {
                src_metric: Some(record.final_src),
                tgt_metric: Some(record.final_tgt),
                ..base
            },
            Err(e) => CellResult { status: format!("failed: {e}"), ..base },
        }
    };

    let cells: Vec<CellResult> = match cfg.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;
            pool.install(|| specs.par_iter().map(run_cell).collect())
        }
        None => specs.par_iter().map(run_cell).collect(),
    };

    // aggregate in config order
    let mut summary = Vec::new();
    for method in &cfg.methods {
        for &m in &cfg.m_values {
            for &(lambda_risk, lambda_rep) in &lambda_cells {
                let group: Vec<&CellResult> = cells
                    .iter()
                    .filter(|c| {
                        c.method == *method
                            && c.m == m
                            && c.lambda_risk == lambda_risk
                            && c.lambda_rep == lambda_rep
                    })
                    .collect();
                let done: Vec<f64> = group.iter().filter_map(|c| c.tgt_metric).collect();
                let failed = group.len() - done.len();
                let (mean, std) = mean_std(&done);
                summary.push(SummaryRow {
                    method: *method,
                    m,
                    ratio: m as f64 / cfg.k as f64,
                    lambda_risk,
                    lambda_rep,
                    completed: done.len(),
                    failed,
                    tgt_mean: mean,
                    tgt_std: std,
                });
            }
        }
    }

    Ok(SweepResult { cells, summary, task_kind })
}

/// Sample mean and std with the n-1 denominator (0 when n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn results_csv(result: &SweepResult) -> String {
    let mut out =
        String::from("method,m,ratio,lambda_risk,lambda_rep,seed_index,status,src_metric,tgt_metric\n");
    for c in &result.cells {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{},{},{},{}",
            c.method,
            c.m,
            c.ratio,
            c.lambda_risk,
            c.lambda_rep,
            c.seed_index,
            c.status,
            fmt_opt(c.src_metric),
            fmt_opt(c.tgt_metric)
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(result: &SweepResult) -> String {
    let mut out = String::from(
        "method,m,ratio,lambda_risk,lambda_rep,completed,failed,tgt_mean,tgt_std\n",
    );
    for s in &result.summary {
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{},{},{:.17e},{:.17e}",
            s.method, s.m, s.ratio, s.lambda_risk, s.lambda_rep, s.completed, s.failed,
            s.tgt_mean, s.tgt_std
        )
        .unwrap();
    }
    out
}

fn ranking_txt(result: &SweepResult) -> String {
    let higher_is_better = result.task_kind == TaskKind::Classification;
    let metric = if higher_is_better { "target accuracy" } else { "target MAE" };
    let mut out = format!("ranking by mean {metric} ({} seeds aggregated)\n", "per-cell");
    let mut rows: Vec<&SummaryRow> = result.summary.iter().collect();
    rows.sort_by(|a, b| {
        let ord = a.tgt_mean.partial_cmp(&b.tgt_mean).unwrap_or(std::cmp::Ordering::Equal);
        if higher_is_better {
            ord.reverse()
        } else {
            ord
        }
    });
    for (rank, s) in rows.iter().enumerate() {
        writeln!(
            out,
            "{:>2}. {:<10} m={:<5} lambda_risk={:<6} lambda_rep={:<6} {:.4} +- {:.4} ({} ok, {} failed)",
            rank + 1,
            s.method.name(),
            s.m,
            s.lambda_risk,
            s.lambda_rep,
            s.tgt_mean,
            s.tgt_std,
            s.completed,
            s.failed
        )
        .unwrap();
    }
    out
}

/// Grid-shaped summary table (rows: lambda_rep, columns: lambda_risk),
/// mirroring the trade-off table layout.
fn lambda_table_csv(cfg: &ExperimentConfig, result: &SweepResult) -> Option<String> {
    let (Some(risks), Some(reps)) = (&cfg.lambda_risk_grid, &cfg.lambda_rep_grid) else {
        return None;
    };
    let mut out = String::from("lambda_rep\\lambda_risk");
    for r in risks {
        write!(out, ",{r}").unwrap();
    }
    out.push('\n');
    for rep in reps {
        write!(out, "{rep}").unwrap();
        for risk in risks {
            let cell = result
                .summary
                .iter()
                .find(|s| s.lambda_risk == *risk && s.lambda_rep == *rep);
            match cell {
                Some(s) => write!(out, ",{:.4}+-{:.4}", s.tgt_mean, s.tgt_std).unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    Some(out)
}

fn write_outputs(cfg: &ExperimentConfig, result: &SweepResult) -> Result<(), HarnessError> {
    let dir: &Path = &cfg.out_dir;
    fs::create_dir_all(dir)
        .map_err(|e| HarnessError::Runtime(format!("create {}: {e}", dir.display())))?;
    let write = |name: &str, content: &str| -> Result<(), HarnessError> {
        fs::write(dir.join(name), content)
            .map_err(|e| HarnessError::Runtime(format!("write {name}: {e}")))
    };
    write("results.csv", &results_csv(result))?;
    write("summary.csv", &summary_csv(result))?;
    write("ranking.txt", &ranking_txt(result))?;
    if let Some(table) = lambda_table_csv(cfg, result) {
        write("lambda_table.csv", &table)?;
    }
    Ok(())
}
