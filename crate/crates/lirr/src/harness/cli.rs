//! Command-line interface: data generation, training, evaluation, bound
//! reports, sweeps, and plots. Exit codes: 0 success, 2 configuration or
//! usage error, 1 runtime failure.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::bound::{
    bound_report, normalize_label, proxy_a_distance, BoundMode, BoundReport,
    FiniteHypothesisClass,
};
use crate::common::{mix_seed, TaskKind};
use crate::data::{gen_task, load_task, save_task, GenOptions, Scenario, SemiDaTask};
use crate::harness::config::ExperimentConfig;
use crate::harness::svg::{emit_curve_svg, CurveSeries};
use crate::harness::{sweep, HarnessError};
use crate::models::{load_model, save_model, LirrModel};
use crate::objectives::LirrConfig;
use crate::trainer::{evaluate, train, Method, OptimConfig};

#[derive(Parser)]
#[command(
    name = "lirr",
    about = "Semi-supervised domain adaptation lab: synthetic shifts, invariant training objectives, and generalization-bound reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic task directory (4 CSV files + scenario sidecar)
    GenData(GenDataArgs),
    /// Train one method on a task directory
    Train(TrainArgs),
    /// Evaluate a checkpoint on a task split
    Evaluate(EvaluateArgs),
    /// Print the generalization-bound report for a checkpoint on a task
    Bound(BoundArgs),
    /// Run a multi-seed method sweep from a config file
    Sweep(SweepArgs),
    /// Plot labeled-ratio curves from a sweep results.csv
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Scenario kind: covariate_shift | label_shift | conditional_shift |
    /// two_moons_rotation | regression_sine_shift
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 2000)]
    k: usize,
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
    /// Scenario parameter override, key=value (repeatable)
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Permit m > n/10 (labeled-ratio studies)
    #[arg(long, default_value_t = false)]
    allow_large_m: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    method: Method,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4000)]
    iters: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_risk: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_rep: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Which split to score: test | source | target_labeled
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// population | finite_sample
    #[arg(long, default_value = "population")]
    mode: String,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Stump-grid resolution per axis for the distance term
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    /// Also print the report as a CSV row
    #[arg(long, default_value_t = false)]
    csv: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Parallel jobs (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// results.csv produced by the sweep subcommand
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Entry point used by `main`; returns the process exit code.
pub fn cli(args: &[String]) -> i32 {
    let argv = std::iter::once("lirr".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::GenData(args) => cmd_gen_data(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Evaluate(args) => cmd_evaluate(args),
        Cmd::Bound(args) => cmd_bound(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => 0,
        Err(HarnessError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(HarnessError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<(), HarnessError> {
    let mut kv = Scenario::default_for(&args.scenario)
        .map_err(|e| HarnessError::Config(e.to_string()))?
        .to_kv();
    for raw in &args.params {
        let Some((k, v)) = raw.split_once('=') else {
            return Err(HarnessError::Config(format!("--param needs key=value, got {raw:?}")));
        };
        match kv.iter_mut().find(|(key, _)| key == k.trim()) {
            Some(slot) => slot.1 = v.trim().to_string(),
            None => {
                return Err(HarnessError::Config(format!(
                    "scenario {} has no parameter {k:?}",
                    args.scenario
                )))
            }
        }
    }
    let scenario = Scenario::from_kv(&kv).map_err(|e| HarnessError::Config(e.to_string()))?;
    let opts = GenOptions {
        n: args.n,
        m: args.m,
        k: args.k,
        test_size: args.test_size,
        enforce_small_m: !args.allow_large_m,
    };
    let task = gen_task(&scenario, opts, args.seed)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    save_task(&task, &args.out).map_err(runtime)?;
    println!(
        "wrote {} task (n={}, m={}, k={}, test={}) to {}",
        scenario.kind(),
        task.n(),
        task.m(),
        task.k(),
        task.test_target.len(),
        args.out.display()
    );
    Ok(())
}

fn load_task_dir(path: &Path) -> Result<SemiDaTask, HarnessError> {
    load_task(path).map_err(runtime)
}

fn cmd_train(args: TrainArgs) -> Result<(), HarnessError> {
    let task = load_task_dir(&args.task)?;
    let lirr_cfg = LirrConfig {
        lambda_risk: args.lambda_risk,
        lambda_rep: args.lambda_rep,
        ..LirrConfig::new(task.task_kind())
    };
    let optim = OptimConfig {
        lr: args.lr,
        momentum: args.momentum,
        weight_decay: args.weight_decay,
        total_iters: args.iters,
        batch_size: args.batch_size,
        seed: mix_seed(args.seed, &["train-cli"]),
    };
    let record = train(args.method, &task, &lirr_cfg, &optim).map_err(runtime)?;
    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    std::fs::write(args.out.join("metrics.csv"), record.metrics_csv()).map_err(runtime)?;
    save_model(&record.model, &args.out.join("model.ckpt")).map_err(runtime)?;
    let metric_name = match task.task_kind() {
        TaskKind::Classification => "accuracy",
        TaskKind::Regression => "mae",
    };
    println!(
        "{} trained {} iters in {} ms: source {metric_name} {:.4}, target {metric_name} {:.4}",
        args.method, args.iters, record.wall_ms, record.final_src, record.final_tgt
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), HarnessError> {
    let task = load_task_dir(&args.task)?;
    let model = load_model(&args.model).map_err(runtime)?;
    let set = match args.split.as_str() {
        "test" => &task.test_target,
        "source" => &task.source,
        "target_labeled" => &task.target_labeled,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown split {other:?} (expected test | source | target_labeled)"
            )))
        }
    };
    let metric = evaluate(&model, set, task.task_kind()).map_err(runtime)?;
    match task.task_kind() {
        TaskKind::Classification => println!("accuracy = {metric:.6}"),
        TaskKind::Regression => println!("mae = {metric:.6}"),
    }
    Ok(())
}

fn model_hypothesis<'a>(
    model: &'a LirrModel,
    task: &'a SemiDaTask,
) -> impl Fn(&[f64]) -> f64 + 'a {
    let kind = task.task_kind();
    move |x: &[f64]| {
        let features = crate::diffcore::Tensor::from_vec(1, x.len(), x.to_vec());
        let pred = model.predict(&features).expect("forward pass");
        match kind {
            TaskKind::Classification => {
                let row = pred.row(0);
                let mut argmax = 0;
                for j in 1..row.len() {
                    if row[j] > row[argmax] {
                        argmax = j;
                    }
                }
                argmax as f64
            }
            TaskKind::Regression => normalize_label(task, pred.get(0, 0)),
        }
    }
}

fn cmd_bound(args: BoundArgs) -> Result<(), HarnessError> {
    let mode = match args.mode.as_str() {
        "population" => BoundMode::Population,
        "finite_sample" => BoundMode::FiniteSample,
        other => {
            return Err(HarnessError::Config(format!(
                "unknown mode {other:?} (expected population | finite_sample)"
            )))
        }
    };
    let task = load_task_dir(&args.task)?;
    let model = load_model(&args.model).map_err(runtime)?;
    let class = FiniteHypothesisClass::stump_grid_from_samples(
        &task.source.features,
        &task.target_unlabeled.features,
        args.resolution,
    );
    let h = model_hypothesis(&model, &task);
    let report = bound_report(&h, &task, &class, args.delta, mode).map_err(runtime)?;
    println!("{report}");

    // probe-based proxy on the learned representation, reported alongside
    let encode = |features: &crate::diffcore::Tensor| -> Result<crate::diffcore::Tensor, HarnessError> {
        let mut g = crate::diffcore::Graph::new();
        let bound = model.bind(&mut g);
        let z = bound.encode(&mut g, features).map_err(runtime)?;
        Ok(g.value(z).clone())
    };
    let z_s = encode(&task.source.features)?;
    let z_t = encode(&task.target_unlabeled.features)?;
    let pad = proxy_a_distance(&z_s, &z_t, mix_seed(task.seed, &["proxy-probe"]))
        .map_err(runtime)?;
    println!("  proxy A-distance on learned representation: {pad:.6}");

    if args.csv {
        println!("{}", BoundReport::csv_header());
        println!("{}", report.to_csv_row());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), HarnessError> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(jobs) = args.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let result = sweep::run_sweep(&cfg)?;
    let failed = result.cells.iter().filter(|c| c.status != "ok").count();
    println!(
        "sweep complete: {} cells ({} failed) -> {}",
        result.cells.len(),
        failed,
        cfg.out_dir.display()
    );
    for line in sweep::summary_csv(&result).lines().take(13) {
        println!("  {line}");
    }
    if failed > 0 {
        return Err(HarnessError::Runtime(format!("{failed} sweep cells failed")));
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&args.results).map_err(runtime)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| runtime("empty results file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> Result<usize, HarnessError> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| runtime(format!("results file lacks column {name:?}")))
    };
    let (ci_method, ci_ratio, ci_status, ci_tgt) =
        (col("method")?, col("ratio")?, col("status")?, col("tgt_metric")?);

    // mean target metric per (method, ratio), in first-seen order
    let mut groups: Vec<(String, Vec<(f64, Vec<f64>)>)> = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(runtime(format!(
                "{}:{}: expected {} columns",
                args.results.display(),
                idx + 2,
                cols.len()
            )));
        }
        if fields[ci_status] != "ok" {
            continue;
        }
        let ratio: f64 = fields[ci_ratio].parse().map_err(|_| {
            runtime(format!("{}:{}: bad ratio", args.results.display(), idx + 2))
        })?;
        let tgt: f64 = fields[ci_tgt].parse().map_err(|_| {
            runtime(format!("{}:{}: bad tgt_metric", args.results.display(), idx + 2))
        })?;
        let method = fields[ci_method].to_string();
        let group = match groups.iter_mut().find(|(name, _)| *name == method) {
            Some(g) => g,
            None => {
                groups.push((method, Vec::new()));
                groups.last_mut().unwrap()
            }
        };
        match group.1.iter_mut().find(|(r, _)| *r == ratio) {
            Some((_, values)) => values.push(tgt),
            None => group.1.push((ratio, vec![tgt])),
        }
    }
    if groups.is_empty() {
        return Err(runtime("no completed rows to plot"));
    }

    let series: Vec<CurveSeries> = groups
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            CurveSeries {
                label,
                points: points
                    .into_iter()
                    .map(|(r, vals)| (r, vals.iter().sum::<f64>() / vals.len() as f64))
                    .collect(),
            }
        })
        .collect();
    emit_curve_svg(&series, "labeled target ratio", "target metric", &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        cli(&args.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    #[test]
    fn unknown_subcommand_exits_2() {
        assert_eq!(run(&["frobnicate"]), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(run(&["--help"]), 0);
    }

    #[test]
    fn gen_data_rejects_bad_scenario_with_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        assert_eq!(
            run(&["gen-data", "--scenario", "nope", "--out", out.to_str().unwrap()]),
            2
        );
    }

    #[test]
    fn gen_data_writes_five_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        let code = run(&[
            "gen-data",
            "--scenario",
            "label_shift",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
            "--n",
            "200",
            "--m",
            "10",
            "--k",
            "150",
            "--test-size",
            "100",
        ]);
        assert_eq!(code, 0);
        let mut names: Vec<String> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert_eq!(
            names,
            vec![
                "scenario.cfg",
                "source.csv",
                "target_labeled.csv",
                "target_unlabeled.csv",
                "test_target.csv"
            ]
        );
    }

    #[test]
    fn gen_data_param_override_applies() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d");
        let code = run(&[
            "gen-data",
            "--scenario",
            "two_moons_rotation",
            "--out",
            out.to_str().unwrap(),
            "--n",
            "100",
            "--m",
            "5",
            "--k",
            "80",
            "--test-size",
            "50",
            "--param",
            "angle_deg=45",
        ]);
        assert_eq!(code, 0);
        let sidecar = std::fs::read_to_string(out.join("scenario.cfg")).unwrap();
        assert!(sidecar.contains("angle_deg = 4.5"), "{sidecar}");
    }
}
