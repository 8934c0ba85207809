//! Command-line front end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{bestfit_throughput, ffd_plus, BestFitConfig};
use crate::calibration::{read_colo_samples, read_solo_samples};
use crate::model::{predict_gpu, slo_check, Allocation, HardwareProfile};
use crate::oracle::{exhaustive_plan, OracleBudget};
use crate::planner::{plan, select_gpu_type, Plan, PlanError, PlannerConfig, Strategy, Workload};
use crate::problem::{fit_workload, read_json, read_plan, write_atomic, write_json_atomic, Problem};
use crate::sim::{simulate, Arrival, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "gpuplan", version, about = "Interference-aware GPU provisioning for co-located inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Igniter,
    Ffd,
    Bestfit,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate coefficients from profiling CSVs.
    Fit {
        samples_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hardware profile JSON; enables hardware coefficient fits.
        #[arg(long)]
        hardware: Option<PathBuf>,
    },
    /// Produce a provisioning plan.
    Plan {
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "igniter")]
        strategy: StrategyArg,
        /// `auto` or a GPU type name from the problem.
        #[arg(long, default_value = "auto")]
        gpu_type: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate a plan through the performance model.
    Predict { problem: PathBuf, plan: PathBuf },
    /// Replay a plan request by request.
    Simulate {
        problem: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        duration_ms: f64,
        /// Defaults to a tenth of the duration, at most one second.
        #[arg(long)]
        warmup_ms: Option<f64>,
        /// Write a per-request CSV trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        poisson: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan with every strategy and tabulate cost and violations.
    Compare {
        problem: PathBuf,
        /// Defaults to the first GPU type with coefficients for every workload.
        #[arg(long)]
        gpu_type: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// What a command printed and whether it should exit nonzero.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
    pub failed: bool,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Fit {
            samples_dir,
            out,
            hardware,
        } => cmd_fit(&samples_dir, &out, hardware.as_deref()),
        Command::Plan {
            problem,
            strategy,
            gpu_type,
            out,
        } => cmd_plan(&problem, strategy, &gpu_type, out.as_deref()),
        Command::Predict { problem, plan } => cmd_predict(&problem, &plan),
        Command::Simulate {
            problem,
            plan,
            duration_ms,
            warmup_ms,
            trace,
            poisson,
            seed,
            out,
        } => {
            let warmup_ms = warmup_ms.unwrap_or((duration_ms / 10.0).min(1000.0));
            let cfg = SimConfig {
                duration_ms,
                warmup_ms,
                arrival: if poisson { Arrival::Poisson { seed } } else { Arrival::Constant },
                trace: trace.is_some(),
            };
            cmd_simulate(&problem, &plan, &cfg, trace.as_deref(), out.as_deref())
        }
        Command::Compare { problem, gpu_type, out } => cmd_compare(&problem, gpu_type.as_deref(), out.as_deref()),
    }
}

#[derive(Debug, Deserialize)]
struct SampleMeta {
    n_kernels: u32,
    k_sch_ms: f64,
    #[serde(default)]
    gpu_type: Option<String>,
}

pub fn cmd_fit(samples_dir: &Path, out: &Path, hardware: Option<&Path>) -> Result<Outcome> {
    let hw: Option<HardwareProfile> = hardware.map(read_json).transpose()?;
    let mut names: Vec<String> = std::fs::read_dir(samples_dir)
        .with_context(|| format!("reading {}", samples_dir.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".solo.csv"))
                .map(str::to_string)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no samples found in {} (expected <name>.solo.csv)", samples_dir.display());
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut result = Outcome::default();
    writeln!(result.stdout, "{:<20} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12}", "workload", "k1", "k2", "k3", "k4", "k5", "rms_rel")?;
    for name in names {
        match fit_one(samples_dir, out, &name, hw.as_ref()) {
            Ok(doc) => {
                let c = &doc.coefficients;
                writeln!(
                    result.stdout,
                    "{:<20} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>12.3e}",
                    name, c.k1, c.k2, c.k3, c.k4, c.k5, doc.fit.k_act_rms_relative
                )?;
                for note in &doc.fit.notes {
                    writeln!(result.stderr, "{name}: {note}")?;
                }
            }
            Err(e) => {
                writeln!(result.stderr, "{name}: {e:#}")?;
                result.failed = true;
            }
        }
    }
    Ok(result)
}

fn fit_one(dir: &Path, out: &Path, name: &str, hw: Option<&HardwareProfile>) -> Result<crate::problem::CoefficientDocument> {
    let solo_path = dir.join(format!("{name}.solo.csv"));
    let solo = read_solo_samples(File::open(&solo_path)?).with_context(|| solo_path.display().to_string())?;
    let colo_path = dir.join(format!("{name}.colo.csv"));
    let colo = if colo_path.exists() {
        read_colo_samples(File::open(&colo_path)?).with_context(|| colo_path.display().to_string())?
    } else {
        Vec::new()
    };
    let meta: SampleMeta = read_json(&dir.join(format!("{name}.meta.json")))?;
    let gpu_type = meta
        .gpu_type
        .or_else(|| hw.map(|h| h.gpu_type.clone()))
        .unwrap_or_else(|| "unknown".to_string());
    let doc = fit_workload(name, &gpu_type, &solo, &colo, meta.n_kernels, meta.k_sch_ms, hw)?;
    write_json_atomic(&out.join(format!("{name}.coef.json")), &doc)?;
    Ok(doc)
}

fn run_strategy(strategy: Strategy, workloads: &[Workload], hw: &HardwareProfile, cfg: &PlannerConfig) -> Result<Plan> {
    Ok(match strategy {
        Strategy::Igniter => plan(workloads, hw, cfg)?,
        Strategy::Ffd => ffd_plus(workloads, hw, cfg)?,
        Strategy::Bestfit => bestfit_throughput(workloads, hw, cfg, &BestFitConfig::default())?,
        Strategy::Oracle => exhaustive_plan(workloads, hw, cfg, &OracleBudget::default())?,
    })
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Igniter => Strategy::Igniter,
            StrategyArg::Ffd => Strategy::Ffd,
            StrategyArg::Bestfit => Strategy::Bestfit,
        }
    }
}

/// Plans `problem` with one strategy on a named GPU type, or on the
/// cheapest type when `gpu_type` is `auto`.
pub fn plan_problem(problem: &Problem, strategy: Strategy, gpu_type: &str) -> Result<Plan> {
    let cfg = problem.planner_config();
    if gpu_type != "auto" {
        let hw = problem.hardware(gpu_type)?;
        return run_strategy(strategy, &problem.workloads_for(gpu_type)?, hw, &cfg);
    }
    let options = problem.gpu_type_options();
    if options.is_empty() {
        bail!("no GPU type has coefficients for every workload");
    }
    if strategy == Strategy::Igniter {
        return Ok(select_gpu_type(&problem.specs, &options, &cfg)?);
    }
    let mut best: Option<Plan> = None;
    let mut failures = Vec::new();
    for opt in &options {
        let ws = problem.workloads_for(&opt.hw.gpu_type)?;
        match run_strategy(strategy, &ws, &opt.hw, &cfg) {
            Ok(p) if best.as_ref().is_none_or(|b| p.cost_per_hour < b.cost_per_hour) => best = Some(p),
            Ok(_) => {}
            Err(e) => failures.push(format!("{}: {e:#}", opt.hw.gpu_type)),
        }
    }
    Ok(best.ok_or(PlanError::NoFeasibleGpuType(failures))?)
}

fn plan_summary(p: &Plan) -> String {
    let mut s = format!(
        "{} on {}: {} GPU(s), ${:.2}/h, {} violation(s)",
        p.strategy,
        p.gpu_type,
        p.gpu_count(),
        p.cost_per_hour,
        p.violations.len()
    );
    if !p.violations.is_empty() {
        s.push_str(&format!(" [{}]", p.violations.join(", ")));
    }
    s
}

pub fn cmd_plan(problem_path: &Path, strategy: StrategyArg, gpu_type: &str, out: Option<&Path>) -> Result<Outcome> {
    let problem = Problem::load(problem_path)?;
    let p = plan_problem(&problem, strategy.into(), gpu_type)?;

    let mut outcome = Outcome::default();
    match out {
        Some(path) => write_json_atomic(path, &p)?,
        None => outcome.stdout = serde_json::to_string_pretty(&p)? + "\n",
    }
    writeln!(outcome.stderr, "{}", plan_summary(&p))?;
    for d in &p.diagnostics {
        writeln!(outcome.stderr, "  {d}")?;
    }
    outcome.failed = strategy == StrategyArg::Igniter && !p.violations.is_empty();
    Ok(outcome)
}

fn plan_hardware<'a>(problem: &'a Problem, p: &Plan) -> Result<&'a HardwareProfile> {
    if p.gpus.is_empty() && p.gpu_type.is_empty() {
        return problem.hardware.first().ok_or_else(|| anyhow!("no hardware"));
    }
    Ok(problem.hardware(&p.gpu_type)?)
}

pub fn cmd_predict(problem_path: &Path, plan_path: &Path) -> Result<Outcome> {
    let problem = Problem::load(problem_path)?;
    let p = read_plan(plan_path)?;
    let hw = plan_hardware(&problem, &p)?;
    let specs = problem.spec_map();
    let coefs = problem.coefficient_map(&hw.gpu_type);

    let mut outcome = Outcome::default();
    let out = &mut outcome.stdout;
    writeln!(
        out,
        "{:>4} {:<20} {:>6} {:>5} {:>9} {:>9} {:>9} {:>9} {:>11} {:>7} {:>7}",
        "gpu", "workload", "r", "batch", "t_load", "t_gpu", "t_fb", "t_inf", "thru_rps", "lat_ok", "thr_ok"
    )?;
    for gpu in &p.gpus {
        let allocs: Vec<Allocation> = gpu
            .allocations
            .iter()
            .map(|a| Allocation {
                workload: a.workload.clone(),
                r: a.r,
                batch: a.batch,
            })
            .collect();
        let predicted = predict_gpu(&allocs, &specs, &coefs, hw)?;
        for a in &allocs {
            let b = &predicted[&a.workload];
            let check = slo_check(b, &specs[&a.workload]);
            writeln!(
                out,
                "{:>4} {:<20} {:>6.3} {:>5} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>11.1} {:>7} {:>7}",
                gpu.gpu_index,
                a.workload,
                a.r,
                a.batch,
                b.t_load_ms,
                b.t_gpu_ms,
                b.t_feedback_ms,
                b.t_inf_ms,
                b.throughput_rps,
                check.latency_ok,
                check.throughput_ok
            )?;
        }
    }
    Ok(outcome)
}

pub fn cmd_simulate(
    problem_path: &Path,
    plan_path: &Path,
    cfg: &SimConfig,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let problem = Problem::load(problem_path)?;
    let p = read_plan(plan_path)?;
    let hw = plan_hardware(&problem, &p)?;
    let report = simulate(&p, &problem.spec_map(), &problem.coefficient_map(&hw.gpu_type), hw, cfg)?;

    let mut outcome = Outcome::default();
    if let Some(path) = trace {
        let mut buf = Vec::new();
        report.write_trace_csv(&mut buf)?;
        write_atomic(path, &buf).with_context(|| path.display().to_string())?;
    }
    match out {
        Some(path) => write_json_atomic(path, &report)?,
        None => outcome.stdout = serde_json::to_string_pretty(&report)? + "\n",
    }
    for w in &report.workloads {
        writeln!(
            outcome.stderr,
            "{}: p99 {:.2} ms (slo {}), {:.1}/{} req/s{}",
            w.workload,
            w.p99_ms,
            w.slo_ms,
            w.achieved_rps,
            w.offered_rps,
            if w.violation { " VIOLATION" } else { "" }
        )?;
    }
    outcome.failed = report.violations().next().is_some();
    Ok(outcome)
}

/// One line of the strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub strategy: Strategy,
    pub gpu_type: String,
    pub gpus: Option<usize>,
    pub total_r: Option<f64>,
    pub cost_per_hour: Option<f64>,
    pub violations: Vec<String>,
    pub diagnostic: Option<String>,
}

impl CompareRow {
    fn from_result(strategy: Strategy, gpu_type: &str, result: Result<Plan, String>) -> Self {
        match result {
            Ok(p) => Self {
                strategy,
                gpu_type: gpu_type.to_string(),
                gpus: Some(p.gpu_count()),
                total_r: Some(p.total_r()),
                cost_per_hour: Some(p.cost_per_hour),
                violations: p.violations,
                diagnostic: None,
            },
            Err(e) => Self {
                strategy,
                gpu_type: gpu_type.to_string(),
                gpus: None,
                total_r: None,
                cost_per_hour: None,
                violations: Vec::new(),
                diagnostic: Some(e),
            },
        }
    }
}

pub fn compare_rows(workloads: &[Workload], hw: &HardwareProfile, cfg: &PlannerConfig) -> Vec<CompareRow> {
    let mut rows = Vec::new();
    for strategy in [Strategy::Igniter, Strategy::Ffd, Strategy::Bestfit] {
        let r = run_strategy(strategy, workloads, hw, cfg).map_err(|e| format!("infeasible: {e:#}"));
        rows.push(CompareRow::from_result(strategy, &hw.gpu_type, r));
    }
    let budget = OracleBudget::default();
    if workloads.len() <= budget.max_workloads {
        let r = exhaustive_plan(workloads, hw, cfg, &budget).map_err(|e| e.to_string());
        rows.push(CompareRow::from_result(Strategy::Oracle, &hw.gpu_type, r));
    }
    rows
}

pub fn cmd_compare(problem_path: &Path, gpu_type: Option<&str>, out: Option<&Path>) -> Result<Outcome> {
    let problem = Problem::load(problem_path)?;
    let hw = match gpu_type {
        Some(t) => problem.hardware(t)?,
        None => *problem
            .complete_gpu_types()
            .first()
            .ok_or_else(|| anyhow!("no GPU type has coefficients for every workload"))?,
    };
    let workloads = problem.workloads_for(&hw.gpu_type)?;
    let rows = compare_rows(&workloads, hw, &problem.planner_config());

    let mut outcome = Outcome::default();
    let s = &mut outcome.stdout;
    writeln!(s, "{:<8} {:<6} {:>5} {:>8} {:>9} {:>10}  notes", "strategy", "gpu", "gpus", "total_r", "$/h", "violations")?;
    for row in &rows {
        match (&row.diagnostic, row.gpus, row.total_r, row.cost_per_hour) {
            (None, Some(g), Some(r), Some(c)) => writeln!(
                s,
                "{:<8} {:<6} {:>5} {:>8.3} {:>9.2} {:>10}  {}",
                row.strategy.to_string(),
                row.gpu_type,
                g,
                r,
                c,
                row.violations.len(),
                row.violations.join(",")
            )?,
            _ => writeln!(
                s,
                "{:<8} {:<6} {:>5} {:>8} {:>9} {:>10}  {}",
                row.strategy.to_string(),
                row.gpu_type,
                "-",
                "-",
                "-",
                "-",
                row.diagnostic.as_deref().unwrap_or("")
            )?,
        }
    }
    if let Some(path) = out {
        let by_strategy: BTreeMap<String, &CompareRow> = rows.iter().map(|r| (r.strategy.to_string(), r)).collect();
        write_json_atomic(path, &by_strategy)?;
    }
    Ok(outcome)
}
