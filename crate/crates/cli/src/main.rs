//! Command-line surface for the controller-synthesis toolkit.
//!
//! Subcommands: `synthesize`, `simulate`, `compare`, `report`, `demos`.
//! The log level is taken from the `CLF_FORGE_LOG` environment variable.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use clf_forge::clf_learner::CandidateCLF;
use clf_forge::dynamics::{benchmarks, AxisBox};
use clf_forge::eval::{self, EvalController, SontagController};
use clf_forge::lqr_tracking::{equilibrium_lqr, TrackingCostMatrices};
use clf_forge::synthesis::{
    controller_from_checkpoint, synthesize_with, Checkpoint, Mode, Outcome, SynthesisConfig,
};

#[derive(Parser)]
#[command(name = "clf-forge", version, about = "Controller synthesis from demonstrations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthesis and write the library, candidate and report files.
    Synthesize(SynthesizeArgs),
    /// Roll out a saved switching controller and export the trace as CSV.
    Simulate(SimulateArgs),
    /// Compare a saved controller against a baseline on sampled costs.
    Compare(CompareArgs),
    /// Pretty-print a saved synthesis report.
    Report(ReportArgs),
    /// List the demonstrations stored in a library file.
    Demos(DemosArgs),
}

#[derive(Args)]
struct SynthesizeArgs {
    /// Benchmark name (pendulum, cart_pole, rtac, acrobot, ducted_fan,
    /// quadcopter).
    #[arg(long)]
    benchmark: Option<String>,
    /// TOML configuration file (flags below override its fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    accept_n: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    basis_degree: Option<u32>,
    /// Restrict the candidate basis to monomials of even total degree.
    #[arg(long)]
    even_only: bool,
    /// Falsifier worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// learn-clf (default) or known-clf.
    #[arg(long)]
    mode: Option<String>,
    /// Candidate JSON for known-clf mode.
    #[arg(long)]
    clf_file: Option<PathBuf>,
    /// Resume from a previously written checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Library/checkpoint file produced by `synthesize`.
    #[arg(long)]
    library: PathBuf,
    /// Initial state, comma-separated.
    #[arg(long)]
    x0: String,
    /// Cap on the number of trajectory switches.
    #[arg(long, default_value_t = 1000)]
    max_switches: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Library/checkpoint of the switching controller.
    #[arg(long)]
    library: PathBuf,
    /// Baseline: `eq-lqr` or `sontag`.
    #[arg(long, default_value = "eq-lqr")]
    baseline: String,
    /// Candidate JSON file for the `sontag` baseline.
    #[arg(long)]
    baseline_clf: Option<PathBuf>,
    /// Sample box, e.g. "-3.14,3.14;-5,5" (defaults to D).
    #[arg(long)]
    sample_box: Option<String>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200_000)]
    step_cap: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `synthesize`.
    path: PathBuf,
}

#[derive(Args)]
struct DemosArgs {
    /// Library/checkpoint file.
    #[arg(long)]
    library: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CLF_FORGE_LOG")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Synthesize(args) => cmd_synthesize(args),
        Command::Simulate(args) => cmd_simulate(args).map(|_| 0),
        Command::Compare(args) => cmd_compare(args).map(|_| 0),
        Command::Report(args) => cmd_report(args).map(|_| 0),
        Command::Demos(args) => cmd_demos(args).map(|_| 0),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(args: &SynthesizeArgs) -> Result<SynthesisConfig, String> {
    let mut cfg = match (&args.config, &args.benchmark) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            toml::from_str::<SynthesisConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        (None, Some(name)) => SynthesisConfig::for_benchmark(name).map_err(|e| e.to_string())?,
        (None, None) => {
            return Err("either --benchmark or --config is required".into());
        }
    };
    if let Some(name) = &args.benchmark {
        if args.config.is_some() && &cfg.benchmark != name {
            return Err("config file and --benchmark disagree".into());
        }
    }
    if let Some(v) = args.seed {
        cfg.rng_seed = v;
    }
    if let Some(v) = args.accept_n {
        cfg.accept_n = v;
        cfg.max_total_samples = v.saturating_mul(50);
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.t_min {
        cfg.t_min = v;
    }
    if let Some(v) = args.eps0 {
        cfg.eps0 = v;
    }
    if let Some(v) = args.basis_degree {
        cfg.basis.degree = v;
    }
    if args.even_only {
        cfg.basis.even_powers_only = true;
        cfg.basis.include_linear = false;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    match args.mode.as_deref() {
        None => {}
        Some("learn-clf") => cfg.mode = Mode::LearnClf,
        Some("known-clf") => cfg.mode = Mode::KnownClf,
        Some(other) => return Err(format!("unknown mode `{other}`")),
    }
    if let Some(path) = &args.clf_file {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let cand: CandidateCLF =
            serde_json::from_str(&text).map_err(|e| format!("invalid candidate file: {e}"))?;
        cfg.known_clf = Some(cand);
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn cmd_synthesize(args: SynthesizeArgs) -> Result<u8, String> {
    let cfg = load_config(&args)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
    let resume_from = match &args.resume {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            Some(Checkpoint::from_json(&text).map_err(|e| e.to_string())?)
        }
        None => None,
    };

    let checkpoint_path = args.out.join("library.json");
    let mut log_lines = String::new();
    let run = synthesize_with(
        &cfg,
        resume_from,
        |cp| {
            // Batch-boundary autosave; doubles as the demo library.
            let _ = fs::write(&checkpoint_path, cp.to_json());
        },
        |rec| {
            if let Ok(line) = serde_json::to_string(rec) {
                log_lines.push_str(&line);
                log_lines.push('\n');
            }
        },
    )
    .map_err(|e| e.to_string())?;

    fs::write(args.out.join("falsifier_log.jsonl"), log_lines).map_err(|e| e.to_string())?;
    fs::write(args.out.join("report.json"), run.report.to_json()).map_err(|e| e.to_string())?;
    let timings = serde_json::to_string_pretty(&run.report.timings).map_err(|e| e.to_string())?;
    fs::write(args.out.join("timings.json"), timings).map_err(|e| e.to_string())?;
    if let Some(cand) = &run.candidate {
        fs::write(
            args.out.join("clf.json"),
            serde_json::to_string_pretty(cand).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        fs::write(args.out.join("clf.txt"), cand.to_text(None)).map_err(|e| e.to_string())?;
    }
    if let Some(ctrl) = &run.controller {
        // Final library snapshot with the accepted candidate.
        let cp = Checkpoint {
            version: 1,
            config_hash: cfg.config_hash(),
            config: cfg.clone(),
            demos: ctrl.db.entries().iter().map(|e| (*e.demo).clone()).collect(),
            rows: vec![],
            candidate_p: run.candidate.as_ref().map(|c| c.p.clone()),
            sample_index: run.report.decrease_falsifier_samples,
            streak: run.report.final_streak,
            positivity_counterexamples: run.report.positivity_counterexamples,
            decrease_counterexamples: run.report.decrease_counterexamples,
            relearns: run.report.relearns,
            decrease_falsifier_samples: run.report.decrease_falsifier_samples,
        };
        fs::write(&checkpoint_path, cp.to_json()).map_err(|e| e.to_string())?;
    }
    println!("{}", run.report.to_json());
    Ok(match run.report.outcome {
        Outcome::Accepted => 0,
        Outcome::LearnerInfeasible => 2,
        Outcome::DemonstrationFailed => 3,
        Outcome::BudgetExhausted => 4,
    })
}

fn load_library(path: &Path) -> Result<Checkpoint, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Checkpoint::from_json(&text).map_err(|e| e.to_string())
}

fn parse_vector(text: &str) -> Result<DVector<f64>, String> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    vals.map(DVector::from_vec)
        .map_err(|e| format!("invalid vector `{text}`: {e}"))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), String> {
    let library = load_library(&args.library)?;
    let ctrl = controller_from_checkpoint(&library).map_err(|e| e.to_string())?;
    let x0 = parse_vector(&args.x0)?;
    if x0.len() != ctrl.db.system().state_dim() {
        return Err(format!(
            "x0 has dimension {}, system expects {}",
            x0.len(),
            ctrl.db.system().state_dim()
        ));
    }
    if !ctrl.region.in_d(&x0) {
        return Err("x0 lies outside the region of interest D".into());
    }
    let trace = ctrl
        .run_switching(&x0, args.max_switches)
        .map_err(|e| e.to_string())?;
    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    fs::write(args.out.join("trace.csv"), trace.to_csv()).map_err(|e| e.to_string())?;

    // Active target segments: which reference was tracked when.
    let mut targets_csv = String::from("segment,t,demo_id\n");
    let mut boundaries = vec![0usize];
    boundaries.extend(trace.switches.iter().map(|s| s.step));
    boundaries.push(trace.handoff_step.unwrap_or(trace.len()));
    for (seg, win) in boundaries.windows(2).enumerate() {
        let demo_id = match trace.active_demo.get(win[0]).copied().flatten() {
            Some(id) => id,
            None => continue,
        };
        for step in win[0]..win[1].min(trace.len()) {
            let t = step as f64 * trace.h;
            targets_csv.push_str(&format!("{seg},{t},{demo_id}\n"));
        }
    }
    fs::write(args.out.join("targets.csv"), targets_csv).map_err(|e| e.to_string())?;
    println!(
        "status: {:?}, steps: {}, switches: {}",
        trace.status,
        trace.len(),
        trace.switches.len()
    );
    Ok(())
}

fn parse_box(text: &str, dim: usize) -> Result<AxisBox, String> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in text.split(';') {
        let (l, h) = part
            .split_once(',')
            .ok_or_else(|| format!("bad box component `{part}`"))?;
        lo.push(l.trim().parse::<f64>().map_err(|e| e.to_string())?);
        hi.push(h.trim().parse::<f64>().map_err(|e| e.to_string())?);
    }
    if lo.len() != dim {
        return Err(format!("box has {} dims, expected {dim}", lo.len()));
    }
    Ok(AxisBox::new(lo, hi))
}

fn cmd_compare(args: CompareArgs) -> Result<(), String> {
    let library = load_library(&args.library)?;
    let ctrl = controller_from_checkpoint(&library).map_err(|e| e.to_string())?;
    let bench = benchmarks::benchmark(&library.config.benchmark).map_err(|e| e.to_string())?;
    let sys = bench.system.clone();
    let cost = bench.cost.clone();
    let region = ctrl.region.clone();
    let tracking = TrackingCostMatrices::new(bench.q_lqr.clone(), bench.r_lqr.clone())
        .map_err(|e| e.to_string())?;
    let eq = equilibrium_lqr(&sys, &tracking, library.config.h).map_err(|e| e.to_string())?;

    let sample_box = match &args.sample_box {
        Some(text) => parse_box(text, sys.state_dim())?,
        None => region.d.clone(),
    };

    let a = EvalController::Switching(&ctrl);
    let report = match args.baseline.as_str() {
        "eq-lqr" => {
            let eq2 = eq.clone();
            let law = move |x: &DVector<f64>| eq2.control(x);
            let b = EvalController::Feedback(&law);
            eval::compare(
                &sys,
                &cost,
                &region,
                &eq,
                &a,
                &b,
                &sample_box,
                args.samples,
                args.seed,
                library.config.h,
                args.step_cap,
            )
        }
        "sontag" => {
            let path = args
                .baseline_clf
                .as_ref()
                .ok_or("--baseline-clf is required for the sontag baseline")?;
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let cand: CandidateCLF =
                serde_json::from_str(&text).map_err(|e| format!("invalid candidate: {e}"))?;
            let sontag = SontagController::new(
                sys.clone(),
                cand,
                nalgebra::DMatrix::identity(sys.state_dim(), sys.state_dim()),
                &region,
            )
            .map_err(|e| e.to_string())?;
            let law = move |x: &DVector<f64>| sontag.control(x);
            let b = EvalController::Feedback(&law);
            eval::compare(
                &sys,
                &cost,
                &region,
                &eq,
                &a,
                &b,
                &sample_box,
                args.samples,
                args.seed,
                library.config.h,
                args.step_cap,
            )
        }
        other => return Err(format!("unknown baseline `{other}`")),
    }
    .map_err(|e| e.to_string())?;

    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    fs::write(args.out.join("comparison.csv"), report.to_csv()).map_err(|e| e.to_string())?;
    fs::write(args.out.join("comparison.json"), report.to_json()).map_err(|e| e.to_string())?;
    println!(
        "switching mean: {:?} ({} failures), baseline mean: {:?} ({} failures)",
        report.mean_a, report.failures_a, report.mean_b, report.failures_b
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), String> {
    let text = fs::read_to_string(&args.path)
        .map_err(|e| format!("cannot read {}: {e}", args.path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("invalid report: {e}"))?;
    println!("{}", serde_json::to_string_pretty(&value).unwrap());
    Ok(())
}

fn cmd_demos(args: DemosArgs) -> Result<(), String> {
    let library = load_library(&args.library)?;
    println!(
        "{} demonstrations (benchmark {}, h = {})",
        library.demos.len(),
        library.config.benchmark,
        library.config.h
    );
    for (i, demo) in library.demos.iter().enumerate() {
        let x0: Vec<f64> = demo.states[0].iter().copied().collect();
        println!(
            "  #{i}: {} samples, {:.2} s, x0 = {:?}, final |x| = {:.2e}",
            demo.len(),
            demo.duration(),
            x0,
            demo.final_state().norm()
        );
    }
    Ok(())
}
