//! `ccp`: simulate crack growth, sample and train surrogates, optimize hole
//! layouts and compare reanalysis against full solves.

mod config;
mod output;

use std::io::{BufReader, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicUsize;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use ccp_core::error::{OptimError, SimError};
use ccp_core::geometry::Circle;
use ccp_core::metamodel::{build_dataset, fit_network, read_dataset_csv, regression_metrics, write_dataset_csv, Split};
use ccp_core::optimizer::{adaptive_ccp, write_convergence_csv};
use ccp_core::simulate::{propagate, verify, write_fields_csv, write_path_csv, write_steps_csv, write_verify_csv, Design, SimResult, SolverMode};

use config::{parse_config, InnerName, RunConfig, SolverName};
use output::{path_svg, write_manifest, Bundle, TimingReport};

#[derive(Parser)]
#[command(name = "ccp", version, about = "Crack propagation with hole-based path control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum concurrent fitness evaluations.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configured solver.
    #[arg(long, global = true, value_enum)]
    solver: Option<SolverName>,
    /// Overrides the configured inner optimizer.
    #[arg(long, global = true, value_enum)]
    inner: Option<InnerName>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Grow the crack for the configured holes.
    Simulate,
    /// Evaluate a Latin hypercube sample of hole designs.
    Sample,
    /// Fit the surrogate network to a sampled dataset.
    Train,
    /// Search hole layouts that steer the crack through the key points.
    Optimize,
    /// Compare reanalysis with full solves at every step.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sample => "sample",
            Command::Train => "train",
            Command::Optimize => "optimize",
            Command::Verify => "verify",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 configuration, 3 simulation, 4 optimization or training, 5 I/O.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<SimError>() {
            return 3;
        }
        if let Some(o) = cause.downcast_ref::<OptimError>() {
            return if matches!(o, OptimError::Sim(_)) { 3 } else { 4 };
        }
        if cause.is::<std::io::Error>() {
            return 5;
        }
    }
    2
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(s) = cli.solver {
        cfg.solver = s;
    }
    if let Some(i) = cli.inner {
        cfg.inner = i;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global().context("cannot size the worker pool")?;
    }
    let cfg = load_config(cli)?;
    let bundle = Bundle::create(&cli.out)?;
    write_manifest(&bundle, cli.command.name(), &cfg)?;
    let t0 = Instant::now();
    let mut timing = match cli.command {
        Command::Simulate => simulate(&cfg, &bundle)?,
        Command::Sample => sample(&cfg, &bundle)?,
        Command::Train => train(&cfg, &bundle)?,
        Command::Optimize => optimize(&cfg, &bundle)?,
        Command::Verify => verify_cmd(&cfg, &bundle)?,
    };
    timing.total_s = t0.elapsed().as_secs_f64();
    bundle.write_json("timing.json", &timing)
}

fn all_holes(cfg: &RunConfig, design: &Design) -> Result<Vec<Circle>> {
    let mut h = cfg.sim_config()?.fixed_holes;
    h.extend(design.holes.iter().copied());
    Ok(h)
}

/// Path, steps, optional fields and plot of one simulation.
fn write_sim(cfg: &RunConfig, bundle: &Bundle, design: &Design, res: &SimResult) -> Result<()> {
    bundle.write("path.csv", |w| write_path_csv(w, &res.crack))?;
    bundle.write("steps.csv", |w| write_steps_csv(w, &res.steps))?;
    if let Some(f) = &res.fields {
        bundle.write("fields.csv", |w| write_fields_csv(w, f))?;
    }
    if cfg.plot {
        let sim = cfg.sim_config()?;
        let keys: Vec<_> = cfg.target_key_points.iter().map(|k| ccp_core::geometry::Point::new(k[0], k[1])).collect();
        let svg = path_svg(&sim.domain, &all_holes(cfg, design)?, &keys, &res.crack);
        bundle.write("path.svg", |w| w.write_all(svg.as_bytes()))?;
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, bundle: &Bundle) -> Result<TimingReport> {
    let design = cfg.design()?;
    let sim = cfg.sim_config()?;
    let t = Instant::now();
    let res = propagate(&design, &sim)?;
    log::info!("{} after {} steps, tip ({:.3}, {:.3})", res.status.label(), res.steps.len(), res.tip().x, res.tip().y);
    write_sim(cfg, bundle, &design, &res)?;
    let solve = res.total_solve_ms();
    Ok(TimingReport {
        optimization_s: t.elapsed().as_secs_f64(),
        full_solve_ms: if sim.solver == SolverMode::Full { solve } else { res.steps.first().map_or(0.0, |s| s.solve_ms) },
        dur_solve_ms: if sim.solver == SolverMode::Dur { res.steps.iter().skip(1).map(|s| s.solve_ms).sum() } else { 0.0 },
        true_evals: 1,
        ..TimingReport::default()
    })
}

fn sample(cfg: &RunConfig, bundle: &Bundle) -> Result<TimingReport> {
    let problem = cfg.problem()?;
    let space = problem.hole_space(cfg.sample_holes)?;
    let calls = AtomicUsize::new(0);
    let f = problem.fitness_fn(&calls);
    let t = Instant::now();
    let ds = build_dataset(&space, &f, cfg.surrogate.n_train, cfg.surrogate.n_test, cfg.seed)?;
    bundle.write("dataset.csv", |w| write_dataset_csv(w, &ds))?;
    Ok(TimingReport {
        modeling_s: t.elapsed().as_secs_f64(),
        true_evals: calls.load(std::sync::atomic::Ordering::Relaxed),
        ..TimingReport::default()
    })
}

#[derive(Serialize)]
struct TrainReport {
    train_rows: usize,
    test_rows: usize,
    final_train_mse: f64,
    test_r2: Option<f64>,
    test_rmse_mm: Option<f64>,
}

fn train(cfg: &RunConfig, bundle: &Bundle) -> Result<TimingReport> {
    let path = cfg.dataset.clone().unwrap_or_else(|| bundle.path("dataset.csv"));
    let file = std::fs::File::open(&path).with_context(|| format!("cannot open dataset {}", path.display()))?;
    let ds = read_dataset_csv(BufReader::new(file))?;
    let train_rows = ds.rows(Split::Train);
    let test_rows = ds.rows(Split::Test);
    let t = Instant::now();
    let (net, history) = fit_network(&train_rows, &cfg.surrogate.hidden, &cfg.train_config())?;
    let metrics = if test_rows.len() >= 2 {
        let pred: Vec<f64> = test_rows.iter().map(|(x, _)| net.forward(x)).collect();
        let actual: Vec<f64> = test_rows.iter().map(|(_, y)| *y).collect();
        Some(regression_metrics(&pred, &actual)?)
    } else {
        None
    };
    bundle.write("model.txt", |w| net.save(w))?;
    bundle.write("loss.csv", |w| {
        writeln!(w, "epoch,train_mse")?;
        for (i, l) in history.iter().enumerate() {
            writeln!(w, "{},{:.9e}", i + 1, l)?;
        }
        Ok(())
    })?;
    let report = TrainReport {
        train_rows: train_rows.len(),
        test_rows: test_rows.len(),
        final_train_mse: history.last().copied().unwrap_or(f64::NAN),
        test_r2: metrics.and_then(|m| m.r2),
        test_rmse_mm: metrics.map(|m| m.rmse),
    };
    match report.test_r2 {
        Some(r2) => log::info!("test R² {r2:.4}"),
        None => log::warn!("test R² unavailable"),
    }
    bundle.write_json("metrics.json", &report)?;
    Ok(TimingReport {
        modeling_s: t.elapsed().as_secs_f64(),
        ..TimingReport::default()
    })
}

#[derive(Serialize)]
struct OptimizeSummary {
    holes: usize,
    best_design: Vec<[f64; 3]>,
    fitness_mm: f64,
    predicted_fitness_mm: Option<f64>,
    converged: bool,
    per_hole_count: Vec<(usize, f64)>,
    surrogate_r2: Vec<f64>,
}

fn optimize(cfg: &RunConfig, bundle: &Bundle) -> Result<TimingReport> {
    let problem = cfg.problem()?;
    let res = adaptive_ccp(&problem, cfg.epsilon_mm, &cfg.inner_optimizer(), &cfg.pso_config(), cfg.max_holes)?;
    log::info!("best fitness {:.4} mm with {} hole(s), converged: {}", res.c_min, res.holes, res.converged);
    bundle.write("convergence.csv", |w| write_convergence_csv(w, &res.history))?;
    let best: Vec<[f64; 3]> = res.best.holes.iter().map(|c| [c.center.x, c.center.y, c.radius]).collect();
    bundle.write("best_design.csv", |w| {
        writeln!(w, "hole,x_mm,y_mm,r_mm")?;
        for (i, h) in best.iter().enumerate() {
            writeln!(w, "{},{:.9},{:.9},{:.9}", i + 1, h[0], h[1], h[2])?;
        }
        Ok(())
    })?;
    let path = propagate(&res.best, &problem.sim)?;
    write_sim(cfg, bundle, &res.best, &path)?;
    bundle.write_json(
        "summary.json",
        &OptimizeSummary {
            holes: res.holes,
            best_design: best,
            fitness_mm: res.c_min,
            predicted_fitness_mm: res.predicted,
            converged: res.converged,
            per_hole_count: res.per_count.clone(),
            surrogate_r2: res.surrogate_r2.clone(),
        },
    )?;
    Ok(TimingReport {
        modeling_s: res.modeling_ms / 1e3,
        optimization_s: res.optimization_ms / 1e3,
        true_evals: res.true_evals,
        surrogate_evals: res.surrogate_evals,
        ..TimingReport::default()
    })
}

fn verify_cmd(cfg: &RunConfig, bundle: &Bundle) -> Result<TimingReport> {
    let design = cfg.design()?;
    let sim = cfg.sim_config()?;
    let t = Instant::now();
    let (res, rows) = verify(&design, &sim)?;
    bundle.write("verify.csv", |w| write_verify_csv(w, &rows))?;
    write_sim(cfg, bundle, &design, &res)?;
    let full: f64 = rows.iter().map(|r| r.t_full_ms).sum();
    let dur: f64 = rows.iter().map(|r| r.t_dur_ms).sum();
    let worst = rows.iter().map(|r| r.disp_rel_err).fold(0.0, f64::max);
    log::info!("max displacement error {worst:.3e}; full {full:.1} ms vs reanalysis {dur:.1} ms over steps 2+");
    Ok(TimingReport {
        optimization_s: t.elapsed().as_secs_f64(),
        full_solve_ms: full,
        dur_solve_ms: dur,
        true_evals: 1,
        ..TimingReport::default()
    })
}
