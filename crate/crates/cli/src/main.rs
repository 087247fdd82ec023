//! `resil`: resilience analysis and delayed tracking simulation.
//!
//! Exit codes: 0 ok, 1 scenario failure, 2 config error, 3 infeasible gains,
//! 4 internal consistency failure.

mod config;
mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use resil_core::dynamics::{split_layout, ThrusterLayout};
use resil_core::error::Error;
use resil_core::resilience::{design_gains, resilience_verdict, ResilienceReport};
use resil_core::sim::{pareto_sweep, resolve_gains, run_with_reference};

#[derive(Parser)]
#[command(name = "resil", version, about = "Resilience analysis and delayed tracking simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the disturbance seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Per-thruster resilience report.
    Analyze,
    /// Builds the reference trajectory and writes it as CSV.
    Reference,
    /// Runs one closed-loop scenario.
    Simulate,
    /// Sweeps delay and disturbance magnitude and writes the feasibility front.
    Pareto,
    /// Checks the analytic values against known reference values.
    Verify,
}

#[derive(Debug)]
enum Failure {
    Scenario(String),
    Config(String),
    Gains(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Scenario(_) => 1,
            Failure::Config(_) => 2,
            Failure::Gains(_) => 3,
            Failure::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Scenario(m) | Failure::Config(m) | Failure::Gains(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ThrusterIndex(..) | Error::Precondition(_) => Failure::Config(e.to_string()),
            Error::SteeringFailed { .. } | Error::KosViolation { .. } | Error::Singular(_) => {
                Failure::Scenario(e.to_string())
            }
            _ => Failure::Internal(e.to_string()),
        }
    }
}

fn gains_failure(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::ThrusterIndex(..) => Failure::Config(e.to_string()),
        _ => Failure::Gains(e.to_string()),
    }
}

type CmdResult = Result<(), Failure>;

fn create(out: &Path, name: &Path) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(out: &Path, name: &Path, value: &T) -> CmdResult {
    let mut f = create(out, name)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Failure::Internal(e.to_string()))?;
    writeln!(f).and_then(|_| f.flush()).map_err(|e| Failure::Internal(e.to_string()))
}

#[derive(Serialize)]
struct Analysis {
    rho_ref: f64,
    kos_min_m: f64,
    thrusters: Vec<ResilienceReport>,
}

fn analyze(cfg: &RunConfig, out: &Path) -> CmdResult {
    let sc = &cfg.scenario;
    let reference = sc.reference()?;
    let full = ThrusterLayout::spacecraft();
    let mut thrusters = Vec::new();
    for k in 1..=full.bbar.len() {
        let mut r = resilience_verdict(&sc.params, &full, Some(k), reference.rho_ref)?;
        if r.tracking_feasible {
            let layout = split_layout(&full, Some(k))?;
            let lip = sc.disturbance.lipschitz_bound().unwrap_or(0.0);
            if let Ok(g) = design_gains(&sc.params, &layout, reference.rho_ref, lip, sc.tau_s, 0.0) {
                r.epsilon = Some(g.epsilon);
                r.tolerance = Some(g.tolerance);
            }
        }
        thrusters.push(r);
    }
    let report = Analysis { rho_ref: reference.rho_ref, kos_min_m: reference.kos_min_m, thrusters };
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Internal(e.to_string()))?);
    write_json(out, &cfg.output.analysis_json, &report)
}

fn reference(cfg: &RunConfig, out: &Path) -> CmdResult {
    let reference = cfg.scenario.reference()?;
    let mut f = create(out, &cfg.output.reference_csv)?;
    reference.write_csv(&mut f)?;
    println!(
        "reference: {} samples, rho_ref = {:.6}, kos_min = {:.3} m",
        reference.len(),
        reference.rho_ref,
        reference.kos_min_m
    );
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Path) -> CmdResult {
    let sc = &cfg.scenario;
    let reference = sc.reference()?;
    let resolved = resolve_gains(sc, reference.rho_ref).map_err(gains_failure)?;
    let (trace, metrics) = run_with_reference(sc, &reference, &resolved)?;
    let mut f = create(out, &cfg.output.trace_csv)?;
    trace.write_csv(&mut f)?;
    f.flush().map_err(|e| Failure::Internal(e.to_string()))?;
    write_json(out, &cfg.output.metrics_json, &metrics)?;
    println!(
        "avg_pos_err_m = {:.4e}, max_pos_err_m = {:.4e}, max_state_norm_diff = {:.4e}, r_fuel = {:.4}, \
         kos_min_m = {:.3}, saturation_fraction = {:.4}, success = {}",
        metrics.avg_pos_err_m,
        metrics.max_pos_err_m,
        metrics.max_state_norm_diff,
        metrics.r_fuel,
        metrics.kos_min_m,
        metrics.saturation_fraction,
        metrics.success
    );
    if metrics.success {
        Ok(())
    } else {
        Err(Failure::Scenario(format!("max position error {:.4e} m exceeds threshold", metrics.max_pos_err_m)))
    }
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("RESIL_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::Config(format!("RESIL_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Failure::Internal(e.to_string()))
}

/// The front must not grow with the delay.
fn check_monotone(front: &[(f64, f64)]) -> CmdResult {
    let mut sorted = front.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for p in sorted.windows(2) {
        if p[1].1 > p[0].1 {
            return Err(Failure::Internal(format!(
                "front not monotone: w_max {} at tau {} s exceeds {} at tau {} s",
                p[1].1, p[1].0, p[0].1, p[0].0
            )));
        }
    }
    Ok(())
}

fn pareto(cfg: &RunConfig, out: &Path) -> CmdResult {
    let p = &cfg.pareto;
    if p.tau_grid_s.is_empty() || p.wmax_grid.is_empty() || p.seeds_per_cell == 0 {
        return Err(Failure::Config("pareto grids and seeds_per_cell must be nonempty".into()));
    }
    let mut base = cfg.scenario.clone();
    base.gains = p.gains.clone();
    let pool = thread_pool()?;
    let result = pool.install(|| pareto_sweep(&p.tau_grid_s, &p.wmax_grid, &base, p.seeds_per_cell));
    let sweep = result.map_err(|e| match e {
        Error::Config(_) | Error::ThrusterIndex(..) | Error::Precondition(_) => Failure::Config(e.to_string()),
        Error::TrackingInfeasible(_) | Error::NotHurwitz(_) | Error::BudgetExceedsSet(_) => {
            Failure::Gains(e.to_string())
        }
        other => Failure::from(other),
    })?;
    let mut cells = create(out, &cfg.output.cells_csv)?;
    let io = |e: std::io::Error| Failure::Internal(e.to_string());
    writeln!(cells, "tau,w_max,success,worst_max_pos_err_m").map_err(io)?;
    for c in &sweep.cells {
        writeln!(cells, "{},{},{},{}", c.tau_s, c.w_max, c.success, c.worst_max_pos_err_m).map_err(io)?;
    }
    cells.flush().map_err(io)?;
    check_monotone(&sweep.front)?;
    let mut f = create(out, &cfg.output.front_csv)?;
    writeln!(f, "tau,max_feasible_wmax").map_err(io)?;
    for (tau, w) in &sweep.front {
        writeln!(f, "{tau},{w}").map_err(io)?;
        println!("tau = {tau} s: max feasible w_max = {w}");
    }
    f.flush().map_err(io)
}

fn verify_cmd(cfg: &RunConfig) -> CmdResult {
    let checks = verify::run_checks(&cfg.scenario.params);
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {}: expected {:.6e}, actual {:.6e}, tolerance {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.expected,
            c.actual,
            c.tolerance
        );
        failed += usize::from(!c.passed);
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Scenario(format!("{failed} of {} checks failed", checks.len())))
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.scenario.disturbance.seed = seed;
    }
    match cli.command {
        Command::Analyze => analyze(&cfg, &cli.out),
        Command::Reference => reference(&cfg, &cli.out),
        Command::Simulate => simulate(&cfg, &cli.out),
        Command::Pareto => pareto(&cfg, &cli.out),
        Command::Verify => verify_cmd(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
