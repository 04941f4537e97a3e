//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on a failed validation or tolerance check
//! or a runtime error such as divergence, 2 on a configuration error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentChoice, ExperimentConfig};
use crate::engine::{simulate_member, RunConfig, Trajectory};
use crate::error::{Error, Result};
use crate::fluct::{self, required_horizon, FluctuationPath, SlowVariant};
use crate::limit::{lyapunov_covariance, GaussMarkovSpec};
use crate::linalg::{sqrt_psd, Matrix};
use crate::markov::{poisson_solve, stationary, KernelMatrix};
use crate::model::builtin;
use crate::plot::variance_bands_svg;
use crate::schedules::{
    validate_pair, Clock, Regime, SchedulePair, ScheduleValidation, StepSchedule,
};
use crate::verify::{self, select_experiment, ExperimentKind, VerificationReport};

#[derive(Debug, Parser)]
#[command(
    name = "twoscale",
    version,
    about = "Two-timescale stochastic approximation: simulation and FCLT verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the config's `output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensemble work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the step-size assumptions and print a table.
    ValidateSchedule,
    /// Run the recursion and write `trajectories.csv`.
    Simulate,
    /// Write fluctuation paths at every anchor to `paths.csv`.
    Fluct,
    /// Integrate the limit covariance and write `covariance.csv`.
    LimitCov,
    /// Run the Monte Carlo verification and write the report.
    Verify,
    /// Run the analytic-oracle checks.
    Selftest,
}

/// What a subcommand concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failed,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: &Cli) -> u8 {
    let cfg = match load_config(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(|| dispatch(cli.command, &cfg)),
            Err(e) => {
                eprintln!("error: cannot build thread pool: {e}");
                return 1;
            }
        },
        None => dispatch(cli.command, &cfg),
    };
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Failed) => 1,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                path: path.display().to_string(),
                message: io.to_string(),
            },
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.engine.seed = seed;
    }
    Ok(cfg)
}

pub fn dispatch(command: Command, cfg: &ExperimentConfig) -> Result<Outcome> {
    match command {
        Command::ValidateSchedule => validate_schedule(cfg),
        Command::Simulate => simulate(cfg),
        Command::Fluct => fluct_paths(cfg),
        Command::LimitCov => limit_cov(cfg),
        Command::Verify => verify_cmd(cfg),
        Command::Selftest => selftest(),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn flag(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

/// Human-readable table of a validation result.
pub fn validation_table(v: &ScheduleValidation) -> String {
    let f = &v.flags;
    let d = &v.diagnostics;
    let mut s = String::new();
    s.push_str(&format!(
        "step-size validation over n < {} (tol {:e})\n",
        v.horizon, v.tol
    ));
    s.push_str(&format!(
        "{:<34}{:>8}   {}\n",
        "assumption", "status", "diagnostic"
    ));
    let rows = [
        ("A1 ordering 0<b<=a^1.5<a<1", f.a1_ordering, String::new()),
        (
            "A1 b/a^1.5 trends to 0",
            f.a1_ratio_trend,
            format!(
                "first decile {:.4e}, last decile {:.4e}",
                d.ratio_first_decile, d.ratio_last_decile
            ),
        ),
        (
            "A2 phi = 0",
            f.a2_phi_zero,
            format!(
                "phi ~ {:.6e} (tail {:.6e}, converged {})",
                d.phi_estimate, d.phi_tail_average, d.phi_converged
            ),
        ),
        (
            "A3 (a/b)(1/a(n+1)-1/a(n)) -> 0",
            f.a3_trend,
            format!(
                "first decile {:.4e}, last decile {:.4e}",
                d.bn_omega_first_decile, d.bn_omega_last_decile
            ),
        ),
        ("A4 a(n) decreasing", f.a4_monotone, String::new()),
        (
            "A5 zeta(T) decreasing",
            f.a5_zeta,
            d.zeta_profile
                .iter()
                .map(|(t, z)| format!("T={t}: {z:.4}"))
                .collect::<Vec<_>>()
                .join(", "),
        ),
    ];
    for (name, ok, diag) in rows {
        s.push_str(&format!("{name:<34}{:>8}   {diag}\n", flag(ok)));
    }
    s.push_str(&format!(
        "vartheta ~ {:.6e} (converged {})\n",
        d.vartheta_estimate, d.vartheta_converged
    ));
    let regime = match v.regime {
        Regime::SlowClock => "slow clock (coupled limit)".to_string(),
        Regime::FastClock { phi } => format!("fast clock (phi = {phi:.6})"),
    };
    s.push_str(&format!("regime: {regime}\n"));
    s
}

fn validate_schedule(cfg: &ExperimentConfig) -> Result<Outcome> {
    let v = validate_pair(&cfg.schedules, cfg.validation.horizon, cfg.validation.tol)?;
    print!("{}", validation_table(&v));
    Ok(if v.flags.all() {
        Outcome::Success
    } else {
        Outcome::Failed
    })
}

fn run_config(
    cfg: &ExperimentConfig,
    n_end: usize,
) -> Result<(crate::model::ProblemSpec, RunConfig)> {
    let spec = cfg.problem()?;
    let run = RunConfig {
        n_start: cfg.engine.n_start,
        n_end,
        init: cfg.initial_condition(&spec),
        seed: cfg.engine.seed,
        record_noise: cfg.engine.record_noise,
    };
    Ok((spec, run))
}

/// Writes `n,component,value` rows: `x<k>`, `y<k>`, `state`, and the
/// noise draws `mf<k>`, `ms<k>` when recorded.
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory) -> Result<()> {
    writeln!(out, "n,component,value")?;
    for n in traj.n_start..=traj.n_end {
        for (k, v) in traj.x(n).iter().enumerate() {
            writeln!(out, "{n},x{k},{v}")?;
        }
        for (k, v) in traj.y(n).iter().enumerate() {
            writeln!(out, "{n},y{k},{v}")?;
        }
        writeln!(out, "{n},state,{}", traj.state(n))?;
        if let Some(mf) = traj.mf(n) {
            for (k, v) in mf.iter().enumerate() {
                writeln!(out, "{n},mf{k},{v}")?;
            }
        }
        if let Some(ms) = traj.ms(n) {
            for (k, v) in ms.iter().enumerate() {
                writeln!(out, "{n},ms{k},{v}")?;
            }
        }
    }
    Ok(())
}

fn simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (spec, run) = run_config(cfg, cfg.engine.n_end)?;
    let table = cfg.schedules.tabulate(run.n_end + 1)?;
    let count = cfg.engine.trajectories;
    let trajs = crate::engine::par_ensemble(count, |k| simulate_member(&spec, &table, &run, k))?;
    for (k, traj) in trajs.iter().enumerate() {
        let name = if count == 1 {
            "trajectories.csv".to_string()
        } else {
            format!("trajectories_{k}.csv")
        };
        let mut out = create(&cfg.output, &name)?;
        write_trajectory_csv(&mut out, traj)?;
        out.flush()?;
    }
    println!(
        "wrote {count} trajectory file(s) to {}",
        cfg.output.display()
    );
    Ok(Outcome::Success)
}

fn slow_variant(cfg: &ExperimentConfig) -> Result<SlowVariant> {
    if let Some(v) = cfg.fluct.slow_variant {
        return Ok(v);
    }
    let v = validate_pair(&cfg.schedules, cfg.validation.horizon, cfg.validation.tol)?;
    Ok(match v.regime {
        Regime::SlowClock => SlowVariant::Slow,
        Regime::FastClock { .. } => SlowVariant::Fast,
    })
}

fn fluct_paths(cfg: &ExperimentConfig) -> Result<Outcome> {
    let variant = slow_variant(cfg)?;
    let anchors = &cfg.fluct.anchors;
    let window = cfg.fluct.window;
    let mut end = required_horizon(&cfg.schedules, Clock::Fast, anchors, window)?;
    if cfg.fluct.slow_paths {
        end = end.max(required_horizon(
            &cfg.schedules,
            variant.comparison().clock(),
            anchors,
            window,
        )?);
    }
    let (spec, mut run) = run_config(cfg, end)?;
    run.n_start = 0;
    let table = cfg.schedules.tabulate(end + 1)?;
    let traj = simulate_member(&spec, &table, &run, 0)?;
    let mut paths: Vec<(&str, FluctuationPath)> = Vec::new();
    for &n in anchors {
        paths.push((
            "u",
            fluct::fast_fluctuation(&traj, &spec, &cfg.schedules, n, window)?,
        ));
        if cfg.fluct.slow_paths && spec.d2 > 0 {
            let w = fluct::slow_fluctuation(
                &traj,
                &spec,
                &cfg.schedules,
                n,
                window,
                variant,
                cfg.fluct.substeps,
            )?;
            paths.push(("w", w));
        }
    }
    let refs: Vec<(&str, &FluctuationPath)> = paths.iter().map(|(l, p)| (*l, p)).collect();
    let mut out = create(&cfg.output, "paths.csv")?;
    fluct::write_paths_csv(&mut out, &refs)?;
    out.flush()?;
    println!(
        "wrote {} paths to {}",
        paths.len(),
        cfg.output.join("paths.csv").display()
    );
    Ok(Outcome::Success)
}

fn limit_law(cfg: &ExperimentConfig) -> Result<GaussMarkovSpec> {
    let spec = cfg.problem()?;
    let y_star = cfg
        .limit
        .y_star
        .clone()
        .or_else(|| cfg.engine.y0.clone())
        .unwrap_or_else(|| vec![0.0; spec.d2]);
    if cfg.limit.fast_clock {
        GaussMarkovSpec::fast_clock_law(&spec, &y_star, cfg.limit.phi)
    } else {
        GaussMarkovSpec::from_problem(&spec, &y_star, cfg.limit.window, cfg.limit.phi)
    }
}

fn limit_cov(cfg: &ExperimentConfig) -> Result<Outcome> {
    let law = limit_law(cfg)?;
    let dt = cfg.limit.window / cfg.limit.steps as f64;
    let curve = lyapunov_covariance(&law, cfg.limit.window, dt)?;
    let mut out = create(&cfg.output, "covariance.csv")?;
    curve.write_csv(&mut out)?;
    out.flush()?;
    let last = curve.last();
    println!("Sigma({}) =", cfg.limit.window);
    for i in 0..last.nrows() {
        let row: Vec<String> = (0..last.ncols())
            .map(|j| format!("{:.9}", last[(i, j)]))
            .collect();
        println!("  [{}]", row.join(", "));
    }
    Ok(Outcome::Success)
}

/// Runs the experiment a config calls for, with any CLT and moment
/// sections attached.
pub fn run_verification(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let spec = cfg.problem()?;
    let pair = &cfg.schedules;
    let ens = cfg.ensemble(&spec);
    let win = cfg.window_setup();
    let tol = &cfg.verify.tolerances;
    let kind = match cfg.verify.experiment {
        ExperimentChoice::Auto => {
            let v = validate_pair(pair, cfg.validation.horizon, cfg.validation.tol)?;
            Some(select_experiment(&v))
        }
        ExperimentChoice::Coupled => Some(ExperimentKind::Coupled),
        ExperimentChoice::FastClock => {
            let phi = pair.fast.phi_limit(cfg.validation.horizon)?.value;
            Some(ExperimentKind::FastClock { phi })
        }
        ExperimentChoice::None => None,
    };
    let mut report = match kind {
        Some(ExperimentKind::Coupled) => verify::run_fclt_experiment(&spec, pair, &ens, &win, tol)?,
        Some(ExperimentKind::FastClock { phi }) => {
            verify::run_theorem3_experiment(&spec, pair, phi, &ens, &win, tol)?
        }
        Some(ExperimentKind::None) | None => verify::empty_report(&spec, pair, &ens, &win, tol),
    };
    let clt = match &cfg.verify.clt {
        Some(c) => {
            let y_star = c
                .y_star
                .clone()
                .unwrap_or_else(|| ens.init.y.iter().copied().collect());
            Some(verify::run_clt_experiment(
                &spec,
                pair,
                &y_star,
                &c.indices,
                c.plateau_window,
                &ens,
                tol,
            )?)
        }
        None => None,
    };
    let moments = match &cfg.verify.moments {
        Some(m) => {
            let mut e = ens.clone();
            if let Some(n) = m.trajectories {
                e.trajectories = n;
            }
            Some(verify::run_moment_check(&spec, pair, &e, &m.checkpoints)?)
        }
        None => None,
    };
    verify::attach(&mut report, clt, moments);
    Ok(report)
}

/// Writes `report.json`, `grid.csv`, `clt.csv` (when present) and
/// `variance.svg` (when enabled) into `dir`.
pub fn write_report(report: &VerificationReport, dir: &Path, plots: bool) -> Result<()> {
    let mut out = create(dir, "report.json")?;
    out.write_all(report.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    let mut out = create(dir, "grid.csv")?;
    report.write_grid_csv(&mut out)?;
    out.flush()?;
    if report.clt.is_some() {
        let mut out = create(dir, "clt.csv")?;
        report.write_clt_csv(&mut out)?;
        out.flush()?;
    }
    if plots && !report.anchors.is_empty() {
        fs::write(dir.join("variance.svg"), variance_bands_svg(report))?;
    }
    Ok(())
}

fn verify_cmd(cfg: &ExperimentConfig) -> Result<Outcome> {
    let report = run_verification(cfg)?;
    write_report(&report, &cfg.output, cfg.verify.plots)?;
    for c in &report.checks {
        println!("{:<40}{}", c.name, flag(c.passed));
    }
    if let Some(clt) = &report.clt {
        println!("{:<40}{}", "clt", flag(clt.passed));
    }
    if let Some(m) = &report.moments {
        println!("{:<40}{}", "moments_bounded", flag(m.bounded()));
    }
    println!("overall: {}", flag(report.passed));
    Ok(if report.passed {
        Outcome::Success
    } else {
        Outcome::Failed
    })
}

/// One analytic-oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

/// Closed-form checks of the Markov algebra, schedules, limit covariance
/// and matrix square root.
pub fn oracle_suite() -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::new();
    let p = KernelMatrix::from_rows(&[&[0.7, 0.3], &[0.6, 0.4]])?;
    let pi = stationary(&p)?;
    checks.push(OracleCheck {
        name: "stationary two-state (2/3, 1/3)",
        error: (pi[0] - 2.0 / 3.0).abs().max((pi[1] - 1.0 / 3.0).abs()),
        tolerance: 1e-14,
    });
    let sol = poisson_solve(&p, &Matrix::from_row_slice(2, 1, &[1.0, 0.0]), 0)?;
    checks.push(OracleCheck {
        name: "poisson two-state V = (0, -10/9)",
        error: sol.v[(0, 0)].abs().max((sol.v[(1, 0)] + 10.0 / 9.0).abs()),
        tolerance: 1e-13,
    });

    let a = StepSchedule::power_law(0.9, 0.6);
    let clock = crate::schedules::clock(&a, 3)?;
    let expected = 0.9 + 0.9 / 2f64.powf(0.6);
    checks.push(OracleCheck {
        name: "fast clock t(2)",
        error: (clock.time(2) - expected).abs(),
        tolerance: 1e-15,
    });
    let harmonic = StepSchedule::power_law(0.5, 1.0);
    checks.push(OracleCheck {
        name: "phi of a = 0.5/(n+1) is 2",
        error: (harmonic.phi_limit(100_000)?.value - 2.0).abs(),
        tolerance: 1e-6,
    });
    let reference = validate_pair(&SchedulePair::reference(), 1_000_000, 1e-3)?;
    checks.push(OracleCheck {
        name: "reference pair satisfies every assumption",
        error: if reference.flags.all() { 0.0 } else { 1.0 },
        tolerance: 0.0,
    });

    let ou = GaussMarkovSpec::from_problem(&builtin::ou(), &[], 1.0, 0.0)?;
    let curve = lyapunov_covariance(&ou, 1.0, 1.0 / 4096.0)?;
    checks.push(OracleCheck {
        name: "OU variance (1 - e^-2)/2 at T = 1",
        error: (curve.last()[(0, 0)] - (1.0 - (-2.0f64).exp()) / 2.0).abs(),
        tolerance: 1e-8,
    });
    let m = |v: f64| Matrix::from_element(1, 1, v);
    let lower = GaussMarkovSpec::constant(m(-1.0), m(-1.0), m(-1.0), m(1.0), 0.0)?;
    let curve = lyapunov_covariance(&lower, 2.0, 2.0 / 4096.0)?;
    let oracle = [
        0.490842180555632909853,
        -0.227105451389082274633,
        -0.227105451389082274633,
        0.190474173611613914045,
    ];
    let err = (0..4)
        .map(|k| (curve.last()[(k / 2, k % 2)] - oracle[k]).abs())
        .fold(0.0, f64::max);
    checks.push(OracleCheck {
        name: "coupled 2x2 covariance at T = 2",
        error: err,
        tolerance: 1e-8,
    });
    let phi = crate::limit::fundamental_matrix(&|_| Ok(m(-1.5)), 0.0, 1.0, 1e-3)?;
    checks.push(OracleCheck {
        name: "fundamental matrix e^-1.5",
        error: (phi[(0, 0)] - (-1.5f64).exp()).abs(),
        tolerance: 1e-10,
    });
    let q = Matrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
    let r = sqrt_psd(&q)?;
    checks.push(OracleCheck {
        name: "square root reproduces its argument",
        error: (&r * r.transpose() - &q).abs().max(),
        tolerance: 1e-12,
    });
    Ok(checks)
}

fn selftest() -> Result<Outcome> {
    let checks = oracle_suite()?;
    for c in &checks {
        println!(
            "{:<46}{}  (error {:.2e}, tol {:.0e})",
            c.name,
            flag(c.passed()),
            c.error,
            c.tolerance
        );
    }
    Ok(if checks.iter().all(OracleCheck::passed) {
        Outcome::Success
    } else {
        Outcome::Failed
    })
}
