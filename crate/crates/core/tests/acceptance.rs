//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the verdict lines
//! are always printed.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twoscale_sa::cli::{dispatch, Command};
use twoscale_sa::config::{CltConfig, ExperimentChoice, ExperimentConfig};
use twoscale_sa::engine::{simulate_member, InitialCondition, RunConfig};
use twoscale_sa::limit::{
    fundamental_matrix, lyapunov_covariance, sample_limit_paths, GaussMarkovSpec,
};
use twoscale_sa::linalg::{Matrix, Vector};
use twoscale_sa::markov::{
    decompose_fast_noise, effective_noise_covariance, poisson_solve, stationary, KernelMatrix,
    Timescale,
};
use twoscale_sa::model::builtin;
use twoscale_sa::schedules::{validate_pair, SchedulePair, StepSchedule};
use twoscale_sa::stats;
use twoscale_sa::verify::{
    run_clt_experiment, run_fclt_experiment, run_moment_check, run_theorem3_experiment,
    select_experiment, EnsembleSetup, ExperimentKind, Tolerances, VerificationReport, WindowSetup,
};

/// `(1 − e^{−2})/2`.
const OU_SIGMA_1: f64 = 0.432332358381693654053;
/// `(1 − e^{−8})/2`.
const FAST_SIGMA_4: f64 = 0.499832268686048744080;
/// `(Q_f + Cov ζ)/Q_f = 29/18` for P2 with unit fast noise.
const P2_INFLATION: f64 = 1.611111111111111111111;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn origin() -> InitialCondition {
    InitialCondition::new(&[0.0], &[0.0], 0)
}

fn ensemble(trajectories: usize) -> EnsembleSetup {
    EnsembleSetup {
        init: origin(),
        trajectories,
        seed: 7,
    }
}

fn random_kernel(rng: &mut ChaCha8Rng, s: usize) -> KernelMatrix {
    let mut p = Matrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            // Sparse rows; the cycle i → i+1 keeps the chain irreducible.
            if rng.random::<f64>() < 0.5 || j == (i + 1) % s {
                p[(i, j)] = rng.random::<f64>() + 0.05;
            }
        }
        let total: f64 = p.row(i).sum();
        for j in 0..s {
            p[(i, j)] /= total;
        }
    }
    KernelMatrix::new(p).expect("stochastic rows")
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_pi, mut worst_v) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let s = rng.random_range(1..=8);
        let p = random_kernel(&mut rng, s);
        let pi = stationary(&p).map_err(|e| e.to_string())?;
        let drift = (pi.transpose() * p.matrix() - pi.transpose()).amax();
        worst_pi = worst_pi.max(drift);
        let m = rng.random_range(1..=3);
        let reward = Matrix::from_fn(s, m, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let i0 = rng.random_range(0..s);
        let sol = poisson_solve(&p, &reward, i0).map_err(|e| e.to_string())?;
        worst_v = worst_v.max(sol.residual(&p, &reward));
    }
    let p = KernelMatrix::from_rows(&[&[0.7, 0.3], &[0.6, 0.4]]).unwrap();
    let pi = stationary(&p).unwrap();
    let sol = poisson_solve(&p, &Matrix::from_row_slice(2, 1, &[1.0, 0.0]), 0).unwrap();
    let example = (pi[0] - 2.0 / 3.0).abs() < 1e-14
        && (pi[1] - 1.0 / 3.0).abs() < 1e-14
        && sol.v[(0, 0)].abs() < 1e-14
        && (sol.v[(1, 0)] + 10.0 / 9.0).abs() < 1e-14;
    check(
        worst_pi <= 1e-12 && worst_v <= 1e-10 && example,
        format!("max |pi P - pi| {worst_pi:.1e}, max Poisson residual {worst_v:.1e}, worked example {example}"),
    )
}

fn criterion_2() -> Outcome {
    let spec = builtin::p2();
    let pair = SchedulePair::reference();
    let table = pair.tabulate(1_001).unwrap();
    let run = RunConfig {
        n_start: 0,
        n_end: 1_000,
        init: InitialCondition::new(&[0.5], &[1.0], 0),
        seed: 2,
        record_noise: false,
    };
    let (mut recon, mut cond) = (0.0f64, 0.0f64);
    for k in 0..50 {
        let traj = simulate_member(&spec, &table, &run, k).map_err(|e| e.to_string())?;
        let (xs, ys) = (traj.xs_vectors(), traj.ys_vectors());
        let (dec, deltas) =
            decompose_fast_noise(&spec, &xs, &ys, traj.states()).map_err(|e| e.to_string())?;
        recon = recon.max(dec.max_reconstruction_error(&deltas));
        for n in 0..deltas.len() {
            let (x, y) = (xs[n].as_slice(), ys[n].as_slice());
            let p = spec.kernel_at(x, y);
            let sol = spec.fast_poisson(x, y).map_err(|e| e.to_string())?;
            for i in 0..p.states() {
                let pv: Vector = (0..p.states())
                    .map(|j| p.prob(i, j) * sol.value(j))
                    .fold(Vector::zeros(1), |a, b| a + b);
                let mean: Vector = (0..p.states())
                    .map(|j| p.prob(i, j) * (sol.value(j) - &pv))
                    .fold(Vector::zeros(1), |a, b| a + b);
                cond = cond.max(mean.amax());
            }
            let direct = sol.value(traj.state(n + 1))
                - (0..p.states())
                    .map(|j| p.prob(traj.state(n), j) * sol.value(j))
                    .fold(Vector::zeros(1), |a, b| a + b);
            recon = recon.max((&dec.zeta[n] - direct).amax());
        }
    }
    check(
        recon <= 1e-10 && cond <= 1e-12,
        format!("max reconstruction error {recon:.1e}, max conditional mean of zeta {cond:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let ou = GaussMarkovSpec::from_problem(&builtin::ou(), &[], 1.0, 0.0).unwrap();
    let dt = 1.0 / 4096.0;
    let curve = lyapunov_covariance(&ou, 1.0, dt).unwrap();
    let lyap = (curve.last()[(0, 0)] - OU_SIGMA_1).abs();

    let field = |t: f64| {
        Ok(Matrix::from_row_slice(
            2,
            2,
            &[-1.0, 0.3 * t.sin(), -0.5, -1.0 - 0.2 * t],
        ))
    };
    let full = fundamental_matrix(&field, 0.2, 1.7, 1e-3).unwrap();
    let split = fundamental_matrix(&field, 0.9, 1.7, 1e-3).unwrap()
        * fundamental_matrix(&field, 0.2, 0.9, 1e-3).unwrap();
    let semigroup = (full - split).amax();

    let sample = sample_limit_paths(&ou, 100_000, 1.0, dt, 3, &[1.0]).unwrap();
    let xs = sample.at(0);
    let var = stats::covariance(&xs)[(0, 0)];
    let se = stats::covariance_se(&xs)[(0, 0)];
    let sampler = (var - OU_SIGMA_1).abs() <= 3.0 * se;
    check(
        lyap <= 1e-8 && semigroup <= 1e-8 && sampler,
        format!(
            "|Sigma(1) - 0.432332| = {lyap:.1e}, semigroup {semigroup:.1e}, sampler var {var:.5} (se {se:.5})"
        ),
    )
}

fn criterion_4() -> Outcome {
    let win = WindowSetup {
        anchors: vec![100_000],
        slow_paths: false,
        ..Default::default()
    };
    let tol = Tolerances {
        covariance_rel: 0.1,
        ..Default::default()
    };
    let r = run_fclt_experiment(
        &builtin::p1_fast(),
        &SchedulePair::reference(),
        &ensemble(4000),
        &win,
        &tol,
    )
    .map_err(|e| e.to_string())?;
    let rec = &r.anchors[0].fast_window_end;
    let var = rec.empirical_covariance[0][0];
    let se = rec.covariance_standard_error[0][0];
    let rel = (var - FAST_SIGMA_4).abs() / FAST_SIGMA_4;
    let bound = 0.1f64.max(3.0 * se / FAST_SIGMA_4);
    check(
        rel <= bound && (rec.theoretical_covariance[0][0] - FAST_SIGMA_4).abs() < 1e-8,
        format!("Var u(4) = {var:.5} vs {FAST_SIGMA_4:.5}, rel {rel:.4} <= {bound:.4}"),
    )
}

fn coupled_p1() -> Result<VerificationReport, String> {
    let win = WindowSetup {
        anchors: vec![10_000, 100_000],
        ..Default::default()
    };
    run_fclt_experiment(
        &builtin::p1(),
        &SchedulePair::reference(),
        &ensemble(4000),
        &win,
        &Tolerances::default(),
    )
    .map_err(|e| e.to_string())
}

fn criterion_5(report: &VerificationReport) -> Outcome {
    let mut parts = Vec::new();
    for a in &report.anchors {
        let w = &a.window_end;
        parts.push(format!(
            "n={}: rel {:.4} (thr {:.3}), mean {:?}",
            a.anchor,
            w.rel_frobenius_error,
            w.threshold,
            w.empirical_mean
                .iter()
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
        ));
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    parts.push(format!("failed checks {failed:?}"));
    check(
        report.checks.len() == 5 && failed.is_empty(),
        parts.join("; "),
    )
}

fn criterion_6(p1: &VerificationReport) -> Outcome {
    let win = WindowSetup {
        anchors: vec![100_000],
        slow_paths: false,
        ..Default::default()
    };
    let p2 = run_fclt_experiment(
        &builtin::p2(),
        &SchedulePair::reference(),
        &ensemble(4000),
        &win,
        &Tolerances::default(),
    )
    .map_err(|e| e.to_string())?;
    let v1 = p1
        .anchor(100_000)
        .unwrap()
        .fast_window_end
        .empirical_covariance[0][0];
    let v2 = p2.anchors[0].fast_window_end.empirical_covariance[0][0];
    let ratio = v2 / v1;
    let oracle = effective_noise_covariance(&builtin::p2(), &[0.0], &[0.0], Timescale::Fast)
        .unwrap()[(0, 0)];
    let rel = (ratio / P2_INFLATION - 1.0).abs();
    check(
        rel <= 0.15 && (oracle - P2_INFLATION).abs() < 1e-12,
        format!("Var ratio {ratio:.4} vs {P2_INFLATION:.4} (oracle {oracle:.6}), rel {rel:.4}"),
    )
}

fn criterion_7() -> Outcome {
    let win = WindowSetup {
        anchors: vec![1_000, 10_000, 100_000],
        slow_paths: true,
        ..Default::default()
    };
    let pair = SchedulePair::reference();
    let t3 = run_theorem3_experiment(
        &builtin::p1(),
        &pair,
        0.0,
        &ensemble(4000),
        &win,
        &Tolerances::default(),
    )
    .map_err(|e| e.to_string())?;
    let moments: Vec<f64> = t3.anchors.iter().map(|a| a.slow_second_moment).collect();
    let decreasing = t3
        .checks
        .iter()
        .find(|c| c.name == "slow_second_moment_decreasing")
        .is_some_and(|c| c.passed);

    let tol = Tolerances::default();
    let clt = run_clt_experiment(
        &builtin::p1_fast(),
        &pair,
        &[0.0],
        &[1_000, 10_000, 100_000],
        8.0,
        &ensemble(4000),
        &tol,
    )
    .map_err(|e| e.to_string())?;
    let last = clt.records.last().unwrap();
    let var = last.eta_covariance[0][0];
    let se = clt.eta_comparison.covariance_standard_error[0][0];
    let rel = (var - 0.5).abs() / 0.5;
    let var_ok = rel <= 0.1f64.max(3.0 * se / 0.5);
    let kurt = last.eta_normality[0].excess_kurtosis.unwrap_or(f64::NAN);
    check(
        decreasing && var_ok && kurt.abs() <= 0.3,
        format!(
            "E|w(T)|^2 {:?}; Var eta(1e5) {var:.4} (rel {rel:.4}); excess kurtosis {kurt:+.3}",
            moments
                .iter()
                .map(|m| format!("{m:.3e}"))
                .collect::<Vec<_>>()
        ),
    )
}

fn criterion_8() -> Outcome {
    let pair = SchedulePair::reference();
    let mut parts = Vec::new();
    let mut ok = true;
    for spec in [builtin::p1(), builtin::p2()] {
        let r = run_moment_check(&spec, &pair, &ensemble(2000), &[1_000, 10_000, 100_000])
            .map_err(|e| e.to_string())?;
        ok &= r.bounded();
        let u4: Vec<String> = r
            .checkpoints
            .iter()
            .map(|c| format!("{:.3}±{:.3}", c.u4, c.u4_se))
            .collect();
        parts.push(format!(
            "{}: E|u|^4 {:?} bounded {}",
            spec.name,
            u4,
            r.bounded()
        ));
    }
    check(ok, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let reference = validate_pair(&SchedulePair::reference(), 1_000_000, 1e-3).unwrap();
    let a = StepSchedule::power_law(0.9, 0.6);
    let equal = validate_pair(&SchedulePair::new(a.clone(), a), 100_000, 1e-3).unwrap();
    let harmonic = SchedulePair::new(
        StepSchedule::power_law(0.5, 1.0),
        StepSchedule::power_law(0.3, 1.6),
    );
    let h = validate_pair(&harmonic, 1_000_000, 1e-3).unwrap();
    let phi = h.diagnostics.phi_estimate;
    let fast_path = matches!(select_experiment(&h), ExperimentKind::FastClock { phi } if (phi - 2.0).abs() <= 1e-3);
    check(
        reference.flags.all() && !equal.flags.a1_ordering && (phi - 2.0).abs() <= 1e-3 && fast_path,
        format!(
            "reference all pass {}, a = b ordering {}, phi(0.5/(n+1)) = {phi:.6}, fast-clock path {fast_path}",
            reference.flags.all(),
            equal.flags.a1_ordering
        ),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.path().extension().is_some_and(|e| e == "csv") {
            files.insert(
                entry.file_name().to_string_lossy().into_owned(),
                std::fs::read(entry.path()).unwrap(),
            );
        }
    }
    files
}

fn determinism_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.problem = "P2".into();
    cfg.engine.trajectories = 500;
    cfg.engine.n_end = 5_000;
    cfg.engine.seed = 19;
    cfg.fluct.anchors = vec![2_000, 10_000];
    cfg.verify.experiment = ExperimentChoice::Coupled;
    cfg.verify.clt = Some(CltConfig {
        indices: vec![1_000, 5_000],
        y_star: Some(vec![0.0]),
        plateau_window: 8.0,
    });
    cfg.output = out.to_path_buf();
    cfg
}

fn run_all(threads: usize, out: &Path) -> BTreeMap<String, Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let mut cfg = determinism_config(out);
    pool.install(|| {
        dispatch(Command::Verify, &cfg).unwrap();
        dispatch(Command::Fluct, &cfg).unwrap();
        dispatch(Command::LimitCov, &cfg).unwrap();
        cfg.engine.trajectories = 3;
        dispatch(Command::Simulate, &cfg).unwrap();
    });
    read_dir(out)
}

fn criterion_10() -> Outcome {
    let root = std::env::temp_dir().join(format!("twoscale-determinism-{}", std::process::id()));
    let single = run_all(1, &root.join("one"));
    let multi = run_all(4, &root.join("four"));
    let again = run_all(4, &root.join("four"));
    let _ = std::fs::remove_dir_all(&root);
    let names: Vec<&String> = single.keys().collect();
    let identical = !single.is_empty() && single == multi && multi == again;
    check(
        identical,
        format!(
            "{} CSV files byte-identical across 1 and 4 threads and reruns: {names:?}",
            single.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, Outcome, f64)> = Vec::new();
    let mut timed = |k: usize, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        match &out {
            Ok(d) => println!("criterion {k}: PASS ({secs:.1}s) {d}"),
            Err(d) => println!("criterion {k}: FAIL ({secs:.1}s) {d}"),
        }
        results.push((k, out, secs));
    };
    timed(1, &mut criterion_1);
    timed(2, &mut criterion_2);
    timed(3, &mut criterion_3);
    timed(4, &mut criterion_4);
    let mut p1 = Err("not run".to_string());
    timed(5, &mut || {
        p1 = coupled_p1();
        p1.as_ref().map_err(Clone::clone).and_then(criterion_5)
    });
    timed(6, &mut || {
        p1.as_ref().map_err(Clone::clone).and_then(criterion_6)
    });
    timed(7, &mut criterion_7);
    timed(8, &mut criterion_8);
    timed(9, &mut criterion_9);
    timed(10, &mut criterion_10);
    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o, _)| o.is_err())
        .map(|(k, _, _)| *k)
        .collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
