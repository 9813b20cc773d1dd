//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs as a plain binary so the lines always reach the test log.

use std::process::ExitCode;
use std::time::Instant;

use axonfd::grid::{difference_seminorm_sq, discrete_laplacian, weighted_inner, Grid1D, GridFunction};
use axonfd::models::AuditStatus;
use axonfd::noise::{
    aggregate_increments, discretize_kernel, hs_distance_sq, sample_increments, CovarianceKernel, KernelSpec,
    NoiseStream,
};
use axonfd_cli::{
    cmd_audit, cmd_converge, cmd_ou_stats, cmd_simulate, HhScaling, HierarchyOptions, InitialSpec, ModelKind,
    OuOptions, ReferenceKind, RunConfig,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

/// `n sum_k (u_{k+1} - u_k)(v_{k+1} - v_k)`.
fn seminorm_inner(u: &[f64], v: &[f64]) -> f64 {
    let n = (u.len() - 1) as f64;
    n * u.windows(2).zip(v.windows(2)).map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0])).sum::<f64>()
}

fn summation_by_parts() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dist = Uniform::new_inclusive(-1.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for n in [2usize, 8, 64, 512] {
        let g = Grid1D::new(n).unwrap();
        for _ in 0..1000 {
            let a: Vec<f64> = (0..=n).map(|_| dist.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..=n).map(|_| dist.sample(&mut rng)).collect();
            let u = GridFunction::new(g, a).unwrap();
            let v = GridFunction::new(g, b).unwrap();
            let lhs = weighted_inner(&discrete_laplacian(&u).unwrap(), &v).unwrap();
            let rhs = -seminorm_inner(u.values(), v.values());
            // Cauchy-Schwarz bound of both sides
            let scale = (difference_seminorm_sq(&u) * difference_seminorm_sq(&v)).sqrt();
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 5.0,
        format!("max relative defect {worst:.2e} (tol 1e-10) over n in {{2, 8, 64, 512}}, {secs:.2} s (limit 5 s)"),
    )
}

fn heat_order() -> Outcome {
    let cfg = RunConfig {
        model: ModelKind::Custom,
        custom: axonfd::models::CustomParams {
            poly: vec![],
            gate_alpha: 0.0,
            gate_beta: 0.0,
            ..Default::default()
        },
        noise: KernelSpec::new("zero", 0.0),
        hierarchy: HierarchyOptions {
            n0: 8,
            m: 3,
            levels: 3,
            record_every: 100,
        },
        dt: 1e-5,
        t_end: 0.1,
        seeds: vec![0],
        initial: InitialSpec::Cosine {
            amplitude: 1.0,
            offset: 0.0,
            x: Some(vec![0.5]),
        },
        reference: ReferenceKind::ExactHeat,
        ..RunConfig::default()
    };
    let start = Instant::now();
    let dir = tmp();
    let res = cmd_converge(&cfg, dir.path());
    let secs = start.elapsed().as_secs_f64();
    match res {
        Ok(r) => {
            let slope = r.report.slope_plain.unwrap_or(f64::NAN);
            outcome(
                (1.8..=2.2).contains(&slope) && secs < 30.0,
                format!("slope {slope:.4} over n in {{8, 24, 72}} (window [1.8, 2.2]), {secs:.1} s (limit 30 s)"),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn rate_config(model: ModelKind) -> RunConfig {
    RunConfig {
        model,
        noise: KernelSpec::new("cosine", 1.0),
        hierarchy: HierarchyOptions {
            n0: 9,
            m: 3,
            levels: 3,
            record_every: 10,
        },
        dt: 1e-4,
        t_end: 1.0,
        seeds: (1..=20).collect(),
        ..RunConfig::default()
    }
}

fn fhn_strong_rate() -> Outcome {
    let cfg = rate_config(ModelKind::Fhn);
    let start = Instant::now();
    let dir = tmp();
    match cmd_converge(&cfg, dir.path()) {
        Ok(r) => {
            let slope = r.report.slope_plain.unwrap_or(f64::NAN);
            let means: Vec<f64> = r.report.levels.iter().map(|l| l.mean_err).collect();
            let shown: Vec<String> = means.iter().map(|m| format!("{m:.3e}")).collect();
            let decreasing = means.windows(2).all(|w| w[1] < w[0]);
            outcome(
                (0.7..=1.3).contains(&slope) && decreasing && r.report.failures.is_empty(),
                format!(
                    "slope of mean sup-t error {slope:.4} (window [0.7, 1.3]), means [{}] decreasing: {decreasing}, 20 seeds, {:.0} s",
                    shown.join(", "),
                    start.elapsed().as_secs_f64()
                ),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn hh_weighted_rate() -> Outcome {
    let cfg = RunConfig {
        hh_scaling: Some(HhScaling {
            v0: 100.0,
            lambda: Some(1.0),
        }),
        noise: KernelSpec::new("cosine", 0.1),
        gating_noise: Some(KernelSpec::new("cosine", 1.0)),
        ..rate_config(ModelKind::Hh)
    };
    let start = Instant::now();
    let dir = tmp();
    match cmd_converge(&cfg, dir.path()) {
        Ok(r) => {
            let w = r.report.slope_weighted.unwrap_or(f64::NAN);
            let p = r.report.slope_plain.unwrap_or(f64::NAN);
            outcome(
                (0.6..=1.4).contains(&w) && p >= 0.4,
                format!(
                    "weighted slope {w:.4} (window [0.6, 1.4]), plain slope {p:.4} (>= 0.4), 20 seeds, {:.0} s",
                    start.elapsed().as_secs_f64()
                ),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn mean_excursion(dt: f64) -> Result<(f64, f64), String> {
    let cfg = RunConfig {
        model: ModelKind::Hh,
        noise: KernelSpec::new("cosine", 5.0),
        n: 32,
        dt,
        t_end: 5.0,
        seeds: (1..=10).collect(),
        record_every: 1000,
        initial: InitialSpec::Stimulus {
            amplitude: 40.0,
            width: 0.1,
        },
        ..RunConfig::default()
    };
    let dir = tmp();
    let s = cmd_simulate(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let max = s.iter().map(|x| x.max_excursion).fold(0.0, f64::max);
    let mean = s.iter().map(|x| x.max_excursion).sum::<f64>() / s.len() as f64;
    Ok((max, mean))
}

fn gating_invariance() -> Outcome {
    match (mean_excursion(1e-3), mean_excursion(2.5e-4)) {
        (Ok((max_c, mean_c)), Ok((max_f, mean_f))) => outcome(
            max_c <= 0.02 && mean_f <= mean_c / 2.0,
            format!(
                "max excursion {max_c:.3e} at dt 1e-3 (limit 0.02); mean over 10 seeds {mean_c:.3e} -> {mean_f:.3e} at dt 2.5e-4 (max {max_f:.3e}), required shrink factor 2; the drift-only gating update is a convex combination of x and the steady state"
            ),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, format!("run failed: {e}")),
    }
}

fn covariance_bound() -> Outcome {
    let k = CovarianceKernel::cosine(1.0);
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [8usize, 16, 32, 64] {
        let cov = discretize_kernel(&k, Grid1D::new(n).unwrap(), 4).unwrap();
        let d2 = hs_distance_sq(&k, &cov, 4);
        let bound = 2.0 * k.w12_norm_sq() / (n * n) as f64;
        pass &= d2 <= bound;
        parts.push(format!("n={n}: {d2:.3e} <= {bound:.3e}"));
    }
    outcome(pass, format!("squared HS distance {}", parts.join(", ")))
}

fn ou_uniformity() -> Outcome {
    let cfg = RunConfig {
        noise: KernelSpec::new("cosine", 1.0),
        dt: 1e-3,
        t_end: 1.0,
        seeds: vec![1],
        ou: OuOptions {
            ns: vec![16, 64, 256],
            paths: 500,
            quantiles: vec![0.5, 0.95],
        },
        ..RunConfig::default()
    };
    let start = Instant::now();
    let dir = tmp();
    match cmd_ou_stats(&cfg, dir.path()) {
        Ok(s) => {
            let spread = s.spread_p95.unwrap_or(f64::NAN);
            let p95: Vec<String> = s
                .rows
                .iter()
                .map(|r| format!("n={}: {:.4}", r.n, r.quantiles[1].value))
                .collect();
            outcome(
                spread < 0.2,
                format!(
                    "95th percentile of xi^n {} over 500 paths, spread {:.2}% (limit 20%), {:.0} s",
                    p95.join(", "),
                    100.0 * spread,
                    start.elapsed().as_secs_f64()
                ),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn aggregation_exactness() -> Outcome {
    let dt = 1e-3;
    let stream = NoiseStream::new(99);
    let fine_grid = Grid1D::new(60).unwrap();
    let mut exact = true;
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0usize);
    let mut step = 0;
    while count < 100_000 {
        let fine = sample_increments(fine_grid, 1, dt, &stream, step).unwrap();
        let two = aggregate_increments(&aggregate_increments(&fine, 3).unwrap(), 5).unwrap();
        let one = aggregate_increments(&fine, 15).unwrap();
        exact &= two == one
            && two.d_b().iter().zip(one.d_b()).all(|(a, b)| a.to_bits() == b.to_bits())
            && two.d_bi(0).iter().zip(one.d_bi(0)).all(|(a, b)| a.to_bits() == b.to_bits());
        for &b in one.d_b().iter().chain(one.d_bi(0)) {
            sum += b;
            sum_sq += b * b;
            count += 1;
        }
        step += 1;
    }
    let mean = sum / count as f64;
    let var = sum_sq / count as f64 - mean * mean;
    let rel = (var / dt - 1.0).abs();
    outcome(
        exact && rel <= 0.05,
        format!(
            "3-then-5 equals 15 bit-exactly on {step} steps: {exact}; aggregated variance {var:.4e} vs dt {dt:e} over {count} draws ({:.2}% off, limit 5%)",
            100.0 * rel
        ),
    )
}

fn assumption_audits() -> Outcome {
    let hh = RunConfig {
        model: ModelKind::Hh,
        gating_noise: Some(KernelSpec::new("cosine", 1.0)),
        ..RunConfig::default()
    };
    let fhn = RunConfig {
        model: ModelKind::Fhn,
        ..RunConfig::default()
    };
    let dir = tmp();
    let (hr, fr) = match (cmd_audit(&hh, dir.path()), cmd_audit(&fhn, dir.path())) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("audit failed to run: {e}")),
    };
    let hh_ok = (1..=3).all(|a| hr.assumption_status(a) == AuditStatus::Pass) && hr.constants.k == 0.0;
    let inv = fr.check("invariance").map(|c| c.status);
    let fhn_ok = fr.assumption_status(4) == AuditStatus::Pass && inv == Some(AuditStatus::NotApplicable);
    outcome(
        hh_ok && fhn_ok,
        format!(
            "hh: assumptions 1-3 {:?}/{:?}/{:?} with K = {}; fhn: assumption 4 {:?}, invariance {:?}",
            hr.assumption_status(1),
            hr.assumption_status(2),
            hr.assumption_status(3),
            hr.constants.k,
            fr.assumption_status(4),
            inv
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("summation by parts", summation_by_parts),
        ("heat equation spatial order", heat_order),
        ("FHN strong rate", fhn_strong_rate),
        ("HH weighted rate", hh_weighted_rate),
        ("gating invariance", gating_invariance),
        ("covariance discretization bound", covariance_bound),
        ("OU uniformity in n", ou_uniformity),
        ("noise aggregation exactness", aggregation_exactness),
        ("assumption audits", assumption_audits),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("[{}] {}. {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, name, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
