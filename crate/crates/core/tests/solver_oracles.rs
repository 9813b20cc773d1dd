use std::f64::consts::PI;
use std::sync::Arc;

use axonfd::bench::{fit_rate, run_hierarchy, HierarchySpec, InitialData, Reference};
use axonfd::grid::Grid1D;
use axonfd::models::{
    custom_polynomial, fhn_drift, fhn_default_constants, fitzhugh_nagumo, CustomParams, DeclaredConstants,
    FHNParams,
};
use axonfd::noise::CovarianceKernel;
use axonfd::solver::{simulate, SolverConfig, SystemState};
use axonfd::tridiag::solve_tridiagonal_corner;

#[test]
fn three_by_three_corner_system() {
    // [[3, -2, 0], [-1, 3, -1], [0, -2, 3]] x = (1, 1, 1) has x = (1, 1, 1).
    let x = solve_tridiagonal_corner(&[3.0, 3.0, 3.0], &[-2.0, -1.0, 0.0], &[0.0, -1.0, -2.0], &[1.0, 1.0, 1.0])
        .unwrap();
    for v in x {
        assert!((v - 1.0).abs() < 1e-14);
    }
}

fn rk4(p: &FHNParams, mut y: (f64, f64), h: f64, steps: usize) -> (f64, f64) {
    let f = |y: (f64, f64)| fhn_drift(y.0, y.1, p);
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f((y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1));
        let k3 = f((y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1));
        let k4 = f((y.0 + h * k3.0, y.1 + h * k3.1));
        y.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        y.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    y
}

#[test]
fn fhn_constant_data_follows_the_ode() {
    let p = FHNParams::default();
    let model = fitzhugh_nagumo(&p, CovarianceKernel::zero(), fhn_default_constants()).unwrap();
    let (u0, w0) = (1.0, 0.0);
    let cfg = SolverConfig {
        record_every: 1_000_000,
        ..SolverConfig::new(1e-5, 10.0)
    };
    let g = Grid1D::new(4).unwrap();
    let traj = simulate(&model, SystemState::constant(g, u0, &[w0], &model).unwrap(), &cfg).unwrap();
    let (u, w) = rk4(&p, (u0, w0), 1e-3, 10_000);
    let last = traj.len() - 1;
    assert!((traj.times[last] - 10.0).abs() < 1e-9);
    for k in 0..=4 {
        assert!((traj.u[last][k] - u).abs() < 1e-4, "{} vs {u}", traj.u[last][k]);
        assert!((traj.x[last][k] - w).abs() < 1e-4);
    }
}

fn heat_model() -> axonfd::models::ModelSpec {
    let p = CustomParams {
        poly: vec![],
        gate_alpha: 0.0,
        gate_beta: 0.0,
        ..CustomParams::default()
    };
    let c = DeclaredConstants {
        lipschitz: 1.0,
        r: 2.0,
        rho0: 0.0,
        alpha: 1.0,
        growth_prefactor: 1.0,
        k: 0.0,
        kappa: 1.0,
        g_process_k: 1.0,
        margin: 1.0,
        monotone_lipschitz: None,
    };
    custom_polynomial(&p, CovarianceKernel::zero(), c).unwrap()
}

#[test]
fn heat_equation_converges_at_second_order() {
    let model = heat_model();
    let hier = HierarchySpec {
        n0: 8,
        m: 3,
        levels: 3,
        dt: 1e-5,
        t_end: 0.1,
        seeds: vec![0],
        record_every: 100,
        quad_points: 4,
    };
    let initial = InitialData {
        u0: Arc::new(|x| (PI * x).cos()),
        x0: vec![Arc::new(|_| 0.5)],
    };
    let nu = model.nu;
    let exact = Reference::Exact(Arc::new(move |t, x| (-PI * PI * nu * t).exp() * (PI * x).cos()));
    let run = run_hierarchy(&model, &initial, &hier, &exact).unwrap();
    let pts: Vec<(f64, f64)> = run.samples.iter().map(|s| (s.n as f64, s.plain)).collect();
    let fit = fit_rate(&pts).unwrap();
    assert!((1.8..=2.2).contains(&fit.slope), "slope {}", fit.slope);
}

#[test]
fn implicit_scheme_damps_the_top_mode() {
    // Exact one-step factor for the highest Neumann mode (-1)^k.
    let model = heat_model();
    let n = 16;
    let g = Grid1D::new(n).unwrap();
    let u = (0..=n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let state = SystemState::new(
        axonfd::grid::GridFunction::new(g, u).unwrap(),
        axonfd::grid::GatingBlock::constant(g, &[0.5]).unwrap(),
        &model,
    )
    .unwrap();
    let dt = 0.01;
    let traj = simulate(&model, state, &SolverConfig::new(dt, dt)).unwrap();
    let factor = 1.0 / (1.0 + dt * 4.0 * (n * n) as f64);
    for (k, v) in traj.u[1].iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        assert!((v - sign * factor).abs() < 1e-13);
    }
}
