use std::sync::Arc;

use axonfd::bench::{h_d1_distance, InitialData};
use axonfd::grid::Grid1D;
use axonfd::models::{
    fhn_default_constants, fitzhugh_nagumo, hh_default_constants, hodgkin_huxley, FHNParams, HHParams, ModelSpec,
};
use axonfd::noise::CovarianceKernel;
use axonfd::solver::{compute_weight_g, simulate, SolverConfig};

fn fhn() -> ModelSpec {
    fitzhugh_nagumo(&FHNParams::default(), CovarianceKernel::cosine(1.0), fhn_default_constants()).unwrap()
}

/// HH in mV/ms with channel noise of amplitude `sigma` on every gate, started
/// from rest with the left tenth of the cable depolarized by 40 mV.
fn stimulated_hh(sigma: f64, gating_noise: bool) -> (ModelSpec, InitialData) {
    let p = HHParams {
        lambda: 0.1,
        sigma_n: sigma,
        sigma_m: sigma,
        sigma_h: sigma,
        ..HHParams::default()
    };
    let gk = gating_noise.then(|| CovarianceKernel::cosine(1.0));
    let model = hodgkin_huxley(&p, CovarianceKernel::cosine(5.0), gk, hh_default_constants(&p)).unwrap();
    let (ur, xr) = model.rest_state.clone().unwrap();
    let init = InitialData {
        u0: Arc::new(move |x| if x < 0.1 { ur + 40.0 } else { ur }),
        x0: InitialData::constant(ur, &xr).x0,
    };
    (model, init)
}

fn mean_max_excursion(model: &ModelSpec, init: &InitialData, dt: f64) -> f64 {
    let g = Grid1D::new(32).unwrap();
    let mut total = 0.0;
    for seed in 1..=10 {
        let cfg = SolverConfig {
            seed,
            record_every: 1000,
            ..SolverConfig::new(dt, 5.0)
        };
        total += simulate(model, init.state(g, model).unwrap(), &cfg).unwrap().max_excursion;
    }
    total / 10.0
}

#[test]
fn excursions_shrink_with_dt_under_channel_noise() {
    // Product-form channel noise vanishes at the faces, so excursions need a
    // large amplitude to show up at all.
    let (model, init) = stimulated_hh(1.0, true);
    let coarse = mean_max_excursion(&model, &init, 4e-3);
    let fine = mean_max_excursion(&model, &init, 1e-3);
    assert!(coarse > 0.0);
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn drift_only_gating_stays_in_the_unit_cube() {
    let (model, init) = stimulated_hh(0.1, false);
    assert_eq!(mean_max_excursion(&model, &init, 4e-3), 0.0);
}

#[test]
fn monitors_are_sound() {
    let model = fhn();
    let g = Grid1D::new(27).unwrap();
    let init = InitialData::rest(&model).unwrap();
    let cfg = SolverConfig {
        seed: 11,
        ..SolverConfig::new(1e-3, 2.0)
    };
    let traj = simulate(&model, init.state(g, &model).unwrap(), &cfg).unwrap();
    let mut running = 0.0f64;
    for j in 0..traj.len() {
        running = traj.u[j].iter().fold(running, |a, v| a.max(v.abs()));
        assert!(traj.r_env[j] >= running);
        if j > 0 {
            assert!(traj.g[j] >= traj.g[j - 1]);
            assert!(traj.times[j] > traj.times[j - 1]);
        }
    }
    let g_post = compute_weight_g(&traj, &model);
    for (a, b) in g_post.iter().zip(&traj.g) {
        assert!((a - b).abs() <= 1e-9 * b.max(1.0));
    }
}

#[test]
fn same_seed_same_level_gives_zero_error() {
    let model = fhn();
    let g = Grid1D::new(9).unwrap();
    let init = InitialData::rest(&model).unwrap();
    let cfg = SolverConfig {
        seed: 3,
        ..SolverConfig::new(1e-3, 0.5)
    };
    let a = simulate(&model, init.state(g, &model).unwrap(), &cfg).unwrap();
    let b = simulate(&model, init.state(g, &model).unwrap(), &cfg).unwrap();
    let last = a.len() - 1;
    let d = h_d1_distance(&a.u_at(last), Some(&a.x_at(last)), &b.u_at(last), Some(&b.x_at(last))).unwrap();
    assert_eq!(d, 0.0);
    assert_eq!(a, b);
}

#[test]
fn laplacian_energy_is_uniform_in_n() {
    let model = fhn();
    let init = InitialData::rest(&model).unwrap();
    let mut means = Vec::new();
    for n in [9usize, 27, 81] {
        let g = Grid1D::new(n).unwrap();
        let mut total = 0.0;
        for seed in 1..=10 {
            let cfg = SolverConfig {
                seed,
                record_every: 1000,
                ..SolverConfig::new(1e-4, 1.0)
            };
            total += simulate(&model, init.state(g, &model).unwrap(), &cfg).unwrap().laplacian_energy;
        }
        means.push(total / 10.0);
    }
    let hi = means.iter().cloned().fold(0.0, f64::max);
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(lo > 0.0 && hi <= 2.0 * lo, "{means:?}");
}
