//! WebAssembly bindings for the browser demo in `www/`.

use std::f64::consts::PI;
use std::sync::Arc;

use axonfd::bench::{fit_rate, quantile, InitialData};
use axonfd::grid::{l2_distance_to_fn, Grid1D, GridFunction};
use axonfd::models::{
    custom_polynomial, fhn_default_constants, fitzhugh_nagumo, hh_default_constants, hodgkin_huxley,
    CustomParams, DeclaredConstants, FHNParams, HHParams, ModelSpec,
};
use axonfd::noise::{discretize_kernel, ou_sup_norm, CovarianceKernel, NoiseStream};
use axonfd::solver::{simulate, SolverConfig};
use wasm_bindgen::prelude::*;

/// Membrane potential on the (time, space) lattice, row-major by snapshot.
#[wasm_bindgen]
pub struct SpaceTime {
    n: usize,
    times: Vec<f64>,
    u: Vec<f64>,
    gate: Vec<f64>,
    u_min: f64,
    u_max: f64,
}

#[wasm_bindgen]
impl SpaceTime {
    /// Nodes per snapshot.
    pub fn width(&self) -> usize {
        self.n + 1
    }

    pub fn snapshots(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.times.clone()
    }

    pub fn potential(&self) -> Vec<f64> {
        self.u.clone()
    }

    /// First gating variable (w for FitzHugh-Nagumo, n for Hodgkin-Huxley).
    pub fn gate(&self) -> Vec<f64> {
        self.gate.clone()
    }

    pub fn u_min(&self) -> f64 {
        self.u_min
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }
}

fn cable_model(model: &str, noise: f64) -> Result<ModelSpec, String> {
    let kernel = CovarianceKernel::cosine(noise);
    match model {
        "fhn" => fitzhugh_nagumo(&FHNParams::default(), kernel, fhn_default_constants()),
        "hh" => {
            let p = HHParams {
                lambda: 0.1,
                ..HHParams::default()
            };
            hodgkin_huxley(&p, kernel, None, hh_default_constants(&p))
        }
        other => return Err(format!("unknown model `{other}` (use \"fhn\" or \"hh\")")),
    }
    .map_err(|e| e.to_string())
}

/// Rest state with the left tenth of the cable raised by `stimulus`.
#[allow(clippy::too_many_arguments)]
pub fn run_cable(
    model: &str,
    n: usize,
    dt: f64,
    t_end: f64,
    noise: f64,
    stimulus: f64,
    frames: usize,
    seed: u32,
) -> Result<SpaceTime, String> {
    let spec = cable_model(model, noise)?;
    let rest = InitialData::rest(&spec).map_err(|e| e.to_string())?;
    let base = rest.u0.clone();
    let init = InitialData {
        u0: Arc::new(move |x| base(x) + if x < 0.1 { stimulus } else { 0.0 }),
        x0: rest.x0,
    };
    let grid = Grid1D::new(n).map_err(|e| e.to_string())?;
    let steps = (t_end / dt).floor().max(1.0) as usize;
    let cfg = SolverConfig {
        seed: seed as u64,
        record_every: (steps / frames.max(1)).max(1),
        ..SolverConfig::new(dt, t_end)
    };
    let state = init.state(grid, &spec).map_err(|e| e.to_string())?;
    let traj = simulate(&spec, state, &cfg).map_err(|e| e.to_string())?;
    let m = n + 1;
    let u: Vec<f64> = traj.u.concat();
    let gate: Vec<f64> = traj.x.iter().flat_map(|x| x[..m].iter().copied()).collect();
    let u_min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(SpaceTime {
        n,
        times: traj.times,
        u,
        gate,
        u_min,
        u_max,
    })
}

/// Simulates `"fhn"` or `"hh"` (mV, ms) from rest with a stimulus at the left
/// end and returns about `frames` snapshots.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_cable(
    model: &str,
    n: usize,
    dt: f64,
    t_end: f64,
    noise: f64,
    stimulus: f64,
    frames: usize,
    seed: u32,
) -> Result<SpaceTime, JsError> {
    run_cable(model, n, dt, t_end, noise, stimulus, frames, seed).map_err(|e| JsError::new(&e))
}

/// Errors of the noise-free heat equation against `e^{-pi^2 t} cos(pi x)`.
#[wasm_bindgen]
pub struct RateCurve {
    ns: Vec<f64>,
    errors: Vec<f64>,
    slope: f64,
}

#[wasm_bindgen]
impl RateCurve {
    pub fn ns(&self) -> Vec<f64> {
        self.ns.clone()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.errors.clone()
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }
}

fn heat_model() -> Result<ModelSpec, String> {
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
    custom_polynomial(&p, CovarianceKernel::zero(), c).map_err(|e| e.to_string())
}

/// Error at time `t_end` for `n0, 2 n0, ...` (`levels` grids) and the fitted slope.
pub fn run_heat(n0: usize, levels: usize, dt: f64, t_end: f64) -> Result<RateCurve, String> {
    let model = heat_model()?;
    let cfg = SolverConfig {
        record_every: usize::MAX,
        ..SolverConfig::new(dt, t_end)
    };
    let mut ns = Vec::new();
    let mut errors = Vec::new();
    for j in 0..levels {
        let n = n0 << j;
        let grid = Grid1D::new(n).map_err(|e| e.to_string())?;
        let u0 = axonfd::grid::restrict_function(|x| (PI * x).cos(), grid).map_err(|e| e.to_string())?;
        let state = axonfd::solver::SystemState::new(
            u0,
            axonfd::grid::GatingBlock::constant(grid, &[0.5]).map_err(|e| e.to_string())?,
            &model,
        )
        .map_err(|e| e.to_string())?;
        let mut st = state;
        let mut stepper = axonfd::solver::Stepper::new(&model, grid, &cfg).map_err(|e| e.to_string())?;
        let zero = axonfd::noise::NoiseIncrementSet::zeros(grid, 1, dt).map_err(|e| e.to_string())?;
        for _ in 0..cfg.steps() {
            stepper.step(&mut st, &zero).map_err(|e| e.to_string())?;
        }
        let t = st.t;
        let u = GridFunction::new(grid, st.u.values().to_vec()).map_err(|e| e.to_string())?;
        let decay = (-PI * PI * model.nu * t).exp();
        let err = l2_distance_to_fn(&u, |x| decay * (PI * x).cos(), 4 * n, 4).map_err(|e| e.to_string())?;
        ns.push(n as f64);
        errors.push(err);
    }
    let pts: Vec<(f64, f64)> = ns.iter().copied().zip(errors.iter().copied()).collect();
    let slope = fit_rate(&pts).map(|f| f.slope).unwrap_or(f64::NAN);
    Ok(RateCurve { ns, errors, slope })
}

#[wasm_bindgen]
pub fn heat_convergence(n0: usize, levels: usize, dt: f64, t_end: f64) -> Result<RateCurve, JsError> {
    run_heat(n0, levels, dt, t_end).map_err(|e| JsError::new(&e))
}

/// Quantile `q` of the OU sup-norm over `paths` paths for every n in `ns`.
pub fn run_ou_quantiles(ns: &[usize], paths: usize, dt: f64, t_end: f64, q: f64, seed: u32) -> Result<Vec<f64>, String> {
    let kernel = CovarianceKernel::cosine(1.0);
    let mut out = Vec::new();
    for &n in ns {
        let cov = discretize_kernel(&kernel, Grid1D::new(n).map_err(|e| e.to_string())?, 4).map_err(|e| e.to_string())?;
        let mut xi = (0..paths as u64)
            .map(|p| ou_sup_norm(&cov, dt, t_end, &NoiseStream::new(seed as u64 + p)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        if xi.is_empty() {
            return Err("need at least one path".into());
        }
        xi.sort_by(f64::total_cmp);
        out.push(quantile(&xi, q));
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn ou_quantiles(ns: Vec<usize>, paths: usize, dt: f64, t_end: f64, q: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    run_ou_quantiles(&ns, paths, dt, t_end, q, seed).map_err(|e| JsError::new(&e))
}
