//! Euler-Maruyama time stepping of the semi-discrete system, implicit in the
//! discrete Laplacian and explicit in the reactions and the noise, with the
//! running envelope R_t and the weight G_t.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian_into, weighted_inner_slices, GatingBlock, Grid1D, GridFunction};
use crate::models::{GatingDrift, ModelSpec};
use crate::noise::{
    discretize_kernel, sample_increments, DiscreteCovariance, GatingNoiseOperator,
    NoiseIncrementSet, NoiseStream,
};
use crate::tridiag::TridiagonalFactor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    SemiImplicit,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub clamp_gating: bool,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
    /// Gauss points per axis and cell for kernel averages.
    #[serde(default = "four")]
    pub quad_points: usize,
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::SemiImplicit,
            clamp_gating: false,
            record_every: 1,
            seed: 0,
            quad_points: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::param(
                "T",
                format!("must be at least dt = {}, got {}", self.dt, self.t_end),
            ));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        if self.quad_points < 2 {
            return Err(Error::param("quad_points", "must be at least 2"));
        }
        Ok(())
    }

    /// `floor(T / dt)`, robust to the rounding of T / dt.
    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt + 1e-9).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub step: u64,
    pub t: f64,
    pub u: GridFunction,
    pub x: GatingBlock,
    /// Running `max_s ||u(s)||_inf`.
    pub sup_u: f64,
    /// Envelope R_t = running sup-norm plus the declared margin.
    pub r_env: f64,
    /// Accumulated weight G_t.
    pub g: f64,
    /// Left Riemann sum of `|A^n u|_n^2`.
    pub laplacian_energy: f64,
}

impl SystemState {
    pub fn new(u: GridFunction, x: GatingBlock, model: &ModelSpec) -> Result<Self> {
        u.grid().check_same(&x.grid())?;
        if x.d() != model.d() {
            return Err(Error::param(
                "initial.x",
                format!("{} gating rows for a model with d = {}", x.d(), model.d()),
            ));
        }
        let sup_u = u.sup_norm();
        Ok(Self {
            step: 0,
            t: 0.0,
            u,
            x,
            sup_u,
            r_env: sup_u + model.constants.margin,
            g: 0.0,
            laplacian_energy: 0.0,
        })
    }

    /// Spatially constant state.
    pub fn constant(grid: Grid1D, u0: f64, x0: &[f64], model: &ModelSpec) -> Result<Self> {
        Self::new(GridFunction::constant(grid, u0), GatingBlock::constant(grid, x0)?, model)
    }

    pub fn grid(&self) -> Grid1D {
        self.u.grid()
    }
}

/// Largest distance of any gating value from [0, 1].
pub fn gating_excursion(x: &[f64]) -> f64 {
    x.iter()
        .fold(0.0f64, |m, &v| m.max(-v).max(v - 1.0))
}

/// Per-grid stepping machinery: the factorized implicit matrix, the
/// discretized additive kernel and the gating-noise tables.
pub struct Stepper<'a> {
    model: &'a ModelSpec,
    grid: Grid1D,
    cfg: SolverConfig,
    cov: DiscreteCovariance,
    additive: bool,
    factor: Option<TridiagonalFactor>,
    gating_op: Option<GatingNoiseOperator>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    lap: Vec<f64>,
    gating_noise: Vec<f64>,
    column: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a ModelSpec, grid: Grid1D, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        grid.require_stencil()?;
        let cov = discretize_kernel(&model.noise_u, grid, cfg.quad_points)?;
        Self::with_covariance(model, cov, cfg)
    }

    /// Uses a precomputed additive covariance matrix.
    pub fn with_covariance(model: &'a ModelSpec, cov: DiscreteCovariance, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        let grid = cov.grid();
        grid.require_stencil()?;
        let n = grid.n();
        let m = grid.len();
        if cfg.clamp_gating && !model.invariance_applicable {
            return Err(Error::param(
                "clamp_gating",
                format!("model `{}` has no invariant unit cube to clamp to", model.name),
            ));
        }
        let factor = match cfg.scheme {
            Scheme::SemiImplicit => Some(TridiagonalFactor::implicit_diffusion(
                n,
                cfg.dt * model.nu * (n * n) as f64,
            )?),
            Scheme::Explicit => None,
        };
        let gating_op = match &model.noise_gating {
            Some(gk) => Some(GatingNoiseOperator::new(gk, grid, cfg.quad_points)?),
            None => None,
        };
        let d = model.d();
        Ok(Self {
            model,
            grid,
            cfg: cfg.clone(),
            additive: !cov.is_zero(),
            cov,
            factor,
            gating_op,
            drift: vec![0.0; m],
            noise: vec![0.0; m],
            lap: vec![0.0; m],
            gating_noise: vec![0.0; d * m],
            column: vec![0.0; d],
        })
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn covariance(&self) -> &DiscreteCovariance {
        &self.cov
    }

    /// Advances `state` by one step with increments `inc`. Returns the largest
    /// gating excursion outside [0, 1] before any clamping (always 0 for
    /// models whose gating variables are not confined to [0, 1]).
    pub fn step(&mut self, state: &mut SystemState, inc: &NoiseIncrementSet) -> Result<f64> {
        let grid = self.grid;
        grid.check_same(&state.grid())?;
        grid.check_same(&inc.grid())?;
        if inc.d() != self.model.d() {
            return Err(Error::param(
                "increments",
                format!("{} gating noises for d = {}", inc.d(), self.model.d()),
            ));
        }
        let dt = self.cfg.dt;
        let n = grid.n();
        let model = self.model;

        // Monitors use the left endpoint.
        let u = state.u.values();
        laplacian_into(u, &mut self.lap);
        state.laplacian_energy += dt * weighted_inner_slices(&self.lap, &self.lap);
        state.g += dt * model.g_integrand(state.r_env);

        for (k, f) in self.drift.iter_mut().enumerate() {
            for (i, c) in self.column.iter_mut().enumerate() {
                *c = state.x.row(i)[k];
            }
            *f = (model.drift_u)(u[k], &self.column);
        }
        if self.additive {
            self.cov.apply_cells(inc.u_cells(), &mut self.noise);
        }
        if let Some(op) = self.gating_op.as_mut() {
            op.apply(u, &state.x, inc, &mut self.gating_noise);
        }

        // Gating update with the old potential.
        let m = n + 1;
        for (i, gd) in model.gating.iter().enumerate() {
            let noise = &self.gating_noise[i * m..(i + 1) * m];
            let has_noise = self.gating_op.is_some();
            let row = state.x.row_mut(i);
            match gd {
                GatingDrift::Kinetic(rates) => {
                    for k in 0..m {
                        let (a, b) = rates(u[k]);
                        // convex in (x, 1) when dt (a + b) <= 1
                        let mut v = row[k] * (1.0 - dt * (a + b)) + dt * a;
                        if has_noise {
                            v += noise[k];
                        }
                        row[k] = v;
                    }
                }
                GatingDrift::General(f) => {
                    for k in 0..m {
                        let mut v = row[k] + dt * f(u[k], row[k]);
                        if has_noise {
                            v += noise[k];
                        }
                        row[k] = v;
                    }
                }
            }
        }

        let excursion = if model.invariance_applicable {
            gating_excursion(state.x.values())
        } else {
            0.0
        };
        if self.cfg.clamp_gating && excursion > 0.0 {
            for i in 0..model.d() {
                for v in state.x.row_mut(i) {
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }

        // Potential update.
        let nu = model.nu;
        let uv = state.u.values_mut();
        match &self.factor {
            Some(fac) => {
                // Increment form: (I - dt nu A) delta = dt (nu A u + f) + noise,
                // so states in the kernel of A stay bit-exact.
                let delta = &mut self.drift;
                for k in 0..m {
                    delta[k] = dt * (nu * self.lap[k] + delta[k]);
                    if self.additive {
                        delta[k] += self.noise[k];
                    }
                }
                fac.solve_in_place(delta);
                for (v, dv) in uv.iter_mut().zip(delta.iter()) {
                    *v += dv;
                }
            }
            None => {
                for k in 0..m {
                    uv[k] += dt * (nu * self.lap[k] + self.drift[k]);
                    if self.additive {
                        uv[k] += self.noise[k];
                    }
                }
            }
        }

        state.step += 1;
        state.t = state.step as f64 * dt;
        if let Some(k) = uv.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: state.step,
                time: state.t,
                what: format!("u at node {k} is not finite"),
            });
        }
        if let Some(j) = state.x.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: state.step,
                time: state.t,
                what: format!("gating component {} at node {} is not finite", j / m, j % m),
            });
        }
        let sup = state.u.sup_norm();
        state.sup_u = state.sup_u.max(sup);
        state.r_env = state.sup_u + model.constants.margin;
        Ok(excursion)
    }
}

/// One step from `state` with a freshly built stepper. Prefer [`Stepper`] in
/// loops, which factorizes once.
pub fn step(
    state: &SystemState,
    model: &ModelSpec,
    cov: &DiscreteCovariance,
    inc: &NoiseIncrementSet,
    cfg: &SolverConfig,
) -> Result<SystemState> {
    let mut stepper = Stepper::with_covariance(model, cov.clone(), cfg)?;
    let mut next = state.clone();
    stepper.step(&mut next, inc)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub n: usize,
    pub d: usize,
    pub dt: f64,
    pub record_every: usize,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// Gating snapshots, d x (n+1) row-major.
    pub x: Vec<Vec<f64>>,
    /// R_t at each snapshot.
    pub r_env: Vec<f64>,
    /// G_t at each snapshot.
    pub g: Vec<f64>,
    /// Largest pre-clamp excursion since the previous snapshot.
    pub excursion: Vec<f64>,
    pub max_excursion: f64,
    pub laplacian_energy: f64,
    pub final_sup_u: f64,
}

impl TrajectoryRecord {
    fn start(state: &SystemState, cfg: &SolverConfig, model: &ModelSpec) -> Self {
        let initial_excursion = if model.invariance_applicable {
            gating_excursion(state.x.values())
        } else {
            0.0
        };
        let mut rec = Self {
            n: state.grid().n(),
            d: state.x.d(),
            dt: cfg.dt,
            record_every: cfg.record_every,
            times: Vec::new(),
            u: Vec::new(),
            x: Vec::new(),
            r_env: Vec::new(),
            g: Vec::new(),
            excursion: Vec::new(),
            max_excursion: initial_excursion,
            laplacian_energy: 0.0,
            final_sup_u: state.sup_u,
        };
        rec.push(state, rec.max_excursion);
        rec
    }

    fn push(&mut self, s: &SystemState, excursion: f64) {
        self.times.push(s.t);
        self.u.push(s.u.values().to_vec());
        self.x.push(s.x.values().to_vec());
        self.r_env.push(s.r_env);
        self.g.push(s.g);
        self.excursion.push(excursion);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D::new(self.n).expect("recorded grid is valid")
    }

    pub fn u_at(&self, j: usize) -> GridFunction {
        GridFunction::new(self.grid(), self.u[j].clone()).expect("recorded values are finite")
    }

    pub fn x_at(&self, j: usize) -> GatingBlock {
        GatingBlock::new(self.grid(), self.d, self.x[j].clone()).expect("recorded values are finite")
    }
}

/// Runs `cfg.steps()` steps from `initial`, drawing increments from
/// `noise(step)`.
pub fn simulate_with_noise(
    model: &ModelSpec,
    initial: SystemState,
    cfg: &SolverConfig,
    mut noise: impl FnMut(u64) -> Result<NoiseIncrementSet>,
) -> Result<TrajectoryRecord> {
    let mut stepper = Stepper::new(model, initial.grid(), cfg)?;
    let mut state = initial;
    let mut rec = TrajectoryRecord::start(&state, cfg, model);
    let stride = cfg.record_every as u64;
    let mut window = 0.0f64;
    for s in 0..cfg.steps() {
        let inc = noise(s)?;
        let exc = stepper.step(&mut state, &inc)?;
        window = window.max(exc);
        rec.max_excursion = rec.max_excursion.max(exc);
        if state.step.is_multiple_of(stride) {
            rec.push(&state, window);
            window = 0.0;
        }
    }
    rec.laplacian_energy = state.laplacian_energy;
    rec.final_sup_u = state.sup_u;
    Ok(rec)
}

/// Runs the model with increments from the stream `cfg.seed`. Deterministic
/// in `(seed, cfg)`.
pub fn simulate(model: &ModelSpec, initial: SystemState, cfg: &SolverConfig) -> Result<TrajectoryRecord> {
    let grid = initial.grid();
    let d = model.d();
    let stream = NoiseStream::new(cfg.seed);
    // A zero W^{1,2} bound forces a zero kernel.
    let quiet = model.noise_gating.is_none() && model.noise_u.w12_norm_sq() == 0.0;
    if quiet {
        let zero = NoiseIncrementSet::zeros(grid, d, cfg.dt)?;
        return simulate_with_noise(model, initial, cfg, |_| Ok(zero.clone()));
    }
    simulate_with_noise(model, initial, cfg, |s| {
        sample_increments(grid, d, cfg.dt, &stream, s)
    })
}

/// G_t at every snapshot from the recorded envelope, by a left-endpoint
/// Riemann sum over the snapshot times.
pub fn compute_weight_g(traj: &TrajectoryRecord, model: &ModelSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    for j in 0..traj.len() {
        if j > 0 {
            acc += (traj.times[j] - traj.times[j - 1]) * model.g_integrand(traj.r_env[j - 1]);
        }
        out.push(acc);
    }
    out
}
