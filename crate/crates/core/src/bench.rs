//! Nested-grid convergence experiments driven by one shared noise
//! realization per seed.
//!
//! For each seed the increments are drawn on the reference grid and summed
//! onto every coarser level, so all levels see the same Wiener path. Levels
//! advance in lockstep and are compared with the reference at every
//! snapshot.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    interpolant_l2_distance_sq_slices, l2_distance_to_fn, lcm, restrict_function, GatingBlock,
    Grid1D, GridFunction,
};
use crate::models::ModelSpec;
use crate::noise::{
    aggregate_to, discretize_kernel, ou_sup_norm, sample_increments, DiscreteCovariance, NoiseIncrementSet,
    NoiseStream,
};
use crate::solver::{SolverConfig, Stepper, SystemState};

pub const REPORT_VERSION: u32 = 1;

/// Levels `n0, n0 m, ..., n0 m^(levels-1)` and reference `n0 m^levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    pub n0: usize,
    #[serde(default = "three")]
    pub m: usize,
    pub levels: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "four")]
    pub quad_points: usize,
}

fn three() -> usize {
    3
}

fn one() -> usize {
    1
}

fn four() -> usize {
    4
}

impl HierarchySpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 3 || self.m.is_multiple_of(2) {
            return Err(Error::param(
                "m",
                format!("refinement factor must be odd and at least 3, got {}", self.m),
            ));
        }
        if self.n0 < 2 {
            return Err(Error::param("n0", format!("all levels need n >= 2, got {}", self.n0)));
        }
        if self.levels == 0 {
            return Err(Error::param("levels", "need at least one test level"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "need at least one seed"));
        }
        let n_ref = (self.m as u128).pow(self.levels as u32) * self.n0 as u128;
        if n_ref > u16::MAX as u128 {
            return Err(Error::param("levels", format!("reference n = {n_ref} is too large")));
        }
        self.solver_config(0).validate()
    }

    pub fn level_ns(&self) -> Vec<usize> {
        (0..self.levels).map(|j| self.n0 * self.m.pow(j as u32)).collect()
    }

    pub fn n_ref(&self) -> usize {
        self.n0 * self.m.pow(self.levels as u32)
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            record_every: self.record_every,
            seed,
            quad_points: self.quad_points,
            ..SolverConfig::new(self.dt, self.t_end)
        }
    }
}

/// Wall-clock stopwatch; reads zero where the platform has no clock.
struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    fn start() -> Self {
        #[cfg(not(target_arch = "wasm32"))]
        return Stopwatch(std::time::Instant::now());
        #[cfg(target_arch = "wasm32")]
        return Stopwatch();
    }

    fn secs(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

pub type ScalarField = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial data sampled at the grid points of every level.
#[derive(Clone)]
pub struct InitialData {
    pub u0: ScalarField,
    pub x0: Vec<ScalarField>,
}

impl InitialData {
    pub fn constant(u0: f64, x0: &[f64]) -> Self {
        Self {
            u0: Arc::new(move |_| u0),
            x0: x0.iter().map(|&c| Arc::new(move |_| c) as ScalarField).collect(),
        }
    }

    /// The model's spatially constant equilibrium.
    pub fn rest(model: &ModelSpec) -> Result<Self> {
        let (u, x) = model
            .rest_state
            .as_ref()
            .ok_or_else(|| Error::param("initial", format!("model `{}` has no rest state", model.name)))?;
        Ok(Self::constant(*u, x))
    }

    pub fn state(&self, grid: Grid1D, model: &ModelSpec) -> Result<SystemState> {
        let u = restrict_function(|x| (self.u0)(x), grid)?;
        let rows = self
            .x0
            .iter()
            .map(|f| grid.points().into_iter().map(|x| f(x)).collect())
            .collect();
        SystemState::new(u, GatingBlock::from_rows(grid, rows)?, model)
    }
}

pub type ExactFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// What each level is compared with.
#[derive(Clone)]
pub enum Reference {
    /// The run on `n_ref`, sharing the noise path.
    Finest,
    /// A known solution `u(t, x)`; only the potential is compared.
    Exact(ExactFn),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub seed: u64,
    pub n: usize,
    /// `sup_t ||E(t)||`.
    pub plain: f64,
    /// `sup_t e^{-G_t / 2} ||E(t)||`, the square root of the weighted squared
    /// error.
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_secs: f64,
    pub per_seed_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyRun {
    pub samples: Vec<ErrorSample>,
    pub failures: Vec<FailureEntry>,
    pub timing: Timing,
}

/// Distance in `L^2(0,1)^{1+d}` between the interpolants of two states.
pub fn h_d1_distance(
    u_a: &GridFunction,
    x_a: Option<&GatingBlock>,
    u_b: &GridFunction,
    x_b: Option<&GatingBlock>,
) -> Result<f64> {
    h_d1_distance_sq(u_a.values(), x_a, u_b.values(), x_b).map(f64::sqrt)
}

fn h_d1_distance_sq(
    u_a: &[f64],
    x_a: Option<&GatingBlock>,
    u_b: &[f64],
    x_b: Option<&GatingBlock>,
) -> Result<f64> {
    let na = u_a.len() - 1;
    let nb = u_b.len() - 1;
    let quad_n = lcm(na, nb);
    let mut acc = interpolant_l2_distance_sq_slices(u_a, u_b, quad_n)?;
    match (x_a, x_b) {
        (Some(a), Some(b)) => {
            if a.d() != b.d() {
                return Err(Error::param(
                    "gating",
                    format!("cannot compare d = {} with d = {}", a.d(), b.d()),
                ));
            }
            for i in 0..a.d() {
                acc += interpolant_l2_distance_sq_slices(a.row(i), b.row(i), quad_n)?;
            }
        }
        (None, None) => {}
        _ => return Err(Error::param("gating", "only one side has gating variables")),
    }
    Ok(acc)
}

struct SeedOutcome {
    samples: Vec<ErrorSample>,
    failure: Option<FailureEntry>,
    secs: f64,
}

fn run_seed(
    model: &ModelSpec,
    initial: &InitialData,
    hier: &HierarchySpec,
    reference: &Reference,
    covs: &[DiscreteCovariance],
    seed: u64,
) -> Result<Vec<ErrorSample>> {
    let cfg = hier.solver_config(seed);
    let ns = hier.level_ns();
    let exact = match reference {
        Reference::Exact(f) => Some(f.clone()),
        Reference::Finest => None,
    };
    // covs holds the test levels followed by the reference
    let count = if exact.is_some() { ns.len() } else { ns.len() + 1 };
    let mut steppers = covs[..count]
        .iter()
        .map(|c| Stepper::with_covariance(model, c.clone(), &cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut states = steppers
        .iter()
        .map(|s| initial.state(s.grid(), model))
        .collect::<Result<Vec<_>>>()?;
    let grids: Vec<Grid1D> = steppers.iter().map(|s| s.grid()).collect();
    let finest = grids[count - 1];
    let d = model.d();
    let stream = NoiseStream::new(seed);
    let noisy = model.noise_gating.is_some() || model.noise_u.w12_norm_sq() > 0.0;
    let zero_incs = grids
        .iter()
        .map(|&g| NoiseIncrementSet::zeros(g, d, cfg.dt))
        .collect::<Result<Vec<_>>>()?;

    let mut plain_sq = vec![0.0f64; ns.len()];
    let mut weighted_sq = vec![0.0f64; ns.len()];
    let exact_quad = 4 * ns.last().copied().unwrap_or(2);
    let mut observe = |states: &[SystemState]| -> Result<()> {
        for j in 0..ns.len() {
            let (e2, g) = match &exact {
                Some(f) => {
                    let t = states[j].t;
                    let dist = l2_distance_to_fn(&states[j].u, |x| f(t, x), exact_quad, 4)?;
                    (dist * dist, states[j].g)
                }
                None => {
                    let r = &states[count - 1];
                    let e2 = h_d1_distance_sq(
                        states[j].u.values(),
                        Some(&states[j].x),
                        r.u.values(),
                        Some(&r.x),
                    )?;
                    (e2, r.g)
                }
            };
            plain_sq[j] = plain_sq[j].max(e2);
            weighted_sq[j] = weighted_sq[j].max((-g).exp() * e2);
        }
        Ok(())
    };
    observe(&states)?;
    let stride = cfg.record_every as u64;
    for s in 0..cfg.steps() {
        if noisy {
            let fine = sample_increments(finest, d, cfg.dt, &stream, s)?;
            for j in 0..count {
                let inc = aggregate_to(&fine, grids[j])?;
                steppers[j].step(&mut states[j], &inc)?;
            }
        } else {
            for j in 0..count {
                steppers[j].step(&mut states[j], &zero_incs[j])?;
            }
        }
        if (s + 1) % stride == 0 {
            observe(&states)?;
        }
    }
    Ok(ns
        .iter()
        .enumerate()
        .map(|(j, &n)| ErrorSample {
            seed,
            n,
            plain: plain_sq[j].sqrt(),
            weighted: weighted_sq[j].sqrt(),
        })
        .collect())
}

/// Runs every seed of the hierarchy. Seeds run in parallel when the
/// `parallel` feature is on; results are in seed order either way. Seeds
/// with a diverging level are reported as failures; more than 20% failures
/// is an error.
pub fn run_hierarchy(
    model: &ModelSpec,
    initial: &InitialData,
    hier: &HierarchySpec,
    reference: &Reference,
) -> Result<HierarchyRun> {
    hier.validate()?;
    model.validate()?;
    if initial.x0.len() != model.d() {
        return Err(Error::param(
            "initial.x",
            format!("{} gating profiles for d = {}", initial.x0.len(), model.d()),
        ));
    }
    let start = Stopwatch::start();
    let mut ns = hier.level_ns();
    if matches!(reference, Reference::Finest) {
        ns.push(hier.n_ref());
    }
    let covs = ns
        .iter()
        .map(|&n| discretize_kernel(&model.noise_u, Grid1D::new(n)?, hier.quad_points))
        .collect::<Result<Vec<_>>>()?;

    let one_seed = |&seed: &u64| {
        let t0 = Stopwatch::start();
        let res = run_seed(model, initial, hier, reference, &covs, seed);
        let secs = t0.secs();
        match res {
            Ok(samples) => SeedOutcome {
                samples,
                failure: None,
                secs,
            },
            Err(e) => SeedOutcome {
                samples: Vec::new(),
                failure: Some(FailureEntry {
                    seed,
                    reason: e.to_string(),
                }),
                secs,
            },
        }
    };
    #[cfg(feature = "parallel")]
    let outcomes: Vec<SeedOutcome> = {
        use rayon::prelude::*;
        hier.seeds.par_iter().map(one_seed).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<SeedOutcome> = hier.seeds.iter().map(one_seed).collect();

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let mut per_seed_secs = Vec::new();
    for o in outcomes {
        samples.extend(o.samples);
        failures.extend(o.failure);
        per_seed_secs.push(o.secs);
    }
    let total = hier.seeds.len();
    if failures.len() * 5 > total {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
        });
    }
    Ok(HierarchyRun {
        samples,
        failures,
        timing: Timing {
            total_secs: start.secs(),
            per_seed_secs,
        },
    })
}

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::param("threads", e.to_string())),
    }
}

/// `xi^n` of one discrete OU path per seed, in seed order.
pub fn ou_sup_samples(cov: &DiscreteCovariance, dt: f64, t_end: f64, seeds: &[u64]) -> Result<Vec<f64>> {
    let one = |&seed: &u64| ou_sup_norm(cov, dt, t_end, &NoiseStream::new(seed));
    #[cfg(feature = "parallel")]
    let out = {
        use rayon::prelude::*;
        seeds.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let out = seeds.iter().map(one).collect();
    out
}

/// Linearly interpolated empirical quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `error ~ n^{-slope}`.
    pub slope: f64,
    /// Natural log of the prefactor.
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Indices of points dropped for nonpositive or non-finite error.
    pub excluded: Vec<usize>,
}

/// Least-squares line through `(ln n, ln error)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &(n, e)) in points.iter().enumerate() {
        if n > 0.0 && e > 0.0 && e.is_finite() && n.is_finite() {
            xs.push(n.ln());
            ys.push(e.ln());
        } else {
            excluded.push(i);
        }
    }
    if xs.len() < 3 {
        return Err(Error::TooFewPoints(xs.len()));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::param("points", "all n are equal"));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    Ok(RateFit {
        slope: -b,
        intercept: a,
        residual: (rss / k).sqrt(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n: usize,
    pub count: usize,
    pub mean_err: f64,
    pub median_err: f64,
    pub stderr: f64,
    pub mean_werr: f64,
    pub median_werr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub plain: Option<f64>,
    pub weighted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub version: u32,
    pub config: serde_json::Value,
    pub levels: Vec<LevelSummary>,
    /// Fitted slope of the mean plain error (absent with fewer than 3 levels).
    pub slope_plain: Option<f64>,
    pub slope_weighted: Option<f64>,
    pub residuals: Residuals,
    pub failures: Vec<FailureEntry>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per-level statistics and slopes of the mean errors. Order-independent in
/// `samples`.
pub fn aggregate_report(
    samples: &[ErrorSample],
    failures: &[FailureEntry],
    config: serde_json::Value,
) -> ConvergenceReport {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.n.cmp(&b.n).then(a.seed.cmp(&b.seed)));
    let mut levels = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let n = sorted[i].n;
        let j = sorted[i..].iter().position(|s| s.n != n).map_or(sorted.len(), |p| i + p);
        let group = &sorted[i..j];
        let k = group.len() as f64;
        let mut plain: Vec<f64> = group.iter().map(|s| s.plain).collect();
        let mut weighted: Vec<f64> = group.iter().map(|s| s.weighted).collect();
        let mean = plain.iter().sum::<f64>() / k;
        let mean_w = weighted.iter().sum::<f64>() / k;
        let stderr = if group.len() > 1 {
            (plain.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
        } else {
            0.0
        };
        levels.push(LevelSummary {
            n,
            count: group.len(),
            mean_err: mean,
            median_err: median(&mut plain),
            stderr,
            mean_werr: mean_w,
            median_werr: median(&mut weighted),
        });
        i = j;
    }
    let fit = |f: fn(&LevelSummary) -> f64| {
        fit_rate(&levels.iter().map(|l| (l.n as f64, f(l))).collect::<Vec<_>>()).ok()
    };
    let plain = fit(|l| l.mean_err);
    let weighted = fit(|l| l.mean_werr);
    let mut failures = failures.to_vec();
    failures.sort_by_key(|f| f.seed);
    ConvergenceReport {
        version: REPORT_VERSION,
        config,
        levels,
        slope_plain: plain.as_ref().map(|f| f.slope),
        slope_weighted: weighted.as_ref().map(|f| f.slope),
        residuals: Residuals {
            plain: plain.map(|f| f.residual),
            weighted: weighted.map(|f| f.residual),
        },
        failures,
    }
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One row per (seed, level): `seed,n,plain_err,weighted_err`.
pub fn samples_csv(samples: &[ErrorSample]) -> String {
    let mut out = String::from("seed,n,plain_err,weighted_err\n");
    for s in samples {
        out.push_str(&format!("{},{},{:e},{:e}\n", s.seed, s.n, s.plain, s.weighted));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&n| (n, 1.0 / n)).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        let pts: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0].iter().map(|&n| (n, 5.0 / (n * n))).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_points_are_excluded() {
        let pts = [(2.0, 0.5), (4.0, 0.0), (8.0, 0.125), (16.0, -1.0), (32.0, 1.0 / 32.0)];
        let f = fit_rate(&pts).unwrap();
        assert_eq!(f.excluded, vec![1, 3]);
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(matches!(fit_rate(&pts[..3]), Err(Error::TooFewPoints(2))));
    }

    #[test]
    fn distance_with_constant_offset_is_one() {
        let g3 = Grid1D::new(3).unwrap();
        let g9 = Grid1D::new(9).unwrap();
        let a = GridFunction::constant(g3, 2.0);
        let b = GridFunction::constant(g9, 1.0);
        let xa = GatingBlock::constant(g3, &[0.4]).unwrap();
        let xb = GatingBlock::constant(g9, &[0.4]).unwrap();
        assert!((h_d1_distance(&a, Some(&xa), &b, Some(&xb)).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(h_d1_distance(&a, Some(&xa), &a, Some(&xa)).unwrap(), 0.0);
        assert!((h_d1_distance(&a, None, &b, None).unwrap() - 1.0).abs() < 1e-14);
        assert!(h_d1_distance(&a, Some(&xa), &b, None).is_err());
    }

    fn sample(seed: u64, n: usize, e: f64) -> ErrorSample {
        ErrorSample {
            seed,
            n,
            plain: e,
            weighted: e / 2.0,
        }
    }

    #[test]
    fn report_statistics() {
        let one = aggregate_report(&[sample(1, 9, 0.3)], &[], serde_json::Value::Null);
        assert_eq!(one.levels[0].mean_err, 0.3);
        assert_eq!(one.levels[0].median_err, 0.3);
        assert_eq!(one.slope_plain, None);
        let two = aggregate_report(&[sample(1, 9, 0.1), sample(2, 9, 0.3)], &[], serde_json::Value::Null);
        assert!((two.levels[0].mean_err - 0.2).abs() < 1e-15);
        assert!((two.levels[0].median_err - 0.2).abs() < 1e-15);
    }

    #[test]
    fn report_reproduces_fit() {
        let mut s = Vec::new();
        for (seed, c) in [(1u64, 1.0), (2, 3.0)] {
            for n in [9usize, 27, 81] {
                s.push(sample(seed, n, c / n as f64));
            }
        }
        let r = aggregate_report(&s, &[], serde_json::json!({"k": 1}));
        let pts: Vec<(f64, f64)> = [9.0, 27.0, 81.0].iter().map(|&n| (n, 2.0 / n)).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((r.slope_plain.unwrap() - f.slope).abs() < 1e-12);
        assert!((r.slope_weighted.unwrap() - 1.0).abs() < 1e-12);
        s.reverse();
        assert_eq!(aggregate_report(&s, &[], serde_json::json!({"k": 1})), r);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.95), 4.8);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn hierarchy_validation() {
        let h = HierarchySpec {
            n0: 9,
            m: 3,
            levels: 3,
            dt: 1e-4,
            t_end: 1.0,
            seeds: vec![1],
            record_every: 1,
            quad_points: 4,
        };
        assert!(h.validate().is_ok());
        assert_eq!(h.level_ns(), vec![9, 27, 81]);
        assert_eq!(h.n_ref(), 243);
        let even = HierarchySpec { m: 2, ..h.clone() };
        let msg = even.validate().unwrap_err().to_string();
        assert!(msg.contains("refinement factor must be odd"));
        assert!(HierarchySpec { n0: 1, ..h.clone() }.validate().is_err());
        assert!(HierarchySpec { seeds: vec![], ..h }.validate().is_err());
    }
}
