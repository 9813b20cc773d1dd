//! Configuration and subcommands of the `axonfd` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axonfd::bench::{
    aggregate_report, ou_sup_samples, quantile, run_hierarchy, samples_csv, with_threads, ConvergenceReport,
    HierarchySpec, InitialData, Reference, Timing,
};
use axonfd::grid::Grid1D;
use axonfd::io::{write_binary, write_csv, write_monitor_csv};
use axonfd::models::{
    audit_assumptions, custom_polynomial, fhn_default_constants, fitzhugh_nagumo, hh_default_constants,
    hh_dimensionless_constants, hodgkin_huxley, AuditReport, CustomParams, DeclaredConstants, FHNParams, HHParams,
    ModelSpec,
};
use axonfd::noise::{discretize_kernel, KernelSpec};
use axonfd::solver::{simulate, Scheme, SolverConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OUTPUT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Divergence(String),

    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<axonfd::error::Error> for CliError {
    fn from(e: axonfd::error::Error) -> Self {
        use axonfd::error::Error as E;
        match e {
            E::Divergence { .. } | E::TooManyFailures { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn invalid(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("invalid parameter `{key}`: {reason}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hh,
    #[default]
    Fhn,
    Custom,
}

/// Rescaling of the HH parameters to O(1) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HhScaling {
    /// Voltage scale in mV.
    #[serde(default = "default_v0")]
    pub v0: f64,
    /// Space constant after rescaling; `None` keeps the rescaled value.
    #[serde(default)]
    pub lambda: Option<f64>,
}

fn default_v0() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// The model's spatially constant equilibrium.
    #[default]
    Rest,
    Constant { u: f64, x: Vec<f64> },
    /// `u0 = offset + amplitude cos(pi x)`, gating at rest (or 0.5 without a
    /// rest state) unless `x` is given.
    Cosine {
        #[serde(default = "unit")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        x: Option<Vec<f64>>,
    },
    /// Rest state with `u` raised by `amplitude` on `[0, width)`.
    Stimulus { amplitude: f64, width: f64 },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Self-convergence against `n0 m^levels`.
    #[default]
    Finest,
    /// Exact Neumann heat solution; needs the custom model with `f = 0`, no
    /// noise and cosine initial data with zero offset.
    ExactHeat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyOptions {
    #[serde(default = "default_n0")]
    pub n0: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_bench_record")]
    pub record_every: usize,
}

fn default_n0() -> usize {
    9
}

fn default_m() -> usize {
    3
}

fn default_levels() -> usize {
    3
}

fn default_bench_record() -> usize {
    10
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            n0: default_n0(),
            m: default_m(),
            levels: default_levels(),
            record_every: default_bench_record(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuOptions {
    #[serde(default = "default_ou_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

fn default_ou_ns() -> Vec<usize> {
    vec![16, 64, 256]
}

fn default_paths() -> usize {
    500
}

fn default_quantiles() -> Vec<f64> {
    vec![0.5, 0.9, 0.95, 0.99]
}

impl Default for OuOptions {
    fn default() -> Self {
        Self {
            ns: default_ou_ns(),
            paths: default_paths(),
            quantiles: default_quantiles(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditOptions {
    #[serde(default = "default_audit_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Range of u to sample; a per-model default when absent.
    #[serde(default)]
    pub u_box: Option<(f64, f64)>,
}

fn default_audit_samples() -> usize {
    20_000
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            samples: default_audit_samples(),
            seed: 0,
            u_box: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub hh: HHParams,
    #[serde(default)]
    pub hh_scaling: Option<HhScaling>,
    #[serde(default)]
    pub fhn: FHNParams,
    #[serde(default)]
    pub custom: CustomParams,
    /// Replaces the model's declared constants.
    #[serde(default)]
    pub constants: Option<DeclaredConstants>,
    /// Kernel of the membrane noise.
    #[serde(default = "default_noise")]
    pub noise: KernelSpec,
    /// Spatial kernel of HH channel noise; off when absent.
    #[serde(default)]
    pub gating_noise: Option<KernelSpec>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub hierarchy: HierarchyOptions,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub clamp_gating: bool,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_quad")]
    pub quad_points: usize,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub ou: OuOptions,
    #[serde(default)]
    pub audit: AuditOptions,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_noise() -> KernelSpec {
    KernelSpec::new("cosine", 1.0)
}

fn default_n() -> usize {
    64
}

fn default_dt() -> f64 {
    1e-4
}

fn default_t() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_record_every() -> usize {
    100
}

fn default_quad() -> usize {
    4
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            scheme: self.scheme,
            clamp_gating: self.clamp_gating,
            record_every: self.record_every,
            seed,
            quad_points: self.quad_points,
            ..SolverConfig::new(self.dt, self.t_end)
        }
    }

    pub fn hierarchy_spec(&self) -> HierarchySpec {
        HierarchySpec {
            n0: self.hierarchy.n0,
            m: self.hierarchy.m,
            levels: self.hierarchy.levels,
            dt: self.dt,
            t_end: self.t_end,
            seeds: self.seeds.clone(),
            record_every: self.hierarchy.record_every,
            quad_points: self.quad_points,
        }
    }

    /// Checks everything that can be checked without running a model.
    pub fn validate(&self) -> Result<(), CliError> {
        self.solver_config(0).validate()?;
        if self.n < 2 {
            return Err(invalid("n", format!("must be at least 2, got {}", self.n)));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        self.hierarchy_spec().validate()?;
        if let Some(s) = &self.hh_scaling {
            if !(s.v0 > 0.0 && s.v0.is_finite()) {
                return Err(invalid("hh_scaling.v0", "must be positive"));
            }
        }
        if self.ou.ns.iter().any(|&n| n < 2) {
            return Err(invalid("ou.ns", "every n must be at least 2"));
        }
        if self.ou.paths == 0 {
            return Err(invalid("ou.paths", "must be at least 1"));
        }
        if self.ou.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(invalid("ou.quantiles", "must lie in [0, 1]"));
        }
        self.noise.build()?;
        if let Some(k) = &self.gating_noise {
            k.build()?;
        }
        if self.gating_noise.is_some() && self.model != ModelKind::Hh {
            return Err(invalid("gating_noise", "channel noise is only defined for the hh model"));
        }
        self.build_model()?;
        Ok(())
    }

    fn hh_params(&self) -> HHParams {
        match &self.hh_scaling {
            None => self.hh.clone(),
            Some(s) => {
                let mut p = self.hh.dimensionless(s.v0);
                if let Some(l) = s.lambda {
                    p.lambda = l;
                }
                p
            }
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec, CliError> {
        let noise = self.noise.build()?;
        let spec = match self.model {
            ModelKind::Hh => {
                let p = self.hh_params();
                let constants = self.constants.clone().unwrap_or_else(|| match self.hh_scaling {
                    None => hh_default_constants(&p),
                    Some(_) => hh_dimensionless_constants(&p),
                });
                let gk = self.gating_noise.as_ref().map(KernelSpec::build).transpose()?;
                hodgkin_huxley(&p, noise, gk, constants)?
            }
            ModelKind::Fhn => {
                let constants = self.constants.clone().unwrap_or_else(fhn_default_constants);
                fitzhugh_nagumo(&self.fhn, noise, constants)?
            }
            ModelKind::Custom => {
                let constants = self.constants.clone().unwrap_or(DeclaredConstants {
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
                });
                custom_polynomial(&self.custom, noise, constants)?
            }
        };
        Ok(spec)
    }

    pub fn initial_data(&self, model: &ModelSpec) -> Result<InitialData, CliError> {
        let d = model.d();
        let rest_x = || -> Vec<f64> {
            match &model.rest_state {
                Some((_, x)) => x.clone(),
                None => vec![0.5; d],
            }
        };
        let check_len = |x: &[f64]| {
            if x.len() == d {
                Ok(())
            } else {
                Err(invalid("initial.x", format!("{} gating values for d = {d}", x.len())))
            }
        };
        match &self.initial {
            InitialSpec::Rest => InitialData::rest(model).map_err(CliError::from),
            InitialSpec::Constant { u, x } => {
                check_len(x)?;
                Ok(InitialData::constant(*u, x))
            }
            InitialSpec::Cosine { amplitude, offset, x } => {
                let x = x.clone().unwrap_or_else(rest_x);
                check_len(&x)?;
                let (a, c) = (*amplitude, *offset);
                Ok(InitialData {
                    u0: Arc::new(move |y| c + a * (PI * y).cos()),
                    x0: InitialData::constant(0.0, &x).x0,
                })
            }
            InitialSpec::Stimulus { amplitude, width } => {
                let rest = InitialData::rest(model)?;
                let (a, w) = (*amplitude, *width);
                let base = rest.u0.clone();
                Ok(InitialData {
                    u0: Arc::new(move |y| base(y) + if y < w { a } else { 0.0 }),
                    x0: rest.x0,
                })
            }
        }
    }

    fn reference(&self, model: &ModelSpec) -> Result<Reference, CliError> {
        match self.reference {
            ReferenceKind::Finest => Ok(Reference::Finest),
            ReferenceKind::ExactHeat => {
                let quiet = self.model == ModelKind::Custom
                    && self.custom.poly.iter().all(|&c| c == 0.0)
                    && self.noise.build()?.w12_norm_sq() == 0.0;
                let amplitude = match &self.initial {
                    InitialSpec::Cosine { amplitude, offset, .. } if *offset == 0.0 => *amplitude,
                    _ => {
                        return Err(invalid(
                            "reference",
                            "exact_heat needs initial {\"kind\": \"cosine\"} with zero offset",
                        ))
                    }
                };
                if !quiet {
                    return Err(invalid(
                        "reference",
                        "exact_heat needs model \"custom\" with zero polynomial and the zero noise kernel",
                    ));
                }
                let nu = model.nu;
                Ok(Reference::Exact(Arc::new(move |t, x| {
                    amplitude * (-PI * PI * nu * t).exp() * (PI * x).cos()
                })))
            }
        }
    }

    /// Default audit box for the selected model.
    pub fn audit_box(&self) -> (f64, f64) {
        if let Some(b) = self.audit.u_box {
            return b;
        }
        match (self.model, &self.hh_scaling) {
            (ModelKind::Hh, None) => (-100.0, 60.0),
            (ModelKind::Hh, Some(s)) => (-100.0 / s.v0, 60.0 / s.v0),
            (ModelKind::Fhn, _) => (-3.0, 3.0),
            (ModelKind::Custom, _) => (-10.0, 10.0),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub version: u32,
    pub config: RunConfig,
    pub seed: u64,
    pub n: usize,
    pub steps: u64,
    pub snapshots: usize,
    pub max_excursion: f64,
    pub final_sup_u: f64,
    pub final_g: f64,
    pub laplacian_energy: f64,
}

/// One trajectory per seed: `traj_seed<S>.csv`, `traj_seed<S>.bin`,
/// `monitors_seed<S>.csv` and `summary_seed<S>.json`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<SimulationSummary>, CliError> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let initial = cfg.initial_data(&model)?;
    let grid = Grid1D::new(cfg.n)?;
    ensure_dir(out)?;
    let mut summaries = Vec::new();
    for &seed in &cfg.seeds {
        let sc = cfg.solver_config(seed);
        let traj = simulate(&model, initial.state(grid, &model)?, &sc)?;
        let mut csv = Vec::new();
        write_csv(&traj, &mut csv)?;
        write_file(&out.join(format!("traj_seed{seed}.csv")), &csv)?;
        let mut bin = Vec::new();
        write_binary(&traj, &mut bin)?;
        write_file(&out.join(format!("traj_seed{seed}.bin")), &bin)?;
        let mut mon = Vec::new();
        write_monitor_csv(&traj, &mut mon)?;
        write_file(&out.join(format!("monitors_seed{seed}.csv")), &mon)?;
        let summary = SimulationSummary {
            version: OUTPUT_VERSION,
            config: cfg.clone(),
            seed,
            n: cfg.n,
            steps: sc.steps(),
            snapshots: traj.len(),
            max_excursion: traj.max_excursion,
            final_sup_u: traj.final_sup_u,
            final_g: *traj.g.last().expect("at least the initial snapshot"),
            laplacian_energy: traj.laplacian_energy,
        };
        write_file(&out.join(format!("summary_seed{seed}.json")), &json_bytes(&summary))?;
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeOutcome {
    pub report: ConvergenceReport,
    pub timing: Timing,
}

/// Writes `convergence.json`, `convergence.csv` and `timing.json`. The report
/// itself carries no timings, so it is reproducible byte for byte.
pub fn cmd_converge(cfg: &RunConfig, out: &Path) -> Result<ConvergeOutcome, CliError> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let initial = cfg.initial_data(&model)?;
    let reference = cfg.reference(&model)?;
    let run = run_hierarchy(&model, &initial, &cfg.hierarchy_spec(), &reference)?;
    let report = aggregate_report(&run.samples, &run.failures, cfg.to_json());
    ensure_dir(out)?;
    write_file(&out.join("convergence.json"), report.to_json().as_bytes())?;
    write_file(&out.join("convergence.csv"), samples_csv(&run.samples).as_bytes())?;
    write_file(&out.join("timing.json"), &json_bytes(&run.timing))?;
    Ok(ConvergeOutcome {
        report,
        timing: run.timing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub version: u32,
    pub config: RunConfig,
    pub report: AuditReport,
}

/// Writes `audit.json`; the caller maps a failed audit to exit code 4.
pub fn cmd_audit(cfg: &RunConfig, out: &Path) -> Result<AuditReport, CliError> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let report = audit_assumptions(&model, cfg.audit_box(), cfg.audit.samples, cfg.audit.seed)?;
    ensure_dir(out)?;
    let output = AuditOutput {
        version: OUTPUT_VERSION,
        config: cfg.clone(),
        report,
    };
    write_file(&out.join("audit.json"), &json_bytes(&output))?;
    Ok(output.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileValue {
    pub q: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuRow {
    pub n: usize,
    pub paths: usize,
    pub mean: f64,
    pub quantiles: Vec<QuantileValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuStats {
    pub version: u32,
    pub config: RunConfig,
    pub rows: Vec<OuRow>,
    /// `(max - min) / min` of the 95th percentile across n, if all are positive.
    pub spread_p95: Option<f64>,
}

/// Path p of every n uses the noise stream `seeds[0] + p`, so the table is
/// reproducible and does not depend on the thread count.
pub fn cmd_ou_stats(cfg: &RunConfig, out: &Path) -> Result<OuStats, CliError> {
    cfg.validate()?;
    let kernel = cfg.noise.build()?;
    let base = cfg.seeds[0];
    let seeds: Vec<u64> = (0..cfg.ou.paths as u64).map(|p| base.wrapping_add(p)).collect();
    let mut rows = Vec::new();
    let mut p95 = Vec::new();
    for &n in &cfg.ou.ns {
        let cov = discretize_kernel(&kernel, Grid1D::new(n)?, cfg.quad_points)?;
        let mut xi = ou_sup_samples(&cov, cfg.dt, cfg.t_end, &seeds)?;
        xi.sort_by(f64::total_cmp);
        p95.push(quantile(&xi, 0.95));
        rows.push(OuRow {
            n,
            paths: xi.len(),
            mean: xi.iter().sum::<f64>() / xi.len() as f64,
            quantiles: cfg
                .ou
                .quantiles
                .iter()
                .map(|&q| QuantileValue { q, value: quantile(&xi, q) })
                .collect(),
        });
    }
    let lo = p95.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = p95.iter().cloned().fold(0.0, f64::max);
    let spread_p95 = (lo > 0.0).then(|| (hi - lo) / lo);
    let stats = OuStats {
        version: OUTPUT_VERSION,
        config: cfg.clone(),
        rows,
        spread_p95,
    };
    ensure_dir(out)?;
    write_file(&out.join("ou_stats.json"), &json_bytes(&stats))?;
    Ok(stats)
}

/// Runs `f` on `threads` workers, or on all cores when `None`.
pub fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    if threads == Some(0) {
        return Err(invalid("threads", "must be at least 1"));
    }
    with_threads(threads, f).map_err(CliError::from)
}
