//! Reaction terms, noise kernels and declared constants of the built-in
//! models, plus sampling-based audits of the structural assumptions.
//!
//! A model is the system
//!
//! ```text
//! dU   = (nu A U + f(U, X)) dt + B dW
//! dX_i = f_i(U, X_i) dt + B_i(U, X) dW_i,    i = 1..d
//! ```
//!
//! with Neumann boundaries on (0, 1).

use std::fmt;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{CovarianceKernel, GatingNoiseKernel};

pub type DriftU = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type GatingFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `u -> (alpha(u), beta(u))`.
pub type RateFn = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;
pub type RhoFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type RhoIFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Drift of one gating component.
#[derive(Clone)]
pub enum GatingDrift {
    /// `f_i = alpha(u)(1 - x) - beta(u) x`.
    Kinetic(RateFn),
    General(GatingFn),
}

impl fmt::Debug for GatingDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Kinetic(_) => write!(f, "Kinetic"),
            Self::General(_) => write!(f, "General"),
        }
    }
}

impl GatingDrift {
    #[inline]
    pub fn eval(&self, u: f64, x: f64) -> f64 {
        match self {
            Self::Kinetic(rates) => {
                let (a, b) = rates(u);
                a * (1.0 - x) - b * x
            }
            Self::General(f) => f(u, x),
        }
    }
}

/// Constants the model claims to satisfy. The audit checks them; the solver
/// uses L, r, rho0, the `rho_i`, K and the margin in the G_t weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredConstants {
    /// Common Lipschitz/growth constant L.
    pub lipschitz: f64,
    /// Growth exponent r in [2, 4].
    pub r: f64,
    /// Bound for rho on [0,1]^d.
    pub rho0: f64,
    /// Exponential growth rate of the rho_i.
    pub alpha: f64,
    /// Prefactor c in `rho_i(u) <= c e^{alpha |u|}`.
    #[serde(default = "unit")]
    pub growth_prefactor: f64,
    /// Threshold K beyond which `d_u f <= -kappa`.
    pub k: f64,
    pub kappa: f64,
    /// Numerical constant multiplying `(d L^2 + 1)` in the G_t integrand.
    #[serde(default = "unit")]
    pub g_process_k: f64,
    /// Margin R added to the running sup-norm of U in the envelope R_t.
    pub margin: f64,
    /// Joint one-sided Lipschitz constant, when the model claims one.
    #[serde(default)]
    pub monotone_lipschitz: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

impl DeclaredConstants {
    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(key, format!("must be positive and finite, got {v}")))
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(key, format!("must be nonnegative and finite, got {v}")))
            }
        };
        pos("constants.lipschitz", self.lipschitz)?;
        if !(2.0..=4.0).contains(&self.r) {
            return Err(Error::param("constants.r", format!("must lie in [2, 4], got {}", self.r)));
        }
        nonneg("constants.rho0", self.rho0)?;
        pos("constants.alpha", self.alpha)?;
        pos("constants.growth_prefactor", self.growth_prefactor)?;
        nonneg("constants.k", self.k)?;
        pos("constants.kappa", self.kappa)?;
        nonneg("constants.g_process_k", self.g_process_k)?;
        nonneg("constants.margin", self.margin)?;
        if let Some(l) = self.monotone_lipschitz {
            pos("constants.monotone_lipschitz", l)?;
        }
        Ok(())
    }
}

/// Which integrand builds the G_t weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightForm {
    /// `2L^2(1 + R^{r-1})^2 (1 + rho0)^2 + 4L^2 sum_i (1 + rho_i(R))^2 + K(d L^2 + 1)`.
    General,
    /// `4(1 + R^4) + K(L^2 + 1)`; the recovery variable enters no constant.
    FitzHughNagumo,
}

#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    /// Reaction term f(u, x).
    pub drift_u: DriftU,
    /// Analytic `d_u f`, when known; audits fall back to finite differences.
    pub drift_u_du: Option<DriftU>,
    pub gating: Vec<GatingDrift>,
    /// Diffusion coefficient nu in front of the Laplacian.
    pub nu: f64,
    pub noise_u: CovarianceKernel,
    pub noise_gating: Option<GatingNoiseKernel>,
    pub constants: DeclaredConstants,
    pub rho: RhoFn,
    pub rho_i: Vec<RhoIFn>,
    pub weight_form: WeightForm,
    /// Whether [0,1]^d is meant to be invariant for the gating variables.
    pub invariance_applicable: bool,
    pub rest_state: Option<(f64, Vec<f64>)>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("d", &self.d())
            .field("nu", &self.nu)
            .field("noise_u", &self.noise_u)
            .field("noise_gating", &self.noise_gating)
            .field("constants", &self.constants)
            .field("weight_form", &self.weight_form)
            .finish()
    }
}

impl ModelSpec {
    pub fn d(&self) -> usize {
        self.gating.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gating.is_empty() {
            return Err(Error::param("model", "need at least one gating component"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::param("nu", format!("must be positive, got {}", self.nu)));
        }
        if self.rho_i.len() != self.gating.len() {
            return Err(Error::param("model", "one rho_i per gating component is required"));
        }
        if let Some(g) = &self.noise_gating {
            if g.d() != self.d() {
                return Err(Error::param(
                    "gating_noise",
                    format!("{} kernels for {} gating components", g.d(), self.d()),
                ));
            }
        }
        self.constants.validate()
    }

    /// Same model with all noise switched off.
    pub fn deterministic(&self) -> Self {
        Self {
            noise_u: CovarianceKernel::zero(),
            noise_gating: None,
            ..self.clone()
        }
    }

    pub fn with_noise(&self, noise_u: CovarianceKernel, noise_gating: Option<GatingNoiseKernel>) -> Self {
        Self {
            noise_u,
            noise_gating,
            ..self.clone()
        }
    }

    /// `sup_{|u| <= R} rho_i`, taken as the larger endpoint value.
    pub fn rho_i_envelope(&self, i: usize, r_env: f64) -> f64 {
        let rho = &self.rho_i[i];
        rho(r_env).max(rho(-r_env))
    }

    /// Integrand of G_t at envelope value R.
    pub fn g_integrand(&self, r_env: f64) -> f64 {
        let c = &self.constants;
        let l2 = c.lipschitz * c.lipschitz;
        match self.weight_form {
            WeightForm::General => {
                let d = self.d() as f64;
                let a = 1.0 + r_env.powf(c.r - 1.0);
                let b = 1.0 + c.rho0;
                let gates: f64 = (0..self.d())
                    .map(|i| (1.0 + self.rho_i_envelope(i, r_env)).powi(2))
                    .sum();
                2.0 * l2 * a * a * b * b + 4.0 * l2 * gates + c.g_process_k * (d * l2 + 1.0)
            }
            WeightForm::FitzHughNagumo => {
                4.0 * (1.0 + r_env.powi(4)) + c.g_process_k * (l2 + 1.0)
            }
        }
    }
}

/// One of the three Hodgkin-Huxley gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    N,
    M,
    H,
}

impl Gate {
    pub const ALL: [Gate; 3] = [Gate::N, Gate::M, Gate::H];
}

/// `alpha(U) = a1 (U + A) / (1 - exp(-a2 (U + A)))`,
/// `beta(U) = b1 exp(-b2 (U + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateRates {
    pub a1: f64,
    pub a2: f64,
    pub a_shift: f64,
    pub b1: f64,
    pub b2: f64,
    pub b_shift: f64,
}

impl GateRates {
    fn validate(&self, gate: &str) -> Result<()> {
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("b1", self.b1), ("b2", self.b2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(
                    &format!("hh.{gate}.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        if !(self.a_shift.is_finite() && self.b_shift.is_finite()) {
            return Err(Error::param(&format!("hh.{gate}"), "shifts must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn alpha(&self, u: f64) -> f64 {
        let z = u + self.a_shift;
        let w = self.a2 * z;
        if w.abs() < 1e-4 {
            self.a1 / self.a2 + self.a1 * z * (0.5 + self.a2 * z / 12.0)
        } else {
            self.a1 * z / -(-w).exp_m1()
        }
    }

    #[inline]
    pub fn beta(&self, u: f64) -> f64 {
        self.b1 * (-self.b2 * (u + self.b_shift)).exp()
    }

    pub fn alpha_prime(&self, u: f64) -> f64 {
        let w = self.a2 * (u + self.a_shift);
        if w.abs() < 1e-2 {
            // derivative of w / (1 - e^{-w}) = 1 + w/2 + w^2/12 - w^4/720 + ...
            self.a1 * (0.5 + w / 6.0 - w * w * w / 180.0)
        } else {
            let d = -(-w).exp_m1();
            let e = (-w).exp();
            self.a1 * (d - w * e) / (d * d)
        }
    }

    pub fn beta_prime(&self, u: f64) -> f64 {
        -self.b2 * self.beta(u)
    }

    /// `max{alpha + beta, alpha' + beta'}`.
    pub fn rho(&self, u: f64) -> f64 {
        (self.alpha(u) + self.beta(u)).max(self.alpha_prime(u) + self.beta_prime(u))
    }

    fn rescaled(&self, v0: f64, t0: f64) -> Self {
        Self {
            a1: self.a1 * v0 * t0,
            a2: self.a2 * v0,
            a_shift: self.a_shift / v0,
            b1: self.b1 * t0,
            b2: self.b2 * v0,
            b_shift: self.b_shift / v0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HHParams {
    pub tau: f64,
    pub lambda: f64,
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub e_na: f64,
    pub e_k: f64,
    pub e_l: f64,
    pub n: GateRates,
    pub m: GateRates,
    pub h: GateRates,
    pub sigma_n: f64,
    pub sigma_m: f64,
    pub sigma_h: f64,
}

impl Default for HHParams {
    /// Standard squid-axon values in mV and ms (resting potential near -65 mV).
    /// The inactivation gate h has no representative in the rate family above;
    /// its default rates match the standard values at rest.
    fn default() -> Self {
        Self {
            tau: 1.0,
            lambda: 1.0,
            g_na: 120.0,
            g_k: 36.0,
            g_l: 0.3,
            e_na: 50.0,
            e_k: -77.0,
            e_l: -54.4,
            n: GateRates {
                a1: 0.01,
                a2: 0.1,
                a_shift: 55.0,
                b1: 0.125,
                b2: 1.0 / 80.0,
                b_shift: 65.0,
            },
            m: GateRates {
                a1: 0.1,
                a2: 0.1,
                a_shift: 40.0,
                b1: 4.0,
                b2: 1.0 / 18.0,
                b_shift: 65.0,
            },
            h: GateRates {
                a1: 0.007,
                a2: 0.1,
                a_shift: 65.0,
                b1: 0.0474,
                b2: 1.0 / 20.0,
                b_shift: 65.0,
            },
            sigma_n: 0.1,
            sigma_m: 0.1,
            sigma_h: 0.1,
        }
    }
}

impl HHParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hh.tau", self.tau),
            ("hh.lambda", self.lambda),
            ("hh.g_na", self.g_na),
            ("hh.g_k", self.g_k),
            ("hh.g_l", self.g_l),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [
            ("hh.e_na", self.e_na),
            ("hh.e_k", self.e_k),
            ("hh.e_l", self.e_l),
            ("hh.sigma_n", self.sigma_n),
            ("hh.sigma_m", self.sigma_m),
            ("hh.sigma_h", self.sigma_h),
        ] {
            if !v.is_finite() {
                return Err(Error::param(key, "must be finite"));
            }
        }
        self.n.validate("n")?;
        self.m.validate("m")?;
        self.h.validate("h")
    }

    pub fn gate(&self, g: Gate) -> &GateRates {
        match g {
            Gate::N => &self.n,
            Gate::M => &self.m,
            Gate::H => &self.h,
        }
    }

    pub fn sigmas(&self) -> [f64; 3] {
        [self.sigma_n, self.sigma_m, self.sigma_h]
    }

    /// Diffusion coefficient `lambda^2 / tau`.
    pub fn nu(&self) -> f64 {
        self.lambda * self.lambda / self.tau
    }

    /// The same neuron in units where the voltage scale is `v0` (mV) and the
    /// time scale is `t0 = tau / g_na`. Rates become O(1e-2..1), conductances
    /// are relative to `g_na`, and `tau` becomes 1. Noise amplitudes scale with
    /// `sqrt(t0)`. The space constant is kept, so `nu` changes by `t0 / tau`.
    pub fn dimensionless(&self, v0: f64) -> Self {
        let t0 = self.tau / self.g_na;
        let g = self.g_na;
        Self {
            tau: 1.0,
            lambda: self.lambda / g.sqrt(),
            g_na: 1.0,
            g_k: self.g_k / g,
            g_l: self.g_l / g,
            e_na: self.e_na / v0,
            e_k: self.e_k / v0,
            e_l: self.e_l / v0,
            n: self.n.rescaled(v0, t0),
            m: self.m.rescaled(v0, t0),
            h: self.h.rescaled(v0, t0),
            sigma_n: self.sigma_n * t0.sqrt(),
            sigma_m: self.sigma_m * t0.sqrt(),
            sigma_h: self.sigma_h * t0.sqrt(),
        }
    }
}

/// `(alpha_x(u), beta_x(u))`.
pub fn hh_rate_functions(u: f64, gate: Gate, p: &HHParams) -> (f64, f64) {
    let g = p.gate(gate);
    (g.alpha(u), g.beta(u))
}

/// `f(u, x) = -(g_Na m^3 h (u - E_Na) + g_K n^4 (u - E_K) + g_L (u - E_L)) / tau`
/// with `x = (n, m, h)`.
#[inline]
pub fn hh_drift_u(u: f64, x: &[f64], p: &HHParams) -> f64 {
    let (n, m, h) = (x[0], x[1], x[2]);
    let n2 = n * n;
    -(p.g_na * m * m * m * h * (u - p.e_na) + p.g_k * n2 * n2 * (u - p.e_k) + p.g_l * (u - p.e_l))
        / p.tau
}

pub fn hh_drift_u_du(x: &[f64], p: &HHParams) -> f64 {
    let (n, m, h) = (x[0], x[1], x[2]);
    -(p.g_na * m * m * m * h + p.g_k * n.powi(4) + p.g_l) / p.tau
}

pub fn hh_drift_gating(u: f64, x_i: f64, gate: Gate, p: &HHParams) -> f64 {
    let (a, b) = hh_rate_functions(u, gate, p);
    a * (1.0 - x_i) - b * x_i
}

/// `max{|n|^4, |m|^3 |h|, |m|^3, |m|^2 |h|, |n|^3}`.
pub fn hh_rho(x: &[f64]) -> f64 {
    let (n, m, h) = (x[0].abs(), x[1].abs(), x[2].abs());
    [n.powi(4), m.powi(3) * h, m.powi(3), m * m * h, n.powi(3)]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Steady state `x_inf = alpha / (alpha + beta)` of each gate at `u`.
pub fn hh_steady_gates(u: f64, p: &HHParams) -> [f64; 3] {
    Gate::ALL.map(|g| {
        let (a, b) = hh_rate_functions(u, g, p);
        a / (a + b)
    })
}

/// Lowest root of `u -> f(u, x_inf(u))` above `e_k`.
pub fn hh_rest_state(p: &HHParams) -> Result<(f64, [f64; 3])> {
    let g = |u: f64| hh_drift_u(u, &hh_steady_gates(u, p), p);
    let lo = p.e_k.min(p.e_na);
    let hi = p.e_k.max(p.e_na);
    let u = first_root(g, lo, hi, 2000)
        .ok_or_else(|| Error::Domain("no resting potential between E_K and E_Na".into()))?;
    Ok((u, hh_steady_gates(u, p)))
}

fn first_root(g: impl Fn(f64) -> f64, lo: f64, hi: f64, scan: usize) -> Option<f64> {
    let h = (hi - lo) / scan as f64;
    let mut a = lo;
    let mut ga = g(a);
    for s in 1..=scan {
        let b = lo + s as f64 * h;
        let gb = g(b);
        if ga == 0.0 {
            return Some(a);
        }
        if ga * gb < 0.0 {
            let (mut x0, mut x1, mut g0) = (a, b, ga);
            for _ in 0..200 {
                let mid = 0.5 * (x0 + x1);
                let gm = g(mid);
                if gm == 0.0 || (x1 - x0) < 1e-15 * (1.0 + mid.abs()) {
                    return Some(mid);
                }
                if g0 * gm < 0.0 {
                    x1 = mid;
                } else {
                    x0 = mid;
                    g0 = gm;
                }
            }
            return Some(0.5 * (x0 + x1));
        }
        a = b;
        ga = gb;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FHNParams {
    pub cubic: f64,
    pub rate: f64,
    pub decay: f64,
    pub offset: f64,
}

impl Default for FHNParams {
    fn default() -> Self {
        Self {
            cubic: 1.0 / 3.0,
            rate: 0.08,
            decay: 0.8,
            offset: 0.7,
        }
    }
}

impl FHNParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("fhn.cubic", self.cubic),
            ("fhn.rate", self.rate),
            ("fhn.decay", self.decay),
            ("fhn.offset", self.offset),
        ] {
            if !v.is_finite() {
                return Err(Error::param(key, "must be finite"));
            }
        }
        if self.cubic <= 0.0 {
            return Err(Error::param("fhn.cubic", "must be positive"));
        }
        Ok(())
    }
}

/// `(u - c u^3 - w, rate (u - decay w + offset))`.
#[inline]
pub fn fhn_drift(u: f64, w: f64, p: &FHNParams) -> (f64, f64) {
    (
        u - p.cubic * u * u * u - w,
        p.rate * (u - p.decay * w + p.offset),
    )
}

/// The unique equilibrium of the FitzHugh-Nagumo kinetics for the default
/// parameters (there is one whenever the nullclines cross once).
pub fn fhn_rest_state(p: &FHNParams) -> Result<(f64, f64)> {
    let w_of = |u: f64| (u + p.offset) / p.decay;
    let u = first_root(|u| u - p.cubic * u * u * u - w_of(u), -5.0, 5.0, 5000)
        .ok_or_else(|| Error::Domain("no FitzHugh-Nagumo equilibrium in [-5, 5]".into()))?;
    Ok((u, w_of(u)))
}

/// Hodgkin-Huxley with additive membrane noise `(1/tau) B dW` and, if
/// `gating_kernel` is given, channel noise `sigma_i x_i (1 - x_i) C dW_i`.
pub fn hodgkin_huxley(
    p: &HHParams,
    noise_u: CovarianceKernel,
    gating_kernel: Option<CovarianceKernel>,
    constants: DeclaredConstants,
) -> Result<ModelSpec> {
    p.validate()?;
    let pp = Arc::new(p.clone());
    let drift_u: DriftU = {
        let p = pp.clone();
        Arc::new(move |u, x| hh_drift_u(u, x, &p))
    };
    let drift_u_du: DriftU = {
        let p = pp.clone();
        Arc::new(move |_u, x| hh_drift_u_du(x, &p))
    };
    let gating = Gate::ALL
        .iter()
        .map(|&g| {
            let rates = *pp.gate(g);
            GatingDrift::Kinetic(Arc::new(move |u| (rates.alpha(u), rates.beta(u))))
        })
        .collect();
    let rho_i = Gate::ALL
        .iter()
        .map(|&g| {
            let rates = *pp.gate(g);
            Arc::new(move |u| rates.rho(u)) as RhoIFn
        })
        .collect();
    let noise_gating = match gating_kernel {
        Some(k) => Some(GatingNoiseKernel::proportion_product(&p.sigmas(), k)?),
        None => None,
    };
    let rest = hh_rest_state(p).ok().map(|(u, x)| (u, x.to_vec()));
    let spec = ModelSpec {
        name: "hh".into(),
        drift_u,
        drift_u_du: Some(drift_u_du),
        gating,
        nu: p.nu(),
        noise_u: noise_u.scaled(1.0 / p.tau),
        noise_gating,
        constants,
        rho: Arc::new(hh_rho),
        rho_i,
        weight_form: WeightForm::General,
        invariance_applicable: true,
        rest_state: rest,
    };
    spec.validate()?;
    Ok(spec)
}

/// Declared constants for the default HH set in mV/ms, checked by the audit on
/// u in [-100, 60].
pub fn hh_default_constants(p: &HHParams) -> DeclaredConstants {
    DeclaredConstants {
        lipschitz: 1.0e4,
        r: 2.0,
        rho0: 1.0,
        alpha: 0.06,
        growth_prefactor: 5.0,
        k: 0.0,
        kappa: p.g_l / p.tau,
        g_process_k: 1.0,
        margin: 1.0,
        monotone_lipschitz: None,
    }
}

/// Declared constants for `HHParams::default().dimensionless(100.0)`, checked
/// by the audit on u in [-1, 0.6].
pub fn hh_dimensionless_constants(p: &HHParams) -> DeclaredConstants {
    DeclaredConstants {
        lipschitz: 1.5,
        r: 2.0,
        rho0: 1.0,
        alpha: 2.0,
        growth_prefactor: 1.0,
        k: 0.0,
        kappa: p.g_l / p.tau,
        g_process_k: 1.0,
        margin: 1.0,
        monotone_lipschitz: None,
    }
}

pub fn fitzhugh_nagumo(
    p: &FHNParams,
    noise_u: CovarianceKernel,
    constants: DeclaredConstants,
) -> Result<ModelSpec> {
    p.validate()?;
    let p = *p;
    let spec = ModelSpec {
        name: "fhn".into(),
        drift_u: Arc::new(move |u, x| fhn_drift(u, x[0], &p).0),
        drift_u_du: Some(Arc::new(move |u, _| 1.0 - 3.0 * p.cubic * u * u)),
        gating: vec![GatingDrift::General(Arc::new(move |u, w| fhn_drift(u, w, &p).1))],
        nu: 1.0,
        noise_u,
        noise_gating: None,
        constants,
        rho: Arc::new(|x| x[0].abs()),
        rho_i: vec![Arc::new(|u: f64| u.abs())],
        weight_form: WeightForm::FitzHughNagumo,
        invariance_applicable: false,
        rest_state: fhn_rest_state(&p).ok().map(|(u, w)| (u, vec![w])),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn fhn_default_constants() -> DeclaredConstants {
    DeclaredConstants {
        lipschitz: 2.0,
        r: 4.0,
        rho0: 1.0,
        alpha: 1.0,
        growth_prefactor: 1.0,
        k: 2.0,
        kappa: 1.0,
        g_process_k: 1.0,
        margin: 2.0,
        monotone_lipschitz: Some(2.0),
    }
}

/// A one-gate test model: `f(u, x) = sum_j c_j u^j + coupling x` and
/// `f_1 = a (1 - x) - b x` with constant rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomParams {
    /// Polynomial coefficients, lowest degree first.
    pub poly: Vec<f64>,
    #[serde(default)]
    pub coupling: f64,
    #[serde(default = "unit")]
    pub gate_alpha: f64,
    #[serde(default = "unit")]
    pub gate_beta: f64,
    #[serde(default = "unit")]
    pub nu: f64,
}

impl Default for CustomParams {
    fn default() -> Self {
        Self {
            poly: vec![0.0, -1.0],
            coupling: 0.0,
            gate_alpha: 1.0,
            gate_beta: 1.0,
            nu: 1.0,
        }
    }
}

fn poly_eval(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(j, &a)| j as f64 * a)
        .collect()
}

pub fn custom_polynomial(
    p: &CustomParams,
    noise_u: CovarianceKernel,
    constants: DeclaredConstants,
) -> Result<ModelSpec> {
    if p.poly.iter().any(|c| !c.is_finite()) {
        return Err(Error::param("custom.poly", "coefficients must be finite"));
    }
    if !(p.gate_alpha >= 0.0 && p.gate_beta >= 0.0) {
        return Err(Error::param("custom.gate_alpha", "gate rates must be nonnegative"));
    }
    let c = p.poly.clone();
    let dc = poly_derivative(&p.poly);
    let k = p.coupling;
    let (a, b) = (p.gate_alpha, p.gate_beta);
    let spec = ModelSpec {
        name: "custom".into(),
        drift_u: Arc::new(move |u, x| poly_eval(&c, u) + k * x[0]),
        drift_u_du: Some(Arc::new(move |u, _| poly_eval(&dc, u))),
        gating: vec![GatingDrift::Kinetic(Arc::new(move |_| (a, b)))],
        nu: p.nu,
        noise_u,
        noise_gating: None,
        constants,
        rho: Arc::new(|_| 0.0),
        rho_i: vec![Arc::new(move |_| a + b)],
        weight_form: WeightForm::General,
        invariance_applicable: true,
        rest_state: None,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    /// Which assumption (1 to 4) the check belongs to.
    pub assumption: u8,
    pub check: String,
    pub status: AuditStatus,
    /// Worst sampled value of the checked quantity.
    pub measured: f64,
    /// Declared bound it is compared against.
    pub declared: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub model: String,
    pub u_box: (f64, f64),
    pub samples: usize,
    pub seed: u64,
    pub constants: DeclaredConstants,
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
}

impl AuditReport {
    pub fn failures(&self) -> Vec<&AssumptionCheck> {
        self.checks
            .iter()
            .filter(|c| c.status == AuditStatus::Fail)
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.check == name)
    }

    /// Overall status of one assumption: failing if any of its checks fails,
    /// not applicable if all of them are.
    pub fn assumption_status(&self, assumption: u8) -> AuditStatus {
        let mut any = false;
        for c in self.checks.iter().filter(|c| c.assumption == assumption) {
            match c.status {
                AuditStatus::Fail => return AuditStatus::Fail,
                AuditStatus::Pass => any = true,
                AuditStatus::NotApplicable => {}
            }
        }
        if any {
            AuditStatus::Pass
        } else {
            AuditStatus::NotApplicable
        }
    }
}

/// Relative slack for comparisons against declared constants, covering
/// rounding in finite differences.
const AUDIT_RTOL: f64 = 1e-6;

fn le(measured: f64, bound: f64) -> bool {
    measured <= bound + AUDIT_RTOL * bound.abs().max(1.0)
}

fn central_diff(f: impl Fn(f64) -> f64, v: f64) -> f64 {
    let h = 1e-6 * v.abs().max(1.0);
    (f(v + h) - f(v - h)) / (2.0 * h)
}

/// Largest eigenvalue of a small symmetric matrix (cyclic Jacobi).
fn max_symmetric_eigenvalue(mut a: Vec<f64>, m: usize) -> f64 {
    for _ in 0..64 {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..m).map(|i| a[i * m + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Checks the declared constants against dense seeded samples of
/// `u_box x [0,1]^d` (the box endpoints are always included).
pub fn audit_assumptions(
    spec: &ModelSpec,
    u_box: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    let (lo, hi) = u_box;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Domain(format!("empty or invalid u box [{lo}, {hi}]")));
    }
    if samples < 1000 {
        return Err(Error::param("samples", format!("need at least 1000, got {samples}")));
    }
    spec.validate()?;
    let c = &spec.constants;
    let d = spec.d();
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..13].copy_from_slice(b"audit");
    let mut rng = ChaCha8Rng::from_seed(key);
    let uu = Uniform::new_inclusive(lo, hi).expect("checked box");
    let unit_iv = Uniform::new_inclusive(0.0, 1.0).expect("valid range");

    let f = &spec.drift_u;
    let du = |u: f64, x: &[f64]| match &spec.drift_u_du {
        Some(g) => g(u, x),
        None => central_diff(|v| f(v, x), u),
    };

    let mut growth_f: f64 = 0.0;
    let mut one_sided_f = f64::NEG_INFINITY;
    let mut growth_g: f64 = 0.0;
    let mut one_sided_g = f64::NEG_INFINITY;
    let mut rho_growth: f64 = 0.0;
    let mut dissip = f64::NEG_INFINITY;
    let mut dissip_samples = 0usize;
    let mut rho0_seen: f64 = 0.0;
    let mut monotone = f64::NEG_INFINITY;
    let mut x = vec![0.0; d];
    let mut grad = vec![0.0; d + 1];
    let mut jac = vec![0.0; (d + 1) * (d + 1)];

    for s in 0..samples {
        let u = match s {
            0 => lo,
            1 => hi,
            _ => uu.sample(&mut rng),
        };
        for (j, xi) in x.iter_mut().enumerate() {
            *xi = match s {
                0 | 1 => (j % 2) as f64,
                _ => unit_iv.sample(&mut rng),
            };
        }
        let rho = (spec.rho)(&x);
        rho0_seen = rho0_seen.max(rho);

        // f: value, gradient and one-sided bound
        let fu = f(u, &x);
        grad[0] = du(u, &x);
        for j in 0..d {
            grad[j + 1] = central_diff(
                |v| {
                    let mut y = x.clone();
                    y[j] = v;
                    f(u, &y)
                },
                x[j],
            );
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let env = (1.0 + u.abs().powf(c.r - 1.0)) * (1.0 + rho);
        growth_f = growth_f.max(fu.abs().max(gnorm) / env);
        one_sided_f = one_sided_f.max(grad[0] / (1.0 + rho));
        if u.abs() > c.k {
            dissip = dissip.max(grad[0]);
            dissip_samples += 1;
        }

        // gating drifts
        for (i, g) in spec.gating.iter().enumerate() {
            let xi = x[i];
            let fi = g.eval(u, xi);
            let dfu = central_diff(|v| g.eval(v, xi), u);
            let dfx = central_diff(|v| g.eval(u, v), xi);
            let rho_i = (spec.rho_i[i])(u);
            let env = (1.0 + rho_i) * (1.0 + xi.abs());
            growth_g = growth_g.max(fi.abs().max((dfu * dfu + dfx * dfx).sqrt()) / env);
            one_sided_g = one_sided_g.max(dfx);
            rho_growth = rho_growth.max(rho_i / (c.growth_prefactor * (c.alpha * u.abs()).exp()));
            jac[(i + 1) * (d + 1)] = dfu;
            for j in 0..d {
                jac[(i + 1) * (d + 1) + j + 1] = if j == i { dfx } else { 0.0 };
            }
        }

        if c.monotone_lipschitz.is_some() {
            jac[..d + 1].copy_from_slice(&grad);
            let m = d + 1;
            let sym: Vec<f64> = (0..m * m)
                .map(|ij| {
                    let (i, j) = (ij / m, ij % m);
                    0.5 * (jac[i * m + j] + jac[j * m + i])
                })
                .collect();
            monotone = monotone.max(max_symmetric_eigenvalue(sym, m));
        }
    }

    // sign conditions of the gating drifts on and beyond the faces of [0,1]
    let mut sign_worst_low = f64::INFINITY;
    let mut sign_worst_high = f64::NEG_INFINITY;
    if spec.invariance_applicable {
        let below = Uniform::new_inclusive(-1.0, 0.0).expect("valid range");
        let above = Uniform::new_inclusive(1.0, 2.0).expect("valid range");
        for s in 0..samples {
            let u = uu.sample(&mut rng);
            let (xl, xh) = if s == 0 {
                (0.0, 1.0)
            } else {
                (below.sample(&mut rng), above.sample(&mut rng))
            };
            for g in &spec.gating {
                sign_worst_low = sign_worst_low.min(g.eval(u, xl)).min(g.eval(u, 0.0));
                sign_worst_high = sign_worst_high.max(g.eval(u, xh)).max(g.eval(u, 1.0));
            }
        }
    }

    let status = |ok: bool| if ok { AuditStatus::Pass } else { AuditStatus::Fail };
    let mut checks = vec![
        AssumptionCheck {
            assumption: 1,
            check: "reaction_growth".into(),
            status: status(le(growth_f, c.lipschitz)),
            measured: growth_f,
            declared: c.lipschitz,
            detail: "max(|f|, |grad f|) / ((1 + |u|^(r-1)) (1 + rho(x)))".into(),
        },
        AssumptionCheck {
            assumption: 1,
            check: "reaction_one_sided".into(),
            status: status(le(one_sided_f, c.lipschitz)),
            measured: one_sided_f,
            declared: c.lipschitz,
            detail: "d_u f / (1 + rho(x))".into(),
        },
        AssumptionCheck {
            assumption: 1,
            check: "gating_growth".into(),
            status: status(le(growth_g, c.lipschitz)),
            measured: growth_g,
            declared: c.lipschitz,
            detail: "max(|f_i|, |grad f_i|) / ((1 + rho_i(u)) (1 + |x_i|))".into(),
        },
        AssumptionCheck {
            assumption: 1,
            check: "gating_one_sided".into(),
            status: status(le(one_sided_g, c.lipschitz)),
            measured: one_sided_g,
            declared: c.lipschitz,
            detail: "d_{x_i} f_i".into(),
        },
        AssumptionCheck {
            assumption: 1,
            check: "rho_i_exponential_growth".into(),
            status: status(le(rho_growth, 1.0)),
            measured: rho_growth,
            declared: 1.0,
            detail: format!(
                "rho_i(u) / ({} exp({} |u|))",
                c.growth_prefactor, c.alpha
            ),
        },
        AssumptionCheck {
            assumption: 1,
            check: "rho0_bound".into(),
            status: status(le(rho0_seen, c.rho0)),
            measured: rho0_seen,
            declared: c.rho0,
            detail: "sup of rho over [0,1]^d".into(),
        },
    ];
    checks.push(AssumptionCheck {
        assumption: 2,
        check: "dissipativity".into(),
        status: status(dissip_samples == 0 || le(dissip, -c.kappa)),
        measured: if dissip_samples == 0 { f64::NEG_INFINITY } else { dissip },
        declared: -c.kappa,
        detail: format!(
            "max d_u f over |u| > K = {} ({} samples)",
            c.k, dissip_samples
        ),
    });
    if spec.invariance_applicable {
        checks.push(AssumptionCheck {
            assumption: 2,
            check: "invariance_lower_face".into(),
            status: status(sign_worst_low >= 0.0),
            measured: sign_worst_low,
            declared: 0.0,
            detail: "min f_i(u, x_i) over x_i <= 0 (must be >= 0)".into(),
        });
        checks.push(AssumptionCheck {
            assumption: 2,
            check: "invariance_upper_face".into(),
            status: status(sign_worst_high <= 0.0),
            measured: sign_worst_high,
            declared: 0.0,
            detail: "max f_i(u, x_i) over x_i >= 1 (must be <= 0)".into(),
        });
    } else {
        checks.push(AssumptionCheck {
            assumption: 2,
            check: "invariance".into(),
            status: AuditStatus::NotApplicable,
            measured: f64::NAN,
            declared: 0.0,
            detail: "the recovery variable is not a proportion; [0,1] is not invariant".into(),
        });
    }
    let w12 = spec.noise_u.w12_norm_sq();
    checks.push(AssumptionCheck {
        assumption: 3,
        check: "noise_kernel_w12".into(),
        status: status(w12.is_finite()),
        measured: spec.noise_u.l2_norm_sq(),
        declared: w12,
        detail: format!("kernel `{}`: squared L2 norm vs W^(1,2) bound", spec.noise_u.name()),
    });
    match &spec.noise_gating {
        Some(g) => {
            let chk = g.check_lipschitz(u_box, samples, seed ^ 0x5eed);
            checks.push(AssumptionCheck {
                assumption: 3,
                check: "gating_kernel_lipschitz".into(),
                status: status(chk.passed),
                measured: chk.max_ratio,
                declared: chk.declared,
                detail: "|b_i(u,x) - b_i(v,y)| / (|u-v| + |x-y|)".into(),
            });
        }
        None => checks.push(AssumptionCheck {
            assumption: 3,
            check: "gating_kernel_lipschitz".into(),
            status: AuditStatus::Pass,
            measured: 0.0,
            declared: 0.0,
            detail: "no gating noise".into(),
        }),
    }
    match c.monotone_lipschitz {
        Some(l) => checks.push(AssumptionCheck {
            assumption: 4,
            check: "joint_one_sided".into(),
            status: status(le(monotone, l)),
            measured: monotone,
            declared: l,
            detail: "largest eigenvalue of the symmetrized Jacobian of (f, f_1..f_d)".into(),
        }),
        None => checks.push(AssumptionCheck {
            assumption: 4,
            check: "joint_one_sided".into(),
            status: AuditStatus::NotApplicable,
            measured: f64::NAN,
            declared: f64::NAN,
            detail: "not declared".into(),
        }),
    }
    let passed = checks.iter().all(|c| c.status != AuditStatus::Fail);
    Ok(AuditReport {
        model: spec.name.clone(),
        u_box,
        samples,
        seed,
        constants: c.clone(),
        checks,
        passed,
    })
}
