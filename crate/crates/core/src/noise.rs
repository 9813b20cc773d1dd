//! Driving noise for the semi-discrete system.
//!
//! The cylindrical Wiener process is observed through its cell integrals
//! `<dW, 1_{I_l}>`, which have variance `|I_l| dt`. The normalized increments
//! `dB_l = |I_l|^{-1/2} <dW, 1_{I_l}>` are iid `N(0, dt)`. A kernel operator
//! with cell-averaged kernel `b^n` then acts as
//!
//! ```text
//! (B^n dW^n)_k = sum_l b^n_{k,l} <dW, 1_{I_l}> = sum_l |I_l|^{1/2} b^n_{k,l} dB_l.
//! ```
//!
//! Cell integrals are stored as integer multiples of a power-of-two quantum
//! that depends only on `dt`. Summing fine cells into a coarse cell is then
//! integer addition, so restricting one realization to coarser grids is exact
//! and independent of the order in which levels are visited.

use std::fmt;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interp_slice, Grid1D, GridFunction, GatingBlock};
use crate::quadrature::GaussLegendre;
use crate::tridiag::TridiagonalFactor;

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A covariance kernel b(x, y) on the unit square together with a bound for
/// its squared W^{1,2} norm.
#[derive(Clone)]
pub struct CovarianceKernel {
    name: String,
    eval: KernelFn,
    w12_norm_sq: f64,
}

impl fmt::Debug for CovarianceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CovarianceKernel")
            .field("name", &self.name)
            .field("w12_norm_sq", &self.w12_norm_sq)
            .finish()
    }
}

// Composite Gauss grid used for kernel norms and construction checks.
const NORM_PANELS: usize = 16;
const NORM_ORDER: usize = 6;

fn square_quadrature(mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    let g = GaussLegendre::new(NORM_ORDER);
    let h = 1.0 / NORM_PANELS as f64;
    let mut acc = 0.0;
    for i in 0..NORM_PANELS {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        acc += g.integrate(a, b, |x| {
            let mut inner = 0.0;
            for j in 0..NORM_PANELS {
                let (c, d) = (j as f64 * h, (j + 1) as f64 * h);
                inner += g.integrate(c, d, |y| f(x, y));
            }
            inner
        });
    }
    acc
}

impl CovarianceKernel {
    /// Checks that the kernel is finite on a quadrature grid and that the
    /// declared W^{1,2} bound is at least the kernel's L2 norm (5% slack).
    pub fn new(name: impl Into<String>, eval: KernelFn, w12_norm_sq: f64) -> Result<Self> {
        let name = name.into();
        if !(w12_norm_sq.is_finite() && w12_norm_sq >= 0.0) {
            return Err(Error::param("w12_norm_sq", "must be finite and nonnegative"));
        }
        let mut finite = true;
        let l2 = square_quadrature(|x, y| {
            let v = eval(x, y);
            finite &= v.is_finite();
            v * v
        });
        if !finite {
            return Err(Error::NonFinite(format!("kernel `{name}` on [0,1]^2")));
        }
        if w12_norm_sq < 0.95 * l2 {
            return Err(Error::param(
                "w12_norm_sq",
                format!("{w12_norm_sq} is below the kernel's squared L2 norm {l2}"),
            ));
        }
        Ok(Self {
            name,
            eval,
            w12_norm_sq,
        })
    }

    /// Computes the W^{1,2} norm by quadrature with central differences.
    pub fn with_computed_norm(name: impl Into<String>, eval: KernelFn) -> Result<Self> {
        let h = 1e-6;
        let e = eval.clone();
        let norm = square_quadrature(|x, y| {
            let v = e(x, y);
            let dx = (e(x + h, y) - e(x - h, y)) / (2.0 * h);
            let dy = (e(x, y + h) - e(x, y - h)) / (2.0 * h);
            v * v + dx * dx + dy * dy
        });
        Self::new(name, eval, norm)
    }

    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            ..Self::constant(0.0)
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            name: "constant".into(),
            eval: Arc::new(move |_, _| c),
            w12_norm_sq: c * c,
        }
    }

    /// `a cos(pi x) cos(pi y)`; rank one, orthogonal to constants.
    pub fn cosine(amplitude: f64) -> Self {
        use std::f64::consts::PI;
        Self {
            name: "cosine".into(),
            eval: Arc::new(move |x, y| amplitude * (PI * x).cos() * (PI * y).cos()),
            w12_norm_sq: amplitude * amplitude * (1.0 + 2.0 * PI * PI) / 4.0,
        }
    }

    /// `a exp(-(x - y)^2 / (2 l^2))`.
    pub fn gaussian_bump(amplitude: f64, length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::param("length", "gaussian_bump needs a positive length"));
        }
        let s = 2.0 * length * length;
        let mut k = Self::with_computed_norm(
            "gaussian_bump",
            Arc::new(move |x, y| amplitude * (-(x - y) * (x - y) / s).exp()),
        )?;
        k.name = "gaussian_bump".into();
        Ok(k)
    }

    /// Registry used by configuration files.
    pub fn by_name(name: &str, amplitude: f64, length: f64) -> Result<Self> {
        match name {
            "zero" => Ok(Self::zero()),
            "constant" => Ok(Self::constant(amplitude)),
            "cosine" => Ok(Self::cosine(amplitude)),
            "gaussian_bump" => Self::gaussian_bump(amplitude, length),
            other => Err(Error::param(
                "kernel.name",
                format!("unknown kernel `{other}` (expected zero, constant, cosine, gaussian_bump)"),
            )),
        }
    }

    /// The kernel `c b` (norm bound scaled by `c^2`).
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            name: self.name.clone(),
            eval: Arc::new(move |x, y| c * inner(x, y)),
            w12_norm_sq: c * c * self.w12_norm_sq,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }

    pub fn w12_norm_sq(&self) -> f64 {
        self.w12_norm_sq
    }

    pub fn l2_norm_sq(&self) -> f64 {
        square_quadrature(|x, y| self.eval(x, y).powi(2))
    }

    /// Largest |b| on a 65 x 65 lattice.
    pub fn sup_estimate(&self) -> f64 {
        let m = 64;
        let mut best: f64 = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                best = best.max(self.eval(i as f64 / m as f64, j as f64 / m as f64).abs());
            }
        }
        best
    }

    pub fn is_symmetric(&self) -> bool {
        let m = 16;
        (0..=m).all(|i| {
            (0..=m).all(|j| {
                let (x, y) = (i as f64 / m as f64, j as f64 / m as f64);
                (self.eval(x, y) - self.eval(y, x)).abs() <= 1e-12 * (1.0 + self.eval(x, y).abs())
            })
        })
    }
}

/// Serializable kernel selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn one() -> f64 {
    1.0
}

fn default_length() -> f64 {
    0.1
}

impl KernelSpec {
    pub fn new(name: &str, amplitude: f64) -> Self {
        Self {
            name: name.into(),
            amplitude,
            length: default_length(),
        }
    }

    pub fn build(&self) -> Result<CovarianceKernel> {
        CovarianceKernel::by_name(&self.name, self.amplitude, self.length)
    }
}

/// Cell-averaged kernel matrix `b^n_{k,l}`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCovariance {
    grid: Grid1D,
    matrix: Vec<f64>,
}

impl DiscreteCovariance {
    pub fn from_matrix(grid: Grid1D, matrix: Vec<f64>) -> Result<Self> {
        let m = grid.len();
        if matrix.len() != m * m {
            return Err(Error::InvalidGrid(format!(
                "covariance matrix needs {} entries, got {}",
                m * m,
                matrix.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance matrix entry".into()));
        }
        Ok(Self { grid, matrix })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        let m = grid.len();
        Self {
            grid,
            matrix: vec![0.0; m * m],
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    #[inline]
    pub fn entry(&self, k: usize, l: usize) -> f64 {
        self.matrix[k * self.grid.len() + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.grid.len();
        &self.matrix[k * m..(k + 1) * m]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.grid.len();
        let mut worst: f64 = 0.0;
        for k in 0..m {
            for l in 0..k {
                worst = worst.max((self.entry(k, l) - self.entry(l, k)).abs());
            }
        }
        worst
    }

    /// `out_k = sum_l b_{k,l} cells_l`, where `cells_l = <dW, 1_{I_l}>`.
    pub fn apply_cells(&self, cells: &[f64], out: &mut [f64]) {
        let m = self.grid.len();
        for (k, o) in out.iter_mut().enumerate().take(m) {
            let row = &self.matrix[k * m..(k + 1) * m];
            *o = row.iter().zip(cells).map(|(b, c)| b * c).sum();
        }
    }
}

/// Cell averages of `b` over `I_k x I_l` with a tensor Gauss rule of
/// `quad_points` nodes per axis and cell.
pub fn discretize_kernel(
    kernel: &CovarianceKernel,
    grid: Grid1D,
    quad_points: usize,
) -> Result<DiscreteCovariance> {
    if quad_points < 2 {
        return Err(Error::param("quad_points", "need at least 2 points per axis"));
    }
    let nodes = cell_nodes(grid, quad_points);
    let m = grid.len();
    let q = quad_points;
    let mut matrix = vec![0.0; m * m];
    for k in 0..m {
        for l in 0..m {
            let mut acc = 0.0;
            for a in &nodes[k * q..(k + 1) * q] {
                for b in &nodes[l * q..(l + 1) * q] {
                    acc += a.weight * b.weight * kernel.eval(a.x, b.x);
                }
            }
            if !acc.is_finite() {
                return Err(Error::NonFinite(format!(
                    "kernel `{}` cell average ({k}, {l})",
                    kernel.name()
                )));
            }
            matrix[k * m + l] = acc;
        }
    }
    DiscreteCovariance::from_matrix(grid, matrix)
}

/// Squared Hilbert-Schmidt distance between the kernel operator and its
/// discretization `iota_n B^n P_n`, whose kernel is the x-interpolant of
/// column l of `b^n` for y in `I_l`.
pub fn hs_distance_sq(kernel: &CovarianceKernel, cov: &DiscreteCovariance, order: usize) -> f64 {
    let grid = cov.grid();
    let n = grid.n();
    let m = grid.len();
    let g = GaussLegendre::new(order);
    let mut acc = 0.0;
    let mut column = vec![0.0; m];
    for l in 0..m {
        for (k, c) in column.iter_mut().enumerate() {
            *c = cov.entry(k, l);
        }
        let (ya, yb) = grid.cell(l);
        for seg in 0..n {
            let (xa, xb) = (seg as f64 / n as f64, (seg + 1) as f64 / n as f64);
            acc += g.integrate(xa, xb, |x| {
                let kx = interp_slice(&column, x);
                g.integrate(ya, yb, |y| (kernel.eval(x, y) - kx).powi(2))
            });
        }
    }
    acc
}

/// A quadrature node inside a control cell.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellNode {
    pub x: f64,
    /// Averaging weight within the cell (weights of one cell sum to one).
    pub weight: f64,
}

pub(crate) fn cell_nodes(grid: Grid1D, q: usize) -> Vec<CellNode> {
    let g = GaussLegendre::new(q);
    (0..grid.len())
        .flat_map(|k| {
            let (a, b) = grid.cell(k);
            g.averaging_rule(a, b)
                .map(|(x, weight)| CellNode { x, weight })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Identifies the random stream of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub step: u64,
}

/// Seed-deterministic source of Gaussian increments. Each (seed, component,
/// step) triple keys an independent ChaCha8 stream, so draws do not depend on
/// the order in which steps or paths are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, component: u32, step: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&step.to_le_bytes());
        key[16..20].copy_from_slice(&component.to_le_bytes());
        key[24..28].copy_from_slice(b"NAXS");
        ChaCha8Rng::from_seed(key)
    }
}

/// Power of two used to quantize cell integrals for a given time step: about
/// 2^-44 of sqrt(dt), leaving headroom of a few hundred standard deviations
/// of a whole-domain increment before sums lose exactness.
pub fn mass_quantum(dt: f64) -> f64 {
    let e = (0.5 * dt.log2()).floor() as i32 - 44;
    2f64.powi(e)
}

/// Brownian increments of the d + 1 driving processes over one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrementSet {
    grid: Grid1D,
    d: usize,
    dt: f64,
    quantum: f64,
    key: StreamKey,
    u_mass: Vec<i64>,
    gating_mass: Vec<i64>,
    u_cells: Vec<f64>,
    gating_cells: Vec<f64>,
    d_b: Vec<f64>,
    d_bi: Vec<f64>,
}

impl NoiseIncrementSet {
    /// Builds an increment set from quantized cell integrals
    /// (`<dW, 1_{I_l}> = mass * mass_quantum(dt)`).
    pub fn from_cell_masses(
        grid: Grid1D,
        d: usize,
        dt: f64,
        key: StreamKey,
        u_mass: Vec<i64>,
        gating_mass: Vec<i64>,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let m = grid.len();
        if u_mass.len() != m || gating_mass.len() != d * m {
            return Err(Error::InvalidGrid("increment vector lengths do not match grid".into()));
        }
        let quantum = mass_quantum(dt);
        let inv_sqrt_w: Vec<f64> = grid.cell_widths().iter().map(|w| 1.0 / w.sqrt()).collect();
        let u_cells: Vec<f64> = u_mass.iter().map(|&c| c as f64 * quantum).collect();
        let gating_cells: Vec<f64> = gating_mass.iter().map(|&c| c as f64 * quantum).collect();
        let d_b = u_cells.iter().zip(&inv_sqrt_w).map(|(c, s)| c * s).collect();
        let d_bi = gating_cells
            .iter()
            .enumerate()
            .map(|(j, c)| c * inv_sqrt_w[j % m])
            .collect();
        Ok(Self {
            grid,
            d,
            dt,
            quantum,
            key,
            u_mass,
            gating_mass,
            u_cells,
            gating_cells,
            d_b,
            d_bi,
        })
    }

    pub fn zeros(grid: Grid1D, d: usize, dt: f64) -> Result<Self> {
        let m = grid.len();
        Self::from_cell_masses(
            grid,
            d,
            dt,
            StreamKey { seed: 0, step: 0 },
            vec![0; m],
            vec![0; d * m],
        )
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Normalized increments of the U-noise, each `N(0, dt)`.
    pub fn d_b(&self) -> &[f64] {
        &self.d_b
    }

    /// Normalized increments of gating component i.
    pub fn d_bi(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.d_bi[i * m..(i + 1) * m]
    }

    /// `<dW, 1_{I_l}>` for the U-noise.
    pub fn u_cells(&self) -> &[f64] {
        &self.u_cells
    }

    pub fn gating_cells(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.gating_cells[i * m..(i + 1) * m]
    }

    pub fn u_mass(&self) -> &[i64] {
        &self.u_mass
    }

    pub fn gating_mass(&self) -> &[i64] {
        &self.gating_mass
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    /// Same increments multiplied by an integer factor (exact).
    pub fn scaled(&self, factor: i64) -> Self {
        let u = self.u_mass.iter().map(|c| c * factor).collect();
        let g = self.gating_mass.iter().map(|c| c * factor).collect();
        Self::from_cell_masses(self.grid, self.d, self.dt, self.key, u, g)
            .expect("scaling keeps lengths and dt")
    }
}

/// Draws the (d + 1)(n + 1) independent `N(0, dt)` increments of time step
/// `step` from `stream`.
pub fn sample_increments(
    grid: Grid1D,
    d: usize,
    dt: f64,
    stream: &NoiseStream,
    step: u64,
) -> Result<NoiseIncrementSet> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let quantum = mass_quantum(dt);
    let sqrt_dt = dt.sqrt();
    let widths = grid.cell_widths();
    let draw = |component: u32| -> Vec<i64> {
        let mut rng = stream.rng(component, step);
        widths
            .iter()
            .map(|w| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * sqrt_dt * w.sqrt() / quantum).round() as i64
            })
            .collect()
    };
    let u_mass = draw(0);
    let gating_mass = (1..=d as u32).flat_map(draw).collect();
    NoiseIncrementSet::from_cell_masses(
        grid,
        d,
        dt,
        StreamKey {
            seed: stream.seed,
            step,
        },
        u_mass,
        gating_mass,
    )
}

fn check_factor(n_fine: usize, m: usize) -> Result<usize> {
    if m < 3 || m.is_multiple_of(2) {
        return Err(Error::param(
            "m",
            format!("refinement factor must be odd and at least 3, got {m}"),
        ));
    }
    if !n_fine.is_multiple_of(m) {
        return Err(Error::param("m", format!("{m} does not divide n = {n_fine}")));
    }
    let n_c = n_fine / m;
    if n_c < 2 {
        return Err(Error::InvalidGrid(format!(
            "coarse grid n = {n_c} is too small (need at least 2)"
        )));
    }
    Ok(n_c)
}

fn aggregate_row(fine: &[i64], m: usize, n_c: usize) -> Vec<i64> {
    let half = (m - 1) / 2;
    let n_f = fine.len() - 1;
    (0..=n_c)
        .map(|k| {
            let center = k * m;
            let lo = center.saturating_sub(half);
            let hi = (center + half).min(n_f);
            fine[lo..=hi].iter().sum()
        })
        .collect()
}

/// Restricts increments to the grid with `n_f / m` cells. With m odd every
/// coarse cell is an exact union of fine cells, so
/// `beta^c_k = |I^c_k|^{-1/2} sum_{I^f_l in I^c_k} |I^f_l|^{1/2} beta^f_l`.
pub fn aggregate_increments(fine: &NoiseIncrementSet, m: usize) -> Result<NoiseIncrementSet> {
    let n_c = check_factor(fine.grid.n(), m)?;
    let coarse = Grid1D::new(n_c)?;
    let mf = fine.grid.len();
    let u_mass = aggregate_row(&fine.u_mass, m, n_c);
    let gating_mass = (0..fine.d)
        .flat_map(|i| aggregate_row(&fine.gating_mass[i * mf..(i + 1) * mf], m, n_c))
        .collect();
    NoiseIncrementSet::from_cell_masses(coarse, fine.d, fine.dt, fine.key, u_mass, gating_mass)
}

/// Restricts to an arbitrary coarser grid in the same odd-ratio hierarchy;
/// the identical grid returns a copy.
pub fn aggregate_to(fine: &NoiseIncrementSet, target: Grid1D) -> Result<NoiseIncrementSet> {
    if target.n() == fine.grid.n() {
        return Ok(fine.clone());
    }
    if !fine.grid.n().is_multiple_of(target.n()) {
        return Err(Error::param(
            "m",
            format!("n = {} is not a refinement of n = {}", fine.grid.n(), target.n()),
        ));
    }
    aggregate_increments(fine, fine.grid.n() / target.n())
}

/// `out_k = sum_l |I_l|^{1/2} b^n_{k,l} dB_l`.
pub fn apply_additive_noise(cov: &DiscreteCovariance, inc: &NoiseIncrementSet) -> Result<GridFunction> {
    cov.grid.check_same(&inc.grid)?;
    let mut out = vec![0.0; cov.grid.len()];
    cov.apply_cells(&inc.u_cells, &mut out);
    GridFunction::new(cov.grid, out)
}

pub type AmplitudeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type GeneralGatingFn = Arc<dyn Fn(f64, &[f64], f64, f64) -> f64 + Send + Sync>;

/// Kernel `b_i(u, x, x_pos, y)` of one gating component.
#[derive(Clone)]
pub enum GatingComponentKernel {
    /// `b_i = s(u, x) c(x_pos, y)`.
    Product {
        amplitude: AmplitudeFn,
        spatial: CovarianceKernel,
    },
    General(GeneralGatingFn),
}

impl fmt::Debug for GatingComponentKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Product { spatial, .. } => write!(f, "Product({})", spatial.name()),
            Self::General(_) => write!(f, "General"),
        }
    }
}

impl GatingComponentKernel {
    #[inline]
    pub fn eval(&self, u: f64, x: &[f64], x_pos: f64, y: f64) -> f64 {
        match self {
            Self::Product { amplitude, spatial } => amplitude(u, x) * spatial.eval(x_pos, y),
            Self::General(b) => b(u, x, x_pos, y),
        }
    }
}

/// Multiplicative gating noise with Lipschitz constant `lipschitz` in (u, x).
/// With `cutoff`, rows of component i vanish on cells where the interpolated
/// `x_i` leaves [0, 1].
#[derive(Debug, Clone)]
pub struct GatingNoiseKernel {
    components: Vec<GatingComponentKernel>,
    lipschitz: f64,
    cutoff: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    pub declared: f64,
    pub max_ratio: f64,
    pub passed: bool,
}

impl GatingNoiseKernel {
    pub fn new(components: Vec<GatingComponentKernel>, lipschitz: f64, cutoff: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::param("gating_noise", "need at least one component"));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(Error::param("gating_noise.lipschitz", "must be finite and nonnegative"));
        }
        Ok(Self {
            components,
            lipschitz,
            cutoff,
        })
    }

    /// `b_i = sigma_i x_i (1 - x_i) c(x_pos, y)` with cutoff, the channel-noise
    /// form of the Hodgkin-Huxley gates.
    pub fn proportion_product(sigmas: &[f64], spatial: CovarianceKernel) -> Result<Self> {
        let c_sup = spatial.sup_estimate();
        let comps = sigmas
            .iter()
            .enumerate()
            .map(|(i, &s)| GatingComponentKernel::Product {
                amplitude: Arc::new(move |_u: f64, x: &[f64]| s * x[i] * (1.0 - x[i])),
                spatial: spatial.clone(),
            })
            .collect();
        let lip = sigmas.iter().fold(0.0f64, |m, s| m.max(s.abs())) * c_sup;
        Self::new(comps, lip, true)
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GatingComponentKernel] {
        &self.components
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn cutoff(&self) -> bool {
        self.cutoff
    }

    /// Samples pairs (u, x), (v, y) with u, v in `u_range` and x, y in
    /// [0,1]^d and compares kernel differences with `L(|u-v| + |x-y|)`.
    pub fn check_lipschitz(&self, u_range: (f64, f64), samples: usize, seed: u64) -> LipschitzCheck {
        use rand_distr::Uniform;
        let d = self.d();
        let mut rng = NoiseStream::new(seed).rng(u32::MAX, 0);
        let unit = Uniform::new(0.0, 1.0).expect("valid range");
        let uu = Uniform::new_inclusive(u_range.0, u_range.1).expect("valid range");
        let mut worst: f64 = 0.0;
        let mut x = vec![0.0f64; d];
        let mut y = vec![0.0f64; d];
        for _ in 0..samples {
            let u = uu.sample(&mut rng);
            let v = uu.sample(&mut rng);
            for j in 0..d {
                x[j] = unit.sample(&mut rng);
                y[j] = unit.sample(&mut rng);
            }
            let pos = unit.sample(&mut rng);
            let q = unit.sample(&mut rng);
            let dist = (u - v).abs() + x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist < 1e-12 {
                continue;
            }
            for comp in &self.components {
                let diff = (comp.eval(u, &x, pos, q) - comp.eval(v, &y, pos, q)).abs();
                worst = worst.max(diff / dist);
            }
        }
        LipschitzCheck {
            declared: self.lipschitz,
            max_ratio: worst,
            passed: worst <= self.lipschitz * (1.0 + 1e-9),
        }
    }
}

/// Whether the interpolant of `row` leaves [0, 1] somewhere on cell k.
#[inline]
fn exits_unit_interval(row: &[f64], k: usize) -> bool {
    let out = |v: f64| !(0.0..=1.0).contains(&v);
    let n = row.len() - 1;
    out(row[k])
        || (k > 0 && out(0.5 * (row[k - 1] + row[k])))
        || (k < n && out(0.5 * (row[k] + row[k + 1])))
}

/// Per-component matrices `b^n_{i,k,l}(u, x)`: cell averages of
/// `b_i(u~(x), x~(x), x, y)` over `I_k x I_l`.
pub fn gating_noise_matrix(
    gk: &GatingNoiseKernel,
    u: &GridFunction,
    x: &GatingBlock,
    quad_points: usize,
) -> Result<Vec<DiscreteCovariance>> {
    let grid = u.grid();
    grid.check_same(&x.grid())?;
    if x.d() != gk.d() {
        return Err(Error::param(
            "gating_noise",
            format!("kernel has {} components, state has {}", gk.d(), x.d()),
        ));
    }
    if quad_points < 2 {
        return Err(Error::param("quad_points", "need at least 2 points per axis"));
    }
    let nodes = cell_nodes(grid, quad_points);
    let q = quad_points;
    let m = grid.len();
    let d = x.d();
    let interp: Vec<(f64, Vec<f64>)> = nodes
        .iter()
        .map(|nd| {
            let xs = (0..d).map(|i| interp_slice(x.row(i), nd.x)).collect();
            (interp_slice(u.values(), nd.x), xs)
        })
        .collect();
    let mut out = Vec::with_capacity(d);
    for (i, comp) in gk.components.iter().enumerate() {
        let mut matrix = vec![0.0; m * m];
        for k in 0..m {
            if gk.cutoff && exits_unit_interval(x.row(i), k) {
                continue;
            }
            for l in 0..m {
                let mut acc = 0.0;
                for a in k * q..(k + 1) * q {
                    let (uu, ref xx) = interp[a];
                    for b in &nodes[l * q..(l + 1) * q] {
                        acc += nodes[a].weight * b.weight * comp.eval(uu, xx, nodes[a].x, b.x);
                    }
                }
                matrix[k * m + l] = acc;
            }
        }
        out.push(DiscreteCovariance::from_matrix(grid, matrix)?);
    }
    Ok(out)
}

enum ComponentTable {
    /// `table[a * m + l]`: mean of `c(x_a, .)` over `I_l`, for quadrature node a.
    Product { amplitude: AmplitudeFn, table: Vec<f64> },
    General(GeneralGatingFn),
}

/// Precomputed application of the gating noise on a fixed grid. For product
/// kernels the spatial factor is tabulated once, so a step costs one
/// `(n+1)q x (n+1)` matrix-vector product per component.
pub struct GatingNoiseOperator {
    grid: Grid1D,
    q: usize,
    cutoff: bool,
    nodes: Vec<CellNode>,
    comps: Vec<ComponentTable>,
    node_u: Vec<f64>,
    node_x: Vec<f64>,
    z: Vec<f64>,
}

impl GatingNoiseOperator {
    pub fn new(gk: &GatingNoiseKernel, grid: Grid1D, quad_points: usize) -> Result<Self> {
        if quad_points < 2 {
            return Err(Error::param("quad_points", "need at least 2 points per axis"));
        }
        let q = quad_points;
        let nodes = cell_nodes(grid, q);
        let m = grid.len();
        let comps = gk
            .components
            .iter()
            .map(|c| match c {
                GatingComponentKernel::Product { amplitude, spatial } => {
                    let mut table = vec![0.0; nodes.len() * m];
                    for (a, na) in nodes.iter().enumerate() {
                        for l in 0..m {
                            table[a * m + l] = nodes[l * q..(l + 1) * q]
                                .iter()
                                .map(|nb| nb.weight * spatial.eval(na.x, nb.x))
                                .sum();
                        }
                    }
                    ComponentTable::Product {
                        amplitude: amplitude.clone(),
                        table,
                    }
                }
                GatingComponentKernel::General(f) => ComponentTable::General(f.clone()),
            })
            .collect();
        let count = nodes.len();
        Ok(Self {
            grid,
            q,
            cutoff: gk.cutoff,
            nodes,
            comps,
            node_u: vec![0.0; count],
            node_x: vec![0.0; count * gk.d()],
            z: vec![0.0; count],
        })
    }

    pub fn d(&self) -> usize {
        self.comps.len()
    }

    /// Writes `sum_l b^n_{i,k,l}(u, x) <dW_i, 1_{I_l}>` for every component
    /// into `out` (d x (n+1), row-major).
    pub fn apply(&mut self, u: &[f64], x: &GatingBlock, inc: &NoiseIncrementSet, out: &mut [f64]) {
        let m = self.grid.len();
        let d = self.comps.len();
        let q = self.q;
        for (a, nd) in self.nodes.iter().enumerate() {
            self.node_u[a] = interp_slice(u, nd.x);
            for i in 0..d {
                self.node_x[a * d + i] = interp_slice(x.row(i), nd.x);
            }
        }
        for (i, comp) in self.comps.iter().enumerate() {
            let cells = inc.gating_cells(i);
            let row_out = &mut out[i * m..(i + 1) * m];
            match comp {
                ComponentTable::Product { amplitude, table } => {
                    for (a, z) in self.z.iter_mut().enumerate() {
                        let t = &table[a * m..(a + 1) * m];
                        *z = t.iter().zip(cells).map(|(c, w)| c * w).sum();
                    }
                    for (k, o) in row_out.iter_mut().enumerate() {
                        if self.cutoff && exits_unit_interval(x.row(i), k) {
                            *o = 0.0;
                            continue;
                        }
                        let mut acc = 0.0;
                        for a in k * q..(k + 1) * q {
                            let s = amplitude(self.node_u[a], &self.node_x[a * d..(a + 1) * d]);
                            acc += self.nodes[a].weight * s * self.z[a];
                        }
                        *o = acc;
                    }
                }
                ComponentTable::General(f) => {
                    for (k, o) in row_out.iter_mut().enumerate() {
                        if self.cutoff && exits_unit_interval(x.row(i), k) {
                            *o = 0.0;
                            continue;
                        }
                        let mut acc = 0.0;
                        for a in k * q..(k + 1) * q {
                            let xs = &self.node_x[a * d..(a + 1) * d];
                            for (l, cell) in cells.iter().enumerate() {
                                let mut avg = 0.0;
                                for nb in &self.nodes[l * q..(l + 1) * q] {
                                    avg += nb.weight * f(self.node_u[a], xs, self.nodes[a].x, nb.x);
                                }
                                acc += self.nodes[a].weight * avg * cell;
                            }
                        }
                        *o = acc;
                    }
                }
            }
        }
    }
}

/// Sample path of the discrete Ornstein-Uhlenbeck process
/// `dY = A^n Y dt + B^n dW^n`, `Y(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPath {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// `sup_t max_k |Y_k(t)|` over every step, not just recorded ones.
    pub xi: f64,
}

fn ou_steps(dt: f64, t_end: f64) -> Result<u64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be positive, got {dt}")));
    }
    if !(t_end >= dt) {
        return Err(Error::param("t_end", format!("must be at least dt, got {t_end}")));
    }
    Ok((t_end / dt + 1e-9).floor() as u64)
}

/// Semi-implicit Euler path of the discrete OU process, recording every
/// `record_every` steps.
pub fn simulate_discrete_ou(
    cov: &DiscreteCovariance,
    dt: f64,
    t_end: f64,
    stream: &NoiseStream,
    record_every: usize,
) -> Result<OuPath> {
    let mut path = OuPath {
        times: vec![0.0],
        snapshots: vec![vec![0.0; cov.grid.len()]],
        xi: 0.0,
    };
    let stride = record_every.max(1) as u64;
    path.xi = run_ou(cov, dt, t_end, stream, |step, y| {
        if step % stride == 0 {
            path.times.push(step as f64 * dt);
            path.snapshots.push(y.to_vec());
        }
    })?;
    Ok(path)
}

/// The statistic `xi^n = sup_t max_k |Y^n_k(t)|` without storing the path.
pub fn ou_sup_norm(cov: &DiscreteCovariance, dt: f64, t_end: f64, stream: &NoiseStream) -> Result<f64> {
    run_ou(cov, dt, t_end, stream, |_, _| {})
}

fn run_ou(
    cov: &DiscreteCovariance,
    dt: f64,
    t_end: f64,
    stream: &NoiseStream,
    mut observe: impl FnMut(u64, &[f64]),
) -> Result<f64> {
    let grid = cov.grid;
    grid.require_stencil()?;
    let steps = ou_steps(dt, t_end)?;
    let n = grid.n();
    let m = grid.len();
    let mut y = vec![0.0; m];
    if cov.is_zero() {
        for s in 1..=steps {
            observe(s, &y);
        }
        return Ok(0.0);
    }
    let fac = TridiagonalFactor::implicit_diffusion(n, dt * (n * n) as f64)?;
    let mut noise = vec![0.0; m];
    let mut xi: f64 = 0.0;
    for s in 1..=steps {
        let inc = sample_increments(grid, 0, dt, stream, s - 1)?;
        cov.apply_cells(inc.u_cells(), &mut noise);
        for (yk, z) in y.iter_mut().zip(&noise) {
            *yk += z;
        }
        fac.solve_in_place(&mut y);
        xi = y.iter().fold(xi, |acc, v| acc.max(v.abs()));
        observe(s, &y);
    }
    Ok(xi)
}
