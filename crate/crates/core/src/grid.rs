//! Discrete spatial calculus on the uniform grid {0, 1/n, ..., 1}.
//!
//! Grid functions carry all n+1 nodal values including both endpoints. The
//! trapezoid-weighted inner product
//!
//! ```text
//! <u, v>_n = (u_0 v_0 + u_n v_n) / (2n) + (1/n) sum_{k=1}^{n-1} u_k v_k
//! ```
//!
//! makes the corner-corrected Neumann Laplacian `A^n` self-adjoint, and
//! `<A^n v, u>_n = -n sum_k (v_k - v_{k-1})(u_k - u_{k-1})`.
//!
//! Each node k owns a control cell `I_k`: the half cells `(0, 1/(2n))` and
//! `(1 - 1/(2n), 1)` at the ends, and `((2k-1)/(2n), (2k+1)/(2n))` inside.
//! The cells partition (0, 1) and are used by the noise projections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
}

impl Grid1D {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("n must be positive".into()));
        }
        if n > u16::MAX as usize {
            return Err(Error::InvalidGrid(format!("n = {n} exceeds {}", u16::MAX)));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes, n + 1.
    #[inline]
    pub fn len(&self) -> usize {
        self.n + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.point(k)).collect()
    }

    /// Open interval `I_k` as (left, right).
    pub fn cell(&self, k: usize) -> (f64, f64) {
        let two_n = 2.0 * self.n as f64;
        let left = if k == 0 { 0.0 } else { (2 * k - 1) as f64 / two_n };
        let right = if k == self.n {
            1.0
        } else {
            (2 * k + 1) as f64 / two_n
        };
        (left, right)
    }

    #[inline]
    pub fn cell_width(&self, k: usize) -> f64 {
        if k == 0 || k == self.n {
            0.5 / self.n as f64
        } else {
            1.0 / self.n as f64
        }
    }

    pub fn cell_widths(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.cell_width(k)).collect()
    }

    /// Operations built on the three-point stencil need n >= 2.
    pub fn require_stencil(&self) -> Result<()> {
        if self.n < 2 {
            Err(Error::InvalidGrid(format!(
                "n = {} is too coarse; the boundary stencils overlap for n < 2",
                self.n
            )))
        } else {
            Ok(())
        }
    }

    pub fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self.n != other.n {
            Err(Error::GridMismatch {
                expected: self.n,
                found: other.n,
            })
        } else {
            Ok(())
        }
    }
}

/// Nodal values of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid1D,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The d x (n+1) array of gating variables, stored row-major by component.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingBlock {
    grid: Grid1D,
    d: usize,
    values: Vec<f64>,
}

impl GatingBlock {
    pub fn new(grid: Grid1D, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "need at least one gating component"));
        }
        if values.len() != d * grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} gating values, got {}",
                d * grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gating component {} at node {}",
                k / grid.len(),
                k % grid.len()
            )));
        }
        Ok(Self { grid, d, values })
    }

    pub fn from_rows(grid: Grid1D, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::new(grid, d, flat)
    }

    pub fn constant(grid: Grid1D, levels: &[f64]) -> Result<Self> {
        Self::from_rows(grid, levels.iter().map(|&c| vec![c; grid.len()]).collect())
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let m = self.grid.len();
        &mut self.values[i * m..(i + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Component values at node k.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.d).map(|i| self.row(i)[k]).collect()
    }

    pub fn component(&self, i: usize) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.row(i).to_vec(),
        }
    }
}

/// `(A^n v)` written into `out`. Requires `v.len() >= 3`.
pub(crate) fn laplacian_into(v: &[f64], out: &mut [f64]) {
    let n = v.len() - 1;
    let n2 = (n * n) as f64;
    out[0] = 2.0 * n2 * (v[1] - v[0]);
    for k in 1..n {
        out[k] = n2 * (v[k + 1] - 2.0 * v[k] + v[k - 1]);
    }
    out[n] = -2.0 * n2 * (v[n] - v[n - 1]);
}

pub fn discrete_laplacian(v: &GridFunction) -> Result<GridFunction> {
    v.grid.require_stencil()?;
    let mut out = vec![0.0; v.values.len()];
    laplacian_into(&v.values, &mut out);
    Ok(GridFunction {
        grid: v.grid,
        values: out,
    })
}

pub(crate) fn weighted_inner_slices(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() - 1;
    let ends = a[0] * b[0] + a[n] * b[n];
    let interior: f64 = a[1..n].iter().zip(&b[1..n]).map(|(x, y)| x * y).sum();
    (0.5 * ends + interior) / n as f64
}

/// `<u, v>_n`.
pub fn weighted_inner(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    Ok(weighted_inner_slices(&u.values, &v.values))
}

/// `|v|_n^2`, the trapezoid-weighted discrete L2 norm squared.
pub fn weighted_norm_sq(v: &GridFunction) -> f64 {
    weighted_inner_slices(&v.values, &v.values)
}

pub(crate) fn seminorm_sq_slice(v: &[f64]) -> f64 {
    let n = v.len() - 1;
    n as f64 * v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>()
}

/// `||v||_n^2 = n sum_k (v_k - v_{k-1})^2`.
pub fn difference_seminorm_sq(v: &GridFunction) -> f64 {
    seminorm_sq_slice(&v.values)
}

/// Piecewise-linear interpolant of nodal values, evaluated without range checks.
#[inline]
pub(crate) fn interp_slice(v: &[f64], x: f64) -> f64 {
    let n = v.len() - 1;
    let nx = n as f64 * x;
    let k = (nx.ceil() as usize).clamp(1, n);
    let lam = nx - (k - 1) as f64;
    lam * v[k] + (1.0 - lam) * v[k - 1]
}

pub fn interpolate(v: &GridFunction, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(interp_slice(&v.values, x))
}

/// Pointwise sampling `values_k = u(k/n)`.
pub fn restrict_function(u: impl Fn(f64) -> f64, grid: Grid1D) -> Result<GridFunction> {
    GridFunction::new(grid, grid.points().into_iter().map(u).collect())
}

fn merged_breakpoints(ns: &[usize]) -> Vec<f64> {
    let mut pts: Vec<f64> = ns
        .iter()
        .flat_map(|&n| (0..=n).map(move |k| k as f64 / n as f64))
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    pts
}

/// L2(0,1) distance between the interpolants of two grid functions.
///
/// The integration mesh is the union of both grids' breakpoints and a uniform
/// mesh of `quad_n` cells. On each piece the difference is linear, so the
/// 2-point Gauss rule integrates its square exactly.
pub fn interpolant_l2_distance(v: &GridFunction, w: &GridFunction, quad_n: usize) -> Result<f64> {
    interpolant_l2_distance_sq_slices(&v.values, &w.values, quad_n).map(f64::sqrt)
}

pub(crate) fn interpolant_l2_distance_sq_slices(v: &[f64], w: &[f64], quad_n: usize) -> Result<f64> {
    let nv = v.len() - 1;
    let nw = w.len() - 1;
    let fine = nv.max(nw);
    if quad_n < fine {
        return Err(Error::param(
            "quad_n",
            format!("{quad_n} is coarser than the data grid n = {fine}"),
        ));
    }
    let g = GaussLegendre::new(2);
    // Nested grids: the finer mesh already contains every breakpoint.
    let pts = if quad_n.is_multiple_of(nv) && quad_n.is_multiple_of(nw) {
        (0..=quad_n).map(|k| k as f64 / quad_n as f64).collect()
    } else {
        merged_breakpoints(&[nv, nw, quad_n])
    };
    let mut acc = 0.0;
    for seg in pts.windows(2) {
        acc += g.integrate(seg[0], seg[1], |x| {
            let diff = interp_slice(v, x) - interp_slice(w, x);
            diff * diff
        });
    }
    Ok(acc)
}

/// L2(0,1) distance between the interpolant of `v` and a continuous function,
/// with a `order`-point Gauss rule on `quad_n` uniform cells refined by the
/// grid's breakpoints.
pub fn l2_distance_to_fn(
    v: &GridFunction,
    f: impl Fn(f64) -> f64,
    quad_n: usize,
    order: usize,
) -> Result<f64> {
    let n = v.grid.n();
    if quad_n < n {
        return Err(Error::param(
            "quad_n",
            format!("{quad_n} is coarser than the data grid n = {n}"),
        ));
    }
    let g = GaussLegendre::new(order);
    let pts = if quad_n.is_multiple_of(n) {
        (0..=quad_n).map(|k| k as f64 / quad_n as f64).collect()
    } else {
        merged_breakpoints(&[n, quad_n])
    };
    let mut acc = 0.0;
    for seg in pts.windows(2) {
        acc += g.integrate(seg[0], seg[1], |x| {
            let diff = interp_slice(&v.values, x) - f(x);
            diff * diff
        });
    }
    Ok(acc.sqrt())
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}
