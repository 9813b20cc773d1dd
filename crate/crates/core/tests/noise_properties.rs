use std::f64::consts::PI;

use axonfd::grid::Grid1D;
use axonfd::noise::{
    aggregate_increments, aggregate_to, discretize_kernel, hs_distance_sq, sample_increments,
    simulate_discrete_ou, CovarianceKernel, NoiseStream,
};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn grid(n: usize) -> Grid1D {
    Grid1D::new(n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_composes_exactly(
        seed in any::<u64>(),
        step in 0u64..1_000_000,
        n_c in 2usize..6,
        m1 in prop::sample::select(vec![3usize, 5, 7]),
        m2 in prop::sample::select(vec![3usize, 5]),
        d in 0usize..3,
    ) {
        let fine = sample_increments(grid(n_c * m1 * m2), d, 1e-3, &NoiseStream::new(seed), step).unwrap();
        let two_stage = aggregate_increments(&aggregate_increments(&fine, m1).unwrap(), m2).unwrap();
        let direct = aggregate_increments(&fine, m1 * m2).unwrap();
        prop_assert_eq!(&two_stage, &direct);
        prop_assert_eq!(&aggregate_to(&fine, grid(n_c)).unwrap(), &direct);
        for (a, b) in two_stage.d_b().iter().zip(direct.d_b()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn increments_are_deterministic(seed in any::<u64>(), step in any::<u64>(), n in 2usize..40) {
        let s = NoiseStream::new(seed);
        let a = sample_increments(grid(n), 2, 1e-2, &s, step).unwrap();
        let b = sample_increments(grid(n), 2, 1e-2, &s, step).unwrap();
        prop_assert_eq!(&a, &b);
        let c = sample_increments(grid(n), 2, 1e-2, &s, step.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.u_mass(), c.u_mass());
    }

    #[test]
    fn aggregation_conserves_total_mass(seed in any::<u64>(), n_c in 2usize..8) {
        let fine = sample_increments(grid(9 * n_c), 1, 1e-4, &NoiseStream::new(seed), 3).unwrap();
        let coarse = aggregate_increments(&fine, 9).unwrap();
        prop_assert_eq!(fine.u_mass().iter().sum::<i64>(), coarse.u_mass().iter().sum::<i64>());
        prop_assert_eq!(fine.gating_mass().iter().sum::<i64>(), coarse.gating_mass().iter().sum::<i64>());
    }
}

/// Kolmogorov-Smirnov statistic of `z` against N(0, 1).
fn ks_statistic(mut z: Vec<f64>) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    z.sort_by(f64::total_cmp);
    let k = z.len() as f64;
    z.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = normal.cdf(v);
            (c - i as f64 / k).abs().max(((i + 1) as f64 / k - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn standardized_increments_pass_ks() {
    let dt = 2.5e-3;
    let stream = NoiseStream::new(77);
    let mut z = Vec::new();
    for step in 0..2000 {
        let inc = sample_increments(grid(9), 0, dt, &stream, step).unwrap();
        z.extend(inc.d_b().iter().map(|b| b / dt.sqrt()));
    }
    let k = z.len() as f64;
    // 0.1% critical value
    assert!(ks_statistic(z) < 1.95 / k.sqrt());
}

#[test]
fn aggregated_increments_pass_ks() {
    let dt = 1e-3;
    let stream = NoiseStream::new(5);
    let mut z = Vec::new();
    for step in 0..2000 {
        let fine = sample_increments(grid(45), 0, dt, &stream, step).unwrap();
        let coarse = aggregate_increments(&fine, 15).unwrap();
        z.extend(coarse.d_b().iter().map(|b| b / dt.sqrt()));
    }
    let k = z.len() as f64;
    assert!(ks_statistic(z) < 1.95 / k.sqrt());
}

#[test]
fn increments_differ_across_components() {
    let inc = sample_increments(grid(16), 3, 1e-2, &NoiseStream::new(1), 0).unwrap();
    assert_ne!(inc.d_b(), inc.d_bi(0));
    assert_ne!(inc.d_bi(0), inc.d_bi(1));
    assert_ne!(inc.d_bi(1), inc.d_bi(2));
}

#[test]
fn cosine_kernel_cell_averages() {
    // Cell averages of cos(pi x) over [0, 1/4], [1/4, 3/4], [3/4, 1] are
    // 2 sqrt 2 / pi, 0 and -2 sqrt 2 / pi.
    let cov = discretize_kernel(&CovarianceKernel::cosine(1.0), grid(2), 4).unwrap();
    let c = 8.0 / (PI * PI);
    assert!((cov.entry(0, 0) - 0.810_569_469_138_702).abs() < 1e-8);
    assert!((cov.entry(0, 0) - c).abs() < 1e-8);
    assert!((cov.entry(0, 2) + c).abs() < 1e-8);
    assert!(cov.entry(1, 1).abs() < 1e-12);
    assert!(cov.entry(0, 1).abs() < 1e-12);
}

#[test]
fn hs_distance_obeys_first_order_bound() {
    let k = CovarianceKernel::cosine(1.0);
    let mut prev = f64::INFINITY;
    for n in [8usize, 16, 32, 64] {
        let cov = discretize_kernel(&k, grid(n), 4).unwrap();
        let d2 = hs_distance_sq(&k, &cov, 4);
        assert!(d2 <= 2.0 * k.w12_norm_sq() / (n * n) as f64, "n = {n}: {d2}");
        assert!(d2 < prev);
        prev = d2;
    }
}

/// Dense Gauss-Jordan inverse.
fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let m = a.len();
    let mut inv: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| (i == j) as u8 as f64).collect()).collect();
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let piv = a[c][c];
        for j in 0..m {
            a[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for i in 0..m {
            if i != c {
                let f = a[i][c];
                for j in 0..m {
                    a[i][j] -= f * a[c][j];
                    inv[i][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    (0..m)
        .map(|i| (0..m).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    (0..m).map(|i| (0..m).map(|j| a[j][i]).collect()).collect()
}

#[test]
fn ou_variance_matches_lyapunov_recursion() {
    let n = 4;
    let m = n + 1;
    let g = grid(n);
    let (dt, t_end) = (0.01, 0.3);
    let kernel = CovarianceKernel::gaussian_bump(1.0, 0.3).unwrap();
    let cov = discretize_kernel(&kernel, g, 4).unwrap();

    // C_s = M (C_{s-1} + dt B D B^T) M^T with M = (I - dt A)^{-1}, D = diag |I_l|.
    let n2 = (n * n) as f64;
    let mut a = vec![vec![0.0; m]; m];
    for k in 0..m {
        a[k][k] = 1.0 + 2.0 * dt * n2;
        if k > 0 {
            a[k][k - 1] = -dt * n2;
        }
        if k < n {
            a[k][k + 1] = -dt * n2;
        }
    }
    a[0][1] = -2.0 * dt * n2;
    a[n][n - 1] = -2.0 * dt * n2;
    let mi = invert(a);
    let b: Vec<Vec<f64>> = (0..m).map(|k| cov.row(k).to_vec()).collect();
    let bd: Vec<Vec<f64>> = (0..m)
        .map(|k| (0..m).map(|l| b[k][l] * g.cell_width(l) * dt).collect())
        .collect();
    let q = matmul(&bd, &transpose(&b));
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut c = vec![vec![0.0; m]; m];
    for _ in 0..steps {
        let s: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| c[i][j] + q[i][j]).collect()).collect();
        c = matmul(&matmul(&mi, &s), &transpose(&mi));
    }

    let paths = 20_000;
    let mut second = vec![0.0; m];
    for p in 0..paths {
        let path = simulate_discrete_ou(&cov, dt, t_end, &NoiseStream::new(p), steps).unwrap();
        let y = path.snapshots.last().unwrap();
        for k in 0..m {
            second[k] += y[k] * y[k];
        }
    }
    for k in 0..m {
        let var = second[k] / paths as f64;
        assert!((var / c[k][k] - 1.0).abs() < 0.05, "node {k}: {var} vs {}", c[k][k]);
    }
}
