//! Fixtures shared by the integration targets. Eigenbases are solved once per process.
#![allow(dead_code)]

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stokeslab::{solve_buckling, Grid, ModalSystem, ModeCoeffs, ObservationMask, Rect, StokesEigenbasis};

pub fn omega() -> Rect {
    Rect::new(0.0, 0.3, 0.0, 0.3).unwrap()
}

pub fn mask(basis: &StokesEigenbasis) -> ObservationMask {
    basis.grid().mask(omega()).unwrap()
}

/// `N = 48`, 200 modes.
pub fn basis48() -> &'static StokesEigenbasis {
    static B: OnceLock<StokesEigenbasis> = OnceLock::new();
    B.get_or_init(|| solve_buckling(&Grid::new(48).unwrap(), 200).unwrap())
}

/// `N = 32`, 100 modes.
pub fn basis32() -> &'static StokesEigenbasis {
    static B: OnceLock<StokesEigenbasis> = OnceLock::new();
    B.get_or_init(|| solve_buckling(&Grid::new(32).unwrap(), 100).unwrap())
}

pub fn system48() -> &'static ModalSystem {
    static S: OnceLock<ModalSystem> = OnceLock::new();
    S.get_or_init(|| ModalSystem::new(basis48(), &mask(basis48())))
}

pub fn system32() -> &'static ModalSystem {
    static S: OnceLock<ModalSystem> = OnceLock::new();
    S.get_or_init(|| ModalSystem::new(basis32(), &mask(basis32())))
}

/// First five modes of the `N = 32` basis, observed on omega.
pub fn system5() -> ModalSystem {
    let b = basis32().truncated(5);
    ModalSystem::new(&b, &mask(&b))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random datum of unit `H` norm on `m` modes.
pub fn unit_state(m: usize, seed: u64) -> ModeCoeffs {
    let mut v = gaussian(m, &mut rng(seed));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    ModeCoeffs(v)
}

/// Cutoff halfway between `mu_k` and `mu_{k+1}`, so the window holds exactly `k` modes.
pub fn cutoff(mu: &[f64], k: usize) -> f64 {
    0.5 * (mu[k - 1] + mu[k])
}

/// `n` horizons spaced geometrically from `hi` down to `lo`.
pub fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| hi * (lo / hi).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Integrates `a_k' = -mu_k a_k + sum_j q_j G_jk exp(-mu_j (t_e - t))` over `[0, tau]` with the
/// Crank-Nicolson rule, then removes the leading `dt^2` error by Richardson extrapolation.
pub fn crank_nicolson(
    mu: &[f64],
    gram: impl Fn(usize, usize) -> f64,
    a0: &[f64],
    q: &[f64],
    tau: f64,
    steps: usize,
) -> Vec<f64> {
    let m = mu.len();
    let forcing = |k: usize, t: f64| -> f64 {
        (0..q.len())
            .map(|j| q[j] * gram(j, k) * (-mu[j] * (tau - t)).exp())
            .sum()
    };
    let run = |n: usize| -> Vec<f64> {
        let dt = tau / n as f64;
        (0..m)
            .map(|k| {
                let mut a = a0[k];
                for i in 0..n {
                    let (t0, t1) = (i as f64 * dt, (i + 1) as f64 * dt);
                    let rhs = a * (1.0 - 0.5 * dt * mu[k]) + 0.5 * dt * (forcing(k, t0) + forcing(k, t1));
                    a = rhs / (1.0 + 0.5 * dt * mu[k]);
                }
                a
            })
            .collect()
    };
    let (coarse, fine) = (run(steps), run(2 * steps));
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| f + (f - c) / 3.0)
        .collect()
}

/// Least-norm control on `[0, T]` for the window of `gram`, discretized by piecewise-constant
/// spatial profiles in `span{e_j1|omega}` on `steps` equal subintervals. Returns the squared cost.
///
/// The optimality system of `min sum_i dt c_i^T G c_i` subject to
/// `sum_i W_i G c_i = -D_T a` gives `c_i = W_i lambda / dt` and `M lambda = -D_T a` with
/// `M = sum_i W_i G W_i / dt`; the squared cost is `lambda^T M lambda`.
pub fn least_norm_qp(mu: &[f64], gram: impl Fn(usize, usize) -> f64, a: &[f64], horizon: f64, steps: usize) -> f64 {
    let k = a.len();
    let dt = horizon / steps as f64;
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..steps {
        let t1 = (i + 1) as f64 * dt;
        let w: Vec<f64> = (0..k)
            .map(|j| (-mu[j] * (horizon - t1)).exp() * (1.0 - (-mu[j] * dt).exp()) / mu[j])
            .collect();
        for r in 0..k {
            for c in 0..k {
                m[r][c] += w[r] * gram(r, c) * w[c] / dt;
            }
        }
    }
    let b: Vec<f64> = (0..k).map(|j| -(-mu[j] * horizon).exp() * a[j]).collect();
    let lambda = gauss_solve(m.clone(), b);
    (0..k)
        .map(|r| (0..k).map(|c| lambda[r] * m[r][c] * lambda[c]).sum::<f64>())
        .sum()
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}
