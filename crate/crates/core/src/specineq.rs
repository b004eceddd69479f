//! One-component spectral inequality: sharp constants, the square-root law fit, and the
//! augmented (`s`-extended) solutions used by the interpolation argument.
//!
//! For coefficients `a` supported in the window `J(Lambda) = { j : mu_j <= Lambda }`,
//!
//! ```text
//! sum |a_j|^2 <= C(Lambda) * int_omega |sum a_j e_{j,1}|^2
//! ```
//!
//! holds with the sharp constant `C(Lambda) = 1 / lambda_min(G_1(omega)|_J)`, because the
//! full-domain velocity Gram is the identity. The constant grows like `exp(K sqrt(Lambda))`, so
//! it is computed as `1 / sigma_min^2` of the restricted node values rather than from the Gram,
//! which would square the conditioning.

use std::io::{self, Write};

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::grid::ObservationMask;
use crate::linalg;
use crate::spectral::{self, Component, StokesEigenbasis};

/// Windows with `sigma_min <= SINGULAR_RTOL * sigma_max` on the restricted values are singular.
pub const SINGULAR_RTOL: f64 = 1e-14;

/// Threshold on `lambda_min / lambda_max` for Grams formed explicitly.
pub const GRAM_SINGULAR_RTOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecIneqError {
    #[error("window Lambda = {lambda} is empty (mu_1 = {mu1})")]
    EmptyWindow { lambda: f64, mu1: f64 },
    #[error(
        "restricted Gram is singular at Lambda = {lambda} ({modes} modes): lambda_min = {lambda_min:.3e}, lambda_max = {lambda_max:.3e}; observation region too small or mesh too coarse"
    )]
    Singular {
        lambda: f64,
        modes: usize,
        lambda_min: f64,
        lambda_max: f64,
    },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("constant {0} is not positive")]
    NonPositive(f64),
    #[error("abscissas are degenerate")]
    DegenerateAbscissas,
    #[error("{0}")]
    Dimension(String),
    #[error("eigensolver failed")]
    Eigen,
}

/// Low-frequency window `J(Lambda)`; modes are sorted, so it is a leading block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyWindow {
    pub cutoff: f64,
    pub modes: usize,
}

impl FrequencyWindow {
    pub fn new(mu: &[f64], cutoff: f64) -> Result<Self, SpecIneqError> {
        let modes = mu.partition_point(|&m| m <= cutoff);
        if modes == 0 {
            return Err(SpecIneqError::EmptyWindow {
                lambda: cutoff,
                mu1: mu.first().copied().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { cutoff, modes })
    }
}

/// Cutoffs halfway between consecutive eigenvalues: `(mu_k + mu_{k+1}) / 2` for each window
/// size `k` (1-based) in `sizes`.
pub fn midpoint_cutoffs(mu: &[f64], sizes: impl IntoIterator<Item = usize>) -> Vec<f64> {
    sizes
        .into_iter()
        .filter(|&k| k >= 1 && k < mu.len())
        .map(|k| 0.5 * (mu[k - 1] + mu[k]))
        .collect()
}

/// Sharp constant from the restricted first-component values `R` (`G_1(omega) = R^T R`).
pub fn best_constant_from_rows(
    rows: MatRef<'_, f64>,
    mu: &[f64],
    lambda: f64,
) -> Result<(FrequencyWindow, f64), SpecIneqError> {
    let window = FrequencyWindow::new(mu, lambda)?;
    if rows.nrows() < window.modes {
        return Err(SpecIneqError::Singular {
            lambda,
            modes: window.modes,
            lambda_min: 0.0,
            lambda_max: f64::NAN,
        });
    }
    let sv = rows
        .subcols(0, window.modes)
        .singular_values()
        .map_err(|_| SpecIneqError::Eigen)?;
    let hi = sv.iter().copied().fold(0.0, f64::max);
    let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lo > SINGULAR_RTOL * hi) {
        return Err(SpecIneqError::Singular {
            lambda,
            modes: window.modes,
            lambda_min: lo * lo,
            lambda_max: hi * hi,
        });
    }
    Ok((window, 1.0 / (lo * lo)))
}

/// Sharp constant from a precomputed Gram; reliable only while `C(Lambda) lambda_max` stays
/// below `1 / GRAM_SINGULAR_RTOL`.
pub fn best_constant_from_gram(
    gram: MatRef<'_, f64>,
    mu: &[f64],
    lambda: f64,
) -> Result<(FrequencyWindow, f64), SpecIneqError> {
    let window = FrequencyWindow::new(mu, lambda)?;
    let block = linalg::leading_block(gram, window.modes);
    let ev = linalg::sym_eigenvalues(block.as_ref()).map_err(|_| SpecIneqError::Eigen)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > GRAM_SINGULAR_RTOL * hi) {
        return Err(SpecIneqError::Singular {
            lambda,
            modes: window.modes,
            lambda_min: lo,
            lambda_max: hi,
        });
    }
    Ok((window, 1.0 / lo))
}

pub fn best_constant(
    basis: &StokesEigenbasis,
    mask: &ObservationMask,
    lambda: f64,
) -> Result<f64, SpecIneqError> {
    let rows = spectral::component_rows(basis, Component::First, mask);
    best_constant_from_rows(rows.as_ref(), basis.eigenvalues(), lambda).map(|(_, c)| c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSample {
    pub lambda: f64,
    pub modes: usize,
    pub constant: f64,
}

/// `C(Lambda)` for every cutoff, sharing one restriction.
pub fn constant_curve(
    basis: &StokesEigenbasis,
    mask: &ObservationMask,
    lambdas: &[f64],
) -> Result<Vec<ConstantSample>, SpecIneqError> {
    let rows = spectral::component_rows(basis, Component::First, mask);
    lambdas
        .iter()
        .map(|&lambda| {
            best_constant_from_rows(rows.as_ref(), basis.eigenvalues(), lambda).map(
                |(w, constant)| ConstantSample {
                    lambda,
                    modes: w.modes,
                    constant,
                },
            )
        })
        .collect()
}

/// `CSV` with header `Lambda,modes,C,logC,sqrtLambda`.
pub fn write_curve_csv<W: Write>(samples: &[ConstantSample], mut w: W) -> io::Result<()> {
    writeln!(w, "Lambda,modes,C,logC,sqrtLambda")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.lambda,
            s.modes,
            s.constant,
            s.constant.ln(),
            s.lambda.sqrt()
        )?;
    }
    Ok(())
}

/// Least-squares fit of `log C = log M + K sqrt(Lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtLawFit {
    pub log_m: f64,
    pub k: f64,
    pub r_squared: f64,
    pub samples: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SqrtLawFit {
    pub fn m(&self) -> f64 {
        self.log_m.exp()
    }

    /// Plain-text report: `M`, `K`, `R^2` and the fitted window.
    pub fn write_report<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "model = sqrt-Lambda")?;
        writeln!(w, "M = {}", self.m())?;
        writeln!(w, "logM = {}", self.log_m)?;
        writeln!(w, "K = {}", self.k)?;
        writeln!(w, "R2 = {}", self.r_squared)?;
        writeln!(w, "samples = {}", self.samples)?;
        writeln!(w, "window = {},{}", self.lambda_min, self.lambda_max)
    }
}

pub fn fit_sqrt_law(points: &[(f64, f64)]) -> Result<SqrtLawFit, SpecIneqError> {
    if points.len() < 5 {
        return Err(SpecIneqError::TooFewSamples {
            need: 5,
            got: points.len(),
        });
    }
    if let Some(&(_, c)) = points.iter().find(|(_, c)| !(*c > 0.0)) {
        return Err(SpecIneqError::NonPositive(c));
    }
    let xs: Vec<f64> = points.iter().map(|(l, _)| l.sqrt()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, c)| c.ln()).collect();
    let line = crate::fit::linear_fit(&xs, &ys).ok_or(SpecIneqError::DegenerateAbscissas)?;
    let lambdas = points.iter().map(|p| p.0);
    Ok(SqrtLawFit {
        log_m: line.intercept,
        k: line.slope,
        r_squared: line.r_squared,
        samples: points.len(),
        lambda_min: lambdas.clone().fold(f64::INFINITY, f64::min),
        lambda_max: lambdas.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `A_j(s) = a_j sinh(s sqrt(mu_j)) / sqrt(mu_j)`.
pub fn augmented_coeffs(a: &[f64], mu: &[f64], s: f64) -> Vec<f64> {
    a.iter()
        .zip(mu)
        .map(|(&aj, &m)| {
            let r = m.sqrt();
            aj * (s * r).sinh() / r
        })
        .collect()
}

/// `d/ds A_j(s) = a_j cosh(s sqrt(mu_j))`.
pub fn augmented_coeffs_ds(a: &[f64], mu: &[f64], s: f64) -> Vec<f64> {
    a.iter()
        .zip(mu)
        .map(|(&aj, &m)| aj * (s * m.sqrt()).cosh())
        .collect()
}

/// Samples of the augmented field `v_Lambda(s, .) = sum_j A_j(s) Delta_h e_{j,1}`.
#[derive(Debug, Clone)]
pub struct AugmentedField {
    pub s: Vec<f64>,
    /// `coeffs[k][j] = A_j(s_k)`.
    pub coeffs: Vec<Vec<f64>>,
    /// `fields[k]` is `v_Lambda(s_k, .)` on the interior nodes.
    pub fields: Vec<Vec<f64>>,
}

impl AugmentedField {
    pub fn new(
        basis: &StokesEigenbasis,
        a: &[f64],
        s_samples: &[f64],
    ) -> Result<Self, SpecIneqError> {
        if a.len() > basis.len() {
            return Err(SpecIneqError::Dimension(format!(
                "{} coefficients for a basis of {} modes",
                a.len(),
                basis.len()
            )));
        }
        let mu = &basis.eigenvalues()[..a.len()];
        let lap: Vec<Vec<f64>> = (0..a.len())
            .map(|j| basis.first_component_laplacian(j))
            .collect();
        let coeffs: Vec<Vec<f64>> = s_samples
            .iter()
            .map(|&s| augmented_coeffs(a, mu, s))
            .collect();
        let fields = coeffs.iter().map(|c| combine(&lap, c, basis.grid().len())).collect();
        Ok(Self {
            s: s_samples.to_vec(),
            coeffs,
            fields,
        })
    }
}

fn combine(vectors: &[Vec<f64>], c: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (v, &cj) in vectors.iter().zip(c) {
        if cj != 0.0 {
            out.iter_mut().zip(v).for_each(|(o, x)| *o += cj * x);
        }
    }
    out
}

/// Gram `<Delta_h e_{j,1}, Delta_h e_{k,1}>` over the whole square for the leading `k` modes.
pub fn laplacian_component_gram(basis: &StokesEigenbasis, k: usize) -> Mat<f64> {
    let nodes = basis.grid().len();
    let cols: Vec<Vec<f64>> = (0..k).map(|j| basis.first_component_laplacian(j)).collect();
    let w = Mat::from_fn(nodes, k, |i, j| cols[j][i]);
    let h2 = basis.grid().h() * basis.grid().h();
    let mut g = w.transpose() * &w;
    for j in 0..k {
        for i in 0..k {
            g[(i, j)] *= h2;
        }
    }
    linalg::symmetrize(&mut g);
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaA1Report {
    pub window: FrequencyWindow,
    /// Sharp constant `1 / lambda_min` of the Laplacian-component Gram.
    pub constant: f64,
    /// Largest `sum |A_j(s)|^2 / ||v_Lambda(s)||^2` over the random draws and `s` samples.
    pub empirical_max_ratio: f64,
    pub draws: usize,
}

/// Smallest `C` with `sum_{mu_j <= Lambda} |A_j(s)|^2 <= C ||v_Lambda(s, .)||^2`.
///
/// The sharp value is an eigenvalue; the random draws, pushed through the actual field
/// assembly at every `s`, give an independent lower estimate that must never exceed it.
pub fn lemma_a1_constant<R: Rng + ?Sized>(
    basis: &StokesEigenbasis,
    lambda: f64,
    s_samples: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<LemmaA1Report, SpecIneqError> {
    let window = FrequencyWindow::new(basis.eigenvalues(), lambda)?;
    let gram = laplacian_component_gram(basis, window.modes);
    let ev = linalg::sym_eigenvalues(gram.as_ref()).map_err(|_| SpecIneqError::Eigen)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(lo > GRAM_SINGULAR_RTOL * hi) {
        return Err(SpecIneqError::Singular {
            lambda,
            modes: window.modes,
            lambda_min: lo,
            lambda_max: hi,
        });
    }
    let grid = basis.grid();
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let a: Vec<f64> = (0..window.modes).map(|_| rng.sample(StandardNormal)).collect();
        let field = AugmentedField::new(basis, &a, s_samples)?;
        for (c, v) in field.coeffs.iter().zip(&field.fields) {
            let num: f64 = c.iter().map(|x| x * x).sum();
            let den = grid.inner_product(v, v, None).expect("field shape");
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
    }
    Ok(LemmaA1Report {
        window,
        constant: 1.0 / lo,
        empirical_max_ratio: worst,
        draws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VhatResidual {
    /// `max_s ||-d_ss v - Delta_x v||`.
    pub residual: f64,
    /// `max_s ||v(s, .)||`.
    pub field_norm: f64,
}

/// Discrete residual of `-d_ss v_Lambda - Delta_x v_Lambda = 0`.
///
/// With `d_ss A_j = mu_j A_j` exactly, the residual at `s` reduces to
/// `-sum_j A_j(s) Dy (B - mu_j A) psi_j`, the pencil residuals pushed through the first
/// velocity component.
pub fn vhat_residual(
    basis: &StokesEigenbasis,
    lambda: f64,
    a: &[f64],
    s_samples: &[f64],
) -> Result<VhatResidual, SpecIneqError> {
    let window = FrequencyWindow::new(basis.eigenvalues(), lambda)?;
    if a.len() != window.modes {
        return Err(SpecIneqError::Dimension(format!(
            "{} coefficients for a window of {} modes",
            a.len(),
            window.modes
        )));
    }
    let grid = basis.grid();
    let dy = spectral::difference_y(grid);
    let mu = &basis.eigenvalues()[..window.modes];
    let pushed: Vec<Vec<f64>> = (0..window.modes)
        .map(|j| {
            let psi = basis.stream_function(j);
            let b = basis.stiffness().mul_vec(&psi);
            let m = basis.mass().mul_vec(&psi);
            let r: Vec<f64> = b.iter().zip(&m).map(|(b, m)| -(b - mu[j] * m)).collect();
            dy.mul_vec(&r)
        })
        .collect();
    let field = AugmentedField::new(basis, a, s_samples)?;
    let mut out = VhatResidual {
        residual: 0.0,
        field_norm: 0.0,
    };
    for (c, v) in field.coeffs.iter().zip(&field.fields) {
        let r = combine(&pushed, c, grid.len());
        out.residual = out.residual.max(grid.norm(&r, None).expect("field shape"));
        out.field_norm = out.field_norm.max(grid.norm(v, None).expect("field shape"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_fit_recovers_synthetic_law() {
        let pts: Vec<(f64, f64)> = (1..=20)
            .map(|i| {
                let l = 10.0 * i as f64;
                (l, (1.0 + 2.0 * l.sqrt()).exp())
            })
            .collect();
        let f = fit_sqrt_law(&pts).unwrap();
        assert!((f.log_m - 1.0).abs() < 1e-10);
        assert!((f.k - 2.0).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-10);
        assert_eq!((f.lambda_min, f.lambda_max), (10.0, 200.0));
    }

    #[test]
    fn sqrt_fit_constant_data_has_zero_slope() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64 * 5.0, 7.0)).collect();
        let f = fit_sqrt_law(&pts).unwrap();
        assert!(f.k.abs() < 1e-12);
        assert!((f.m() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_fit_errors() {
        let pts: Vec<(f64, f64)> = (1..=4).map(|i| (i as f64, 1.0)).collect();
        assert!(matches!(fit_sqrt_law(&pts), Err(SpecIneqError::TooFewSamples { .. })));
        let pts: Vec<(f64, f64)> = (1..=5).map(|_| (4.0, 2.0)).collect();
        assert_eq!(fit_sqrt_law(&pts), Err(SpecIneqError::DegenerateAbscissas));
        let mut pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, 2.0)).collect();
        pts[2].1 = 0.0;
        assert_eq!(fit_sqrt_law(&pts), Err(SpecIneqError::NonPositive(0.0)));
    }

    #[test]
    fn window_and_midpoints() {
        let mu = [1.0, 2.0, 2.0, 5.0];
        assert_eq!(FrequencyWindow::new(&mu, 2.0).unwrap().modes, 3);
        assert!(FrequencyWindow::new(&mu, 0.5).is_err());
        assert_eq!(midpoint_cutoffs(&mu, [1, 3, 4]), vec![1.5, 3.5]);
    }

    #[test]
    fn augmented_coefficients_boundary_data() {
        let a = [0.3, -1.2, 2.0];
        let mu = [52.0, 92.0, 128.0];
        assert!(augmented_coeffs(&a, &mu, 0.0).iter().all(|&x| x == 0.0));
        assert_eq!(augmented_coeffs_ds(&a, &mu, 0.0), a.to_vec());
        // d_ss A = mu A, checked by a centered second difference
        let (s, d) = (0.4, 1e-4);
        let (lo, mid, hi) = (
            augmented_coeffs(&a, &mu, s - d),
            augmented_coeffs(&a, &mu, s),
            augmented_coeffs(&a, &mu, s + d),
        );
        for j in 0..3 {
            let fd = (hi[j] - 2.0 * mid[j] + lo[j]) / (d * d);
            assert!((fd - mu[j] * mid[j]).abs() <= 1e-5 * (mu[j] * mid[j]).abs());
        }
    }
}
