//! Exact modal evolution of the controlled Stokes semigroup.
//!
//! States are coefficient vectors in the orthonormal eigenbasis. Controls act on the first
//! velocity component only and are restricted to the exponential family
//! `f_1(x, t) = sum_{j in S} q_j exp(-mu_j (t_e - t)) e_{j,1}(x) 1_omega(x)`, for which every
//! Duhamel integral has the closed form
//!
//! ```text
//! a_k(t_e) = a_k(t_s) exp(-mu_k tau) + sum_j q_j G_jk phi(mu_j + mu_k, tau),
//! phi(s, tau) = (1 - exp(-s tau)) / s.
//! ```

use faer::{Mat, MatRef};
use thiserror::Error;

use crate::ddouble::{Dd, DdMatrix};
use crate::grid::ObservationMask;
use crate::linalg;
use crate::spectral::{self, Component, StokesEigenbasis};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("negative time step {0}")]
    NegativeTime(f64),
    #[error("degenerate control interval [{0}, {1}]")]
    DegenerateInterval(f64, f64),
    #[error("mode index {index} out of range for {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },
    #[error("{0}")]
    Dimension(String),
    #[error("observation horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
}

/// `(1 - exp(-s tau)) / s`, continuous at `s = 0`.
#[inline]
pub fn duhamel_kernel(s: f64, tau: f64) -> f64 {
    if s == 0.0 {
        tau
    } else {
        -(-s * tau).exp_m1() / s
    }
}

/// `phi(s, tau)` in double-double.
pub fn duhamel_kernel_dd(s: Dd, tau: f64) -> Dd {
    if s.hi == 0.0 {
        Dd::new(tau)
    } else {
        Dd::one_minus_exp_neg(s.mul_f64(tau)) / s
    }
}

/// Eigenvalues plus the first-component observation Gram `G_1(omega)`: everything the
/// closed-form evolution needs. The Gram is also kept in double-double, accumulated from the
/// node values, for the ill-conditioned Gramian factorizations.
#[derive(Debug, Clone)]
pub struct ModalSystem {
    mu: Vec<f64>,
    gram: Mat<f64>,
    gram_dd: DdMatrix,
}

impl ModalSystem {
    pub fn new(basis: &StokesEigenbasis, mask: &ObservationMask) -> Self {
        let rows = spectral::component_rows(basis, Component::First, mask);
        let gram_dd = DdMatrix::gram_of(rows.as_ref());
        Self {
            mu: basis.eigenvalues().to_vec(),
            gram: gram_dd.to_f64(),
            gram_dd,
        }
    }

    pub fn from_parts(mu: Vec<f64>, gram: Mat<f64>) -> Result<Self, EvolutionError> {
        if gram.nrows() != mu.len() || gram.ncols() != mu.len() {
            return Err(EvolutionError::Dimension(format!(
                "Gram is {}x{} for {} modes",
                gram.nrows(),
                gram.ncols(),
                mu.len()
            )));
        }
        let gram_dd = DdMatrix::from_fn(mu.len(), |i, j| Dd::new(gram[(i, j)]));
        Ok(Self { mu, gram, gram_dd })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    pub fn gram(&self) -> MatRef<'_, f64> {
        self.gram.as_ref()
    }

    /// Number of leading modes with `mu_j <= lambda`.
    pub fn window_len(&self, lambda: f64) -> usize {
        self.mu.partition_point(|&m| m <= lambda)
    }

    /// `N(j, k) = G_jk phi(mu_j + mu_k, tau)` on the leading `k` modes: the Duhamel kernel
    /// shared by the observation functional and the control Gramian.
    pub fn duhamel_matrix(&self, modes: usize, tau: f64) -> Mat<f64> {
        Mat::from_fn(modes, modes, |i, j| {
            self.gram[(i, j)] * duhamel_kernel(self.mu[i] + self.mu[j], tau)
        })
    }

    /// [`Self::duhamel_matrix`] in double-double.
    pub fn duhamel_matrix_dd(&self, modes: usize, tau: f64) -> DdMatrix {
        DdMatrix::from_fn(modes, |i, j| {
            let s = Dd::new(self.mu[i]) + Dd::new(self.mu[j]);
            self.gram_dd[(i, j)] * duhamel_kernel_dd(s, tau)
        })
    }

    fn check_state(&self, state: &ModeCoeffs) -> Result<(), EvolutionError> {
        if state.len() != self.len() {
            return Err(EvolutionError::Dimension(format!(
                "state has {} modes, system has {}",
                state.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Coefficients of a divergence-free field in the orthonormal eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoeffs(pub Vec<f64>);

impl ModeCoeffs {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `H`-norm, which is the Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        linalg::norm2(&self.0)
    }

    /// Norm of the leading `k` coefficients.
    pub fn low_norm(&self, k: usize) -> f64 {
        linalg::norm2(&self.0[..k.min(self.len())])
    }

    /// Norm of the coefficients past index `k`.
    pub fn high_norm(&self, k: usize) -> f64 {
        linalg::norm2(&self.0[k.min(self.len())..])
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| c * x).collect())
    }
}

/// One active control interval of the exponential ansatz.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub t_start: f64,
    pub t_end: f64,
    pub sources: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ControlSignal {
    pub fn new(
        t_start: f64,
        t_end: f64,
        sources: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self, EvolutionError> {
        if !(t_end > t_start) {
            return Err(EvolutionError::DegenerateInterval(t_start, t_end));
        }
        if sources.len() != weights.len() {
            return Err(EvolutionError::Dimension(format!(
                "{} sources but {} weights",
                sources.len(),
                weights.len()
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            sources,
            weights,
        })
    }

    /// Signal with no sources: the state only decays.
    pub fn zero(t_start: f64, t_end: f64) -> Result<Self, EvolutionError> {
        Self::new(t_start, t_end, Vec::new(), Vec::new())
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| c * w).collect(),
            ..self.clone()
        }
    }

    /// `||f||^2_{L^2(omega x (t_s, t_e))} = sum q_j q_k G_jk phi(mu_j + mu_k, tau)`.
    pub fn norm_squared(&self, system: &ModalSystem) -> Result<f64, EvolutionError> {
        self.check(system)?;
        let tau = self.duration();
        let mut s = 0.0;
        for (a, (&j, &qj)) in self.sources.iter().zip(&self.weights).enumerate() {
            for (&k, &qk) in self.sources.iter().zip(&self.weights).skip(a) {
                let term = qj * qk * system.gram[(j, k)] * duhamel_kernel(system.mu[j] + system.mu[k], tau);
                s += if j == k { term } else { 2.0 * term };
            }
        }
        Ok(s.max(0.0))
    }

    /// Realized control `f_1(., t)` on the nodes; zero outside omega and outside the interval.
    pub fn evaluate(
        &self,
        basis: &StokesEigenbasis,
        mask: &ObservationMask,
        t: f64,
    ) -> Vec<f64> {
        let nodes = basis.grid().len();
        let mut f = vec![0.0; nodes];
        if t < self.t_start || t > self.t_end {
            return f;
        }
        let e1 = basis.component(Component::First);
        for (&j, &q) in self.sources.iter().zip(&self.weights) {
            let c = q * (-basis.eigenvalues()[j] * (self.t_end - t)).exp();
            for k in mask.active_nodes() {
                f[k] += c * e1[(k, j)];
            }
        }
        f
    }

    fn check(&self, system: &ModalSystem) -> Result<(), EvolutionError> {
        match self.sources.iter().find(|&&j| j >= system.len()) {
            Some(&index) => Err(EvolutionError::ModeOutOfRange {
                index,
                modes: system.len(),
            }),
            None => Ok(()),
        }
    }
}

/// Free evolution `a_j -> a_j exp(-mu_j tau)`.
pub fn decay(system: &ModalSystem, state: &ModeCoeffs, tau: f64) -> Result<ModeCoeffs, EvolutionError> {
    if tau < 0.0 {
        return Err(EvolutionError::NegativeTime(tau));
    }
    system.check_state(state)?;
    Ok(ModeCoeffs(
        state
            .0
            .iter()
            .zip(&system.mu)
            .map(|(a, m)| a * (-m * tau).exp())
            .collect(),
    ))
}

/// Evolves `state` across the signal's interval, including spillover into every mode.
pub fn apply_control(
    system: &ModalSystem,
    state: &ModeCoeffs,
    signal: &ControlSignal,
) -> Result<ModeCoeffs, EvolutionError> {
    let tau = signal.duration();
    if !(tau > 0.0) {
        return Err(EvolutionError::DegenerateInterval(signal.t_start, signal.t_end));
    }
    signal.check(system)?;
    let mut out = decay(system, state, tau)?;
    for (&j, &q) in signal.sources.iter().zip(&signal.weights) {
        if q == 0.0 {
            continue;
        }
        let mj = system.mu[j];
        for (k, a) in out.0.iter_mut().enumerate() {
            *a += q * system.gram[(j, k)] * duhamel_kernel(mj + system.mu[k], tau);
        }
    }
    Ok(out)
}

/// Value of the one-component observation of the free adjoint solution from `z0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub value: f64,
    /// The datum lies (numerically) in the kernel of the observation.
    pub in_kernel: bool,
}

/// `int_0^T int_omega |z_1|^2 = a^T N_T a` with `N_T(j, k) = G_jk phi(mu_j + mu_k, T)`.
pub fn adjoint_observe(
    system: &ModalSystem,
    z0: &ModeCoeffs,
    horizon: f64,
) -> Result<Observation, EvolutionError> {
    if !(horizon > 0.0) {
        return Err(EvolutionError::NonPositiveHorizon(horizon));
    }
    system.check_state(z0)?;
    let m = system.len();
    let a = z0.as_slice();
    let mut value = 0.0;
    let mut scale = 0.0;
    for j in 0..m {
        if a[j] == 0.0 {
            continue;
        }
        for k in 0..m {
            let t = a[j] * a[k] * system.gram[(j, k)] * duhamel_kernel(system.mu[j] + system.mu[k], horizon);
            value += t;
            scale += t.abs();
        }
    }
    let value = value.max(0.0);
    Ok(Observation {
        value,
        in_kernel: value <= 1e-14 * scale || scale == 0.0,
    })
}
