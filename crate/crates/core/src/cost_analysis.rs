//! Observability constants, cost-versus-horizon curves, exponent-law fitting and the
//! approximate-observability bookkeeping check.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::control::{self, ControlError};
use crate::ddouble::{Dd, DdMatrix};
use crate::evolution::{self, ModalSystem, ModeCoeffs};
use crate::fit::linear_fit;
use crate::grid::Rect;
use crate::linalg;

/// Candidate exponents `p` of `log C = alpha + beta T^{-p}`.
pub const CANDIDATE_EXPONENTS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 9.0];

/// Default resolution-floor factor: `T_min = KAPPA / sqrt(Lambda_max)`.
pub const DEFAULT_KAPPA: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("empty observation window at Lambda = {0}")]
    EmptyWindow(f64),
    #[error("observation horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("observation matrix is singular even after Tikhonov jitter {jitter:.3e} (T = {horizon})")]
    Singular { horizon: f64, jitter: f64 },
    #[error("no sample of the {0} curve succeeded")]
    EmptyCurve(CurveKind),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("samples span a factor {0:.3} in T, need at least 4")]
    NarrowSpan(f64),
    #[error("value {0} is not positive")]
    NonPositive(f64),
    #[error("degenerate abscissas for exponent {0}")]
    Degenerate(f64),
    #[error("invalid Lemma parameters: {0}")]
    Parameters(String),
    #[error("missing initial state for the {0} curve")]
    MissingState(CurveKind),
    #[error("eigensolver failed")]
    Eigen,
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsConstant {
    pub value: f64,
    pub modes: usize,
    /// A Tikhonov jitter `1e-14 trace` had to be added to `N_T`.
    pub jittered: bool,
}

/// Extended-precision Cholesky factor of `N_T` on the leading `modes`, with at most one
/// jitter.
fn factor_observation(
    system: &ModalSystem,
    modes: usize,
    horizon: f64,
) -> Result<(DdMatrix, bool), CostError> {
    let mut n = system.duhamel_matrix_dd(modes, horizon);
    if let Some(l) = n.cholesky() {
        return Ok((l, false));
    }
    let jitter = n.trace().mul_f64(1e-14);
    for i in 0..modes {
        n[(i, i)] += jitter;
    }
    n.cholesky().map(|l| (l, true)).ok_or(CostError::Singular {
        horizon,
        jitter: jitter.to_f64(),
    })
}

/// Largest eigenvalue of the pencil `(diag(v), N_T)` as `lambda_max(L^{-1} diag(v) L^{-T})`.
fn pencil_lambda_max(factor: &DdMatrix, v: &[Dd]) -> Result<f64, CostError> {
    let inv = factor.lower_inverse_scaled_dd(&vec![Dd::ONE; factor.n()]);
    let m = inv.lower_congruence(v);
    let ev = linalg::sym_eigenvalues(m.as_ref()).map_err(|_| CostError::Eigen)?;
    Ok(ev[ev.len() - 1])
}

fn decay_sq(mu: &[f64], horizon: f64) -> Vec<Dd> {
    mu.iter().map(|&m| Dd::new(-2.0 * m).mul_f64(horizon).exp()).collect()
}

/// Smallest `C` with `||z(T)||_H <= C (int_0^T int_omega |z_1|^2)^{1/2}` on the window
/// `J(Lambda_max)`: `C^2 = lambda_max` of the pencil `(D_T, N_T)`, `D_T = diag(exp(-2 mu_j T))`.
pub fn obs_constant(system: &ModalSystem, lambda_max: f64, horizon: f64) -> Result<ObsConstant, CostError> {
    if !(horizon > 0.0) {
        return Err(CostError::NonPositiveHorizon(horizon));
    }
    let modes = system.window_len(lambda_max);
    if modes == 0 {
        return Err(CostError::EmptyWindow(lambda_max));
    }
    let (l, jittered) = factor_observation(system, modes, horizon)?;
    let top = pencil_lambda_max(&l, &decay_sq(&system.eigenvalues()[..modes], horizon))?;
    Ok(ObsConstant {
        value: top.max(0.0).sqrt(),
        modes,
        jittered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Observability,
    LrCost,
    HumCost,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::Observability => "observability",
            CurveKind::LrCost => "lr-cost",
            CurveKind::HumCost => "hum-cost",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    /// Window cutoff (observability, HUM) or schedule cap (Lebeau-Robbiano).
    pub lambda_max: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub ratio: f64,
    /// Intervals spent at the cap after the cutoff reaches it.
    pub extra_intervals: usize,
    pub target: f64,
    pub penalty: f64,
    /// Initial datum for the cost curves.
    pub state: Option<ModeCoeffs>,
    pub mesh_n: usize,
    pub omega: Rect,
}

impl CurveConfig {
    pub fn floor(&self) -> f64 {
        self.kappa / self.lambda_max.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub t: f64,
    pub value: Option<f64>,
    /// Minimal null-control cost reaching the same window state, for `lr-cost` samples.
    pub lower_bound: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostCurve {
    pub kind: CurveKind,
    pub samples: Vec<CurveSample>,
    pub lambda_max: f64,
    pub modes: usize,
    pub mesh_n: usize,
    pub omega: Rect,
    pub floor: f64,
}

impl CostCurve {
    /// `(T, C)` pairs of the successful samples.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|s| s.value.map(|v| (s.t, v)))
            .collect()
    }

    /// `CSV` header `T,C,logC,inv_T,status`; failed samples leave the numeric fields empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "T,C,logC,inv_T,status")?;
        for s in &self.samples {
            match s.value {
                Some(c) => writeln!(w, "{},{},{},{},{}", s.t, c, c.ln(), 1.0 / s.t, s.status)?,
                None => writeln!(w, "{},,,{},{}", s.t, 1.0 / s.t, s.status)?,
            }
        }
        Ok(())
    }
}

fn csv_safe(msg: &str) -> String {
    msg.replace([',', '\n'], ";")
}

/// Samples one constant-versus-horizon curve. Horizons below the resolution floor
/// `kappa / sqrt(Lambda_max)` and per-sample failures are recorded, not fatal.
pub fn cost_curve(
    kind: CurveKind,
    horizons: &[f64],
    system: &ModalSystem,
    config: &CurveConfig,
) -> Result<CostCurve, CostError> {
    let floor = config.floor();
    if kind != CurveKind::Observability && config.state.is_none() {
        return Err(CostError::MissingState(kind));
    }
    let mut samples = Vec::with_capacity(horizons.len());
    for &t in horizons {
        if t < floor {
            samples.push(CurveSample {
                t,
                value: None,
                lower_bound: None,
                status: "below-floor".into(),
            });
            continue;
        }
        let outcome = match kind {
            CurveKind::Observability => obs_constant(system, config.lambda_max, t).map(|c| {
                let status = if c.jittered { "ok-jittered" } else { "ok" };
                (c.value, None, status.to_string())
            }),
            CurveKind::LrCost => lr_sample(system, config, t),
            CurveKind::HumCost => {
                let state = config.state.as_ref().expect("checked above");
                control::hum_penalized(system, state, t, config.penalty, config.lambda_max)
                    .map(|h| (h.cost, None, "ok".to_string()))
                    .map_err(CostError::from)
            }
        };
        samples.push(match outcome {
            Ok((value, lower_bound, status)) => CurveSample {
                t,
                value: Some(value),
                lower_bound,
                status,
            },
            Err(e) => CurveSample {
                t,
                value: None,
                lower_bound: None,
                status: csv_safe(&e.to_string()),
            },
        });
    }
    let curve = CostCurve {
        kind,
        samples,
        lambda_max: config.lambda_max,
        modes: system.window_len(config.lambda_max),
        mesh_n: config.mesh_n,
        omega: config.omega,
        floor,
    };
    if curve.points().is_empty() {
        return Err(CostError::EmptyCurve(kind));
    }
    Ok(curve)
}

fn lr_sample(
    system: &ModalSystem,
    config: &CurveConfig,
    t: f64,
) -> Result<(f64, Option<f64>, String), CostError> {
    let state = config.state.as_ref().expect("checked by caller");
    let intervals = control::intervals_to_cap(t, config.epsilon, config.lambda_max, config.extra_intervals);
    let schedule = control::lr_schedule(t, config.epsilon, config.ratio, config.lambda_max, intervals)?;
    let report = control::run_lr(system, state, &schedule, config.target)?;
    let bound = steering_lower_bound(system, state, &report.terminal_state, config.lambda_max, t)?;
    let ratio = report.total_cost / bound;
    Ok((report.total_cost, Some(bound), format!("ok;lr/bound={ratio:.6}")))
}

/// Minimal `L^2(omega x (0, T))` norm of any control taking the window coefficients of
/// `initial` to those of `terminal` at time `T`: `sqrt(c^T W_T^{-1} c)`,
/// `c = terminal_low - D_T initial_low`. A lower bound for every controller reaching `terminal`.
pub fn steering_lower_bound(
    system: &ModalSystem,
    initial: &ModeCoeffs,
    terminal: &ModeCoeffs,
    lambda: f64,
    horizon: f64,
) -> Result<f64, CostError> {
    let gramian = control::build_gramian(system, lambda, horizon)?;
    let k = gramian.modes();
    let c: Vec<f64> = (0..k)
        .map(|j| terminal.0[j] - (-system.eigenvalues()[j] * horizon).exp() * initial.0[j])
        .collect();
    let x = gramian.solve(&c);
    Ok(linalg::dot(&c, &x).max(0.0).sqrt())
}

/// Residual evidence for one exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentRow {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
    pub residual: f64,
    /// One row per candidate exponent.
    pub table: Vec<ExponentRow>,
}

impl ExponentFit {
    pub fn row(&self, p: f64) -> Option<&ExponentRow> {
        self.table.iter().find(|r| r.p == p)
    }

    /// `log C` predicted by the fit.
    pub fn predict_log(&self, t: f64) -> f64 {
        self.alpha + self.beta * t.powf(-self.p)
    }

    pub fn write_report<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "model = inv-T-power")?;
        writeln!(w, "p = {}", self.p)?;
        writeln!(w, "alpha = {}", self.alpha)?;
        writeln!(w, "beta = {}", self.beta)?;
        writeln!(w, "R2 = {}", self.r_squared)?;
        writeln!(w, "residual = {}", self.residual)?;
        writeln!(w, "# p,alpha,beta,R2,residual")?;
        for r in &self.table {
            writeln!(w, "{},{},{},{},{}", r.p, r.alpha, r.beta, r.r_squared, r.residual)?;
        }
        Ok(())
    }
}

/// Fits `log C = alpha + beta T^{-p}` for a fixed exponent.
pub fn fit_fixed_exponent(points: &[(f64, f64)], p: f64) -> Result<ExponentRow, CostError> {
    let x: Vec<f64> = points.iter().map(|(t, _)| t.powf(-p)).collect();
    let y: Vec<f64> = points.iter().map(|(_, c)| c.ln()).collect();
    let f = linear_fit(&x, &y).ok_or(CostError::Degenerate(p))?;
    Ok(ExponentRow {
        p,
        alpha: f.intercept,
        beta: f.slope,
        r_squared: f.r_squared,
        residual: f.residual_norm,
    })
}

/// Picks the candidate exponent with the least residual, then refines it by golden-section
/// search between the neighbouring candidates.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit, CostError> {
    if points.len() < 6 {
        return Err(CostError::TooFewSamples {
            need: 6,
            got: points.len(),
        });
    }
    if let Some(&(t, c)) = points.iter().find(|(t, c)| !(*t > 0.0) || !(*c > 0.0)) {
        return Err(CostError::NonPositive(if t > 0.0 { c } else { t }));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(t, _)| (lo.min(t), hi.max(t)));
    if hi / lo < 4.0 {
        return Err(CostError::NarrowSpan(hi / lo));
    }
    let table: Vec<ExponentRow> = CANDIDATE_EXPONENTS
        .iter()
        .map(|&p| fit_fixed_exponent(points, p))
        .collect::<Result<_, _>>()?;
    let best = (0..table.len())
        .min_by(|&a, &b| table[a].residual.total_cmp(&table[b].residual))
        .expect("non-empty table");
    let a = CANDIDATE_EXPONENTS[best.saturating_sub(1)];
    let b = CANDIDATE_EXPONENTS[(best + 1).min(CANDIDATE_EXPONENTS.len() - 1)];
    let residual_at = |p: f64| fit_fixed_exponent(points, p).map_or(f64::INFINITY, |r| r.residual);
    let p_star = golden_section(residual_at, a, b, 1e-12);
    let refined = fit_fixed_exponent(points, p_star)?;
    let chosen = if refined.residual < table[best].residual {
        refined
    } else {
        table[best]
    };
    Ok(ExponentFit {
        p: chosen.p,
        alpha: chosen.alpha,
        beta: chosen.beta,
        r_squared: chosen.r_squared,
        residual: chosen.residual,
        table,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Parameters of the approximate observability estimate
/// `h(T) ||z(T)||^2 - g(T) ||z0||^2 <= int_0^T int_omega |z_1|^2` with
/// `h(T) = h0 exp(-2 / (d2 T)^beta)` and `g(T) = g0 exp(-2 / (d1 T)^beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma51Params {
    pub h0: f64,
    pub g0: f64,
    pub d1: f64,
    pub d2: f64,
    pub beta: f64,
    /// Rate of the concluded bound `C_obs^2 <= exp(2 / (d T)^beta) / h0`.
    pub d: f64,
}

impl Lemma51Params {
    pub fn validate(&self) -> Result<(), CostError> {
        let bad = |m: String| Err(CostError::Parameters(m));
        if !(self.h0 >= 0.0 && self.g0 >= 0.0) {
            return bad(format!("h0 = {}, g0 = {} must be non-negative", self.h0, self.g0));
        }
        if !(self.d1 > 0.0 && self.d1 < self.d2) {
            return bad(format!("need 0 < d1 < d2, got d1 = {}, d2 = {}", self.d1, self.d2));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        let gap = self.d2 - self.d1;
        if !(self.d > 0.0 && self.d <= gap * (1.0 + 1e-12)) {
            return bad(format!("d = {} must lie in (0, d2 - d1 = {gap}]", self.d));
        }
        Ok(())
    }

    pub fn h(&self, t: f64) -> f64 {
        self.h0 * (-2.0 / (self.d2 * t).powf(self.beta)).exp()
    }

    pub fn g(&self, t: f64) -> f64 {
        self.g0 * (-2.0 / (self.d1 * t).powf(self.beta)).exp()
    }

    /// `exp(2 / (d T)^beta) / h0`.
    pub fn bound(&self, t: f64) -> f64 {
        if self.h0 == 0.0 {
            f64::INFINITY
        } else {
            (2.0 / (self.d * t).powf(self.beta)).exp() / self.h0
        }
    }

    /// Shapes produced by the dyadic observability argument, from a spectral-inequality
    /// envelope `M exp(K sqrt(Lambda))`, a smoothing constant `M1` and the observation fraction
    /// `epsilon`: `h(T) = (4 M1 / M) exp(-(M1 + K) / (epsilon T))` and
    /// `g(T) = (T0 + 2 h(T0)) exp(-2 (1 - epsilon) / (epsilon^2 T))`, with `beta = 1` and
    /// `d = d2 - d1`.
    pub fn from_proof(m: f64, k: f64, m1: f64, epsilon: f64, t0: f64) -> Result<Self, CostError> {
        if !(m > 0.0 && k >= 0.0 && m1 > 0.0 && epsilon > 0.0 && epsilon < 1.0 && t0 > 0.0) {
            return Err(CostError::Parameters(format!(
                "M = {m}, K = {k}, M1 = {m1}, epsilon = {epsilon}, T0 = {t0}"
            )));
        }
        let h0 = 4.0 * m1 / m;
        let d2 = 2.0 * epsilon / (m1 + k);
        let d1 = epsilon * epsilon / (1.0 - epsilon);
        let h_t0 = h0 * (-(m1 + k) / (epsilon * t0)).exp();
        let p = Self {
            h0,
            g0: t0 + 2.0 * h_t0,
            d1,
            d2,
            beta: 1.0,
            d: d2 - d1,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma51Row {
    pub t: f64,
    pub h: f64,
    pub g: f64,
    /// `1 - lambda_max(h D_T - g I, N_T)`: non-negative iff the estimate holds for every datum.
    pub hypothesis_margin: f64,
    /// Smallest `(obs - h ||z(T)||^2 + g ||z0||^2) / ||z0||^2` over the random draws.
    pub sampled_margin: f64,
    pub cobs_sq: f64,
    pub bound: f64,
    pub conclusion_holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma51Report {
    pub params: Lemma51Params,
    pub t0: f64,
    pub rows: Vec<Lemma51Row>,
}

impl Lemma51Report {
    pub fn hypothesis_holds(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.hypothesis_margin >= -1e-10 && r.sampled_margin >= -1e-12)
    }

    pub fn conclusion_holds(&self) -> bool {
        self.rows.iter().all(|r| r.conclusion_holds)
    }

    /// `CSV` header `T,h,g,hypothesis_margin,sampled_margin,Cobs2,bound,conclusion`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "T,h,g,hypothesis_margin,sampled_margin,Cobs2,bound,conclusion")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.h,
                r.g,
                r.hypothesis_margin,
                r.sampled_margin,
                r.cobs_sq,
                r.bound,
                u8::from(r.conclusion_holds)
            )?;
        }
        Ok(())
    }
}

/// Checks the approximate estimate on the observability curve's window and horizons (exactly
/// via a generalized eigenvalue, and on random adjoint data), then the concluded bound on
/// `C_obs^2`. `T0` is the curve's largest horizon. Violations are reported, not raised.
pub fn verify_lemma51<R: Rng + ?Sized>(
    system: &ModalSystem,
    curve: &CostCurve,
    params: Lemma51Params,
    draws: usize,
    rng: &mut R,
) -> Result<Lemma51Report, CostError> {
    params.validate()?;
    if curve.kind != CurveKind::Observability {
        return Err(CostError::Parameters(format!(
            "expected an observability curve, got {}",
            curve.kind
        )));
    }
    let points = curve.points();
    let t0 = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let modes = system.window_len(curve.lambda_max);
    if modes == 0 {
        return Err(CostError::EmptyWindow(curve.lambda_max));
    }
    let mu = &system.eigenvalues()[..modes];
    let mut rows = Vec::with_capacity(points.len());
    for &(t, cobs) in &points {
        let (h, g) = (params.h(t), params.g(t));
        let (l, _) = factor_observation(system, modes, t)?;
        let v: Vec<Dd> = decay_sq(mu, t)
            .into_iter()
            .map(|d| d.mul_f64(h) - Dd::new(g))
            .collect();
        let top = pencil_lambda_max(&l, &v)?;
        let hypothesis_margin = 1.0 - top;

        let mut sampled_margin = f64::INFINITY;
        for _ in 0..draws {
            let mut z0 = ModeCoeffs::zeros(system.len());
            for v in z0.0.iter_mut().take(modes) {
                *v = rng.sample(StandardNormal);
            }
            let obs = evolution::adjoint_observe(system, &z0, t)
                .map_err(|e| CostError::Parameters(e.to_string()))?
                .value;
            let end = evolution::decay(system, &z0, t)
                .map_err(|e| CostError::Parameters(e.to_string()))?;
            let n0 = z0.norm().powi(2);
            let margin = (obs - h * end.norm().powi(2) + g * n0) / n0;
            sampled_margin = sampled_margin.min(margin);
        }
        let cobs_sq = cobs * cobs;
        let bound = params.bound(t);
        rows.push(Lemma51Row {
            t,
            h,
            g,
            hypothesis_margin,
            sampled_margin,
            cobs_sq,
            bound,
            conclusion_holds: cobs_sq <= bound,
        });
    }
    Ok(Lemma51Report { params, t0, rows })
}
