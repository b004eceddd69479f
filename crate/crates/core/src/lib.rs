//! Discrete Stokes eigenbasis on the unit square, spectral inequalities, modal evolution and
//! null-controllability cost experiments.

pub mod control;
pub mod cost_analysis;
pub mod ddouble;
pub mod evolution;
pub mod fit;
pub mod grid;
pub mod linalg;
pub mod spectral;
pub mod specineq;

pub use control::{
    build_gramian, hum_penalized, lr_schedule, run_lr, steer_low_modes, ControlError, ControlRunReport,
    ControlSchedule, Gramian, HumResult,
};
pub use cost_analysis::{
    cost_curve, fit_exponent, obs_constant, verify_lemma51, CostCurve, CostError, CurveConfig, CurveKind,
    ExponentFit, Lemma51Params, Lemma51Report,
};
pub use evolution::{apply_control, adjoint_observe, ControlSignal, EvolutionError, ModalSystem, ModeCoeffs};
pub use grid::{Grid, GridError, ObservationMask, Rect};
pub use spectral::{solve_buckling, Component, SpectralError, StokesEigenbasis};
pub use specineq::{best_constant, lemma_a1_constant, FrequencyWindow, SpecIneqError};
