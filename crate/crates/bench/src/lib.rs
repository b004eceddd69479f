//! Fixtures shared by the benchmarks.

use stokeslab::{solve_buckling, Grid, ModalSystem, Rect, StokesEigenbasis};

pub fn omega() -> Rect {
    Rect::new(0.0, 0.3, 0.0, 0.3).expect("valid rectangle")
}

pub fn basis(n: usize, m: usize) -> StokesEigenbasis {
    solve_buckling(&Grid::new(n).expect("valid mesh"), m).expect("resolved basis")
}

pub fn system(basis: &StokesEigenbasis) -> ModalSystem {
    ModalSystem::new(basis, &basis.grid().mask(omega()).expect("non-empty mask"))
}

/// Cutoff halfway between `mu_k` and `mu_{k+1}`.
pub fn cutoff(mu: &[f64], k: usize) -> f64 {
    0.5 * (mu[k - 1] + mu[k])
}
