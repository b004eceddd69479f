//! Stokes-Dirichlet eigenpairs on the unit square through the stream-function reduction.
//!
//! In two dimensions every divergence-free velocity with Dirichlet data is the curl
//! `(d_y psi, -d_x psi)` of a clamped stream function, and the Stokes eigenproblem becomes the
//! plate-buckling pencil `Delta^2 psi = -mu Delta psi`. Discretely we solve
//!
//! ```text
//! B psi = mu A psi
//! ```
//!
//! with `B` the 13-point clamped biharmonic and `A = Dx^T Dx + Dy^T Dy` the Gram operator of
//! the central-difference curl. Because `A` is exactly the velocity energy, `A`-orthonormal
//! stream functions give velocities that are orthonormal in the discrete `L^2` pairing, and
//! the discrete divergence of every velocity vanishes by construction.
//!
//! The central-difference curl has a checkerboard kernel on grids with an odd node count, so
//! the solver requires an even `n`.

use std::f64::consts::PI;
use std::io::{self, Write};

use faer::{Mat, MatRef};
use thiserror::Error;

use crate::grid::{Grid, ObservationMask};
use crate::linalg::{self, CsrMatrix, LinalgError};

/// Retained modes must satisfy `mu_m <= RESOLUTION_FACTOR / h^2`, i.e. at least four grid
/// points per wavelength along an axis (`k h <= 1/2`, continuum eigenvalue `(k pi)^2`).
pub const RESOLUTION_FACTOR: f64 = 0.25 * PI * PI;

/// Eigen-residual tolerance relative to the eigenvalue.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("requested m = {m} modes but the grid has only {nodes} unknowns")]
    TooManyModes { m: usize, nodes: usize },
    #[error("m must be at least 1")]
    NoModes,
    #[error("grid with n = {0} interior nodes is odd; the central-difference curl needs an even n")]
    OddGrid(usize),
    #[error("factorization failed ({0}); grid too coarse for the requested pencil")]
    Factorization(LinalgError),
    #[error("eigensolver failed: {0}")]
    Eigen(LinalgError),
    #[error("mode {j} is unresolved: mu = {mu:.6} exceeds the resolution limit {limit:.6}")]
    Unresolved { j: usize, mu: f64, limit: f64 },
    #[error("mode {j} residual {residual:.3e} exceeds {tol:.1e} * mu = {bound:.3e}")]
    Residual {
        j: usize,
        residual: f64,
        tol: f64,
        bound: f64,
    },
    #[error("mode {0} has a non-positive eigenvalue")]
    NonPositive(usize),
    #[error("{0}")]
    Dimension(String),
}

/// Which velocity component enters an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    First,
    Second,
}

/// Five-point stencil of `-Delta` with homogeneous Dirichlet data (SPD).
pub fn assemble_laplacian(grid: &Grid) -> CsrMatrix {
    let n = grid.n();
    let s = 1.0 / (grid.h() * grid.h());
    let mut t = Vec::with_capacity(5 * grid.len());
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            t.push((k, k, 4.0 * s));
            if i > 0 {
                t.push((k, grid.index(i - 1, j), -s));
            }
            if i + 1 < n {
                t.push((k, grid.index(i + 1, j), -s));
            }
            if j > 0 {
                t.push((k, grid.index(i, j - 1), -s));
            }
            if j + 1 < n {
                t.push((k, grid.index(i, j + 1), -s));
            }
        }
    }
    CsrMatrix::from_triplets(grid.len(), grid.len(), t)
}

/// Closed-form spectrum of [`assemble_laplacian`], ascending.
pub fn laplacian_eigenvalues(grid: &Grid) -> Vec<f64> {
    let n = grid.n();
    let h = grid.h();
    let mut v: Vec<f64> = (1..=n)
        .flat_map(|k| {
            (1..=n).map(move |l| {
                (4.0 - 2.0 * (k as f64 * PI * h).cos() - 2.0 * (l as f64 * PI * h).cos()) / (h * h)
            })
        })
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// 13-point clamped-plate biharmonic.
///
/// Boundary values vanish and the ghost layer outside the boundary mirrors the first interior
/// layer (`psi_{-1} = psi_1`), which is the centered form of a vanishing normal derivative.
pub fn assemble_biharmonic(grid: &Grid) -> CsrMatrix {
    const STENCIL: [(i64, i64, f64); 13] = [
        (0, 0, 20.0),
        (1, 0, -8.0),
        (-1, 0, -8.0),
        (0, 1, -8.0),
        (0, -1, -8.0),
        (1, 1, 2.0),
        (1, -1, 2.0),
        (-1, 1, 2.0),
        (-1, -1, 2.0),
        (2, 0, 1.0),
        (-2, 0, 1.0),
        (0, 2, 1.0),
        (0, -2, 1.0),
    ];
    let n = grid.n() as i64;
    let s = 1.0 / grid.h().powi(4);
    // Maps an extended 1-based coordinate to an interior 0-based one, folding ghosts.
    let fold = |p: i64| -> Option<usize> {
        match p {
            -1 => Some(0),
            0 => None,
            p if p == n + 1 => None,
            p if p == n + 2 => Some((n - 1) as usize),
            p => Some((p - 1) as usize),
        }
    };
    let mut t = Vec::with_capacity(13 * grid.len());
    for j in 1..=n {
        for i in 1..=n {
            let row = grid.index((i - 1) as usize, (j - 1) as usize);
            for &(di, dj, c) in &STENCIL {
                if let (Some(a), Some(b)) = (fold(i + di), fold(j + dj)) {
                    t.push((row, grid.index(a, b), c * s));
                }
            }
        }
    }
    CsrMatrix::from_triplets(grid.len(), grid.len(), t)
}

/// Central difference `d/dx` with zero boundary values.
pub fn difference_x(grid: &Grid) -> CsrMatrix {
    difference(grid, true)
}

/// Central difference `d/dy` with zero boundary values.
pub fn difference_y(grid: &Grid) -> CsrMatrix {
    difference(grid, false)
}

fn difference(grid: &Grid, along_x: bool) -> CsrMatrix {
    let n = grid.n();
    let s = 0.5 / grid.h();
    let mut t = Vec::with_capacity(2 * grid.len());
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            let (p, q) = if along_x { (i, j) } else { (j, i) };
            let at = |p: usize| if along_x { grid.index(p, q) } else { grid.index(q, p) };
            if p + 1 < n {
                t.push((k, at(p + 1), s));
            }
            if p > 0 {
                t.push((k, at(p - 1), -s));
            }
        }
    }
    CsrMatrix::from_triplets(grid.len(), grid.len(), t)
}

/// `Dx^T Dx + Dy^T Dy`: the discrete `-Delta` whose quadratic form is the energy of the
/// central-difference curl.
pub fn assemble_curl_laplacian(grid: &Grid) -> CsrMatrix {
    let dx = difference_x(grid);
    let dy = difference_y(grid);
    dx.transpose().matmul(&dx).add_scaled(1.0, &dy.transpose().matmul(&dy))
}

/// Velocity `(d_y psi, -d_x psi)` as a concatenated vector field.
pub fn curl(grid: &Grid, psi: &[f64]) -> Vec<f64> {
    let mut v = difference_y(grid).mul_vec(psi);
    v.extend(difference_x(grid).mul_vec(psi).into_iter().map(|x| -x));
    v
}

/// Central-difference divergence of a concatenated vector field.
pub fn divergence(grid: &Grid, v: &[f64]) -> Vec<f64> {
    let nodes = grid.len();
    let (u, w) = v.split_at(nodes);
    let a = difference_x(grid).mul_vec(u);
    let b = difference_y(grid).mul_vec(w);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

/// Orthonormal Stokes eigenbasis with its stream functions and discretization operators.
#[derive(Debug, Clone)]
pub struct StokesEigenbasis {
    grid: Grid,
    mu: Vec<f64>,
    psi: Mat<f64>,
    e1: Mat<f64>,
    e2: Mat<f64>,
    residuals: Vec<f64>,
    stiffness: CsrMatrix,
    mass: CsrMatrix,
}

impl StokesEigenbasis {
    /// Assembles a basis from given stream functions and the pencil `(stiffness, mass)` they
    /// are supposed to satisfy. Velocities are scaled to unit discrete `L^2` norm and the
    /// residuals `||(B - mu A) psi||_{A^{-1}} / ||psi||_A` are recomputed from the operators.
    pub fn from_parts(
        grid: Grid,
        mu: Vec<f64>,
        psi: Mat<f64>,
        stiffness: CsrMatrix,
        mass: CsrMatrix,
    ) -> Result<Self, SpectralError> {
        let nodes = grid.len();
        let m = mu.len();
        if psi.nrows() != nodes || psi.ncols() != m {
            return Err(SpectralError::Dimension(format!(
                "stream functions are {}x{}, expected {nodes}x{m}",
                psi.nrows(),
                psi.ncols()
            )));
        }
        if stiffness.nrows() != nodes || mass.nrows() != nodes {
            return Err(SpectralError::Dimension("operator size mismatch".into()));
        }
        if let Some(j) = mu.iter().position(|&x| !(x > 0.0)) {
            return Err(SpectralError::NonPositive(j));
        }
        let mass_factor =
            linalg::cholesky(mass.to_dense().as_ref()).map_err(SpectralError::Factorization)?;
        let mut psi = psi;
        let mut e1 = Mat::zeros(nodes, m);
        let mut e2 = Mat::zeros(nodes, m);
        let mut residuals = Vec::with_capacity(m);
        for j in 0..m {
            let mut col = linalg::column(psi.as_ref(), j);
            orient(&mut col);
            let vel = curl(&grid, &col);
            let norm = grid
                .norm(&vel, None)
                .map_err(|e| SpectralError::Dimension(e.to_string()))?;
            let scale = 1.0 / norm;
            for (k, x) in col.iter_mut().enumerate() {
                *x *= scale;
                psi[(k, j)] = *x;
                e1[(k, j)] = vel[k] * scale;
                e2[(k, j)] = vel[nodes + k] * scale;
            }
            residuals.push(pencil_residual(
                &stiffness,
                &mass,
                mass_factor.as_ref(),
                mu[j],
                &col,
            ));
        }
        Ok(Self {
            grid,
            mu,
            psi,
            e1,
            e2,
            residuals,
            stiffness,
            mass,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
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

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn stream_functions(&self) -> MatRef<'_, f64> {
        self.psi.as_ref()
    }

    pub fn stream_function(&self, j: usize) -> Vec<f64> {
        linalg::column(self.psi.as_ref(), j)
    }

    /// Node values of one velocity component, one column per mode.
    pub fn component(&self, c: Component) -> MatRef<'_, f64> {
        match c {
            Component::First => self.e1.as_ref(),
            Component::Second => self.e2.as_ref(),
        }
    }

    /// Velocity of mode `j` as a concatenated vector field.
    pub fn velocity(&self, j: usize) -> Vec<f64> {
        let mut v = linalg::column(self.e1.as_ref(), j);
        v.extend(linalg::column(self.e2.as_ref(), j));
        v
    }

    /// Clamped biharmonic `B` of the pencil.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// SPD Laplacian `A` of the pencil.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Number of leading modes with `mu_j <= lambda`.
    pub fn window_len(&self, lambda: f64) -> usize {
        self.mu.partition_point(|&m| m <= lambda)
    }

    /// Resolution limit `RESOLUTION_FACTOR / h^2` of the grid.
    pub fn resolution_limit(&self) -> f64 {
        RESOLUTION_FACTOR / (self.grid.h() * self.grid.h())
    }

    /// Full velocity Gram matrix `<e_i, e_j>`, assembled independently of the eigensolve.
    pub fn velocity_gram(&self) -> Mat<f64> {
        let h2 = self.grid.h() * self.grid.h();
        let g1 = self.e1.transpose() * &self.e1;
        let g2 = self.e2.transpose() * &self.e2;
        Mat::from_fn(self.len(), self.len(), |i, j| h2 * (g1[(i, j)] + g2[(i, j)]))
    }

    /// Keeps the first `m` modes.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.len());
        let nodes = self.grid.len();
        Self {
            grid: self.grid,
            mu: self.mu[..m].to_vec(),
            psi: self.psi.submatrix(0, 0, nodes, m).to_owned(),
            e1: self.e1.submatrix(0, 0, nodes, m).to_owned(),
            e2: self.e2.submatrix(0, 0, nodes, m).to_owned(),
            residuals: self.residuals[..m].to_vec(),
            stiffness: self.stiffness.clone(),
            mass: self.mass.clone(),
        }
    }

    /// `Delta_h e_{j,1}`, taken as `-Dy (A psi_j)` so that `Delta_h` commutes with the curl.
    pub fn first_component_laplacian(&self, j: usize) -> Vec<f64> {
        let a_psi = self.mass.mul_vec(&self.stream_function(j));
        difference_y(&self.grid)
            .mul_vec(&a_psi)
            .into_iter()
            .map(|x| -x)
            .collect()
    }

    /// `CSV` with header `j,mu_j,residual_j`, modes numbered from 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "j,mu_j,residual_j")?;
        for (j, (mu, r)) in self.mu.iter().zip(&self.residuals).enumerate() {
            writeln!(w, "{},{},{}", j + 1, mu, r)?;
        }
        Ok(())
    }
}

/// Writes node values row by row (`y` rows, `x` columns), space separated.
pub fn write_field<W: Write>(grid: &Grid, values: &[f64], mut w: W) -> io::Result<()> {
    for row in values.chunks(grid.n()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

// Deterministic sign: the largest-magnitude entry (first on ties) is positive.
fn orient(v: &mut [f64]) {
    let mut best = 0usize;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn pencil_residual(
    stiffness: &CsrMatrix,
    mass: &CsrMatrix,
    mass_factor: MatRef<'_, f64>,
    mu: f64,
    psi: &[f64],
) -> f64 {
    let bp = stiffness.mul_vec(psi);
    let ap = mass.mul_vec(psi);
    let r: Vec<f64> = bp.iter().zip(&ap).map(|(b, a)| b - mu * a).collect();
    let mut rr = Mat::from_fn(r.len(), 1, |i, _| r[i]);
    linalg::solve_lower_in_place(mass_factor, &mut rr);
    let dual = (0..r.len()).map(|i| rr[(i, 0)] * rr[(i, 0)]).sum::<f64>().sqrt();
    dual / linalg::dot(psi, &ap).sqrt()
}

/// Solves the buckling pencil for the `m` lowest Stokes modes.
///
/// Cholesky congruence `C = L^{-1} B L^{-T}` with `A = L L^T`, a dense symmetric eigensolve of
/// `C`, back-substitution for the stream functions, then curl and normalization.
pub fn solve_buckling(grid: &Grid, m: usize) -> Result<StokesEigenbasis, SpectralError> {
    let nodes = grid.len();
    if m == 0 {
        return Err(SpectralError::NoModes);
    }
    if m > nodes {
        return Err(SpectralError::TooManyModes { m, nodes });
    }
    if grid.n() % 2 == 1 {
        return Err(SpectralError::OddGrid(grid.n()));
    }
    let stiffness = assemble_biharmonic(grid);
    let mass = assemble_curl_laplacian(grid);
    let l = linalg::cholesky(mass.to_dense().as_ref()).map_err(SpectralError::Factorization)?;

    let mut y = stiffness.to_dense();
    linalg::solve_lower_in_place(l.as_ref(), &mut y);
    let mut c = y.transpose().to_owned();
    drop(y);
    linalg::solve_lower_in_place(l.as_ref(), &mut c);
    linalg::symmetrize(&mut c);
    let evd = linalg::sym_eigen(c.as_ref()).map_err(SpectralError::Eigen)?;
    drop(c);

    let mu: Vec<f64> = evd.values[..m].to_vec();
    let mut psi = evd.vectors.submatrix(0, 0, nodes, m).to_owned();
    linalg::solve_lower_transpose_in_place(l.as_ref(), &mut psi);

    let limit = RESOLUTION_FACTOR / (grid.h() * grid.h());
    if let Some(j) = mu.iter().position(|&x| x > limit) {
        return Err(SpectralError::Unresolved {
            j: j + 1,
            mu: mu[j],
            limit,
        });
    }
    let basis = StokesEigenbasis::from_parts(*grid, mu, psi, stiffness, mass)?;
    for (j, (&r, &mu)) in basis.residuals.iter().zip(&basis.mu).enumerate() {
        if r > RESIDUAL_TOL * mu {
            return Err(SpectralError::Residual {
                j: j + 1,
                residual: r,
                tol: RESIDUAL_TOL,
                bound: RESIDUAL_TOL * mu,
            });
        }
    }
    Ok(basis)
}

/// One velocity component on the active nodes, scaled by `h`: `G = R^T R` for the Gram below.
/// Working with `R` instead of `G` keeps the small singular values that squaring destroys.
pub fn component_rows(basis: &StokesEigenbasis, c: Component, mask: &ObservationMask) -> Mat<f64> {
    let e = basis.component(c);
    let h = basis.grid().h();
    let active: Vec<usize> = mask.active_nodes().collect();
    Mat::from_fn(active.len(), basis.len(), |r, j| h * e[(active[r], j)])
}

/// `G_{jk} = <e_{j,c}, e_{k,c}>_mask`, the quadratic form of a one-component observation.
pub fn component_gram(basis: &StokesEigenbasis, c: Component, mask: &ObservationMask) -> Mat<f64> {
    let rows = component_rows(basis, c, mask);
    let mut g = rows.transpose() * &rows;
    linalg::symmetrize(&mut g);
    g
}
