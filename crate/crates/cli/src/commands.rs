use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stokeslab::control::{self, build_gramian, hum_penalized, intervals_to_cap, lr_schedule, run_lr};
use stokeslab::cost_analysis::{cost_curve, fit_exponent, obs_constant, CostCurve, CurveConfig, CurveKind};
use stokeslab::specineq::{self, constant_curve, fit_sqrt_law, lemma_a1_constant, midpoint_cutoffs};
use stokeslab::{solve_buckling, Grid, ModalSystem, ModeCoeffs, ObservationMask, StokesEigenbasis};
use thiserror::Error;

use crate::config::{ConfigError, Cutoffs, ExperimentConfig};
use crate::output::write_atomic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read {}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },
    #[error("{0}")]
    Numerical(String),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Numerical(_) | CliError::Output { .. } => 3,
        }
    }
}

fn numerical(e: impl ToString) -> CliError {
    CliError::Numerical(e.to_string())
}

pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Run {
    fn write(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        write_atomic(&self.out, name, body)
            .map(|_| ())
            .map_err(|source| CliError::Output {
                path: self.out.join(name),
                source,
            })
    }

    /// Grid and mask are validated before the eigensolve so that a bad `omega` fails fast.
    fn grid_and_mask(&self) -> Result<(Grid, ObservationMask), CliError> {
        let grid = Grid::new(self.config.n).map_err(|e| ConfigError::Invalid {
            key: "n".into(),
            msg: e.to_string(),
        })?;
        let mask = grid.mask(self.config.omega).map_err(|e| ConfigError::Invalid {
            key: "omega".into(),
            msg: e.to_string(),
        })?;
        Ok((grid, mask))
    }

    fn basis(&self, grid: &Grid) -> Result<StokesEigenbasis, CliError> {
        solve_buckling(grid, self.config.m).map_err(|e| match e {
            stokeslab::SpectralError::Unresolved { .. } => {
                CliError::Numerical(format!("basis size m = {}: {e}", self.config.m))
            }
            e => numerical(e),
        })
    }

    fn system(&self) -> Result<(StokesEigenbasis, ModalSystem), CliError> {
        let (grid, mask) = self.grid_and_mask()?;
        let basis = self.basis(&grid)?;
        let system = ModalSystem::new(&basis, &mask);
        Ok((basis, system))
    }

    /// Cutoff for a window of `k` modes; a one-mode basis uses twice its eigenvalue.
    fn window_cutoff(mu: &[f64], k: usize) -> f64 {
        if k < mu.len() {
            0.5 * (mu[k - 1] + mu[k])
        } else {
            2.0 * mu[k - 1]
        }
    }

    /// Unit-norm Gaussian datum on every mode, drawn from the config seed.
    fn initial_state(&self, m: usize) -> ModeCoeffs {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        ModeCoeffs(v)
    }

    fn curve_config(&self, lambda_max: f64, state: Option<ModeCoeffs>) -> CurveConfig {
        let c = &self.config;
        CurveConfig {
            lambda_max,
            kappa: c.kappa,
            epsilon: c.epsilon,
            ratio: c.ratio,
            extra_intervals: c.extra_intervals,
            target: c.target,
            penalty: c.penalty,
            state,
            mesh_n: c.n,
            omega: c.omega,
        }
    }

    fn write_fit(&self, name: &str, curve: &CostCurve) -> Result<Option<f64>, CliError> {
        match fit_exponent(&curve.points()) {
            Ok(fit) => {
                self.write(name, |w| fit.write_report(w))?;
                println!("{}: p = {:.4}, beta = {:.4e}, R2 = {:.4}", curve.kind, fit.p, fit.beta, fit.r_squared);
                Ok(Some(fit.p))
            }
            Err(e) => {
                println!("{}: no exponent fit ({e})", curve.kind);
                Ok(None)
            }
        }
    }
}

pub fn eig(run: &Run) -> Result<(), CliError> {
    let (grid, _) = run.grid_and_mask()?;
    let basis = run.basis(&grid)?;
    run.write("basis.csv", |w| basis.write_csv(w))?;
    let worst = basis
        .residuals()
        .iter()
        .zip(basis.eigenvalues())
        .map(|(r, mu)| r / mu)
        .fold(0.0, f64::max);
    println!(
        "eig: N = {}, m = {}, mu_1 = {}, mu_m = {}, max residual/mu = {worst:.3e}",
        run.config.n,
        basis.len(),
        basis.eigenvalues()[0],
        basis.eigenvalues()[basis.len() - 1]
    );
    if worst > 1e-8 {
        return Err(numerical(format!("eigen-residual {worst:.3e} exceeds 1e-8 mu_j")));
    }
    Ok(())
}

pub fn specineq(run: &Run) -> Result<(), CliError> {
    let cutoffs = run.config.require_cutoffs()?.clone();
    let (grid, mask) = run.grid_and_mask()?;
    let basis = run.basis(&grid)?;
    let lambdas = match &cutoffs {
        Cutoffs::Windows(ks) => midpoint_cutoffs(basis.eigenvalues(), ks.iter().copied()),
        Cutoffs::Values(v) => v.clone(),
    };
    let curve = constant_curve(&basis, &mask, &lambdas).map_err(numerical)?;
    run.write("specineq_curve.csv", |w| specineq::write_curve_csv(&curve, w))?;
    if let [one] = curve.as_slice() {
        println!("specineq: C({}) = {} on {} modes", one.lambda, one.constant, one.modes);
    } else {
        let pts: Vec<(f64, f64)> = curve.iter().map(|s| (s.lambda, s.constant)).collect();
        let fit = fit_sqrt_law(&pts).map_err(numerical)?;
        run.write("specineq_fit.txt", |w| fit.write_report(w))?;
        println!("specineq: K = {:.4}, log M = {:.4}, R2 = {:.4}", fit.k, fit.log_m, fit.r_squared);
    }
    let top = lambdas.iter().copied().fold(f64::MIN, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(run.config.seed);
    let lemma = lemma_a1_constant(&basis, top, &run.config.lemma_s, run.config.lemma_draws, &mut rng)
        .map_err(numerical)?;
    run.write("lemma_a1.txt", |w| {
        writeln!(w, "Lambda = {top}")?;
        writeln!(w, "modes = {}", lemma.window.modes)?;
        writeln!(w, "constant = {}", lemma.constant)?;
        writeln!(w, "empirical_max_ratio = {}", lemma.empirical_max_ratio)?;
        writeln!(w, "draws = {}", lemma.draws)
    })?;
    println!("specineq: Laplacian-component constant {:.6e} at Lambda = {top}", lemma.constant);
    Ok(())
}

pub fn obscost(run: &Run) -> Result<(), CliError> {
    let k = run.config.require_window()?;
    let horizons = run.config.require_horizons()?.to_vec();
    let (_, system) = run.system()?;
    let lambda_max = Run::window_cutoff(system.eigenvalues(), k);
    let curve = cost_curve(CurveKind::Observability, &horizons, &system, &run.curve_config(lambda_max, None))
        .map_err(numerical)?;
    run.write("obscost_curve.csv", |w| curve.write_csv(w))?;
    run.write_fit("obscost_fit.txt", &curve)?;
    // Gramian side of the duality: squared null-control cost from the window Gramian, on the
    // largest window up to the configured one whose Gramian is numerically invertible.
    let mut rows = Vec::new();
    for s in &curve.samples {
        if s.value.is_none() {
            continue;
        }
        let mut row = format!("{},,,,,no invertible window", s.t);
        for j in (1..=k).rev() {
            let lambda = Run::window_cutoff(system.eigenvalues(), j);
            let Ok(g) = build_gramian(&system, lambda, s.t).and_then(|g| g.null_control_cost_sq()) else {
                continue;
            };
            let c = obs_constant(&system, lambda, s.t).map_err(numerical)?.value;
            row = format!("{},{j},{},{},{},ok", s.t, c * c, g, (g - c * c).abs() / (c * c));
            break;
        }
        rows.push(row);
    }
    run.write("duality.csv", |w| {
        writeln!(w, "T,modes,cobs_sq,gramian_cost_sq,rel_gap,status")?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}"))
    })?;
    println!("obscost: {} of {} horizons computed on {} modes", curve.points().len(), horizons.len(), curve.modes);
    Ok(())
}

pub fn lr(run: &Run) -> Result<(), CliError> {
    let c = &run.config;
    let k = c.require_window()?;
    let horizons = c.require_horizons()?.to_vec();
    let (_, system) = run.system()?;
    let lambda_max = Run::window_cutoff(system.eigenvalues(), k);
    let u0 = run.initial_state(system.len());
    for (i, &t) in horizons.iter().enumerate() {
        let n = intervals_to_cap(t, c.epsilon, lambda_max, c.extra_intervals);
        let schedule = lr_schedule(t, c.epsilon, c.ratio, lambda_max, n).map_err(numerical)?;
        run.write(&format!("lr_schedule_{i}.txt"), |w| schedule.write_text(w))?;
        let report = match run_lr(&system, &u0, &schedule, c.target) {
            Ok(r) => r,
            Err(control::ControlError::TargetNotReached { report, .. }) => {
                run.write(&format!("lr_intervals_{i}.csv"), |w| report.write_csv(w))?;
                run.write(&format!("lr_trajectory_{i}.csv"), |w| report.write_trajectory_csv(w))?;
                return Err(numerical(format!(
                    "T = {t}: target {:.1e} not reached, terminal norm {:.3e}",
                    c.target, report.terminal_norm
                )));
            }
            Err(e) => return Err(numerical(format!("T = {t}: {e}"))),
        };
        run.write(&format!("lr_intervals_{i}.csv"), |w| report.write_csv(w))?;
        run.write(&format!("lr_trajectory_{i}.csv"), |w| report.write_trajectory_csv(w))?;
        println!(
            "lr: T = {t}, {} intervals, cost = {:.6e}, |u(T)| = {:.3e}",
            schedule.intervals(),
            report.total_cost,
            report.terminal_norm
        );
    }
    let curve = cost_curve(CurveKind::LrCost, &horizons, &system, &run.curve_config(lambda_max, Some(u0)))
        .map_err(numerical)?;
    run.write("lr_cost_curve.csv", |w| {
        writeln!(w, "T,C,lower_bound,status")?;
        for s in &curve.samples {
            let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{}", s.t, f(s.value), f(s.lower_bound), s.status)?;
        }
        Ok(())
    })?;
    run.write_fit("lr_fit.txt", &curve)?;
    Ok(())
}

pub fn hum(run: &Run) -> Result<(), CliError> {
    let c = &run.config;
    let k = c.require_window()?;
    let horizons = c.require_horizons()?.to_vec();
    let (_, system) = run.system()?;
    let lambda = Run::window_cutoff(system.eigenvalues(), k);
    let u0 = run.initial_state(system.len());
    let mut rows = Vec::new();
    for &t in &horizons {
        let h = hum_penalized(&system, &u0, t, c.penalty, lambda).map_err(|e| numerical(format!("T = {t}: {e}")))?;
        let exact = control::steer_low_modes(&system, &u0, lambda, 0.0, t)
            .map_or(String::new(), |(_, cost)| cost.to_string());
        println!("hum: T = {t}, cost = {:.6e}, iterations = {}", h.cost, h.iterations);
        rows.push(format!(
            "{},{},{},{},{},{}",
            t, h.cost, h.terminal_norm, h.terminal_low_norm, h.iterations, exact
        ));
    }
    run.write("hum.csv", |w| {
        writeln!(w, "T,cost,terminal_norm,terminal_low_norm,iterations,gramian_cost")?;
        rows.iter().try_for_each(|r| writeln!(w, "{r}"))
    })
}

fn read_input(dir: &Path, name: &str) -> Result<String, CliError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| CliError::Input {
        path,
        msg: e.to_string(),
    })
}

fn key_values(dir: &Path, name: &str) -> Result<BTreeMap<String, String>, CliError> {
    Ok(read_input(dir, name)?
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn field(map: &BTreeMap<String, String>, dir: &Path, name: &str, key: &str) -> Result<f64, CliError> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Input {
            path: dir.join(name),
            msg: format!("missing or malformed `{key}`"),
        })
}

/// Aggregates the outputs of `specineq` and `obscost` found in the output directory.
pub fn report(run: &Run) -> Result<(), CliError> {
    let dir = run.out.as_path();
    let spec = key_values(dir, "specineq_fit.txt")?;
    let obs = key_values(dir, "obscost_fit.txt")?;
    let lemma = key_values(dir, "lemma_a1.txt")?;
    let duality = read_input(dir, "duality.csv")?;
    let k = field(&spec, dir, "specineq_fit.txt", "K")?;
    let log_m = field(&spec, dir, "specineq_fit.txt", "logM")?;
    let r2_spec = field(&spec, dir, "specineq_fit.txt", "R2")?;
    let p = field(&obs, dir, "obscost_fit.txt", "p")?;
    let beta = field(&obs, dir, "obscost_fit.txt", "beta")?;
    let r2_obs = field(&obs, dir, "obscost_fit.txt", "R2")?;
    let a1 = field(&lemma, dir, "lemma_a1.txt", "constant")?;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for line in duality.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() == 6 && cols[5] == "ok" {
            let gap: f64 = cols[4].parse().map_err(|_| CliError::Input {
                path: dir.join("duality.csv"),
                msg: format!("malformed row {line:?}"),
            })?;
            worst = worst.max(gap);
            checked += 1;
        }
    }
    run.write("summary.txt", |w| {
        writeln!(w, "spectral_inequality_K = {k}")?;
        writeln!(w, "spectral_inequality_logM = {log_m}")?;
        writeln!(w, "spectral_inequality_R2 = {r2_spec}")?;
        writeln!(w, "observability_p = {p}")?;
        writeln!(w, "observability_beta = {beta}")?;
        writeln!(w, "observability_R2 = {r2_obs}")?;
        writeln!(w, "laplacian_component_constant = {a1}")?;
        writeln!(w, "duality_pairs = {checked}")?;
        writeln!(w, "duality_max_rel_gap = {worst}")
    })?;
    println!("report: K = {k:.4}, p = {p:.4}, beta = {beta:.4e}, duality gap {worst:.2e} over {checked} horizons");
    Ok(())
}
