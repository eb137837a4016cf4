//! Minimization of `J` over the mass sphere intersected with `M`.
//!
//! Each iterate lies on both constraints. The search direction is the
//! Sobolev-preconditioned gradient of `J` with its components along the
//! mass and `M` gradients removed; trial points are pulled back onto the
//! constraint set by alternating mass normalization and fiber projection,
//! and an Armijo rule on `J` accepts or shrinks the step.

use std::sync::Arc;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::calculus::{hardy_diagnostic, HardyDiagnostic};
use crate::energy::{gradients, normalize_mass, project_fiber, Integrals, Problem};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{Grading, RadialFunction, RadialGrid};
use crate::lab::AdmissibilityReport;
use crate::nonlin::{audit_assumptions, log_sample, NonlinearityConfig, Params, EXP_GUARD};
use crate::profiles::SeedProfile;
use crate::report::SCHEMA;
use crate::verify::{check_nehari, check_pohozaev, tail_mass, VerificationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when the projected gradient's L2 norm is below
    /// `grad_tol (1 + |J|)`.
    pub grad_tol: f64,
    pub step_init: f64,
    pub armijo_c: f64,
    /// Relative mass tolerance enforced after every retraction.
    pub mass_tol: f64,
    pub seed_profile: SeedProfile,
    /// For `m = 1` and odd `g`: replace `u` by `|u|` and descend again.
    pub abs_polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            grad_tol: 1e-6,
            step_init: 1.0,
            armijo_c: 1e-4,
            mass_tol: 1e-12,
            seed_profile: SeedProfile::Gaussian,
            abs_polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_init > 0.0 && self.mass_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances and step must be positive".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidArgument("armijo_c must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Reproducible description of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub m: usize,
    pub r_max: f64,
    pub n: usize,
    pub grading: Grading,
}

impl GridSpec {
    pub fn of(grid: &RadialGrid) -> Self {
        GridSpec { m: grid.m(), r_max: grid.r_max(), n: grid.len(), grading: grid.grading() }
    }

    pub fn build(&self) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(RadialGrid::new(self.m, self.r_max, self.n, self.grading)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|M(u)| / [u]^2`.
    pub constraint: f64,
    pub nehari: f64,
    pub pohozaev: f64,
    pub pde: f64,
    /// Projected-gradient L2 norm at the last iterate.
    pub stationarity: f64,
    /// The same gradient measured in the dual Sobolev norm.
    pub dual_stationarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: String,
    pub energy: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolishOutcome {
    pub energy_before: f64,
    pub energy_after: f64,
    /// Whether `u` had negative values to flip.
    pub changed_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Stationary on the constraint set, but the multiplier is not positive.
    NonpositiveMultiplier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema: String,
    pub status: SolveStatus,
    pub params: Params,
    pub nonlinearity: Option<NonlinearityConfig>,
    pub grid: GridSpec,
    pub config: SolverConfig,
    pub lambda: f64,
    pub energy: f64,
    pub mass: f64,
    pub bracket: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub stop: StopReason,
    pub tail_mass: f64,
    pub nonneg: Option<bool>,
    pub min_value: f64,
    pub hardy: HardyDiagnostic,
    pub seeds: Vec<SeedOutcome>,
    pub polish: Option<PolishOutcome>,
    pub admissibility: Option<AdmissibilityReport>,
    pub verification: Option<VerificationReport>,
    /// Nodal values of the solution on `grid`.
    pub u: Vec<f64>,
}

impl SolveReport {
    /// Problem and profile reconstructed from the report alone.
    pub fn rebuild(&self) -> Result<(Problem, RadialFunction)> {
        let config = self
            .nonlinearity
            .as_ref()
            .ok_or_else(|| Error::Precondition("report carries no nonlinearity description".into()))?;
        let grid = self.grid.build()?;
        let problem = Problem::from_config(grid.clone(), self.params, config)?;
        let u = RadialFunction::new(grid, self.u.clone())?;
        Ok((problem, u))
    }

    pub fn is_success(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// `lambda = (int (eta u^4 + g(u) u) - [u]^2) / |u|_2^2`, the multiplier
/// that makes the Nehari identity exact.
pub fn lagrange_lambda(problem: &Problem, u: &RadialFunction) -> Result<f64> {
    let i = Integrals::of(problem, u)?;
    if !(i.mass > 0.0) {
        return Err(Error::ZeroFunction);
    }
    Ok((problem.params().eta * i.quartic + i.g_u - i.bracket()) / i.mass)
}

/// L2 norm of `(-Delta)^m u + mu |x|^{-2m} u + lambda u - eta u^3 - g(u)`
/// over the free nodes, divided by `||u||_mu`. Zero for `u = 0`.
pub fn pde_residual(problem: &Problem, u: &RadialFunction, lambda: f64) -> Result<f64> {
    u.ensure_grid(problem.grid())?;
    if u.is_zero() {
        return Ok(0.0);
    }
    let g = gradients(problem, u.values())?;
    let w = problem.grid().weights();
    let nf = problem.ops().free();
    // the Euclidean gradient of J is W times the strong-form operator
    let sq: f64 = (0..nf)
        .map(|i| {
            let r = g.energy[i] / w[i] + lambda * u.values()[i];
            w[i] * r * r
        })
        .sum();
    let i = Integrals::of(problem, u)?;
    Ok(sq.sqrt() / (i.bracket() + i.mass).sqrt())
}

/// Why a descent run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The projected L2 gradient norm met the tolerance.
    Gradient,
    /// `J` stopped decreasing at round-off level while the preconditioned
    /// gradient norm met the tolerance. On strongly graded grids the L2 norm
    /// carries a noise floor from the nodes closest to the origin.
    RoundoffFloor,
}

/// Outcome of one descent run.
#[derive(Debug, Clone)]
pub struct Descent {
    pub u: RadialFunction,
    pub energy: f64,
    pub iterations: usize,
    pub stationarity: f64,
    /// `sqrt(<r, P^{-1} r>)` for the projected gradient `r` and the Sobolev metric `P`.
    pub dual_stationarity: f64,
    pub stop: StopReason,
}

/// Pulls `v` back onto the mass sphere and `M`.
fn retract(problem: &Problem, v: RadialFunction, mass_tol: f64) -> Result<RadialFunction> {
    let rho = problem.params().rho;
    let mut v = v;
    if let Some(last) = v.values_mut().last_mut() {
        *last = 0.0;
    }
    for _ in 0..50 {
        v = normalize_mass(&v, rho)?;
        let (w, _) = project_fiber(problem, &v)?;
        if (w.mass() / rho - 1.0).abs() <= mass_tol {
            return Ok(w);
        }
        v = w;
    }
    Err(Error::RootNotConverged { residual: (v.mass() / rho - 1.0).abs() })
}

/// Consecutive accepted steps with round-off-level decrease before the
/// floor rule applies.
const FLAT_STEPS: usize = 10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected preconditioned descent from `seed`.
pub fn descend(problem: &Problem, cfg: &SolverConfig, seed: RadialFunction) -> Result<Descent> {
    cfg.validate()?;
    let metric = problem.ops().sobolev_metric(problem.params().mu)?;
    let nf = problem.ops().free();
    let w = problem.grid().weights().to_vec();
    let eta = problem.params().eta;

    let mut u = retract(problem, seed, cfg.mass_tol)?;
    let mut energy = Integrals::of(problem, &u)?.energy(eta);
    let mut step = cfg.step_init;
    let mut flat = 0;
    let mut previous: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut stationarity = f64::INFINITY;
    for it in 0..cfg.max_iters {
        let g = gradients(problem, u.values())?;
        let (gj, gm, gc) = (&g.energy[..nf], &g.mass[..nf], &g.constraint[..nf]);
        let z = metric.solve(gj);
        let zm = metric.solve(gm);
        let zc = metric.solve(gc);
        // multipliers making the direction tangent to both constraints
        let (a11, a12, a22) = (dot(gm, &zm), dot(gm, &zc), dot(gc, &zc));
        let (b1, b2) = (dot(gm, &z), dot(gc, &z));
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > 0.0) {
            return Err(Error::NonFinite("degenerate constraint gradients".into()));
        }
        let a = (b1 * a22 - b2 * a12) / det;
        let b = (a11 * b2 - a12 * b1) / det;
        let residual: Vec<f64> = (0..nf).map(|i| gj[i] - a * gm[i] - b * gc[i]).collect();
        let pg: Vec<f64> = (0..nf).map(|i| z[i] - a * zm[i] - b * zc[i]).collect();
        let gnorm = dot(&residual, &pg);
        // Polak-Ribiere+ conjugation; the previous direction is first made
        // tangent again in the metric
        let mut d = pg.clone();
        if let Some((prev_d, prev_pg, prev_gnorm)) = previous.take() {
            let beta = (dot(&residual, &pg) - dot(&residual, &prev_pg)) / prev_gnorm;
            if beta > 0.0 {
                let (c1, c2) = (dot(gm, &prev_d), dot(gc, &prev_d));
                let x = (c1 * a22 - c2 * a12) / det;
                let y = (a11 * c2 - a12 * c1) / det;
                let cand: Vec<f64> =
                    (0..nf).map(|i| pg[i] + beta * (prev_d[i] - x * zm[i] - y * zc[i])).collect();
                if dot(&residual, &cand) > 0.0 {
                    d = cand;
                }
            }
        }
        let slope = dot(&residual, &d);
        stationarity = residual.iter().zip(&w).map(|(r, wi)| r * r / wi).sum::<f64>().sqrt();
        if !stationarity.is_finite() || !slope.is_finite() {
            return Err(Error::Diverged(it));
        }
        let dual = gnorm.max(0.0).sqrt();
        let tol = cfg.grad_tol * (1.0 + energy.abs());
        let done = |stop| {
            info!("{stop:?} after {it} iterations: J = {energy:.12e}, stationarity = {stationarity:.3e}, dual = {dual:.3e}");
            Descent { u: u.clone(), energy, iterations: it, stationarity, dual_stationarity: dual, stop }
        };
        if stationarity <= tol {
            return Ok(done(StopReason::Gradient));
        }
        if flat >= FLAT_STEPS && dual <= tol {
            return Ok(done(StopReason::RoundoffFloor));
        }

        let trial_at = |t: f64| -> Result<(f64, RadialFunction)> {
            let mut trial = u.values().to_vec();
            for (x, di) in trial.iter_mut().zip(&d) {
                *x -= t * di;
            }
            let v = retract(problem, RadialFunction::new(problem.grid().clone(), trial)?, cfg.mass_tol)?;
            Ok((Integrals::of(problem, &v)?.energy(eta), v))
        };
        // minimizer of the parabola through J(0), J'(0) = -slope and J(t)
        let parabola = |t: f64, e: f64| {
            let curv = e - energy + slope * t;
            (curv > 0.0).then(|| 0.5 * slope * t * t / curv)
        };
        let armijo = |t: f64, e: f64| e <= energy - cfg.armijo_c * t * slope;

        let mut accepted = None;
        while step >= 1e-14 * cfg.step_init {
            match trial_at(step) {
                Ok((e, v)) if armijo(step, e) => {
                    // a step well past the parabola's vertex overshoots a stiff mode
                    if let Some(tq) = parabola(step, e).filter(|&tq| tq < 0.7 * step && tq > 0.05 * step) {
                        if let Ok((eq, vq)) = trial_at(tq) {
                            if eq < e && armijo(tq, eq) {
                                accepted = Some((eq, vq, tq));
                                break;
                            }
                        }
                    }
                    accepted = Some((e, v, step));
                    break;
                }
                Ok((e, _)) => {
                    step = parabola(step, e).map_or(0.5 * step, |tq| tq.clamp(0.1 * step, 0.5 * step));
                }
                Err(err) => {
                    debug!("trial step {step:.3e} rejected: {err}");
                    step *= 0.5;
                }
            }
        }
        let Some((e, v, taken)) = accepted else {
            if dual <= tol {
                return Ok(done(StopReason::RoundoffFloor));
            }
            warn!("line search stalled at iteration {it}, stationarity {stationarity:.3e}");
            return Err(Error::LineSearchStalled(stationarity));
        };
        assert!(e <= energy, "accepted step raised the energy");
        if energy - e <= 16.0 * f64::EPSILON * energy.abs() {
            flat += 1;
        } else {
            flat = 0;
        }
        debug!("iter {it}: J = {e:.14e}, step = {step:.3e}, stationarity = {stationarity:.3e}, dual = {dual:.3e}");
        energy = e;
        u = v;
        previous = Some((d, pg, gnorm));
        step = (2.0 * taken).min(1e6 * cfg.step_init);
    }
    Err(Error::MaxIters { iters: cfg.max_iters, stationarity })
}

/// Runs the precondition audit: valid parameters and (A0)-(A4) on a sample
/// bounded by the exponent guard.
pub fn precheck(problem: &Problem, probes: &[RadialFunction]) -> Result<()> {
    let params = problem.params();
    params.validate().map_err(|e| Error::Precondition(e.to_string()))?;
    let s_max = if params.alpha > 0.0 { (0.5 * EXP_GUARD / params.alpha).sqrt().min(4.0) } else { 4.0 };
    let audit = audit_assumptions(problem.nonlinearity(), params, &log_sample(1e-4 * s_max, s_max, 200), probes)?;
    if !audit.all_passed {
        return Err(Error::Precondition("assumption audit failed".into()));
    }
    Ok(())
}

/// [`solve`] after the precondition audit on the seed profiles.
pub fn minimize_seeds(
    problem: &Problem,
    cfg: &SolverConfig,
    seeds: &[SeedProfile],
    exec: Execution,
) -> Result<SolveReport> {
    let built: Vec<RadialFunction> = seeds.iter().map(|s| s.build(problem.grid())).collect::<Result<_>>()?;
    precheck(problem, &built)?;
    solve(problem, cfg, seeds, exec)
}

/// Minimizes from every seed (concurrently under `exec`), keeps the lowest
/// energy, applies the `|u|` polish when it applies, and assembles the
/// report with residuals recomputed from the final `(u, lambda)`.
pub fn solve(problem: &Problem, cfg: &SolverConfig, seeds: &[SeedProfile], exec: Execution) -> Result<SolveReport> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seed profiles".into()));
    }
    let built: Vec<RadialFunction> = seeds.iter().map(|s| s.build(problem.grid())).collect::<Result<_>>()?;
    let runs = exec.map(&built, |u| descend(problem, cfg, u.clone()));
    let outcomes: Vec<SeedOutcome> = seeds
        .iter()
        .zip(&runs)
        .map(|(s, r)| match r {
            Ok(d) => SeedOutcome { seed: s.name(), energy: Some(d.energy), iterations: d.iterations, error: None },
            Err(e) => SeedOutcome { seed: s.name(), energy: None, iterations: 0, error: Some(e.to_string()) },
        })
        .collect();
    let mut best: Option<Descent> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(d) => {
                if best.as_ref().is_none_or(|b| d.energy < b.energy) {
                    best = Some(d);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(mut best) = best else {
        return Err(first_err.unwrap_or(Error::ZeroFunction));
    };

    let mut polish = None;
    if cfg.abs_polish && problem.params().m == 1 && problem.nonlinearity().is_odd() {
        let changed_sign = best.u.values().iter().any(|&v| v < 0.0);
        let before = best.energy;
        let again = descend(problem, cfg, best.u.map(f64::abs))?;
        polish = Some(PolishOutcome { energy_before: before, energy_after: again.energy, changed_sign });
        if again.energy <= before || changed_sign {
            best = again;
        }
    }
    assemble(problem, cfg, best, outcomes, polish)
}

/// Single-seed minimization with the model nonlinearity.
pub fn minimize(params: Params, cfg: &SolverConfig, grid: Arc<RadialGrid>) -> Result<SolveReport> {
    let problem = Problem::new(grid, params)?;
    minimize_seeds(&problem, cfg, std::slice::from_ref(&cfg.seed_profile), Execution::Sequential)
}

fn assemble(
    problem: &Problem,
    cfg: &SolverConfig,
    best: Descent,
    seeds: Vec<SeedOutcome>,
    polish: Option<PolishOutcome>,
) -> Result<SolveReport> {
    let u = best.u;
    let i = Integrals::of(problem, &u)?;
    let params = *problem.params();
    let lambda = lagrange_lambda(problem, &u)?;
    let residuals = Residuals {
        constraint: i.constraint(params.eta).abs() / i.bracket(),
        nehari: check_nehari(problem, &u, lambda)?,
        pohozaev: check_pohozaev(problem, &u, lambda)?,
        pde: pde_residual(problem, &u, lambda)?,
        stationarity: best.stationarity,
        dual_stationarity: best.dual_stationarity,
    };
    let min_value = u.values().iter().copied().fold(f64::INFINITY, f64::min);
    let nonneg = (params.m == 1 && problem.nonlinearity().is_odd()).then(|| min_value >= -1e-8 * u.max_abs());
    let status = if lambda > 0.0 { SolveStatus::Converged } else { SolveStatus::NonpositiveMultiplier };
    if status != SolveStatus::Converged {
        warn!("stationary point with lambda = {lambda:.6e} <= 0");
    }
    Ok(SolveReport {
        schema: SCHEMA.into(),
        status,
        params,
        nonlinearity: problem.nonlinearity_config().cloned(),
        grid: GridSpec::of(problem.grid()),
        config: cfg.clone(),
        lambda,
        energy: i.energy(params.eta),
        mass: i.mass,
        bracket: i.bracket(),
        residuals,
        iterations: best.iterations,
        stop: best.stop,
        tail_mass: tail_mass(&u),
        nonneg,
        min_value,
        hardy: hardy_diagnostic(problem.ops(), &u, params.mu)?,
        seeds,
        polish,
        admissibility: None,
        verification: None,
        u: u.into_values(),
    })
}
