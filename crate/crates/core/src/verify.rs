//! Post-hoc verification of a candidate `(u, lambda)`: every identity and
//! bound is recomputed from the profile, the multiplier and the constants,
//! never from solver state.

use serde::{Deserialize, Serialize};

use crate::energy::{Integrals, Problem, TOL_M};
use crate::error::{Error, Result};
use crate::grid::RadialFunction;
use crate::lab::{bracket_upper_bound, energy_upper_bound};

/// `[u]^2 + lambda |u|_2^2 - int (eta u^4 + g(u) u)`, relative to
/// `[u]^2 + |lambda| |u|_2^2`.
pub fn check_nehari(problem: &Problem, u: &RadialFunction, lambda: f64) -> Result<f64> {
    let i = nontrivial(problem, u)?;
    let eta = problem.params().eta;
    let residual = i.bracket() + lambda * i.mass - (eta * i.quartic + i.g_u);
    Ok(residual.abs() / (i.bracket() + lambda.abs() * i.mass))
}

/// `int (eta/4 u^4 + G(u) - lambda/2 u^2)`, relative to the same integral
/// with every term taken in absolute value.
pub fn check_pohozaev(problem: &Problem, u: &RadialFunction, lambda: f64) -> Result<f64> {
    let i = nontrivial(problem, u)?;
    let eta = problem.params().eta;
    let positive = 0.25 * eta * i.quartic + i.primitive;
    let residual = positive - 0.5 * lambda * i.mass;
    Ok(residual.abs() / (positive.abs() + 0.5 * lambda.abs() * i.mass))
}

fn nontrivial(problem: &Problem, u: &RadialFunction) -> Result<Integrals> {
    if u.is_zero() {
        return Err(Error::Precondition("identity checks need a nontrivial function".into()));
    }
    Integrals::of(problem, u)
}

/// `int_{r > R/2} u^2`.
pub fn tail_mass(u: &RadialFunction) -> f64 {
    let grid = u.grid();
    let half = 0.5 * grid.r_max();
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .zip(u.values())
        .filter(|((r, _), _)| **r > half)
        .map(|((_, w), v)| w * v * v)
        .sum()
}

/// Share of the Pohožaev integrand carried by `r > R/2`, where truncation
/// of the domain acts.
pub fn pohozaev_tail_budget(problem: &Problem, u: &RadialFunction, lambda: f64) -> Result<f64> {
    let grid = problem.grid();
    let eta = problem.params().eta;
    let nl = problem.nonlinearity();
    let half = 0.5 * grid.r_max();
    let (mut outer, mut total) = (0.0, 0.0);
    for ((r, w), &v) in grid.nodes().iter().zip(grid.weights()).zip(u.values()) {
        let f = w * (0.25 * eta * v.powi(4) + nl.primitive(v)? + 0.5 * lambda.abs() * v * v);
        total += f;
        if *r > half {
            outer += f;
        }
    }
    Ok(if total > 0.0 { outer / total } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub ok: bool,
    pub value: f64,
    pub bound: f64,
    /// `(bound - value) / bound`.
    pub margin: f64,
}

impl BoundCheck {
    fn new(value: f64, bound: f64) -> Self {
        BoundCheck { ok: value <= bound, value, bound, margin: (bound - value) / bound.abs() }
    }
}

/// Pass thresholds for the residual flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub constraint: f64,
    pub nehari: f64,
    pub pohozaev: f64,
    /// Allowed relative gap between the reported energy and the energy
    /// recomputed at twice the node density.
    pub refinement: f64,
}

impl Tolerances {
    pub fn for_order(m: usize) -> Self {
        Tolerances {
            constraint: TOL_M,
            nehari: 1e-4,
            pohozaev: if m == 1 { 1e-3 } else { 1e-2 },
            refinement: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub tolerances: Tolerances,
    pub mass: f64,
    pub energy: f64,
    pub bracket: f64,
    /// `|M(u)| / [u]^2`.
    pub constraint_residual: f64,
    pub constraint_ok: bool,
    pub nehari_residual: f64,
    pub nehari_ok: bool,
    pub pohozaev_residual: f64,
    pub pohozaev_tail_budget: f64,
    pub pohozaev_ok: bool,
    /// Set when the nonlinearity's growth condition is not certified, so
    /// the identity need not hold for true solutions either.
    pub pohozaev_conditional: bool,
    pub pde_residual: f64,
    pub lambda: f64,
    pub lambda_positive: bool,
    pub energy_positive: bool,
    pub energy_bound: Option<BoundCheck>,
    pub bracket_bound: Option<BoundCheck>,
    pub bracket_below_one: Option<bool>,
    /// Only meaningful for `m = 1` with odd `g`.
    pub nonneg_ok: Option<bool>,
    pub tail_mass: f64,
    /// Energy recomputed on the grid with twice the node density.
    pub refined_energy: f64,
    pub energy_consistent: bool,
    pub all_ok: bool,
}

/// Recomputes every check for `(u, lambda)`. `reported_energy` is compared
/// with the refined recomputation; `constants = (C_4, C_p)` enables the
/// bound checks.
pub fn verify_candidate(
    problem: &Problem,
    u: &RadialFunction,
    lambda: f64,
    reported_energy: Option<f64>,
    constants: Option<(f64, f64)>,
) -> Result<VerificationReport> {
    let params = *problem.params();
    let tol = Tolerances::for_order(params.m);
    let i = nontrivial(problem, u)?;
    let energy = i.energy(params.eta);
    let bracket = i.bracket();
    let constraint_residual = i.constraint(params.eta).abs() / bracket;
    let nehari_residual = check_nehari(problem, u, lambda)?;
    let pohozaev_residual = check_pohozaev(problem, u, lambda)?;
    let budget = pohozaev_tail_budget(problem, u, lambda)?;
    let pohozaev_ok = if params.m == 1 {
        pohozaev_residual <= tol.pohozaev + budget
    } else {
        pohozaev_residual <= tol.pohozaev * (1.0 + budget)
    };
    let pde = crate::solver::pde_residual(problem, u, lambda)?;

    let (energy_bound, bracket_bound) = match constants {
        Some((c4, cp)) => (
            Some(BoundCheck::new(energy, energy_upper_bound(&params, c4, cp)?)),
            Some(BoundCheck::new(bracket, bracket_upper_bound(&params, c4, energy)?)),
        ),
        None => (None, None),
    };
    let nonneg_ok = (params.m == 1 && problem.nonlinearity().is_odd()).then(|| {
        let min = u.values().iter().copied().fold(f64::INFINITY, f64::min);
        min >= -1e-8 * u.max_abs()
    });

    let fine = problem.on_grid(std::sync::Arc::new(problem.grid().refined()?))?;
    let refined_energy = Integrals::of(&fine, &u.interpolate_to(fine.grid().clone())?)?.energy(params.eta);
    let reference = reported_energy.unwrap_or(energy);
    let energy_consistent = (refined_energy - reference).abs() <= tol.refinement * refined_energy.abs();

    let constraint_ok = constraint_residual <= tol.constraint;
    let nehari_ok = nehari_residual <= tol.nehari;
    let lambda_positive = lambda > 0.0;
    let energy_positive = energy > 0.0;
    let all_ok = constraint_ok
        && nehari_ok
        && pohozaev_ok
        && lambda_positive
        && energy_positive
        && energy_bound.is_none_or(|b| b.ok)
        && bracket_bound.is_none_or(|b| b.ok && b.value < 1.0)
        && nonneg_ok.unwrap_or(true)
        && energy_consistent;
    Ok(VerificationReport {
        tolerances: tol,
        mass: i.mass,
        energy,
        bracket,
        constraint_residual,
        constraint_ok,
        nehari_residual,
        nehari_ok,
        pohozaev_residual,
        pohozaev_tail_budget: budget,
        pohozaev_ok,
        pohozaev_conditional: !problem.nonlinearity().growth_certified(),
        pde_residual: pde,
        lambda,
        lambda_positive,
        energy_positive,
        energy_bound,
        bracket_bound,
        bracket_below_one: bracket_bound.map(|b| b.value < 1.0),
        nonneg_ok,
        tail_mass: tail_mass(u),
        refined_energy,
        energy_consistent,
        all_ok,
    })
}

/// Verifies a solver report from its stored profile, multiplier and
/// constants alone.
pub fn check_bounds(report: &crate::solver::SolveReport, c4: f64, cp: f64) -> Result<VerificationReport> {
    let (problem, u) = report.rebuild()?;
    verify_candidate(&problem, &u, report.lambda, Some(report.energy), Some((c4, cp)))
}
