//! Energy `J`, the constraint `M`, mass-preserving dilations, the fiber map
//! and the two projections onto the constraint manifold.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::OperatorSet;
use crate::error::{Error, Result};
use crate::grid::{resample, RadialFunction, RadialGrid};
use crate::nonlin::{Nonlinearity, NonlinearityConfig, Params};

/// Relative tolerance for membership in the constraint manifold.
pub const TOL_M: f64 = 1e-8;
/// Guard on user-facing dilation factors.
pub const DILATION_GUARD: (f64, f64) = (1e-3, 1e3);
/// Range swept when bracketing the fiber root, `[2^-20, 2^20]`.
pub const SWEEP_EXPONENT: i32 = 20;

/// Grid, operators, constants and nonlinearity of one discrete problem.
#[derive(Clone)]
pub struct Problem {
    ops: Arc<OperatorSet>,
    params: Params,
    nl: Arc<dyn Nonlinearity>,
    config: Option<NonlinearityConfig>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("n", &self.ops.grid().len())
            .field("params", &self.params)
            .field("nonlinearity", &self.nl)
            .finish()
    }
}

impl Problem {
    /// Problem with the model nonlinearity.
    pub fn new(grid: Arc<RadialGrid>, params: Params) -> Result<Self> {
        Problem::from_config(grid, params, &NonlinearityConfig::Model)
    }

    pub fn from_config(grid: Arc<RadialGrid>, params: Params, config: &NonlinearityConfig) -> Result<Self> {
        let mut p = Problem::with_nonlinearity(grid, params, config.build(&params)?)?;
        p.config = Some(config.clone());
        Ok(p)
    }

    pub fn with_nonlinearity(
        grid: Arc<RadialGrid>,
        params: Params,
        nl: Arc<dyn Nonlinearity>,
    ) -> Result<Self> {
        if grid.m() != params.m {
            return Err(Error::InvalidArgument(format!(
                "grid is for m = {}, parameters for m = {}",
                grid.m(),
                params.m
            )));
        }
        Ok(Problem { ops: Arc::new(OperatorSet::new(grid)), params, nl, config: None })
    }

    /// Same constants and nonlinearity on another grid.
    pub fn on_grid(&self, grid: Arc<RadialGrid>) -> Result<Self> {
        let mut p = Problem::with_nonlinearity(grid, self.params, self.nl.clone())?;
        p.config = self.config.clone();
        Ok(p)
    }

    /// The serializable description of the nonlinearity, when there is one.
    pub fn nonlinearity_config(&self) -> Option<&NonlinearityConfig> {
        self.config.as_ref()
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.ops.grid()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn nonlinearity(&self) -> &dyn Nonlinearity {
        self.nl.as_ref()
    }
}

/// Every integral entering `J`, `M` and the identities, from one pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrals {
    pub mass: f64,
    pub grad_m: f64,
    pub hardy: f64,
    /// `int u^4`.
    pub quartic: f64,
    /// `int G(u)`.
    pub primitive: f64,
    /// `int H(u)`.
    pub excess: f64,
    /// `int g(u) u`.
    pub g_u: f64,
}

impl Integrals {
    pub fn of(problem: &Problem, u: &RadialFunction) -> Result<Self> {
        u.ensure_grid(problem.grid())?;
        let ops = problem.ops();
        let nl = problem.nonlinearity();
        let w = problem.grid().weights();
        let (mut mass, mut quartic, mut primitive, mut g_u) = (0.0, 0.0, 0.0, 0.0);
        for (&wi, &v) in w.iter().zip(u.values()) {
            let v2 = v * v;
            mass += wi * v2;
            quartic += wi * v2 * v2;
            if v != 0.0 {
                primitive += wi * nl.primitive(v)?;
                g_u += wi * nl.g(v)? * v;
            }
        }
        let out = Integrals {
            mass,
            grad_m: ops.grad_m_values(u.values()),
            hardy: ops.hardy_values(u.values(), problem.params().mu),
            quartic,
            primitive,
            excess: g_u - 2.0 * primitive,
            g_u,
        };
        if [out.mass, out.grad_m, out.hardy, out.quartic, out.primitive, out.g_u]
            .iter()
            .all(|x| x.is_finite())
        {
            Ok(out)
        } else {
            Err(Error::NonFinite("energy integrals".into()))
        }
    }

    /// `[u]_mu^2`.
    pub fn bracket(&self) -> f64 {
        self.grad_m + self.hardy
    }

    pub fn energy(&self, eta: f64) -> f64 {
        0.5 * self.bracket() - 0.25 * eta * self.quartic - self.primitive
    }

    pub fn constraint(&self, eta: f64) -> f64 {
        self.bracket() - 0.5 * eta * self.quartic - self.excess
    }

    /// Sum of the absolute terms of `M`, the scale for relative residuals.
    pub fn constraint_scale(&self, eta: f64) -> f64 {
        self.bracket().abs() + 0.5 * eta * self.quartic + self.excess.abs()
    }
}

/// `J(u) = [u]_mu^2 / 2 - int (eta/4 u^4 + G(u))`.
pub fn energy_j(problem: &Problem, u: &RadialFunction) -> Result<f64> {
    Ok(Integrals::of(problem, u)?.energy(problem.params().eta))
}

/// `M(u) = [u]_mu^2 - int (eta/2 u^4 + H(u))`.
pub fn constraint_m(problem: &Problem, u: &RadialFunction) -> Result<f64> {
    Ok(Integrals::of(problem, u)?.constraint(problem.params().eta))
}

/// A function with its cached mass, bracket, constraint and energy.
#[derive(Debug, Clone)]
pub struct VariationalState {
    pub u: RadialFunction,
    pub mass: f64,
    pub bracket: f64,
    pub constraint: f64,
    pub energy: f64,
}

impl VariationalState {
    pub fn new(problem: &Problem, u: RadialFunction) -> Result<Self> {
        let i = Integrals::of(problem, &u)?;
        let eta = problem.params().eta;
        Ok(VariationalState {
            mass: i.mass,
            bracket: i.bracket(),
            constraint: i.constraint(eta),
            energy: i.energy(eta),
            u,
        })
    }

    pub fn in_s(&self, rho: f64, tol_mass: f64) -> bool {
        (self.mass - rho).abs() <= tol_mass * rho
    }

    pub fn in_d(&self, rho: f64, tol_mass: f64) -> bool {
        self.mass <= rho * (1.0 + tol_mass)
    }

    pub fn in_m(&self, tol_m: f64) -> bool {
        !self.u.is_zero() && self.constraint.abs() <= tol_m * self.bracket
    }

    /// Whether the caches agree with a fresh evaluation to `rel`.
    pub fn is_consistent(&self, problem: &Problem, rel: f64) -> Result<bool> {
        let fresh = VariationalState::new(problem, self.u.clone())?;
        let close = |a: f64, b: f64, scale: f64| (a - b).abs() <= rel * scale.max(f64::MIN_POSITIVE);
        let scale = fresh.bracket.abs() + fresh.mass.abs();
        Ok(close(self.mass, fresh.mass, fresh.mass)
            && close(self.bracket, fresh.bracket, fresh.bracket)
            && close(self.constraint, fresh.constraint, scale)
            && close(self.energy, fresh.energy, scale))
    }
}

/// `s^m u(s .)` with the boundary node held at zero; no range guard.
pub(crate) fn dilate(u: &RadialFunction, s: f64) -> Result<RadialFunction> {
    if s == 1.0 {
        return Ok(u.clone());
    }
    let m = u.grid().m() as i32;
    let mut v = resample(u, s)?.scaled(s.powi(m));
    if let Some(last) = v.values_mut().last_mut() {
        *last = 0.0;
    }
    Ok(v)
}

/// The mass-preserving dilation `s^m u(s .)`.
pub fn dilate_mass_preserving(u: &RadialFunction, s: f64) -> Result<RadialFunction> {
    let (min, max) = DILATION_GUARD;
    if !(s >= min && s <= max) {
        return Err(Error::DilationOutOfRange { factor: s, min, max });
    }
    dilate(u, s)
}

/// `phi_u(s) = J(s^m u(s .))`.
pub fn fiber_phi(problem: &Problem, u: &RadialFunction, s: f64) -> Result<f64> {
    energy_j(problem, &dilate_mass_preserving(u, s)?)
}

/// `phi_u'(s) = M(s^m u(s .)) / s`.
pub fn fiber_dphi(problem: &Problem, u: &RadialFunction, s: f64) -> Result<f64> {
    Ok(constraint_m(problem, &dilate_mass_preserving(u, s)?)? / s)
}

/// Root finder for `gamma(t) = M(dilate(u, e^t))` in the log-scale variable.
struct Fiber<'a> {
    problem: &'a Problem,
    u: &'a RadialFunction,
    tol: f64,
}

struct FiberPoint {
    t: f64,
    gamma: f64,
    bracket: f64,
    v: RadialFunction,
}

impl Fiber<'_> {
    fn eval(&self, t: f64) -> Result<FiberPoint> {
        let v = dilate(self.u, t.exp())?;
        let i = Integrals::of(self.problem, &v)?;
        Ok(FiberPoint { t, gamma: i.constraint(self.problem.params().eta), bracket: i.bracket(), v })
    }

    /// Sign of `gamma`, counting an exponent overflow as negative (the
    /// exponential term dominates).
    fn sign(&self, t: f64) -> Result<Option<FiberPoint>> {
        match self.eval(t) {
            Ok(p) => Ok(Some(p)),
            Err(Error::Range { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn done(&self, p: &FiberPoint) -> bool {
        p.gamma.abs() <= self.tol * p.bracket
    }

    fn slope(&self, t: f64) -> Result<f64> {
        let d = 1e-6;
        Ok((self.eval(t + d)?.gamma - self.eval(t - d)?.gamma) / (2.0 * d))
    }

    /// Newton from `p`, kept inside `[lo, hi]` when a bracket is known.
    fn newton(&self, mut p: FiberPoint, steps: usize, lo: f64, hi: f64) -> Result<(FiberPoint, f64, f64)> {
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..steps {
            if self.done(&p) {
                break;
            }
            let slope = self.slope(p.t)?;
            let mut t = p.t - p.gamma / slope;
            if !(t > lo && t < hi) || !t.is_finite() {
                if lo.is_finite() && hi.is_finite() {
                    t = 0.5 * (lo + hi);
                } else {
                    break;
                }
            }
            let q = match self.sign(t)? {
                Some(q) => q,
                None => {
                    hi = hi.min(t);
                    continue;
                }
            };
            // gamma decreases through the root: positive below, negative above
            if q.gamma > 0.0 {
                lo = lo.max(q.t);
            } else {
                hi = hi.min(q.t);
            }
            p = q;
        }
        Ok((p, lo, hi))
    }
}

/// Mass-preserving projection onto `M` along the fiber: finds `s*` with
/// `|M(s*^m u(s* .))| <= TOL_M [.]_mu^2` and returns the dilated function.
pub fn project_fiber(problem: &Problem, u: &RadialFunction) -> Result<(RadialFunction, f64)> {
    project_fiber_tol(problem, u, TOL_M)
}

pub fn project_fiber_tol(problem: &Problem, u: &RadialFunction, tol: f64) -> Result<(RadialFunction, f64)> {
    u.ensure_grid(problem.grid())?;
    if u.is_zero() {
        return Err(Error::ZeroFunction);
    }
    let fiber = Fiber { problem, u, tol };
    let start = fiber.eval(0.0)?;
    if fiber.done(&start) {
        return Ok((start.v, 1.0));
    }

    // close to the manifold a few unbracketed Newton steps usually suffice
    if start.gamma.abs() <= 1e-2 * start.bracket {
        let (p, _, _) = fiber.newton(fiber.eval(0.0)?, 4, -0.1, 0.1)?;
        if fiber.done(&p) {
            return Ok((p.v, p.t.exp()));
        }
    }

    // geometric sweep s = 2^k away from 1 until gamma changes sign
    let ln2 = std::f64::consts::LN_2;
    let upward = start.gamma > 0.0;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut found = false;
    let mut prev = 0.0;
    for k in 1..=SWEEP_EXPONENT {
        let t = if upward { k as f64 * ln2 } else { -(k as f64) * ln2 };
        let negative = match fiber.sign(t)? {
            Some(p) => p.gamma <= 0.0,
            None => true,
        };
        if negative == upward {
            (lo, hi) = if upward { (prev, t) } else { (t, prev) };
            found = true;
            break;
        }
        prev = t;
    }
    if !found {
        let e = 2f64.powi(SWEEP_EXPONENT);
        return Err(Error::NoSignChange { s_min: 1.0 / e, s_max: e });
    }

    // bisection to relative width 1e-4 in s
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        match fiber.sign(mid)? {
            Some(p) if p.gamma > 0.0 => lo = mid,
            _ => hi = mid,
        }
    }
    let mid = 0.5 * (lo + hi);
    let p = match fiber.sign(mid)? {
        Some(p) => p,
        None => return Err(Error::RootNotConverged { residual: f64::INFINITY }),
    };
    let (p, lo, hi) = fiber.newton(p, 5, lo, hi)?;
    if fiber.done(&p) {
        return Ok((p.v, p.t.exp()));
    }
    // rare: fall back to further safeguarded steps
    let (p, _, _) = fiber.newton(p, 40, lo, hi)?;
    if fiber.done(&p) {
        Ok((p.v, p.t.exp()))
    } else {
        Err(Error::RootNotConverged { residual: p.gamma / p.bracket })
    }
}

/// Projection `u(r .)` onto `M` with `r = (int (eta/2 u^4 + H(u)) / [u]^2)^{1/(2m)}`,
/// refined by Newton on the discrete constraint. Does not preserve mass.
pub fn project_r(problem: &Problem, u: &RadialFunction) -> Result<(RadialFunction, f64)> {
    u.ensure_grid(problem.grid())?;
    let i = Integrals::of(problem, u)?;
    let eta = problem.params().eta;
    let numerator = 0.5 * eta * i.quartic + i.excess;
    if i.bracket() <= 0.0 {
        return Err(Error::ZeroFunction);
    }
    if !(numerator > 0.0) {
        return Err(Error::NonpositiveNumerator(numerator));
    }
    let m = problem.params().m as f64;
    let r0 = (numerator / i.bracket()).powf(0.5 / m);
    let (min, max) = DILATION_GUARD;
    if !(r0 >= min && r0 <= max) {
        return Err(Error::DilationOutOfRange { factor: r0, min, max });
    }
    if r0 < 1.0 {
        // stretching reads u on [0, r0 R]; whatever lies beyond is lost
        let cut = r0 * problem.grid().r_max();
        let grid = problem.grid();
        let lost: f64 = grid.nodes().iter().zip(grid.weights()).zip(u.values())
            .filter(|((r, _), _)| **r > cut)
            .map(|((_, w), v)| w * v * v)
            .sum();
        if lost > 1e-12 * i.mass {
            return Err(Error::Truncated(lost / i.mass));
        }
    }
    // Newton on log(num / [.]^2), which is close to linear in log r
    let gap = |t: f64| -> Result<(RadialFunction, f64, f64, f64)> {
        let mut v = resample(u, t.exp())?;
        if let Some(last) = v.values_mut().last_mut() {
            *last = 0.0;
        }
        let i = Integrals::of(problem, &v)?;
        let num = 0.5 * eta * i.quartic + i.excess;
        let f = if num > 0.0 { (num / i.bracket()).ln() } else { f64::NEG_INFINITY };
        Ok((v, f, i.constraint(eta), i.bracket()))
    };
    let (lo, hi) = (min.ln(), max.ln());
    let mut t = r0.ln();
    let (mut v, mut f, mut c, mut b) = gap(t)?;
    for _ in 0..20 {
        if c.abs() <= TOL_M * b {
            return Ok((v, t.exp()));
        }
        let d = 1e-6;
        let slope = (gap(t + d)?.1 - gap(t - d)?.1) / (2.0 * d);
        if !(slope.is_finite() && slope < 0.0 && f.is_finite()) {
            break;
        }
        t = (t - f / slope).clamp(lo, hi);
        (v, f, c, b) = gap(t)?;
    }
    if c.abs() <= TOL_M * b {
        Ok((v, t.exp()))
    } else {
        Err(Error::RootNotConverged { residual: c / b })
    }
}

/// Rescales the amplitude so that the mass equals `rho`.
pub fn normalize_mass(u: &RadialFunction, rho: f64) -> Result<RadialFunction> {
    let mass = u.mass();
    if !(mass > 0.0) {
        return Err(Error::ZeroFunction);
    }
    Ok(u.scaled((rho / mass).sqrt()))
}

/// Euclidean gradients, with respect to the free nodal values, of `J`, `M`
/// and the mass. Boundary components are zero.
pub(crate) struct Gradients {
    pub energy: Vec<f64>,
    pub constraint: Vec<f64>,
    pub mass: Vec<f64>,
}

pub(crate) fn gradients(problem: &Problem, u: &[f64]) -> Result<Gradients> {
    let ops = problem.ops();
    let p = problem.params();
    let nl = problem.nonlinearity();
    let w = problem.grid().weights();
    let b = ops.bracket_gradient(u, p.mu);
    let n = u.len();
    let mut energy = vec![0.0; n];
    let mut constraint = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for i in 0..ops.free() {
        let v = u[i];
        let cube = v * v * v;
        energy[i] = 0.5 * b[i] - w[i] * (p.eta * cube + nl.g(v)?);
        constraint[i] = b[i] - w[i] * (2.0 * p.eta * cube + nl.excess_derivative(v)?);
        mass[i] = 2.0 * w[i] * v;
    }
    Ok(Gradients { energy, constraint, mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grading;

    fn problem(m: usize, n: usize, params: Params) -> Problem {
        let grid = Arc::new(RadialGrid::new(m, 20.0, n, Grading::default()).unwrap());
        Problem::new(grid, params).unwrap()
    }

    fn gaussian(p: &Problem, amp: f64, width: f64) -> RadialFunction {
        RadialFunction::from_fn(p.grid().clone(), |r| amp * (-(r / width).powi(2)).exp()).unwrap()
    }

    #[test]
    fn zero_function_has_zero_energy_and_constraint() {
        let p = problem(1, 256, Params::model(1));
        let z = RadialFunction::zeros(p.grid().clone());
        assert_eq!(energy_j(&p, &z).unwrap(), 0.0);
        assert_eq!(constraint_m(&p, &z).unwrap(), 0.0);
        assert!(matches!(project_fiber(&p, &z), Err(Error::ZeroFunction)));
    }

    #[test]
    fn energy_matches_refined_oracle() {
        // same Gaussian on a grid ten times finer serves as the oracle
        let params = Params::model(1);
        let coarse = Problem::new(
            Arc::new(RadialGrid::new(1, 20.0, 2000, Grading::Geometric { ratio: 1.005 }).unwrap()),
            params,
        )
        .unwrap();
        let fine = Problem::new(
            Arc::new(RadialGrid::new(1, 20.0, 20000, Grading::Geometric { ratio: 1.0005 }).unwrap()),
            params,
        )
        .unwrap();
        let a = energy_j(&coarse, &gaussian(&coarse, 0.6, 1.0)).unwrap();
        let b = energy_j(&fine, &gaussian(&fine, 0.6, 1.0)).unwrap();
        assert!((a / b - 1.0).abs() < 1e-4, "{a} {b}");
    }

    #[test]
    fn energy_without_nonlinearity_is_half_bracket() {
        let params = Params { beta: 1e-300, ..Params::model(1) };
        let p = problem(1, 400, params);
        let u = gaussian(&p, 0.8, 1.0);
        let b = crate::calculus::bracket_mu(p.ops(), &u, 0.0).unwrap();
        assert!((energy_j(&p, &u).unwrap() - 0.5 * b).abs() < 1e-12 * b);
    }

    #[test]
    fn constraint_sign_changes_with_amplitude() {
        let p = problem(1, 600, Params::model(1));
        let small = constraint_m(&p, &gaussian(&p, 1e-3, 1.0)).unwrap();
        let large = constraint_m(&p, &gaussian(&p, 1.2, 1.0)).unwrap();
        assert!(small > 0.0 && large < 0.0, "{small} {large}");
    }

    #[test]
    fn dilation_preserves_mass_and_scales_bracket() {
        for m in 1..=2 {
            let params = Params::model(m);
            let p = problem(m, 1500, params);
            let u = gaussian(&p, 1.0, 1.5);
            let b0 = crate::calculus::bracket_mu(p.ops(), &u, 0.0).unwrap();
            for s in [0.5, 0.8, 1.25, 2.0] {
                let v = dilate_mass_preserving(&u, s).unwrap();
                assert!((v.mass() / u.mass() - 1.0).abs() < 1e-6, "m={m} s={s}");
                let b = crate::calculus::bracket_mu(p.ops(), &v, 0.0).unwrap();
                let expected = s.powi(2 * m as i32) * b0;
                assert!((b / expected - 1.0).abs() < 1e-3, "m={m} s={s}: {b} vs {expected}");
            }
        }
    }

    #[test]
    fn dilation_guard() {
        let p = problem(1, 64, Params::model(1));
        let u = gaussian(&p, 1.0, 1.0);
        assert_eq!(dilate_mass_preserving(&u, 1.0).unwrap().values(), u.values());
        assert!(matches!(dilate_mass_preserving(&u, 1e-4), Err(Error::DilationOutOfRange { .. })));
        assert!(dilate_mass_preserving(&u, 2e3).is_err());
    }

    #[test]
    fn fiber_derivative_matches_finite_differences() {
        let p = problem(1, 2000, Params::model(1));
        let u = gaussian(&p, 0.7, 1.2);
        assert_eq!(fiber_dphi(&p, &u, 1.0).unwrap(), constraint_m(&p, &u).unwrap());
        for s in [0.8, 1.0, 1.25] {
            let h = 1e-4 * s;
            let fd = (fiber_phi(&p, &u, s + h).unwrap() - fiber_phi(&p, &u, s - h).unwrap()) / (2.0 * h);
            let exact = fiber_dphi(&p, &u, s).unwrap();
            let scale = Integrals::of(&p, &dilate(&u, s).unwrap()).unwrap().constraint_scale(0.0) / s;
            assert!((fd - exact).abs() < 1e-4 * scale, "s={s}: {fd} vs {exact}");
        }
    }

    #[test]
    fn fiber_projection_lands_on_manifold_and_is_idempotent() {
        let p = problem(1, 1000, Params::model(1));
        let u = gaussian(&p, 0.05, 1.0);
        let (v, s) = project_fiber(&p, &u).unwrap();
        assert!(s > 1.0);
        let st = VariationalState::new(&p, v.clone()).unwrap();
        assert!(st.in_m(TOL_M), "{} vs {}", st.constraint, st.bracket);
        assert!(st.energy > 0.0);
        let (_, s2) = project_fiber(&p, &v).unwrap();
        assert!((s2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fiber_projection_from_above() {
        let p = problem(1, 1000, Params::model(1));
        let u = gaussian(&p, 1.0, 0.3);
        let (v, s) = project_fiber(&p, &u).unwrap();
        assert!(s < 1.0);
        assert!(constraint_m(&p, &v).unwrap().abs() <= TOL_M * crate::calculus::bracket_mu(p.ops(), &v, 0.0).unwrap());
    }

    #[test]
    fn r_projection_lands_on_manifold() {
        let p = problem(1, 1000, Params::model(1));
        let u = gaussian(&p, 0.9, 1.0);
        let (v, r) = project_r(&p, &u).unwrap();
        assert!(r > 0.0);
        let i = Integrals::of(&p, &v).unwrap();
        assert!(i.constraint(0.0).abs() <= TOL_M * i.bracket());
        // continuous formula for m = 1 with exponent 1/(2m)
        let i0 = Integrals::of(&p, &u).unwrap();
        let r_formula = (i0.excess / i0.bracket()).sqrt();
        assert!((r / r_formula - 1.0).abs() < 1e-2);
    }

    #[test]
    fn r_projection_rejects_tiny_amplitude() {
        let p = problem(1, 400, Params::model(1));
        let u = gaussian(&p, 1e-4, 1.0);
        assert!(project_r(&p, &u).is_err());
        let z = RadialFunction::zeros(p.grid().clone());
        assert!(project_r(&p, &z).is_err());
    }

    #[test]
    fn state_flags_and_consistency() {
        let p = problem(1, 500, Params::model(1));
        let u = normalize_mass(&gaussian(&p, 1.0, 1.0), 1.0).unwrap();
        let st = VariationalState::new(&p, u).unwrap();
        assert!(st.in_s(1.0, 1e-12) && st.in_d(1.0, 1e-12));
        assert!(st.is_consistent(&p, 1e-14).unwrap());
        let mut stale = st.clone();
        stale.energy *= 1.1;
        assert!(!stale.is_consistent(&p, 1e-6).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let params = Params { mu: 0.1, eta: 0.5, ..Params::model(1) };
        let p = problem(1, 200, params);
        let u = gaussian(&p, 0.5, 1.0);
        let g = gradients(&p, u.values()).unwrap();
        let top = g.energy.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        for i in [5, 40, 80] {
            let h = 1e-6;
            let mut up = u.clone();
            up.values_mut()[i] += h;
            let mut dn = u.clone();
            dn.values_mut()[i] -= h;
            let fd = (energy_j(&p, &up).unwrap() - energy_j(&p, &dn).unwrap()) / (2.0 * h);
            assert!((fd - g.energy[i]).abs() < 1e-6 * top, "{i}: {fd} vs {}", g.energy[i]);
            let fd = (constraint_m(&p, &up).unwrap() - constraint_m(&p, &dn).unwrap()) / (2.0 * h);
            assert!((fd - g.constraint[i]).abs() < 1e-6 * top, "{i}: {fd} vs {}", g.constraint[i]);
        }
    }
}
