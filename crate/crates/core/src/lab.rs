//! Functional-inequality toolkit: Gagliardo–Nirenberg constants, the
//! Moser–Trudinger probe, the admissibility gate and the closed-form energy
//! and bracket bounds.

use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize, Serializer};

use crate::calculus::OperatorSet;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{Grading, RadialFunction, RadialGrid};
use crate::nonlin::{alpha_m, Params, EXP_GUARD};
use crate::profiles::random_profiles;
use crate::report::SCHEMA;

fn values_only<S: Serializer>(u: &RadialFunction, s: S) -> std::result::Result<S::Ok, S::Error> {
    u.values().serialize(s)
}

/// Result of a Gagliardo–Nirenberg validation battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnValidation {
    pub count: usize,
    pub seed: u64,
    pub violations: usize,
    /// Largest `Q(v) / c_p` over the battery.
    pub max_ratio: f64,
}

/// Estimated optimal constant of `|u|_p <= C_p |nabla^m u|_2^{1-2/p} |u|_2^{2/p}`.
#[derive(Debug, Clone, Serialize)]
pub struct GNEstimate {
    pub schema: String,
    pub p: f64,
    pub m: usize,
    pub c_p: f64,
    #[serde(serialize_with = "values_only")]
    pub maximizer: RadialFunction,
    pub quotient_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the ascent stopped before `MIN_ITERS` accepted steps.
    pub low_confidence: bool,
    pub validation: Option<GnValidation>,
    /// `c_p` recomputed on the grid with twice the node density.
    pub refined_c_p: Option<f64>,
}

const MIN_ITERS: usize = 5;

/// Quotient `Q(u) = |u|_p / (|nabla^m u|_2^{1-2/p} |u|_2^{2/p})`.
pub fn gn_quotient(ops: &OperatorSet, u: &RadialFunction, p: f64) -> Result<f64> {
    u.ensure_grid(ops.grid())?;
    Ok(log_quotient(ops, u.values(), p)?.exp())
}

fn log_quotient(ops: &OperatorSet, u: &[f64], p: f64) -> Result<f64> {
    let w = ops.grid().weights();
    let lp: f64 = u.iter().zip(w).map(|(v, w)| w * v.abs().powf(p)).sum();
    let mass: f64 = u.iter().zip(w).map(|(v, w)| w * v * v).sum();
    let grad = ops.grad_m_values(u);
    if !(lp > 0.0 && mass > 0.0 && grad > 0.0) {
        return Err(Error::ZeroFunction);
    }
    Ok(lp.ln() / p - 0.5 * (1.0 - 2.0 / p) * grad.ln() - mass.ln() / p)
}

fn log_quotient_gradient(ops: &OperatorSet, u: &[f64], p: f64) -> Vec<f64> {
    let w = ops.grid().weights();
    let nf = ops.free();
    let lp: f64 = u.iter().zip(w).map(|(v, w)| w * v.abs().powf(p)).sum();
    let mass: f64 = u.iter().zip(w).map(|(v, w)| w * v * v).sum();
    let grad = ops.grad_m_values(u);
    let au = ops.polyharmonic_form().matvec(&u[..nf]);
    (0..nf)
        .map(|i| {
            let v = u[i];
            w[i] * v.abs().powf(p - 2.0) * v / lp - (1.0 - 2.0 / p) * au[i] / grad - 2.0 * w[i] * v / (p * mass)
        })
        .collect()
}

/// Preconditioned Armijo ascent of `log Q` from a Gaussian.
pub fn estimate_gn_constant(p: f64, m: usize, grid: Arc<RadialGrid>, iters: usize) -> Result<GNEstimate> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must exceed 2, got {p}")));
    }
    if grid.m() != m {
        return Err(Error::GridMismatch);
    }
    let ops = OperatorSet::new(grid.clone());
    let metric = ops.sobolev_metric(0.0)?;
    let nf = ops.free();
    let width = grid.r_max() / 10.0;
    let mut u = RadialFunction::from_fn(grid.clone(), |r| (-(r / width).powi(2)).exp())?;
    u.values_mut()[nf] = 0.0;
    u = u.scaled(u.mass().sqrt().recip());

    let mut q = log_quotient(&ops, u.values(), p)?;
    let mut history = vec![q.exp()];
    let mut step = 1.0;
    let mut converged = false;
    let mut accepted = 0;
    let mut stall = 0;
    for it in 0..iters {
        let g = log_quotient_gradient(&ops, u.values(), p);
        let d = metric.solve(&g);
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) || slope < 1e-28 {
            converged = true;
            debug!("gn ascent: vanishing slope after {it} iterations");
            break;
        }
        let mut moved = false;
        for _ in 0..60 {
            let mut trial = u.values().to_vec();
            for (t, di) in trial.iter_mut().zip(&d) {
                *t += step * di;
            }
            if let Ok(qt) = log_quotient(&ops, &trial, p) {
                if qt >= q + 1e-4 * step * slope {
                    let gain = qt - q;
                    let v = RadialFunction::new(grid.clone(), trial)?;
                    u = v.scaled(v.mass().sqrt().recip());
                    q = qt;
                    history.push(q.exp());
                    step *= 2.0;
                    moved = true;
                    stall = if gain < 1e-13 * q.abs().max(1.0) { stall + 1 } else { 0 };
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            converged = true;
            break;
        }
        accepted += 1;
        if stall >= 10 {
            converged = true;
            break;
        }
    }
    info!("gn p={p} m={m}: c_p = {:.12} after {accepted} steps", q.exp());
    Ok(GNEstimate {
        schema: SCHEMA.into(),
        p,
        m,
        c_p: q.exp(),
        maximizer: u,
        quotient_history: history,
        iterations: accepted,
        converged,
        low_confidence: accepted < MIN_ITERS && !converged,
        validation: None,
        refined_c_p: None,
    })
}

impl GNEstimate {
    /// Checks `Q(v) <= c_p (1 + 1e-6)` on `count` seeded random profiles.
    pub fn validate(&mut self, count: usize, seed: u64, exec: Execution) -> Result<&GnValidation> {
        let grid = self.maximizer.grid().clone();
        let ops = OperatorSet::new(grid.clone());
        let profiles = random_profiles(&grid, count, seed, exec)?;
        let ratios: Vec<f64> = exec
            .map(&profiles, |v| gn_quotient(&ops, v, self.p).map(|q| q / self.c_p))
            .into_iter()
            .collect::<Result<_>>()?;
        let violations = ratios.iter().filter(|&&r| r > 1.0 + 1e-6).count();
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        self.validation = Some(GnValidation { count, seed, violations, max_ratio });
        Ok(self.validation.as_ref().unwrap())
    }

    /// Re-estimates on the grid with twice the node density.
    pub fn refine(&mut self, iters: usize) -> Result<f64> {
        let fine = Arc::new(self.maximizer.grid().refined()?);
        let est = estimate_gn_constant(self.p, self.m, fine, iters)?;
        self.refined_c_p = Some(est.c_p);
        Ok(est.c_p)
    }
}

/// Default grid for constant estimation: `R = 20`, geometric grading.
pub fn default_gn_grid(m: usize) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::new(m, 20.0, 1024, Grading::default())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Bounded,
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema: String,
    pub m: usize,
    pub alpha: f64,
    pub alpha_m: f64,
    pub alpha_ratio: f64,
    /// Concentration levels `L` of the family.
    pub levels: Vec<f64>,
    /// `F(u_L) = int (e^{alpha u_L^2} - 1) / |u_L|_2^2`.
    pub values: Vec<f64>,
    pub verdict: Verdict,
}

/// `int (e^{alpha u^2} - 1) dx`.
pub fn exp_integral(u: &RadialFunction, alpha: f64) -> Result<f64> {
    crate::grid::integrate_with(u, |v| {
        let x = alpha * v * v;
        if x > EXP_GUARD {
            Err(Error::Range { exponent: x, guard: EXP_GUARD })
        } else {
            Ok(x.exp_m1())
        }
    })
}

/// Concentrating profile at level `L`, normalized so that the discrete
/// `|nabla^m u|_2^2 = 1`.
///
/// For `m = 1` this is Moser's function: `sqrt(L)` inside radius `e^{-L}`,
/// `log(1/r)/sqrt(L)` out to radius 1. For `m >= 2` it is the smoothed
/// logarithm `log((1 + e^2)/(r^2 + e^2))/2` with `e = e^{-L}`, cut off
/// smoothly between radius 1/2 and 1.
pub fn moser_profile(ops: &OperatorSet, level: f64) -> Result<RadialFunction> {
    let grid = ops.grid().clone();
    let m = grid.m();
    let mut u = if m == 1 {
        let core = (-level).exp();
        RadialFunction::from_fn(grid, |r| {
            if r <= core {
                level.sqrt()
            } else if r < 1.0 {
                -r.ln() / level.sqrt()
            } else {
                0.0
            }
        })?
    } else {
        let e2 = (-2.0 * level).exp();
        RadialFunction::from_fn(grid, |r| {
            let cut = if r <= 0.5 {
                1.0
            } else if r >= 1.0 {
                0.0
            } else {
                let x = (r - 0.5) / 0.5;
                let a = (-1.0 / (1.0 - x)).exp();
                let b = (-1.0 / x).exp();
                a / (a + b)
            };
            0.5 * ((1.0 + e2) / (r * r + e2)).ln() * cut
        })?
    };
    let nf = ops.free();
    u.values_mut()[nf] = 0.0;
    let g = ops.grad_m_norm_sq(&u)?;
    if !(g > 0.0) {
        return Err(Error::ZeroFunction);
    }
    Ok(u.scaled(g.sqrt().recip()))
}

/// Evaluates `F` along the family `L = 2, 4, ..., 2 family_size` and applies
/// the rule: GROWING iff each of the last three steps increases `F` by more
/// than 5%.
pub fn moser_trudinger_probe(
    m: usize,
    alpha: f64,
    grid: Arc<RadialGrid>,
    family_size: usize,
) -> Result<ProbeReport> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    if grid.m() != m {
        return Err(Error::GridMismatch);
    }
    if family_size < 4 {
        return Err(Error::InvalidArgument("family needs at least four members".into()));
    }
    let ops = OperatorSet::new(grid);
    let levels: Vec<f64> = (1..=family_size).map(|k| 2.0 * k as f64).collect();
    let values = levels
        .iter()
        .map(|&l| {
            let u = moser_profile(&ops, l)?;
            Ok(exp_integral(&u, alpha)? / u.mass())
        })
        .collect::<Result<Vec<f64>>>()?;
    let tail = &values[values.len() - 4..];
    let growing = tail.windows(2).all(|w| w[1] > 1.05 * w[0]);
    let am = alpha_m(m);
    Ok(ProbeReport {
        schema: SCHEMA.into(),
        m,
        alpha,
        alpha_m: am,
        alpha_ratio: alpha / am,
        levels,
        values,
        verdict: if growing { Verdict::Growing } else { Verdict::Bounded },
    })
}

/// Grid resolving the probe family: unit-scale support, cores down to
/// `e^{-2 family_size}`.
pub fn default_probe_grid(m: usize) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::new(m, 2.0, 4000, Grading::Geometric { ratio: 1.01 })?))
}

/// `(1 - (eta/2) C_4^4 rho)`; must be positive for every bound below.
fn quartic_slack(params: &Params, c4: f64) -> f64 {
    1.0 - 0.5 * params.eta * c4.powi(4) * params.rho
}

fn check_exponents(params: &Params) -> Result<()> {
    if !(params.p > 4.0) {
        return Err(Error::InvalidArgument(format!("p must exceed 4, got {}", params.p)));
    }
    if !(params.theta > 4.0) {
        return Err(Error::InvalidArgument(format!("theta must exceed 4, got {}", params.theta)));
    }
    Ok(())
}

/// Smallest admissible `beta`:
/// `((θ-2)(p-4)/((θ-4)(p-2)))^{(p-4)/2} (1 - η C_4^4 ρ / 2) / ((p-2) C_p^p ρ)`.
pub fn beta_threshold(params: &Params, c4: f64, cp: f64) -> Result<f64> {
    check_exponents(params)?;
    let (p, t, rho) = (params.p, params.theta, params.rho);
    let prefactor = ((t - 2.0) * (p - 4.0) / ((t - 4.0) * (p - 2.0))).powf(0.5 * (p - 4.0));
    Ok(prefactor * quartic_slack(params, c4) / ((p - 2.0) * cp.powf(p) * rho))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub cp_factor: f64,
    pub beta_threshold: f64,
    pub beta_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub schema: String,
    pub c4: f64,
    pub cp: f64,
    /// `eta C_4^4 rho`, admissible below 2.
    pub hstrict_value: f64,
    pub hstrict: bool,
    pub hstrict_margin: f64,
    pub beta: f64,
    pub beta_threshold: f64,
    pub beta_ok: bool,
    /// `beta / threshold - 1`.
    pub beta_margin: f64,
    /// Gate re-evaluated with `c_p` perturbed by 5% each way.
    pub sensitivity: Vec<Sensitivity>,
    pub admissible: bool,
}

pub fn check_admissibility(params: &Params, c4: &GNEstimate, cp: &GNEstimate) -> Result<AdmissibilityReport> {
    if c4.p != 4.0 || c4.m != params.m {
        return Err(Error::Precondition("c4 must be the p = 4 estimate for the same m".into()));
    }
    if cp.p != params.p || cp.m != params.m {
        return Err(Error::Precondition("cp must be estimated for the same p and m".into()));
    }
    check_admissibility_values(params, c4.c_p, cp.c_p)
}

pub fn check_admissibility_values(params: &Params, c4: f64, cp: f64) -> Result<AdmissibilityReport> {
    let threshold = beta_threshold(params, c4, cp)?;
    let hstrict_value = params.eta * c4.powi(4) * params.rho;
    let hstrict = hstrict_value < 2.0;
    let beta_ok = params.beta > threshold;
    let sensitivity = [0.95, 1.05]
        .iter()
        .map(|&f| -> Result<Sensitivity> {
            let t = beta_threshold(params, c4, f * cp)?;
            Ok(Sensitivity { cp_factor: f, beta_threshold: t, beta_ok: params.beta > t })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdmissibilityReport {
        schema: SCHEMA.into(),
        c4,
        cp,
        hstrict_value,
        hstrict,
        hstrict_margin: 2.0 - hstrict_value,
        beta: params.beta,
        beta_threshold: threshold,
        beta_ok,
        beta_margin: if threshold > 0.0 { params.beta / threshold - 1.0 } else { f64::INFINITY },
        sensitivity,
        admissible: hstrict && beta_ok,
    })
}

/// Upper bound on the ground-state level:
/// `(1/2 - 1/(p-2)) (1/(β(p-2) C_p^p ρ))^{2/(p-4)} (1 - η C_4^4 ρ/2)^{(p-2)/(p-4)}`.
pub fn energy_upper_bound(params: &Params, c4: f64, cp: f64) -> Result<f64> {
    check_exponents(params)?;
    let slack = quartic_slack(params, c4);
    if !(slack > 0.0) {
        return Err(Error::Precondition("eta C_4^4 rho must be below 2".into()));
    }
    let p = params.p;
    let base = 1.0 / (params.beta * (p - 2.0) * cp.powf(p) * params.rho);
    Ok((0.5 - 1.0 / (p - 2.0)) * base.powf(2.0 / (p - 4.0)) * slack.powf((p - 2.0) / (p - 4.0)))
}

/// Bound on `[u]_mu^2` at energy level `c_beta`:
/// `4/(2 - η C_4^4 ρ) (θ-2)/(θ-4) c_beta`.
pub fn bracket_upper_bound(params: &Params, c4: f64, c_beta: f64) -> Result<f64> {
    check_exponents(params)?;
    let denom = 2.0 - params.eta * c4.powi(4) * params.rho;
    if !(denom > 0.0) {
        return Err(Error::Precondition("eta C_4^4 rho must be below 2".into()));
    }
    let t = params.theta;
    Ok(4.0 / denom * (t - 2.0) / (t - 4.0) * c_beta)
}
