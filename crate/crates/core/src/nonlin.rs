//! The nonlinearity `g`, its primitive `G`, the combination
//! `H(s) = g(s) s - 2 G(s)` and `h = H'`, plus numerical audits of the
//! structural assumptions a nonlinearity must satisfy.
//!
//! The model is `g(s) = p beta |s|^{p-2} s exp(alpha s^2)`. Its primitive has
//! no closed form; it is summed from the power series
//! `G(s) = p beta sum_k alpha^k |s|^{p+2k} / (k! (p+2k))` with a ratio-test
//! bound on the remainder.

use std::f64::consts::PI;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate_with, surface_measure, RadialFunction};

/// Largest admissible `alpha s^2` before `exp` is considered to overflow.
pub const EXP_GUARD: f64 = 700.0;

/// Critical Moser–Trudinger exponent `2m (2 pi)^{2m} / omega_{2m-1}`.
pub fn alpha_m(m: usize) -> f64 {
    2.0 * m as f64 * (2.0 * PI).powi(2 * m as i32) / surface_measure(m)
}

/// Problem constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub m: usize,
    pub mu: f64,
    pub eta: f64,
    /// Prescribed mass.
    pub rho: f64,
    pub beta: f64,
    pub p: f64,
    pub theta: f64,
    /// Exponential rate of the model nonlinearity.
    pub alpha: f64,
}

impl Params {
    /// Model defaults: `mu = eta = 0`, `rho = beta = 1`, `p = theta = 6`,
    /// `alpha = alpha_m`.
    pub fn model(m: usize) -> Self {
        Params { m, mu: 0.0, eta: 0.0, rho: 1.0, beta: 1.0, p: 6.0, theta: 6.0, alpha: alpha_m(m) }
    }

    pub fn alpha_m(&self) -> f64 {
        alpha_m(self.m)
    }

    /// Checks the ranges the existence theory needs.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if !(self.mu >= 0.0 && self.eta >= 0.0) {
            return bad("mu and eta must be nonnegative");
        }
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !(self.p > 4.0) {
            return bad("p must exceed 4");
        }
        if !(self.theta > 4.0) {
            return bad("theta must exceed 4");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and nonnegative");
        }
        Ok(())
    }
}

/// A nonlinearity together with the derived functions the variational
/// problem uses.
pub trait Nonlinearity: Debug + Send + Sync {
    fn g(&self, s: f64) -> Result<f64>;
    /// `G(s) = int_0^s g`.
    fn primitive(&self, s: f64) -> Result<f64>;
    /// `h(s) = H'(s) = g'(s) s - g(s)`.
    fn excess_derivative(&self, s: f64) -> Result<f64>;
    /// `H(s) = g(s) s - 2 G(s)`.
    fn excess(&self, s: f64) -> Result<f64> {
        Ok(self.g(s)? * s - 2.0 * self.primitive(s)?)
    }
    fn is_odd(&self) -> bool;
    /// Whether the growth condition behind the Pohožaev identity is known to
    /// hold (true for the model, unverifiable for tabulated data).
    fn growth_certified(&self) -> bool;
}

/// The model nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelNonlinearity {
    pub p: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Initial truncation of the series for `G`; extended adaptively.
    pub series_terms: usize,
}

const SERIES_CAP: usize = 1 << 14;

#[inline]
fn finite(v: f64, exponent: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range { exponent, guard: EXP_GUARD })
    }
}

impl ModelNonlinearity {
    pub fn new(params: &Params) -> Self {
        ModelNonlinearity { p: params.p, beta: params.beta, alpha: params.alpha, series_terms: 64 }
    }

    #[inline]
    fn guard(&self, s: f64) -> Result<f64> {
        let x = self.alpha * s * s;
        if x > EXP_GUARD || !x.is_finite() {
            Err(Error::Range { exponent: x, guard: EXP_GUARD })
        } else {
            Ok(x)
        }
    }

    /// `g'(s) = p beta |s|^{p-2} e^{alpha s^2} ((p-1) + 2 alpha s^2)`.
    pub fn g_prime(&self, s: f64) -> Result<f64> {
        let x = self.guard(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        finite(self.p * self.beta * s.abs().powf(self.p - 2.0) * x.exp() * ((self.p - 1.0) + 2.0 * x), x)
    }

    /// Series value and the number of terms used.
    pub fn primitive_with_terms(&self, s: f64) -> Result<(f64, usize)> {
        let x = self.guard(s)?;
        let a = s.abs();
        if a == 0.0 {
            return Ok((0.0, 0));
        }
        let p = self.p;
        let mut term = self.beta * a.powf(p);
        let mut sum = term;
        let mut k = 0usize;
        let mut cap = self.series_terms.max(1);
        loop {
            let kf = k as f64;
            term *= x / (kf + 1.0) * (p + 2.0 * kf) / (p + 2.0 * kf + 2.0);
            sum += term;
            k += 1;
            // ratio-test bound on the remainder after term k
            let q = x / (k as f64 + 1.0);
            if q < 1.0 {
                let tail = term * q / (1.0 - q);
                if tail <= 1e-17 * sum {
                    return finite(sum, x).map(|v| (v, k + 1));
                }
            }
            if k >= cap {
                if cap >= SERIES_CAP {
                    let q = x / (k as f64 + 1.0);
                    let tail = if q < 1.0 { term * q / (1.0 - q) } else { f64::INFINITY };
                    if tail <= 1e-12 * sum {
                        return Ok((sum, k + 1));
                    }
                    return Err(Error::Precision { terms: k + 1 });
                }
                cap = (cap * 2).min(SERIES_CAP);
            }
        }
    }
}

impl Nonlinearity for ModelNonlinearity {
    fn g(&self, s: f64) -> Result<f64> {
        let x = self.guard(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        finite(self.p * self.beta * s.abs().powf(self.p - 2.0) * s * x.exp(), x)
    }

    fn primitive(&self, s: f64) -> Result<f64> {
        self.primitive_with_terms(s).map(|(v, _)| v)
    }

    fn excess_derivative(&self, s: f64) -> Result<f64> {
        let x = self.guard(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        finite(self.p * self.beta * s.abs().powf(self.p - 2.0) * s * x.exp() * ((self.p - 2.0) + 2.0 * x), x)
    }

    fn is_odd(&self) -> bool {
        true
    }

    fn growth_certified(&self) -> bool {
        true
    }
}

/// User-supplied `g`, tabulated on `0 = s_0 < s_1 < ... < s_K` and extended
/// oddly. `g` is a natural cubic spline; `G` integrates the spline exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedNonlinearity {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives of the spline at the knots.
    curvature: Vec<f64>,
    /// `G` at the knots.
    cumulative: Vec<f64>,
}

impl TabulatedNonlinearity {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        if k < 3 || values.len() != k {
            return Err(Error::InvalidArgument("need at least three (s, g) samples".into()));
        }
        if knots[0] != 0.0 || values[0] != 0.0 {
            return Err(Error::InvalidArgument("table must start at g(0) = 0".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("knots must increase".into()));
        }
        // natural spline: tridiagonal system for interior curvatures
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let mut curvature = vec![0.0; k];
        if k > 2 {
            let nn = k - 2;
            let mut diag = vec![0.0; nn];
            let mut rhs = vec![0.0; nn];
            for i in 0..nn {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
            }
            for i in 1..nn {
                let f = h[i] / diag[i - 1];
                diag[i] -= f * h[i];
                rhs[i] -= f * rhs[i - 1];
            }
            for i in (0..nn).rev() {
                let upper = if i + 1 < nn { h[i + 1] * curvature[i + 2] } else { 0.0 };
                curvature[i + 1] = (rhs[i] - upper) / diag[i];
            }
        }
        let mut t = TabulatedNonlinearity { knots, values, curvature, cumulative: vec![0.0; k] };
        for i in 1..k {
            t.cumulative[i] = t.cumulative[i - 1] + t.segment_integral(i - 1, h[i - 1]);
        }
        Ok(t)
    }

    fn segment(&self, a: f64) -> Result<usize> {
        let last = *self.knots.last().unwrap();
        if a > last {
            return Err(Error::Range { exponent: a, guard: last });
        }
        Ok(self.knots.partition_point(|&x| x <= a).saturating_sub(1).min(self.knots.len() - 2))
    }

    /// Integral of the spline over `[s_i, s_i + t]`.
    fn segment_integral(&self, i: usize, t: f64) -> f64 {
        let h = self.knots[i + 1] - self.knots[i];
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (c0, c1) = (self.curvature[i], self.curvature[i + 1]);
        // S(x) = A y0 + B y1 + ((A^3 - A) c0 + (B^3 - B) c1) h^2 / 6,
        // A = 1 - x/h, B = x/h; integrate in x over [0, t].
        let b = t / h;
        let int_b = h * b * b / 2.0;
        let int_a = t - int_b;
        let int_b3 = h * b.powi(4) / 4.0;
        let int_a3 = h * (1.0 - (1.0 - b).powi(4)) / 4.0;
        y0 * int_a + y1 * int_b + ((int_a3 - int_a) * c0 + (int_b3 - int_b) * c1) * h * h / 6.0
    }

    fn eval_abs(&self, a: f64) -> Result<(f64, f64)> {
        let i = self.segment(a)?;
        let h = self.knots[i + 1] - self.knots[i];
        let bb = (a - self.knots[i]) / h;
        let aa = 1.0 - bb;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (c0, c1) = (self.curvature[i], self.curvature[i + 1]);
        let val = aa * y0 + bb * y1 + ((aa.powi(3) - aa) * c0 + (bb.powi(3) - bb) * c1) * h * h / 6.0;
        let der = (y1 - y0) / h + (-(3.0 * aa * aa - 1.0) * c0 + (3.0 * bb * bb - 1.0) * c1) * h / 6.0;
        Ok((val, der))
    }
}

impl Nonlinearity for TabulatedNonlinearity {
    fn g(&self, s: f64) -> Result<f64> {
        let (v, _) = self.eval_abs(s.abs())?;
        Ok(v * s.signum())
    }

    fn primitive(&self, s: f64) -> Result<f64> {
        let a = s.abs();
        let i = self.segment(a)?;
        Ok(self.cumulative[i] + self.segment_integral(i, a - self.knots[i]))
    }

    fn excess_derivative(&self, s: f64) -> Result<f64> {
        let (v, d) = self.eval_abs(s.abs())?;
        // g odd => g' even
        Ok(d * s - v * s.signum())
    }

    fn is_odd(&self) -> bool {
        true
    }

    fn growth_certified(&self) -> bool {
        false
    }
}

/// Serializable choice of nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NonlinearityConfig {
    /// `p beta |s|^{p-2} s e^{alpha s^2}` with the constants of `Params`.
    #[default]
    Model,
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl NonlinearityConfig {
    pub fn build(&self, params: &Params) -> Result<std::sync::Arc<dyn Nonlinearity>> {
        Ok(match self {
            NonlinearityConfig::Model => std::sync::Arc::new(ModelNonlinearity::new(params)),
            NonlinearityConfig::Tabulated { knots, values } => {
                std::sync::Arc::new(TabulatedNonlinearity::new(knots.clone(), values.clone())?)
            }
        })
    }
}

/// One assumption's verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub passed: bool,
    /// Sample point where the check fails (or the tightest point).
    pub witness: Option<f64>,
    /// Smallest relative slack observed (negative when violated).
    pub margin: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralCheck {
    pub probe: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema: String,
    pub samples: usize,
    pub s_max: f64,
    pub a0: AssumptionCheck,
    pub a1: AssumptionCheck,
    pub a2: AssumptionCheck,
    pub a3_pointwise: AssumptionCheck,
    pub a3_integral: Vec<IntegralCheck>,
    pub a3: AssumptionCheck,
    pub a4: AssumptionCheck,
    pub all_passed: bool,
}

/// `count` points spaced log-uniformly on `[s_min, s_max]`.
pub fn log_sample(s_min: f64, s_max: f64, count: usize) -> Vec<f64> {
    let (a, b) = (s_min.ln(), s_max.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1).max(1) as f64).exp()).collect()
}

const STRICT_REL: f64 = 1e-10;

/// Audits (A0)–(A4) for `g` on a sample of positive points (mirrored to
/// negative ones) and, for the integral form of (A3), on probe functions.
///
/// (A0)'s condition at infinity is asymptotic and is not checked; only the
/// `O(|s|)` behaviour at the origin is.
pub fn audit_assumptions(
    nl: &dyn Nonlinearity,
    params: &Params,
    sample: &[f64],
    probes: &[RadialFunction],
) -> Result<AuditReport> {
    let mut pos: Vec<f64> = sample.iter().copied().filter(|s| *s > 0.0 && s.is_finite()).collect();
    if pos.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    pos.sort_by(f64::total_cmp);
    pos.dedup();
    let s_min = pos[0];
    let s_max = *pos.last().unwrap();
    let all: Vec<f64> = pos.iter().flat_map(|&s| [s, -s]).collect();
    let decade: Vec<f64> = pos.iter().copied().filter(|&s| s <= 10.0 * s_min).collect();

    // (A0) near the origin: (|g| + |h|)/|s| stays bounded as s -> 0.
    let a0 = {
        let q = |s: f64| -> Result<f64> { Ok((nl.g(s)?.abs() + nl.excess_derivative(s)?.abs()) / s) };
        let q_low = q(s_min)?;
        let q_top = q(*decade.last().unwrap())?;
        let passed = q_low <= q_top * (1.0 + 1e-9) + 1e-300;
        AssumptionCheck {
            passed,
            witness: (!passed).then_some(s_min),
            margin: if q_low > 0.0 { q_top / q_low - 1.0 } else { f64::INFINITY },
            note: "O(|s|) at the origin on the sample; growth at infinity not checkable".into(),
        }
    };

    // (A1): H(s)/s^4 decreases toward 0 on the smallest decade.
    let a1 = {
        let ratios: Vec<f64> =
            decade.iter().map(|&s| nl.excess(s).map(|h| h / s.powi(4))).collect::<Result<_>>()?;
        let monotone = ratios.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12));
        let (lo, hi) = (ratios[0], *ratios.last().unwrap());
        let span = (decade.last().unwrap() / s_min).ln();
        let slope = if lo > 0.0 && hi > 0.0 && span > 0.0 {
            (hi / lo).ln() / span
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let passed = monotone && slope > 0.05;
        AssumptionCheck {
            passed,
            witness: (!passed).then_some(s_min),
            margin: slope,
            note: "log-log slope of H(s)/s^4 on the smallest sampled decade".into(),
        }
    };

    // (A2): p > 4 and G(s) >= beta |s|^p.
    let a2 = {
        let mut margin = f64::INFINITY;
        let mut witness = None;
        for &s in &all {
            let lower = params.beta * s.abs().powf(params.p);
            let slack = (nl.primitive(s)? - lower) / lower.max(f64::MIN_POSITIVE);
            if slack < margin {
                margin = slack;
                witness = Some(s);
            }
        }
        let pointwise = margin >= -1e-12;
        let exponent_ok = params.p > 4.0 && params.beta > 0.0;
        AssumptionCheck {
            passed: pointwise && exponent_ok,
            witness: if !pointwise {
                witness
            } else if !exponent_ok {
                Some(s_min)
            } else {
                None
            },
            margin,
            note: if exponent_ok {
                "G(s) >= beta |s|^p".into()
            } else {
                format!("requires beta > 0 and p > 4 (beta = {}, p = {})", params.beta, params.p)
            },
        }
    };

    // (A3) pointwise: 4H <= h s, strict at the sample points closest to 0.
    let a3_pointwise = {
        let mut margin = f64::INFINITY;
        let mut witness = None;
        for &s in &all {
            let lhs = 4.0 * nl.excess(s)?;
            let rhs = nl.excess_derivative(s)? * s;
            let scale = lhs.abs() + rhs.abs();
            let slack = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
            if slack < margin {
                margin = slack;
                witness = Some(s);
            }
        }
        let strict_near_zero = [s_min, -s_min]
            .iter()
            .map(|&s| -> Result<bool> {
                let lhs = 4.0 * nl.excess(s)?;
                let rhs = nl.excess_derivative(s)? * s;
                Ok(rhs - lhs > STRICT_REL * (lhs.abs() + rhs.abs()))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .all(|b| b);
        let passed = margin >= -1e-12 && strict_near_zero;
        AssumptionCheck {
            passed,
            witness: if passed { None } else { witness.or(Some(s_min)) },
            margin,
            note: "4H(s) <= h(s) s with strict inequality on both sides of 0".into(),
        }
    };

    let mut a3_integral = Vec::with_capacity(probes.len());
    for (i, u) in probes.iter().enumerate() {
        let lhs = integrate_with(u, |s| Ok(4.0 * nl.excess(s)?))?;
        let rhs = integrate_with(u, |s| Ok(nl.excess_derivative(s)? * s))?;
        let strict = rhs - lhs > STRICT_REL * (lhs.abs() + rhs.abs()) && !u.is_zero();
        a3_integral.push(IntegralCheck { probe: i, lhs, rhs, strict });
    }
    let a3 = {
        let integral_ok = !a3_integral.is_empty() && a3_integral.iter().all(|c| c.strict);
        let passed = a3_pointwise.passed && integral_ok;
        AssumptionCheck {
            passed,
            witness: a3_pointwise.witness,
            margin: a3_integral
                .iter()
                .map(|c| (c.rhs - c.lhs) / (c.lhs.abs() + c.rhs.abs()).max(f64::MIN_POSITIVE))
                .fold(a3_pointwise.margin, f64::min),
            note: if a3_integral.is_empty() {
                "no probe functions supplied".into()
            } else {
                "pointwise and strict integral form on every probe".into()
            },
        }
    };

    // (A4): theta > 4 and 0 <= theta G <= s g.
    let a4 = {
        let mut margin = f64::INFINITY;
        let mut witness = None;
        let mut below_four = None;
        for &s in &all {
            let big_g = nl.primitive(s)?;
            let sg = s * nl.g(s)?;
            let scale = sg.abs().max(f64::MIN_POSITIVE);
            let slack = ((sg - params.theta * big_g) / scale).min(big_g / scale);
            if slack < margin {
                margin = slack;
                witness = Some(s);
            }
            if below_four.is_none() && 4.0 * big_g > sg * (1.0 + 1e-12) {
                below_four = Some(s);
            }
        }
        let pointwise = margin >= -1e-12;
        let theta_ok = params.theta > 4.0;
        AssumptionCheck {
            passed: pointwise && theta_ok,
            witness: if !pointwise {
                witness
            } else if !theta_ok {
                below_four.or(Some(s_min))
            } else {
                None
            },
            margin,
            note: if theta_ok {
                format!("0 <= {} G(s) <= s g(s)", params.theta)
            } else {
                format!("requires theta > 4 (theta = {})", params.theta)
            },
        }
    };

    let all_passed = a0.passed && a1.passed && a2.passed && a3.passed && a4.passed;
    Ok(AuditReport {
        schema: crate::report::SCHEMA.to_string(),
        samples: all.len(),
        s_max,
        a0,
        a1,
        a2,
        a3_pointwise,
        a3_integral,
        a3,
        a4,
        all_passed,
    })
}
