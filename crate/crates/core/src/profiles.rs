//! Seed profiles for the solver and seeded random profiles for validation
//! batteries.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{RadialFunction, RadialGrid};
use crate::interp::RadialCubic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedProfile {
    /// `exp(-(r/w)^2)` with `w = R_max / 8`.
    #[default]
    Gaussian,
    /// Smooth compactly supported bump on `[0, R_max / 4)`.
    Bump,
    /// Profile read from a CSV file with header `r,u`.
    Custom { path: PathBuf },
}

impl SeedProfile {
    pub fn name(&self) -> String {
        match self {
            SeedProfile::Gaussian => "gaussian".into(),
            SeedProfile::Bump => "bump".into(),
            SeedProfile::Custom { path } => format!("custom:{}", path.display()),
        }
    }

    pub fn build(&self, grid: &Arc<RadialGrid>) -> Result<RadialFunction> {
        let r_max = grid.r_max();
        let mut u = match self {
            SeedProfile::Gaussian => {
                let w = r_max / 8.0;
                RadialFunction::from_fn(grid.clone(), |r| (-(r / w).powi(2)).exp())?
            }
            SeedProfile::Bump => {
                let a = r_max / 4.0;
                RadialFunction::from_fn(grid.clone(), |r| {
                    let x = r / a;
                    if x < 1.0 {
                        (1.0 - 1.0 / (1.0 - x * x)).exp()
                    } else {
                        0.0
                    }
                })?
            }
            SeedProfile::Custom { path } => {
                let text = std::fs::read_to_string(path)?;
                let (rs, us) = parse_profile_csv(&text)?;
                let spline = RadialCubic::monotone(&rs, &us);
                RadialFunction::from_fn(grid.clone(), |r| spline.eval(r))?
            }
        };
        if let Some(last) = u.values_mut().last_mut() {
            *last = 0.0;
        }
        if u.is_zero() {
            return Err(Error::ZeroFunction);
        }
        Ok(u)
    }
}

/// Parses `r,u` rows (header required) with strictly increasing `r > 0`.
pub fn parse_profile_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "r,u" => {}
        _ => return Err(Error::Parse("profile CSV must start with header `r,u`".into())),
    }
    let (mut rs, mut us) = (Vec::new(), Vec::new());
    for (no, line) in lines {
        let mut cols = line.split(',').map(str::trim);
        let parse = |c: Option<&str>| -> Result<f64> {
            c.ok_or_else(|| Error::Parse(format!("line {}: expected two columns", no + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", no + 1)))
        };
        let r = parse(cols.next())?;
        let u = parse(cols.next())?;
        if !(r.is_finite() && u.is_finite()) {
            return Err(Error::Parse(format!("line {}: non-finite value", no + 1)));
        }
        if r <= 0.0 || rs.last().is_some_and(|&p| r <= p) {
            return Err(Error::Parse(format!("line {}: radii must be positive and increasing", no + 1)));
        }
        rs.push(r);
        us.push(u);
    }
    if rs.len() < 3 {
        return Err(Error::Parse("profile CSV needs at least three rows".into()));
    }
    Ok((rs, us))
}

/// Random smooth radial profile localized well inside the grid: a sum of one
/// to three even Gaussian rings, or a Gaussian times an even polynomial.
pub fn random_profile(grid: &Arc<RadialGrid>, rng: &mut impl Rng) -> Result<RadialFunction> {
    random_profile_sized(grid, rng, grid.r_max())
}

/// Like [`random_profile`] with widths drawn relative to `length` instead
/// of `R_max`, so that dilated copies still fit inside the grid.
pub fn random_profile_sized(grid: &Arc<RadialGrid>, rng: &mut impl Rng, length: f64) -> Result<RadialFunction> {
    let (lo, hi) = (length / 40.0, length / 8.0);
    let mut u = if rng.gen_bool(0.5) {
        let k = rng.gen_range(1..=3);
        let rings: Vec<(f64, f64, f64)> = (0..k)
            .map(|_| {
                let w = rng.gen_range(lo..hi);
                let c = rng.gen_range(0.0..2.0 * w);
                let a = rng.gen_range(0.2..1.0) * if rng.gen_bool(0.8) { 1.0 } else { -1.0 };
                (a, c, w)
            })
            .collect();
        RadialFunction::from_fn(grid.clone(), |r| {
            rings
                .iter()
                .map(|&(a, c, w)| a * ((-((r - c) / w).powi(2)).exp() + (-((r + c) / w).powi(2)).exp()))
                .sum()
        })?
    } else {
        let w = rng.gen_range(lo..hi);
        let c1 = rng.gen_range(-1.0..1.0);
        let c2 = rng.gen_range(-0.5..0.5);
        RadialFunction::from_fn(grid.clone(), |r| {
            let x = (r / w).powi(2);
            (1.0 + c1 * x + c2 * x * x) * (-x).exp()
        })?
    };
    if let Some(last) = u.values_mut().last_mut() {
        *last = 0.0;
    }
    if u.is_zero() {
        return Err(Error::ZeroFunction);
    }
    Ok(u)
}

/// `count` random profiles; profile `i` uses its own stream seeded with
/// `seed + i`, so the batch is identical under any execution mode.
pub fn random_profiles(
    grid: &Arc<RadialGrid>,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<RadialFunction>> {
    random_profiles_sized(grid, count, seed, grid.r_max(), exec)
}

pub fn random_profiles_sized(
    grid: &Arc<RadialGrid>,
    count: usize,
    seed: u64,
    length: f64,
    exec: Execution,
) -> Result<Vec<RadialFunction>> {
    exec.map_range(count, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        random_profile_sized(grid, &mut rng, length)
    })
    .into_iter()
    .collect()
}
