//! Run configuration and the solve pipeline behind the command line.
//!
//! A configuration is TOML or JSON (detected from the first non-blank
//! character). `beta` and `eta` can be given directly or relative to the
//! estimated Gagliardo–Nirenberg constants, in which case the constants are
//! estimated first.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::energy::Problem;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{Grading, RadialGrid};
use crate::lab::{check_admissibility_values, default_gn_grid, estimate_gn_constant, AdmissibilityReport};
use crate::nonlin::{alpha_m, NonlinearityConfig, Params};
use crate::profiles::SeedProfile;
use crate::solver::{precheck, solve, SolveReport, SolverConfig};
use crate::verify::verify_candidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub m: usize,
    #[serde(default)]
    pub mu: f64,
    pub eta: Option<f64>,
    /// Sets `eta = eta_c4_rho / (C_4^4 rho)`.
    pub eta_c4_rho: Option<f64>,
    #[serde(default = "one")]
    pub rho: f64,
    pub beta: Option<f64>,
    /// Sets `beta` to this multiple of the admissibility threshold.
    pub beta_factor: Option<f64>,
    #[serde(default = "six")]
    pub p: f64,
    #[serde(default = "six")]
    pub theta: f64,
    /// Defaults to the critical exponent `alpha_m`.
    pub alpha: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn six() -> f64 {
    6.0
}

impl ParamsSpec {
    pub fn needs_constants(&self) -> bool {
        self.beta_factor.is_some() || self.eta_c4_rho.is_some()
    }

    /// Concrete parameters given `(C_4, C_p)`. The threshold depends on
    /// `eta`, so `eta` is fixed first.
    pub fn resolve(&self, constants: Option<(f64, f64)>) -> Result<Params> {
        let need = || constants.ok_or_else(|| Error::Precondition("relative parameters need GN constants".into()));
        let eta = match (self.eta, self.eta_c4_rho) {
            (Some(_), Some(_)) => return Err(Error::InvalidArgument("give eta or eta_c4_rho, not both".into())),
            (Some(e), None) => e,
            (None, Some(x)) => x / (need()?.0.powi(4) * self.rho),
            (None, None) => 0.0,
        };
        let mut params = Params {
            m: self.m,
            mu: self.mu,
            eta,
            rho: self.rho,
            beta: 0.0,
            p: self.p,
            theta: self.theta,
            alpha: self.alpha.unwrap_or_else(|| alpha_m(self.m.max(1))),
        };
        params.beta = match (self.beta, self.beta_factor) {
            (Some(_), Some(_)) => return Err(Error::InvalidArgument("give beta or beta_factor, not both".into())),
            (Some(b), None) => b,
            (None, Some(f)) => {
                let (c4, cp) = need()?;
                f * crate::lab::beta_threshold(&params, c4, cp)?
            }
            (None, None) => return Err(Error::InvalidArgument("one of beta or beta_factor is required".into())),
        };
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub n: usize,
    pub grading: Grading,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { r_max: 20.0, n: 1024, grading: Grading::default() }
    }
}

/// How the GN constants are obtained when they are needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    /// Fixed values that skip estimation.
    pub c4: Option<f64>,
    pub cp: Option<f64>,
    pub gn_iters: usize,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig { c4: None, cp: None, gn_iters: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report_path: Option<PathBuf>,
    pub profile_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSpec,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<SeedProfile>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default = "one_worker")]
    pub workers: usize,
}

fn default_seeds() -> Vec<SeedProfile> {
    vec![SeedProfile::Gaussian, SeedProfile::Bump]
}

fn one_worker() -> usize {
    1
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Parse("workers must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parse("seeds must not be empty".into()));
        }
        self.solver.validate().map_err(|e| Error::Parse(format!("solver: {e}")))?;
        for path in [&self.outputs.report_path, &self.outputs.profile_path].into_iter().flatten() {
            let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(Error::Parse(format!("output directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.params.m, self.grid.r_max, self.grid.n, self.grid.grading)
    }

    /// `(C_4, C_p)` from the config or by estimation on the default grid.
    pub fn constants(&self) -> Result<(f64, f64)> {
        let m = self.params.m;
        let estimate = |p: f64| -> Result<f64> {
            let est = estimate_gn_constant(p, m, default_gn_grid(m)?, self.constants.gn_iters)?;
            info!("estimated C_{p} = {:.10} for m = {m} ({} iterations)", est.c_p, est.iterations);
            Ok(est.c_p)
        };
        let c4 = match self.constants.c4 {
            Some(c) => c,
            None => estimate(4.0)?,
        };
        let cp = match self.constants.cp {
            Some(c) => c,
            None if self.params.p == 4.0 => c4,
            None => estimate(self.params.p)?,
        };
        Ok((c4, cp))
    }
}

/// Result of [`run_solve`].
#[derive(Debug, Clone)]
pub enum RunOutcome {
    /// The parameters failed the admissibility gate or the assumption audit.
    Refused { reason: String, admissibility: Option<AdmissibilityReport> },
    Solved(Box<SolveReport>),
}

/// Resolves parameters, runs the gate (unless `force`), solves from every
/// seed and attaches the admissibility and verification reports.
pub fn run_solve(config: &RunConfig, force: bool, exec: Execution) -> Result<RunOutcome> {
    let constants = match config.params.p > 4.0 && config.params.theta > 4.0 {
        true => Some(config.constants()?),
        false if config.params.needs_constants() => {
            return Err(Error::Precondition("relative parameters need p > 4 and theta > 4".into()))
        }
        false => None,
    };
    let params = config.params.resolve(constants)?;
    let admissibility = constants.map(|(c4, cp)| check_admissibility_values(&params, c4, cp)).transpose()?;
    let grid = std::sync::Arc::new(config.build_grid()?);
    let problem = Problem::from_config(grid.clone(), params, &config.nonlinearity)?;

    if !force {
        if let Some(a) = admissibility.as_ref().filter(|a| !a.admissible) {
            let reason = if a.hstrict {
                format!("beta = {} is not above the threshold {}", a.beta, a.beta_threshold)
            } else {
                format!("eta C_4^4 rho = {} is not below 2", a.hstrict_value)
            };
            return Ok(RunOutcome::Refused { reason, admissibility });
        }
        if admissibility.is_none() {
            return Ok(RunOutcome::Refused {
                reason: "the admissibility gate needs p > 4 and theta > 4".into(),
                admissibility: None,
            });
        }
        let probes = config.seeds.iter().map(|s| s.build(&grid)).collect::<Result<Vec<_>>>()?;
        if let Err(e) = precheck(&problem, &probes) {
            return Ok(RunOutcome::Refused { reason: e.to_string(), admissibility });
        }
    }

    let mut report = solve(&problem, &config.solver, &config.seeds, exec)?;
    let (_, u) = report.rebuild()?;
    let bound_constants = constants.filter(|(c4, _)| 0.5 * params.eta * c4.powi(4) * params.rho < 1.0);
    report.verification = Some(verify_candidate(&problem, &u, report.lambda, Some(report.energy), bound_constants)?);
    report.admissibility = admissibility;
    Ok(RunOutcome::Solved(Box::new(report)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[params]\nm = 1\nbeta = 12.0\n";

    #[test]
    fn toml_and_json_agree() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let b = RunConfig::parse(r#"{"params": {"m": 1, "beta": 12.0}}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.workers, 1);
        assert_eq!(a.seeds.len(), 2);
        assert_eq!(a.grid, GridConfig::default());
    }

    #[test]
    fn full_toml() {
        let text = r#"
workers = 2

[params]
m = 2
mu = 0.1
eta_c4_rho = 1.0
beta_factor = 2.0

[grid]
r_max = 10.0
n = 512
grading = { kind = "geometric", ratio = 1.03 }

[solver]
grad_tol = 1e-7

[[seeds]]
kind = "bump"

[constants]
c4 = 0.5
cp = 0.4
"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.grid.grading, Grading::Geometric { ratio: 1.03 });
        assert_eq!(c.seeds, vec![SeedProfile::Bump]);
        assert_eq!(c.solver.grad_tol, 1e-7);
        let params = c.params.resolve(Some((0.5, 0.4))).unwrap();
        assert!((params.eta * 0.5f64.powi(4) - 1.0).abs() < 1e-14);
        let threshold = crate::lab::beta_threshold(&params, 0.5, 0.4).unwrap();
        assert!((params.beta / threshold - 2.0).abs() < 1e-14);
    }

    #[test]
    fn diagnostics_name_the_line() {
        let err = RunConfig::parse("[params]\nm = 1\nbeta = \"x\"\n").unwrap_err();
        let text = err.to_string();
        assert!(matches!(err, Error::Parse(_)));
        assert!(text.contains("line 3") || text.contains("3 |"), "{text}");
        let err = RunConfig::parse("[params]\nm = 1\nbeta = 1\nbogus = 2\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(RunConfig::parse("workers = 0\n[params]\nm = 1\nbeta = 1.0\n").is_err());
    }

    #[test]
    fn resolve_requires_beta() {
        let c = RunConfig::parse("[params]\nm = 1\n").unwrap();
        assert!(c.params.resolve(Some((0.6, 0.6))).is_err());
        let c = RunConfig::parse("[params]\nm = 1\nbeta_factor = 2.0\n").unwrap();
        assert!(matches!(c.params.resolve(None), Err(Error::Precondition(_))));
    }
}
