//! Run configuration: one JSON schema with a `task` discriminator.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use rpde::driver::NoiseCoefficients;
use rpde::fields::{GridFunction, SpatialGrid};
use rpde::parabolic::{Coefficient, EllipticCoefficients, SolveConfig, StepPolicy};
use rpde::roughpath::{sample_bm_path, Path1, RoughPath, TimeGrid};

use crate::error::CliError;
use crate::expr::{Expr, Var};

pub const OUTPUT_DIR_ENV: &str = "RPDE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Lift,
    Metric,
    SewingDemo,
    GronwallDemo,
    Solve,
    Wongzakai,
    Remainders,
    Energy,
    Stability,
    Parabolicity,
    SmoothingCheck,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub coefficients: Option<CoefficientSpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub driver: Option<DriverSpec>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Initial datum; `sin(2*pi*x)` when absent.
    #[serde(default)]
    pub initial: Option<FieldSpec>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub policy: Option<Policy>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Task-specific settings, documented per task.
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub level: Option<u32>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Refuse,
    Substep,
}

/// A coefficient given as a number, an expression in `x, y, t`, or node
/// samples in grid order.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Number(f64),
    Expr(String),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    /// `[a]` in 1D, `[a11, a12, a22]` in 2D. A single entry in 2D means
    /// `a·I`.
    pub a: OneOrMany,
    #[serde(default)]
    pub b: Option<OneOrMany>,
    #[serde(default)]
    pub c: Option<FieldSpec>,
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    Many(Vec<FieldSpec>),
    One(FieldSpec),
}

impl OneOrMany {
    fn items(&self) -> Vec<FieldSpec> {
        match self {
            OneOrMany::One(f) => vec![f.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// `sigma[k][i]`, one row of `d` entries per noise component.
    pub sigma: Vec<Vec<FieldSpec>>,
    #[serde(default)]
    pub nu: Option<Vec<FieldSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSpec {
    pub kind: DriverKind,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Bm,
    Piecewise,
    File,
}

/// Parses `text`, mapping syntax and schema errors to their line.
pub fn parse(text: &str) -> Result<Config, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
}

/// Line of the first `"key":` after the first `"parent":`, if any.
pub fn locate(text: &str, parent: Option<&str>, key: &str) -> Option<usize> {
    let from = match parent {
        Some(p) => find_key(text, p, 0)?,
        None => 0,
    };
    let at = find_key(text, key, from)?;
    Some(text[..at].matches('\n').count() + 1)
}

fn find_key(text: &str, key: &str, from: usize) -> Option<usize> {
    let pat = format!("\"{key}\"");
    let mut start = from;
    while let Some(off) = text[start..].find(&pat) {
        let at = start + off;
        let rest = text[at + pat.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(at);
        }
        start = at + pat.len();
    }
    None
}

/// A validated configuration together with its source, for located errors.
pub struct Loaded {
    pub cfg: Config,
    pub text: String,
}

impl Loaded {
    pub fn error(&self, parent: Option<&str>, key: &str, msg: impl std::fmt::Display) -> CliError {
        match locate(&self.text, parent, key) {
            Some(line) => CliError::Config(format!("line {line}: {msg}")),
            None => CliError::Config(msg.to_string()),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.cfg;
        if !(c.grid.d == 1 || c.grid.d == 2) {
            return Err(self.error(Some("grid"), "d", format!("grid.d must be 1 or 2, got {}", c.grid.d)));
        }
        if c.grid.n < 8 {
            return Err(self.error(Some("grid"), "N", format!("grid.N must be at least 8, got {}", c.grid.n)));
        }
        if !(c.time.horizon > 0.0 && c.time.horizon.is_finite()) {
            return Err(self.error(Some("time"), "T", "time.T must be positive"));
        }
        if !(c.time.dt > 0.0 && c.time.dt <= c.time.horizon) {
            return Err(self.error(Some("time"), "dt", "time.dt must lie in (0, T]"));
        }
        if let Some(a) = c.alpha {
            if !(a > 1.0 / 3.0 && a <= 0.5) {
                return Err(self.error(None, "alpha", format!("alpha must lie in (1/3, 1/2], got {a}")));
            }
        }
        if let Some(th) = c.theta {
            if !(0.5..=1.0).contains(&th) {
                return Err(self.error(None, "theta", format!("theta must lie in [1/2, 1], got {th}")));
            }
        }
        if let Some(co) = &c.coefficients {
            if !(co.m > 0.0) || co.m > co.big_m {
                return Err(self.error(
                    Some("coefficients"),
                    "m",
                    format!("ellipticity bounds need 0 < m <= M, got coefficients.m = {} and coefficients.M = {}", co.m, co.big_m),
                ));
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Option<Task> {
        self.cfg.task
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::new(self.cfg.grid.d, self.cfg.grid.n).expect("validated grid")
    }

    pub fn alpha(&self) -> f64 {
        self.cfg.alpha.unwrap_or(rpde::rough_solver::DEFAULT_ALPHA)
    }

    pub fn level(&self) -> u32 {
        self.cfg.time.level.unwrap_or(8)
    }

    pub fn solve_config(&self) -> SolveConfig {
        let policy = match self.cfg.policy.unwrap_or(Policy::Substep) {
            Policy::Refuse => StepPolicy::Refuse,
            Policy::Substep => StepPolicy::Substep,
        };
        SolveConfig::new(self.grid(), self.cfg.time.dt, self.cfg.time.horizon)
            .with_theta(self.cfg.theta.unwrap_or(0.5))
            .with_policy(policy)
    }

    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("rpde-out"))
    }

    fn field(&self, parent: &str, key: &str, spec: &FieldSpec, allow_t: bool) -> Result<Coefficient, CliError> {
        let g = self.grid();
        match spec {
            FieldSpec::Number(v) => Ok(Coefficient::Constant(*v)),
            FieldSpec::Samples(v) => GridFunction::new(g, v.clone())
                .map(Coefficient::Field)
                .map_err(|e| self.error(Some(parent), key, format!("{parent}.{key}: {e}"))),
            FieldSpec::Expr(src) => {
                let e = Expr::parse(src).map_err(|e| self.error(Some(parent), key, format!("{parent}.{key}: {e}")))?;
                if e.uses(Var::Y) && g.d() == 1 {
                    return Err(self.error(Some(parent), key, format!("{parent}.{key} uses y on a 1D grid")));
                }
                if e.uses(Var::T) {
                    if !allow_t {
                        return Err(self.error(Some(parent), key, format!("{parent}.{key} may not depend on t")));
                    }
                    let e = Arc::new(e);
                    return Ok(Coefficient::TimeDependent(Arc::new(move |t| GridFunction::from_fn(g, |x, y| e.eval(x, y, t)))));
                }
                Ok(Coefficient::Field(GridFunction::from_fn(g, |x, y| e.eval(x, y, 0.0))))
            }
        }
    }

    fn static_field(&self, parent: &str, key: &str, spec: &FieldSpec) -> Result<GridFunction, CliError> {
        Ok(match self.field(parent, key, spec, false)? {
            Coefficient::Constant(v) => GridFunction::constant(self.grid(), v),
            Coefficient::Field(f) => f,
            Coefficient::TimeDependent(_) => unreachable!("rejected above"),
        })
    }

    pub fn initial(&self) -> Result<GridFunction, CliError> {
        match &self.cfg.initial {
            None => Ok(GridFunction::from_fn(self.grid(), |x, _| (2.0 * std::f64::consts::PI * x).sin())),
            Some(spec) => {
                let f = self.static_field("initial", "initial", spec)?;
                if !f.is_finite() {
                    return Err(self.error(None, "initial", "initial datum is not finite on the grid"));
                }
                Ok(f)
            }
        }
    }

    pub fn coefficients(&self) -> Result<EllipticCoefficients, CliError> {
        self.coefficients_shifted(0.0)
    }

    /// Coefficients with `c` replaced by `c + shift`.
    pub fn coefficients_shifted(&self, shift: f64) -> Result<EllipticCoefficients, CliError> {
        let g = self.grid();
        let d = g.d();
        let co = self
            .cfg
            .coefficients
            .as_ref()
            .ok_or_else(|| CliError::Config("this task needs a \"coefficients\" section".into()))?;
        let mut a = co.a.items();
        if d == 2 && a.len() == 1 {
            a = vec![a[0].clone(), FieldSpec::Number(0.0), a[0].clone()];
        }
        let need = if d == 1 { 1 } else { 3 };
        if a.len() != need {
            return Err(self.error(Some("coefficients"), "a", format!("coefficients.a needs {need} entries in {d}D, got {}", a.len())));
        }
        let a = a.iter().map(|s| self.field("coefficients", "a", s, true)).collect::<Result<Vec<_>, _>>()?;
        let b = match &co.b {
            None => vec![FieldSpec::Number(0.0); d],
            Some(b) => b.items(),
        };
        if b.len() != d {
            return Err(self.error(Some("coefficients"), "b", format!("coefficients.b needs {d} entries, got {}", b.len())));
        }
        let b = b.iter().map(|s| self.field("coefficients", "b", s, true)).collect::<Result<Vec<_>, _>>()?;
        let c = match self.field("coefficients", "c", co.c.as_ref().unwrap_or(&FieldSpec::Number(0.0)), true)? {
            c if shift == 0.0 => c,
            Coefficient::Constant(v) => Coefficient::Constant(v + shift),
            Coefficient::Field(f) => Coefficient::Field(f.map(|x| x + shift)),
            Coefficient::TimeDependent(f) => Coefficient::TimeDependent(Arc::new(move |t| f(t).map(|x| x + shift))),
        };
        // Admissible defaults for both dimensions: 1/r + d/(2q) < 1.
        let r = co.r.unwrap_or(2.0);
        let q = co.q.unwrap_or(if d == 1 { 2.0 } else { 3.0 });
        EllipticCoefficients::new(g, a, b, c, co.m, co.big_m, r, q).map_err(|e| {
            let key = match e {
                rpde::Error::InvalidExponent(_) => "r",
                _ => "a",
            };
            self.error(Some("coefficients"), key, format!("coefficients: {e}"))
        })
    }

    /// Noise coefficients; `k_default` noise components of zero when the
    /// section is absent.
    pub fn noise(&self, k_default: usize) -> Result<NoiseCoefficients, CliError> {
        let g = self.grid();
        let d = g.d();
        let Some(ns) = &self.cfg.noise else {
            return Ok(NoiseCoefficients::zero(g, k_default));
        };
        let k = ns.sigma.len();
        if k == 0 || ns.sigma.iter().any(|row| row.len() != d) {
            return Err(self.error(Some("noise"), "sigma", format!("noise.sigma must be a non-empty list of rows with {d} entries")));
        }
        let mut sigma = Vec::with_capacity(k * d);
        for row in &ns.sigma {
            for s in row {
                sigma.push(self.static_field("noise", "sigma", s)?);
            }
        }
        let nu = match &ns.nu {
            None => vec![GridFunction::zeros(g); k],
            Some(v) if v.len() == k => v.iter().map(|s| self.static_field("noise", "nu", s)).collect::<Result<_, _>>()?,
            Some(v) => {
                return Err(self.error(Some("noise"), "nu", format!("noise.nu needs {k} entries, got {}", v.len())));
            }
        };
        NoiseCoefficients::new(g, k, sigma, nu).map_err(|e| self.error(None, "noise", format!("noise: {e}")))
    }

    pub fn noise_dim(&self) -> usize {
        self.cfg.noise.as_ref().map_or(1, |n| n.sigma.len().max(1))
    }

    /// Level-1 driver path and, for file drivers, the stored rough path.
    pub fn driver_path(&self) -> Result<(Path1, Option<RoughPath>), CliError> {
        let k = self.noise_dim();
        let horizon = self.cfg.time.horizon;
        let spec = self.cfg.driver.clone().unwrap_or(DriverSpec { kind: DriverKind::Bm, params: Default::default() });
        let p = &spec.params;
        match spec.kind {
            DriverKind::Bm => {
                let level = match p.get("level") {
                    None => self.level(),
                    Some(v) => v.as_u64().filter(|&l| (1..=16).contains(&l)).ok_or_else(|| {
                        self.error(Some("driver"), "level", "driver.params.level must be an integer in 1..=16")
                    })? as u32,
                };
                let seed = p.get("seed").and_then(|v| v.as_u64()).unwrap_or(self.cfg.seed);
                Ok((sample_bm_path(seed, level, k, horizon)?, None))
            }
            DriverKind::Piecewise => {
                let times: Vec<f64> = get_array(p, "times")
                    .ok_or_else(|| self.error(Some("driver"), "params", "piecewise driver needs params.times"))?;
                let values: Vec<Vec<f64>> = p
                    .get("values")
                    .and_then(|v| serde_json::from_value(v.clone()).ok())
                    .ok_or_else(|| self.error(Some("driver"), "params", "piecewise driver needs params.values as rows"))?;
                if values.len() != times.len() || values.iter().any(|r| r.len() != k) {
                    return Err(self.error(
                        Some("driver"),
                        "values",
                        format!("driver values need one row of {k} entries per time"),
                    ));
                }
                if (times.last().copied().unwrap_or(0.0) - horizon).abs() > 1e-12 * horizon || times.first() != Some(&0.0) {
                    return Err(self.error(Some("driver"), "times", "driver times must run from 0 to T"));
                }
                let grid = TimeGrid::new(times).map_err(|e| self.error(Some("driver"), "times", e))?;
                Ok((Path1::new(grid, k, values.concat())?, None))
            }
            DriverKind::File => {
                let path = p
                    .get("path")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| self.error(Some("driver"), "params", "file driver needs params.path"))?;
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read driver file {path}: {e}")))?;
                let r = RoughPath::from_json(&text).map_err(|e| CliError::Config(format!("driver file {path}: {e}")))?;
                if r.k() != k {
                    return Err(self.error(Some("driver"), "path", format!("driver file has K = {}, noise has K = {k}", r.k())));
                }
                if (r.grid().horizon() - horizon).abs() > 1e-12 * horizon {
                    return Err(self.error(Some("driver"), "path", "driver file horizon differs from time.T"));
                }
                Ok((r.level1_path(), Some(r)))
            }
        }
    }

    pub fn param_f64(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.cfg.params.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| self.error(Some("params"), key, format!("params.{key} must be a number"))),
        }
    }

    pub fn param_u32(&self, key: &str, default: u32) -> Result<u32, CliError> {
        match self.cfg.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .and_then(|x| u32::try_from(x).ok())
                .ok_or_else(|| self.error(Some("params"), key, format!("params.{key} must be a non-negative integer"))),
        }
    }

    pub fn param_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.cfg.params.get(key) {
            None => Ok(default.to_vec()),
            Some(_) => get_array(&self.cfg.params, key)
                .ok_or_else(|| self.error(Some("params"), key, format!("params.{key} must be a list of numbers"))),
        }
    }

    pub fn param_str<'a>(&'a self, key: &str, default: &'a str) -> Result<&'a str, CliError> {
        match self.cfg.params.get(key) {
            None => Ok(default),
            Some(v) => v.as_str().ok_or_else(|| self.error(Some("params"), key, format!("params.{key} must be a string"))),
        }
    }

    /// Inclusive level range from `params.levels = [lo, hi]`.
    pub fn param_levels(&self, default: (u32, u32)) -> Result<(u32, u32), CliError> {
        let v = self.param_list("levels", &[default.0 as f64, default.1 as f64])?;
        let ok = v.len() == 2 && v.iter().all(|x| x.fract() == 0.0 && (1.0..=16.0).contains(x)) && v[0] < v[1];
        if !ok {
            return Err(self.error(Some("params"), "levels", "params.levels must be [lo, hi] with 1 <= lo < hi <= 16"));
        }
        Ok((v[0] as u32, v[1] as u32))
    }
}

fn get_array(p: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<Vec<f64>> {
    p.get(key).and_then(|v| serde_json::from_value(v.clone()).ok())
}
