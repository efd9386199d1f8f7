//! Run configuration: flat `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use upen::mm::NumeratorConvention;
use upen::penalties::DEFAULT_EPS_PSI;
use upen::testproblems::Nmr2dShape;
use upen::Constraint;

use crate::UsageError;

pub const OUTPUT_DIR_ENV: &str = "UPEN_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "upen-output";

pub const KEYS: &[&str] = &[
    "problem",
    "problem_dir",
    "n1",
    "n2",
    "m1",
    "m2",
    "delta",
    "seed",
    "algorithm",
    "constraint",
    "gamma",
    "tol_lambda",
    "k_max",
    "epsilon_backtrack",
    "eps_psi",
    "l1",
    "numerator",
    "trace",
    "out",
];

pub type Settings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    T1,
    T2,
    T3,
    Nmr2d,
}

impl FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "t1" => Ok(Self::T1),
            "t2" => Ok(Self::T2),
            "t3" => Ok(Self::T3),
            "nmr2d" => Ok(Self::Nmr2d),
            other => Err(format!("unknown problem `{other}` (expected t1, t2, t3 or nmr2d)")),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::T1 => "t1",
            Self::T2 => "t2",
            Self::T3 => "t3",
            Self::Nmr2d => "nmr2d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Upenmm,
    Gupenmm,
    TikhonovSweep,
    Bp,
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "upenmm" => Ok(Self::Upenmm),
            "gupenmm" => Ok(Self::Gupenmm),
            "tikhonov-sweep" => Ok(Self::TikhonovSweep),
            "bp" => Ok(Self::Bp),
            other => Err(format!(
                "unknown algorithm `{other}` (expected upenmm, gupenmm, tikhonov-sweep or bp)"
            )),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Upenmm => "upenmm",
            Self::Gupenmm => "gupenmm",
            Self::TikhonovSweep => "tikhonov-sweep",
            Self::Bp => "bp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceVerbosity {
    /// `trace.csv` only.
    #[default]
    Standard,
    /// Also `trace.json` with the parameter vector of every iteration.
    Full,
}

pub fn parse_constraint(s: &str) -> Result<Constraint, String> {
    match s {
        "none" | "unconstrained" => Ok(Constraint::Unconstrained),
        "nonneg" | "nonnegative" => Ok(Constraint::Nonnegative),
        other => Err(format!("unknown constraint `{other}` (expected none or nonneg)")),
    }
}

pub fn constraint_name(c: Constraint) -> &'static str {
    match c {
        Constraint::Unconstrained => "none",
        Constraint::Nonnegative => "nonneg",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub problem_dir: Option<PathBuf>,
    pub shape: Nmr2dShape,
    pub delta: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// `None` keeps the problem's own constraint.
    pub constraint: Option<Constraint>,
    pub gamma: Option<f64>,
    pub tol_lambda: f64,
    pub k_max: usize,
    pub epsilon_backtrack: f64,
    pub eps_psi: f64,
    /// `None` enables the L1 term on 2D grids only.
    pub l1: Option<bool>,
    pub numerator: NumeratorConvention,
    pub trace: TraceVerbosity,
    pub out: PathBuf,
}

/// Reads a flat `key = value` file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<Settings, UsageError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

pub fn parse_config_text(text: &str) -> Result<Settings, String> {
    let mut out = Settings::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key `{key}`", i + 1));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn field<T: FromStr>(settings: &Settings, key: &str) -> Result<Option<T>, UsageError>
where
    T::Err: fmt::Display,
{
    settings
        .get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| UsageError(format!("invalid value `{v}` for {key}: {e}")))
        })
        .transpose()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), UsageError> {
    if ok {
        Ok(())
    } else {
        Err(UsageError(msg()))
    }
}

impl RunConfig {
    /// Builds and validates a configuration from merged settings. The output
    /// directory falls back to the environment, then to a fixed default.
    pub fn from_settings(settings: &Settings) -> Result<Self, UsageError> {
        for key in settings.keys() {
            check(KEYS.contains(&key.as_str()), || format!("unknown key `{key}`"))?;
        }
        let problem = match settings.get("problem") {
            Some(p) => p.parse().map_err(UsageError)?,
            None => ProblemKind::T1,
        };
        let desk = Nmr2dShape::DESK;
        let shape = Nmr2dShape {
            n1: field(settings, "n1")?.unwrap_or(desk.n1),
            n2: field(settings, "n2")?.unwrap_or(desk.n2),
            m1: field(settings, "m1")?.unwrap_or(desk.m1),
            m2: field(settings, "m2")?.unwrap_or(desk.m2),
        };
        check(shape.n1 >= 3 && shape.n2 >= 3 && shape.m1 > 0 && shape.m2 > 0, || {
            "grid sizes need n1, n2 >= 3 and m1, m2 >= 1".into()
        })?;
        let delta: f64 = field(settings, "delta")?.unwrap_or(0.01);
        check(delta.is_finite() && delta >= 0.0, || {
            format!("delta must be >= 0, got {delta}")
        })?;
        let algorithm = match settings.get("algorithm") {
            Some(a) => a.parse().map_err(UsageError)?,
            None => Algorithm::Upenmm,
        };
        let constraint = settings
            .get("constraint")
            .map(|c| parse_constraint(c))
            .transpose()
            .map_err(UsageError)?;
        let gamma: Option<f64> = field(settings, "gamma")?;
        if let Some(g) = gamma {
            check(g.is_finite() && g > 0.0, || format!("gamma must be positive, got {g}"))?;
        }
        check(algorithm != Algorithm::Bp || gamma.is_some(), || {
            "algorithm bp needs --gamma".into()
        })?;
        let tol_lambda: f64 = field(settings, "tol_lambda")?.unwrap_or(1e-2);
        check(tol_lambda > 0.0 && tol_lambda < 1.0, || {
            format!("tol_lambda must lie in (0, 1), got {tol_lambda}")
        })?;
        let k_max: usize = field(settings, "k_max")?.unwrap_or(1000);
        check(k_max >= 1, || "k_max must be at least 1".into())?;
        let epsilon_backtrack: f64 = field(settings, "epsilon_backtrack")?.unwrap_or(0.9);
        check(epsilon_backtrack > 0.0 && epsilon_backtrack < 1.0, || {
            format!("epsilon_backtrack must lie in (0, 1), got {epsilon_backtrack}")
        })?;
        let eps_psi: f64 = field(settings, "eps_psi")?.unwrap_or(DEFAULT_EPS_PSI);
        check(eps_psi.is_finite() && eps_psi > 0.0, || {
            format!("eps_psi must be positive, got {eps_psi}")
        })?;
        let numerator = match settings.get("numerator").map(String::as_str) {
            None | Some("squared") => NumeratorConvention::SquaredNorm,
            Some("half") => NumeratorConvention::HalfSquaredNorm,
            Some(other) => {
                return Err(UsageError(format!(
                    "unknown numerator `{other}` (expected squared or half)"
                )))
            }
        };
        let trace = match settings.get("trace").map(String::as_str) {
            None | Some("standard") => TraceVerbosity::Standard,
            Some("full") => TraceVerbosity::Full,
            Some(other) => {
                return Err(UsageError(format!(
                    "unknown trace level `{other}` (expected standard or full)"
                )))
            }
        };
        let out = settings
            .get("out")
            .cloned()
            .or_else(|| std::env::var(OUTPUT_DIR_ENV).ok())
            .unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string());
        Ok(Self {
            problem,
            problem_dir: settings.get("problem_dir").map(PathBuf::from),
            shape,
            delta,
            seed: field(settings, "seed")?.unwrap_or(1),
            algorithm,
            constraint,
            gamma,
            tol_lambda,
            k_max,
            epsilon_backtrack,
            eps_psi,
            l1: field(settings, "l1")?,
            numerator,
            trace,
            out: PathBuf::from(out),
        })
    }
}
