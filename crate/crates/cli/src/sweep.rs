//! Cartesian sweeps over configuration keys, one run per worker.

use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use crate::config::{RunConfig, Settings, KEYS};
use crate::run::{cmd_solve, load_problem, penalty_for, Summary};
use crate::UsageError;

pub const SWEEP_FILE: &str = "sweep.csv";

/// Parses `key=v1,v2,...`; integer ranges `a..b` expand to `a, ..., b-1`.
pub fn parse_axis(spec: &str) -> Result<(String, Vec<String>), UsageError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| UsageError(format!("sweep axis `{spec}` must look like key=v1,v2")))?;
    let key = key.trim().replace('-', "_");
    if !KEYS.contains(&key.as_str()) || key == "out" {
        return Err(UsageError(format!("cannot sweep over `{key}`")));
    }
    let mut out = Vec::new();
    for v in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        match v.split_once("..") {
            Some((a, b)) => {
                let parse = |s: &str| {
                    s.parse::<u64>()
                        .map_err(|e| UsageError(format!("bad range `{v}` for {key}: {e}")))
                };
                let (a, b) = (parse(a)?, parse(b)?);
                if a >= b {
                    return Err(UsageError(format!("empty range `{v}` for {key}")));
                }
                out.extend((a..b).map(|x| x.to_string()));
            }
            None => out.push(v.to_string()),
        }
    }
    if out.is_empty() {
        return Err(UsageError(format!("sweep axis `{key}` has no values")));
    }
    Ok((key, out))
}

/// Every combination of the axes layered over `base`, with a directory label.
pub fn expand(
    base: &Settings,
    axes: &[(String, Vec<String>)],
    root: &Path,
) -> Result<Vec<(String, RunConfig)>, UsageError> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .enumerate()
        .map(|(i, combo)| {
            let mut settings = base.clone();
            let mut label = format!("run{i:04}");
            for (k, v) in &combo {
                settings.insert(k.clone(), v.clone());
                let clean: String = v
                    .chars()
                    .map(|c| {
                        if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                            c
                        } else {
                            '_'
                        }
                    })
                    .collect();
                label.push_str(&format!("_{k}-{clean}"));
            }
            settings.insert("out".into(), root.join(&label).display().to_string());
            Ok((label, RunConfig::from_settings(&settings)?))
        })
        .collect()
}

pub struct SweepOutcome {
    pub label: String,
    pub result: Result<Summary>,
}

pub fn run_sweep(runs: &[(String, RunConfig)]) -> Vec<SweepOutcome> {
    runs.par_iter()
        .map(|(label, config)| {
            let result = (|| {
                let problem = load_problem(config)?;
                let penalty = penalty_for(&problem, config)?;
                cmd_solve(config, &problem, &penalty)
            })();
            SweepOutcome {
                label: label.clone(),
                result,
            }
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, outcomes: &[SweepOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record([
        "label",
        "problem",
        "algorithm",
        "constraint",
        "delta",
        "seed",
        "relative_error",
        "outer_iterations",
        "total_inner_iterations",
        "wall_time_seconds",
        "residual_norm",
        "noise_norm",
        "error",
    ])?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for o in outcomes {
        match &o.result {
            Ok(s) => w.write_record([
                o.label.clone(),
                s.problem.clone(),
                s.algorithm.clone(),
                s.constraint.clone(),
                s.delta.to_string(),
                s.seed.to_string(),
                s.relative_error.to_string(),
                opt(s.outer_iterations),
                opt(s.total_inner_iterations),
                s.wall_time_seconds.to_string(),
                s.residual_norm.to_string(),
                s.noise_norm.to_string(),
                String::new(),
            ])?,
            Err(e) => {
                let mut row = vec![o.label.clone()];
                row.extend(std::iter::repeat_n(String::new(), 11));
                row.push(format!("{e:#}"));
                w.write_record(row)?
            }
        }
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_expand_ranges_and_lists() {
        let (k, v) = parse_axis("seed=0..3,7").unwrap();
        assert_eq!(k, "seed");
        assert_eq!(v, ["0", "1", "2", "7"]);
        assert!(parse_axis("seed").is_err());
        assert!(parse_axis("out=a").is_err());
        assert!(parse_axis("seed=3..3").is_err());
    }

    #[test]
    fn expansion_is_cartesian() {
        let axes = vec![
            parse_axis("seed=0..2").unwrap(),
            parse_axis("algorithm=upenmm,gupenmm").unwrap(),
        ];
        let runs = expand(&Settings::new(), &axes, Path::new("root")).unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[3].0, "run0003_seed-1_algorithm-gupenmm");
        assert_eq!(
            runs[3].1.out,
            Path::new("root").join("run0003_seed-1_algorithm-gupenmm")
        );
    }
}
