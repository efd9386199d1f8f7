//! Plot data and a results table from finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use upen::io::{read_json, read_trace_csv, read_vector_csv, TraceRow};

use crate::run::{Summary, LAMBDA_FILE, SUMMARY_FILE, TRACE_FILE};

pub const TABLE_FILE: &str = "table.md";

struct RunData {
    label: String,
    summary: Summary,
    trace: Vec<TraceRow>,
    lambda: Vec<f64>,
}

fn load(dir: &Path) -> Result<RunData> {
    let label = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let trace_path = dir.join(TRACE_FILE);
    if !trace_path.exists() {
        bail!("{} has no {TRACE_FILE}", dir.display());
    }
    let trace = read_trace_csv(&trace_path)?;
    if trace.is_empty() {
        bail!("{}: trace is empty", trace_path.display());
    }
    let summary: Summary = read_json(&dir.join(SUMMARY_FILE))?;
    let lambda = read_vector_csv(&dir.join(LAMBDA_FILE))?.iter().copied().collect();
    Ok(RunData {
        label,
        summary,
        trace,
        lambda,
    })
}

fn series(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut s = format!("# {header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn plot_files(run: &RunData) -> Vec<(String, String)> {
    let noise = run.summary.noise_norm;
    vec![
        (
            format!("{}.relerr.dat", run.label),
            series(
                "iteration relative_error",
                run.trace
                    .iter()
                    .map(|r| format!("{} {}", r.iteration, r.relative_error)),
            ),
        ),
        (
            format!("{}.residual.dat", run.label),
            series(
                &format!("iteration residual_norm noise_norm (reference {noise})"),
                run.trace
                    .iter()
                    .map(|r| format!("{} {} {}", r.iteration, r.residual_norm, noise)),
            ),
        ),
        (
            format!("{}.surrogate.dat", run.label),
            series(
                "iteration scaled_log_surrogate",
                run.trace.iter().map(|r| format!("{} {}", r.iteration, r.surrogate)),
            ),
        ),
        (
            format!("{}.lambda.dat", run.label),
            series(
                "index lambda",
                run.lambda.iter().enumerate().map(|(i, l)| format!("{} {}", i + 1, l)),
            ),
        ),
    ]
}

fn table(runs: &[RunData]) -> String {
    let mut s = String::from(
        "| Run | Problem | Method | Constraint | delta | Rel. error | Outer it. | Inner it. | Time (s) |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    for r in runs {
        let m = &r.summary;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.4e} | {} | {} | {:.3} |",
            r.label,
            m.problem,
            m.algorithm,
            m.constraint,
            m.delta,
            m.relative_error,
            m.outer_iterations.map_or("-".into(), |v| v.to_string()),
            m.total_inner_iterations.map_or("-".into(), |v| v.to_string()),
            m.wall_time_seconds
        );
    }
    s
}

/// Reads every run first; files are only written once all inputs parsed.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    if run_dirs.is_empty() {
        bail!("no run directories given");
    }
    let runs = run_dirs.iter().map(|d| load(d)).collect::<Result<Vec<_>>>()?;
    let mut files: Vec<(String, String)> = runs.iter().flat_map(plot_files).collect();
    files.push((TABLE_FILE.into(), table(&runs)));

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (out.join(format!(".{name}.tmp")), out.join(name)))
        .collect();
    let written = staged.iter().zip(&files).try_for_each(|((tmp, _), (_, body))| {
        fs::write(tmp, body).with_context(|| format!("writing {}", tmp.display()))
    });
    if let Err(e) = written {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).with_context(|| format!("renaming to {}", dest.display()))?;
    }
    Ok(staged.into_iter().map(|(_, d)| d).collect())
}
