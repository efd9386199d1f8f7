//! CSV and JSON persistence of problems, vectors and traces.
//!
//! Matrices are written one row per line; vectors one entry per line. Floats
//! use the shortest representation that round-trips exactly.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mm::{ConvergenceTrace, TraceRecord};
use crate::operators::{DenseOperator, KroneckerOperator, LinearOperator, Operator};
use crate::penalties::GridShape;
use crate::testproblems::{Constraint, InverseProblem};

pub const MATRIX_FILE: &str = "matrix.csv";
pub const K1_FILE: &str = "k1.csv";
pub const K2_FILE: &str = "k2.csv";
pub const U_TRUE_FILE: &str = "u_true.csv";
pub const Y_FILE: &str = "y.csv";
pub const B_FILE: &str = "b.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn parse_float(path: &Path, row: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| {
        Error::Parse(format!(
            "{} row {}: `{field}` is not a number ({e})",
            path.display(),
            row + 1
        ))
    })
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse(format!(
                    "{} row {}: expected {c} columns, found {}",
                    path.display(),
                    i + 1,
                    record.len()
                )))
            }
            _ => {}
        }
        for field in record.iter() {
            values.push(parse_float(path, i, field)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse(format!("{}: empty matrix", path.display())))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut text = String::with_capacity(v.len() * 24);
    for x in v.iter() {
        text.push_str(&x.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(Error::Parse(format!(
            "{}: expected a single column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridManifest {
    Line { n: usize },
    Grid { n1: usize, n2: usize },
}

impl From<GridShape> for GridManifest {
    fn from(g: GridShape) -> Self {
        match g {
            GridShape::Line(n) => GridManifest::Line { n },
            GridShape::Grid { n1, n2 } => GridManifest::Grid { n1, n2 },
        }
    }
}

impl From<&GridManifest> for GridShape {
    fn from(g: &GridManifest) -> Self {
        match *g {
            GridManifest::Line { n } => GridShape::Line(n),
            GridManifest::Grid { n1, n2 } => GridShape::Grid { n1, n2 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Dense,
    Kronecker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub seed: u64,
    pub constraint: Constraint,
    pub grid: GridManifest,
    pub operator: OperatorKind,
    /// `||b - y|| / ||y||`.
    pub noise_ratio: f64,
    pub noise_norm: f64,
}

impl ProblemManifest {
    pub fn of(problem: &InverseProblem) -> Self {
        let noise_norm = problem.noise_norm();
        Self {
            name: problem.name.clone(),
            n: problem.n(),
            m: problem.m(),
            delta: problem.delta,
            seed: problem.seed,
            constraint: problem.constraint,
            grid: problem.grid.into(),
            operator: match problem.operator {
                Operator::Dense(_) => OperatorKind::Dense,
                Operator::Kronecker(_) => OperatorKind::Kronecker,
            },
            noise_ratio: noise_norm / problem.y_clean.norm(),
            noise_norm,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes the operator, `u*`, `y`, `b` and a manifest into `dir`.
pub fn write_problem_dir(problem: &InverseProblem, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    match &problem.operator {
        Operator::Dense(a) => write_matrix_csv(&dir.join(MATRIX_FILE), a.matrix())?,
        Operator::Kronecker(k) => {
            write_matrix_csv(&dir.join(K1_FILE), k.k1().matrix())?;
            write_matrix_csv(&dir.join(K2_FILE), k.k2().matrix())?;
        }
    }
    write_vector_csv(&dir.join(U_TRUE_FILE), &problem.u_true)?;
    write_vector_csv(&dir.join(Y_FILE), &problem.y_clean)?;
    write_vector_csv(&dir.join(B_FILE), &problem.b)?;
    write_json(&dir.join(MANIFEST_FILE), &ProblemManifest::of(problem))
}

/// Reads a directory written by [`write_problem_dir`].
pub fn read_problem_dir(dir: &Path) -> Result<InverseProblem> {
    let manifest: ProblemManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let operator: Operator = match manifest.operator {
        OperatorKind::Dense => DenseOperator::new(read_matrix_csv(&dir.join(MATRIX_FILE))?)?.into(),
        OperatorKind::Kronecker => KroneckerOperator::new(
            DenseOperator::new(read_matrix_csv(&dir.join(K1_FILE))?)?,
            DenseOperator::new(read_matrix_csv(&dir.join(K2_FILE))?)?,
        )
        .into(),
    };
    let u_true = read_vector_csv(&dir.join(U_TRUE_FILE))?;
    let y_clean = read_vector_csv(&dir.join(Y_FILE))?;
    let b = read_vector_csv(&dir.join(B_FILE))?;
    let grid = GridShape::from(&manifest.grid);
    let consistent = operator.cols() == u_true.len()
        && grid.len() == u_true.len()
        && operator.rows() == b.len()
        && y_clean.len() == b.len();
    if !consistent {
        return Err(Error::Parse(format!(
            "{}: sizes of the operator and vectors disagree",
            dir.display()
        )));
    }
    Ok(InverseProblem {
        name: manifest.name,
        operator,
        u_true,
        y_clean,
        b,
        delta: manifest.delta,
        seed: manifest.seed,
        constraint: manifest.constraint,
        grid,
    })
}

/// One line of `trace.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub relative_error: f64,
    pub residual_norm: f64,
    pub surrogate: f64,
    pub surrogate_reference: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
    pub backtracks: usize,
    pub fallback: bool,
    pub lambda_change: f64,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        Self {
            iteration: r.iteration,
            relative_error: r.relative_error,
            residual_norm: r.residual_norm,
            surrogate: r.surrogate,
            surrogate_reference: r.surrogate_reference,
            inner_iterations: r.inner_iterations,
            inner_converged: r.inner_converged,
            backtracks: r.backtracks,
            fallback: r.fallback,
            lambda_change: r.lambda_change,
        }
    }
}

pub fn write_trace_csv(path: &Path, trace: &ConvergenceTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in &trace.records {
        w.serialize(TraceRow::from(r)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Reads `trace.csv`; a malformed line is reported by its 1-based data row.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, row) in r.deserialize::<TraceRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), i + 1)))?;
        if !(row.relative_error.is_finite() && row.residual_norm.is_finite() && row.surrogate.is_finite()) {
            return Err(Error::Parse(format!(
                "{} row {}: non-finite value",
                path.display(),
                i + 1
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}
