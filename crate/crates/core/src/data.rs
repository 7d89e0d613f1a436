//! Numeric containers and file I/O for time series, matrix sequences and
//! graph sequences.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default threshold for deciding whether a precision entry is an edge.
pub const DEFAULT_EDGE_TOLERANCE: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-10;

/// A `T x p` matrix of observations; row `i` is the observation at time `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    node_labels: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>, node_labels: Option<Vec<String>>) -> Result<Self> {
        let (t, p) = values.shape();
        if t < 2 || p < 2 {
            return Err(Error::InvalidInput(format!(
                "time series needs at least 2 time points and 2 nodes, got {t}x{p}"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at row {}, column {}", pos % t, pos / t)));
        }
        if let Some(labels) = &node_labels {
            if labels.len() != p {
                return Err(Error::InvalidInput(format!("{} node labels for {p} columns", labels.len())));
            }
            let unique: HashSet<&String> = labels.iter().collect();
            if unique.len() != p {
                return Err(Error::InvalidInput("node labels are not unique".into()));
            }
        }
        Ok(Self { values, node_labels })
    }

    /// Builds a series from row-major observations.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let values = DMatrix::from_fn(t, p, |i, j| rows[i][j]);
        Self::new(values, None)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn node_labels(&self) -> Option<&[String]> {
        self.node_labels.as_deref()
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of nodes.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Observation at time `i` as a dense vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        if let Some(labels) = &self.node_labels {
            writeln!(out, "{}", labels.join(",")).map_err(io)?;
        }
        for i in 0..self.len() {
            let line: Vec<String> = self.values.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Reads a comma-separated file of observations. Row order is time order.
pub fn load_csv(path: &Path, has_header: bool) -> Result<TimeSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);

    let parse_err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };

    let mut labels = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(idx as u64 + 1, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if idx == 0 && has_header {
            labels = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            Some(w) if w != record.len() => {
                return Err(parse_err(line, format!("expected {w} fields, found {}", record.len())));
            }
            None => width = Some(record.len()),
            _ => {}
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line, format!("column {}: non-numeric value {cell:?}", col + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least 2 data rows, found {}",
            path.display(),
            rows.len()
        )));
    }
    let ts = TimeSeries::from_rows(&rows)?;
    match labels {
        Some(l) => TimeSeries::new(ts.values, Some(l)),
        None => Ok(ts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Covariance,
    Precision,
    Auxiliary,
    Dual,
}

/// A length-`T` sequence of `p x p` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSequence {
    kind: MatrixKind,
    matrices: Vec<DMatrix<f64>>,
}

impl MatrixSequence {
    /// Checked constructor. Covariance and precision sequences must be
    /// symmetric; precision sequences must also have a positive diagonal.
    pub fn new(kind: MatrixKind, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let p = matrices.first().map_or(0, DMatrix::nrows);
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(Error::InvalidInput(format!("matrix {i} has shape {:?}, expected {p}x{p}", m.shape())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("matrix {i} has non-finite entries")));
            }
            if matches!(kind, MatrixKind::Covariance | MatrixKind::Precision) {
                let asym = max_asymmetry(m);
                if asym > SYMMETRY_TOL * (1.0 + m.amax()) {
                    return Err(Error::InvalidInput(format!(
                        "matrix {i} is not symmetric (max |a_jk - a_kj| = {asym:e})"
                    )));
                }
            }
            if kind == MatrixKind::Precision && m.diagonal().iter().any(|&d| d <= 0.0) {
                return Err(Error::InvalidInput(format!("precision matrix {i} has a non-positive diagonal entry")));
            }
        }
        Ok(Self { kind, matrices })
    }

    pub(crate) fn new_unchecked(kind: MatrixKind, matrices: Vec<DMatrix<f64>>) -> Self {
        Self { kind, matrices }
    }

    /// `t` copies of the `p x p` zero matrix.
    pub fn zeros(kind: MatrixKind, t: usize, p: usize) -> Self {
        Self::new_unchecked(kind, vec![DMatrix::zeros(p, p); t])
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn into_matrices(self) -> Vec<DMatrix<f64>> {
        self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Matrix dimension `p` (0 for an empty sequence).
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, DMatrix::nrows)
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i]
    }

    /// Concatenated column-major storage, `len() * dim()^2` values.
    pub(crate) fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dim() * self.dim());
        for m in &self.matrices {
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    pub(crate) fn from_flat(kind: MatrixKind, flat: &[f64], p: usize) -> Self {
        let matrices = flat.chunks(p * p).map(|c| DMatrix::from_column_slice(p, p, c)).collect();
        Self::new_unchecked(kind, matrices)
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for k in (j + 1)..p {
            worst = worst.max((m[(j, k)] - m[(k, j)]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecisionFormat {
    #[default]
    Json,
    CsvStack,
}

#[derive(Serialize, Deserialize)]
struct PrecisionFile {
    p: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tolerance: Option<f64>,
    matrices: Vec<Vec<f64>>,
}

/// Writes a precision sequence as JSON (`{p, T, tolerance?, matrices}` with
/// row-major matrices) or as blank-line separated CSV blocks.
pub fn write_precision_sequence(
    seq: &MatrixSequence,
    path: &Path,
    format: PrecisionFormat,
    tolerance: Option<f64>,
) -> Result<()> {
    if seq.kind() != MatrixKind::Precision {
        return Err(Error::InvalidInput(format!("expected a precision sequence, got {:?}", seq.kind())));
    }
    if seq.is_empty() {
        return Err(Error::InvalidInput("cannot write an empty sequence".into()));
    }
    let p = seq.dim();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match format {
        PrecisionFormat::Json => {
            let doc = PrecisionFile {
                p,
                t: seq.len(),
                tolerance,
                matrices: seq.matrices().iter().map(|m| m.transpose().as_slice().to_vec()).collect(),
            };
            serde_json::to_writer(&mut out, &doc)?;
            writeln!(out).map_err(io)?;
        }
        PrecisionFormat::CsvStack => {
            for (i, m) in seq.matrices().iter().enumerate() {
                if i > 0 {
                    writeln!(out).map_err(io)?;
                }
                for r in 0..p {
                    let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                    writeln!(out, "{}", line.join(",")).map_err(io)?;
                }
            }
        }
    }
    out.flush().map_err(io)
}

/// Reads either output of [`write_precision_sequence`]. The kind of the
/// result is `Precision` when every diagonal entry is positive and
/// `Auxiliary` otherwise.
pub fn read_precision_sequence(path: &Path, format: PrecisionFormat) -> Result<MatrixSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let matrices: Vec<DMatrix<f64>> = match format {
        PrecisionFormat::Json => {
            let doc: PrecisionFile = serde_json::from_str(&text)?;
            if doc.matrices.len() != doc.t {
                return Err(Error::InvalidInput(format!("T = {} but {} matrices present", doc.t, doc.matrices.len())));
            }
            doc.matrices
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    if m.len() != doc.p * doc.p {
                        return Err(Error::InvalidInput(format!(
                            "matrix {i} has {} entries, expected {}",
                            m.len(),
                            doc.p * doc.p
                        )));
                    }
                    Ok(DMatrix::from_row_slice(doc.p, doc.p, m))
                })
                .collect::<Result<_>>()?
        }
        PrecisionFormat::CsvStack => {
            let mut blocks: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    if !blocks.last().is_some_and(Vec::is_empty) {
                        blocks.push(Vec::new());
                    }
                    continue;
                }
                let row = line
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse { path: path.to_path_buf(), line: n as u64 + 1, msg: e.to_string() })?;
                blocks.last_mut().unwrap().push(row);
            }
            blocks.retain(|b| !b.is_empty());
            blocks
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let p = b.len();
                    if b.iter().any(|r| r.len() != p) {
                        return Err(Error::InvalidInput(format!("block {i} is not square")));
                    }
                    Ok(DMatrix::from_fn(p, p, |r, c| b[r][c]))
                })
                .collect::<Result<_>>()?
        }
    };
    let kind = if matrices.iter().all(|m| m.diagonal().iter().all(|&d| d > 0.0)) {
        MatrixKind::Precision
    } else {
        MatrixKind::Auxiliary
    };
    MatrixSequence::new(kind, matrices)
}

/// Unordered node pair, stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(pub usize, pub usize);

impl Edge {
    /// Normalises the pair order. Panics on a self-loop.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loops are not edges");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }
}

pub type EdgeSet = BTreeSet<Edge>;

/// Per-time edge sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSequence {
    pub p: usize,
    pub tolerance: f64,
    pub edge_sets: Vec<EdgeSet>,
}

impl GraphSequence {
    pub fn new(p: usize, tolerance: f64, edge_sets: Vec<EdgeSet>) -> Result<Self> {
        for (i, set) in edge_sets.iter().enumerate() {
            if let Some(e) = set.iter().find(|e| e.0 >= e.1 || e.1 >= p) {
                return Err(Error::InvalidInput(format!("time {i}: invalid edge ({}, {}) for {p} nodes", e.0, e.1)));
            }
        }
        Ok(Self { p, tolerance, edge_sets })
    }

    pub fn len(&self) -> usize {
        self.edge_sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_sets.is_empty()
    }

    /// Number of time points where the edge set differs from the previous one.
    pub fn change_count(&self) -> usize {
        self.edge_sets.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct EdgesFile<'a> {
            p: usize,
            #[serde(rename = "T")]
            t: usize,
            tolerance: f64,
            edges: &'a [EdgeSet],
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(
            &mut out,
            &EdgesFile { p: self.p, t: self.len(), tolerance: self.tolerance, edges: &self.edge_sets },
        )?;
        writeln!(out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct EdgesFile {
            p: usize,
            tolerance: f64,
            edges: Vec<Vec<(usize, usize)>>,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: EdgesFile = serde_json::from_str(&text)?;
        let sets =
            doc.edges.into_iter().map(|v| v.into_iter().map(|(a, b)| Edge(a.min(b), a.max(b))).collect()).collect();
        Self::new(doc.p, doc.tolerance, sets)
    }
}

/// Off-diagonal pairs `{j, k}` with `|theta_jk| > tolerance`, per time.
pub fn precision_to_graphs(seq: &MatrixSequence, tolerance: f64) -> GraphSequence {
    let p = seq.dim();
    let edge_sets = seq.matrices().iter().map(|m| matrix_edges(m, tolerance)).collect();
    GraphSequence { p, tolerance, edge_sets }
}

pub(crate) fn matrix_edges(m: &DMatrix<f64>, tolerance: f64) -> EdgeSet {
    let p = m.nrows();
    let mut set = EdgeSet::new();
    for j in 0..p {
        for k in (j + 1)..p {
            if m[(j, k)].abs() > tolerance || m[(k, j)].abs() > tolerance {
                set.insert(Edge(j, k));
            }
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_plain_csv() {
        let f = write_tmp("1,2\n3,4\n5,6\n");
        let ts = load_csv(f.path(), false).unwrap();
        assert_eq!((ts.len(), ts.dim()), (3, 2));
        assert_eq!(ts.row(0), vec![1.0, 2.0]);
        assert_eq!(ts.row(2), vec![5.0, 6.0]);
        assert!(ts.node_labels().is_none());
    }

    #[test]
    fn load_csv_with_header() {
        let f = write_tmp("a,b\n1,2\n3,4\n5,6\n");
        let ts = load_csv(f.path(), true).unwrap();
        assert_eq!(ts.node_labels().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ts.len(), 3);
    }

    #[test]
    fn load_csv_reports_line_of_bad_cell() {
        let f = write_tmp("1,x\n3,4\n");
        match load_csv(f.path(), false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("1,2\n3,4\n5\n");
        match load_csv(f.path(), false) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("expected 2 fields"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_csv_needs_two_rows() {
        let f = write_tmp("1,2\n");
        assert!(matches!(load_csv(f.path(), false), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let f = write_tmp("a,a\n1,2\n3,4\n");
        assert!(load_csv(f.path(), true).is_err());
    }

    #[test]
    fn identity_json_layout() {
        let seq = MatrixSequence::new(MatrixKind::Precision, vec![DMatrix::identity(2, 2)]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_precision_sequence(&seq, f.path(), PrecisionFormat::Json, None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.path()).unwrap()).unwrap();
        assert_eq!(v["matrices"], serde_json::json!([[1.0, 0.0, 0.0, 1.0]]));
        assert_eq!(v["p"], 2);
        assert_eq!(v["T"], 1);
        assert_eq!(v.as_object().unwrap().len(), 3);
    }

    #[test]
    fn empty_sequence_not_written() {
        let seq = MatrixSequence::new(MatrixKind::Precision, vec![]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(write_precision_sequence(&seq, f.path(), PrecisionFormat::Json, None).is_err());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let seq = MatrixSequence::new(MatrixKind::Precision, vec![DMatrix::identity(2, 2)]).unwrap();
        let r = write_precision_sequence(&seq, Path::new("/nonexistent-dir/x/y.json"), PrecisionFormat::Json, None);
        assert!(matches!(r, Err(Error::Io { .. })));
    }

    #[test]
    fn graphs_from_precisions() {
        let id = MatrixSequence::new(MatrixKind::Precision, vec![DMatrix::identity(3, 3); 2]).unwrap();
        let g = precision_to_graphs(&id, DEFAULT_EDGE_TOLERANCE);
        assert!(g.edge_sets.iter().all(BTreeSet::is_empty));

        let mut m = DMatrix::identity(3, 3);
        m[(1, 2)] = 0.3;
        m[(2, 1)] = 0.3;
        m[(0, 1)] = 1e-8;
        m[(1, 0)] = 1e-8;
        let seq = MatrixSequence::new(MatrixKind::Precision, vec![m]).unwrap();
        let g = precision_to_graphs(&seq, 1e-6);
        assert_eq!(g.edge_sets[0].iter().copied().collect::<Vec<_>>(), vec![Edge(1, 2)]);
    }

    #[test]
    fn asymmetric_precision_rejected() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 0.5;
        assert!(MatrixSequence::new(MatrixKind::Precision, vec![m.clone()]).is_err());
        assert!(MatrixSequence::new(MatrixKind::Auxiliary, vec![m]).is_ok());
    }

    fn sym_matrix(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, p * p).prop_map(move |v| {
            let a = DMatrix::from_vec(p, p, v);
            let mut s = (&a + a.transpose()) * 0.5;
            for i in 0..p {
                s[(i, i)] = s[(i, i)].abs() + 0.5;
            }
            s
        })
    }

    proptest! {
        #[test]
        fn round_trip_both_formats(ms in proptest::collection::vec(sym_matrix(3), 1..4)) {
            let seq = MatrixSequence::new(MatrixKind::Precision, ms).unwrap();
            for fmt in [PrecisionFormat::Json, PrecisionFormat::CsvStack] {
                let f = tempfile::NamedTempFile::new().unwrap();
                write_precision_sequence(&seq, f.path(), fmt, Some(1e-6)).unwrap();
                let back = read_precision_sequence(f.path(), fmt).unwrap();
                prop_assert_eq!(back.len(), seq.len());
                for (a, b) in back.matrices().iter().zip(seq.matrices()) {
                    prop_assert!((a - b).amax() <= 1e-12);
                }
            }
        }

        #[test]
        fn edges_monotone_in_tolerance(m in sym_matrix(5), t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let seq = MatrixSequence::new(MatrixKind::Precision, vec![m]).unwrap();
            let loose = precision_to_graphs(&seq, t1 + 1e-9);
            let strict = precision_to_graphs(&seq, t1 + dt + 1e-9);
            prop_assert!(strict.edge_sets[0].is_subset(&loose.edge_sets[0]));
        }

        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 3), 2..10)) {
            let ts = TimeSeries::from_rows(&rows).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            ts.write_csv(f.path()).unwrap();
            let back = load_csv(f.path(), false).unwrap();
            prop_assert!((back.values() - ts.values()).amax() <= 1e-12);
        }
    }
}
