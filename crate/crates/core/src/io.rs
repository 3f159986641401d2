//! File formats: edge-list TSV, Matrix Market, signal CSV and the JSON
//! matrix document shared by serialized bases and filters.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::io::{load_coo_from_matrix_market_str, save_to_matrix_market_str};
use nalgebra_sparse::CooMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldKind, Scalar};
use crate::graph::{Edge, Graph, GraphSignal};

/// Imaginary parts below this (relative) are accepted when reading complex
/// data into the real field.
const NARROWING_TOL: f64 = 1e-12;

/// Full-precision decimal rendering (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Row-major dense matrix with split real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix<T: Scalar>(m: &DMatrix<T>) -> Self {
        let (rows, cols) = m.shape();
        let vals: Vec<Complex64> = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].to_c64())
            .collect();
        MatrixDoc {
            rows,
            cols,
            re: vals.iter().map(|z| z.re).collect(),
            im: (T::FIELD == FieldKind::Complex).then(|| vals.iter().map(|z| z.im).collect()),
        }
    }

    pub fn to_matrix<T: Scalar>(&self) -> Result<DMatrix<T>> {
        let len = self.rows * self.cols;
        if self.re.len() != len || self.im.as_ref().is_some_and(|im| im.len() != len) {
            return Err(Error::Parse(format!(
                "matrix document holds {} entries, header says {}x{}",
                self.re.len(),
                self.rows,
                self.cols
            )));
        }
        let vals = narrow_all::<T>(&self.re, self.im.as_deref())?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &vals))
    }
}

/// Dense vector with split real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorDoc {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

impl VectorDoc {
    pub fn from_slice<T: Scalar>(v: &[T]) -> Self {
        VectorDoc {
            re: v.iter().map(|x| x.to_c64().re).collect(),
            im: (T::FIELD == FieldKind::Complex).then(|| v.iter().map(|x| x.to_c64().im).collect()),
        }
    }

    pub fn from_vector<T: Scalar>(v: &DVector<T>) -> Self {
        VectorDoc::from_slice(v.as_slice())
    }

    pub fn to_vec<T: Scalar>(&self) -> Result<Vec<T>> {
        if self.im.as_ref().is_some_and(|im| im.len() != self.re.len()) {
            return Err(Error::Parse("real and imaginary parts differ in length".into()));
        }
        narrow_all(&self.re, self.im.as_deref())
    }

    pub fn to_vector<T: Scalar>(&self) -> Result<DVector<T>> {
        Ok(DVector::from_vec(self.to_vec()?))
    }
}

fn narrow<T: Scalar>(re: f64, im: f64) -> Result<T> {
    T::from_c64(Complex64::new(re, im), NARROWING_TOL)
        .ok_or_else(|| Error::Parse(format!("complex value {re}+{im}i in a real-field input")))
}

fn narrow_all<T: Scalar>(re: &[f64], im: Option<&[f64]>) -> Result<Vec<T>> {
    re.iter()
        .enumerate()
        .map(|(k, &r)| narrow(r, im.map_or(0.0, |im| im[k])))
        .collect()
}

/// Edge list as TSV lines `i<TAB>j<TAB>weight`, preceded by a
/// `# n=<n> directed=<bool>` header so isolated trailing vertices survive.
pub fn write_edge_list(graph: &Graph) -> String {
    let mut out = format!("# n={} directed={}\n", graph.n(), graph.is_directed());
    for e in graph.edges() {
        let _ = writeln!(out, "{}\t{}\t{}", e.i, e.j, fmt_f64(e.weight));
    }
    out
}

/// Reads an edge list. Without a header, `n` is one past the largest index
/// and the graph is undirected. A missing weight column means weight 1.
pub fn read_edge_list(text: &str) -> Result<Graph> {
    let mut n = None;
    let mut directed = false;
    for line in text.lines().filter(|l| l.starts_with('#')) {
        for tok in line.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("n=") {
                n = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("bad n: {e}")))?);
            } else if let Some(v) = tok.strip_prefix("directed=") {
                directed = v
                    .parse::<bool>()
                    .map_err(|e| Error::Parse(format!("bad directed flag: {e}")))?;
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut edges = Vec::new();
    for (lineno, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() < 2 || rec.len() > 3 {
            return Err(Error::Parse(format!(
                "edge record {} has {} fields, expected 2 or 3",
                lineno + 1,
                rec.len()
            )));
        }
        let idx = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("edge record {}: {e}", lineno + 1)))
        };
        let weight = match rec.get(2) {
            Some(w) => w
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("edge record {}: {e}", lineno + 1)))?,
            None => 1.0,
        };
        edges.push(Edge {
            i: idx(0)?,
            j: idx(1)?,
            weight,
        });
    }
    let n = match n {
        Some(n) => n,
        None => edges.iter().map(|e| e.i.max(e.j) + 1).max().unwrap_or(0),
    };
    Graph::new(n, edges, directed)
}

/// Matrix Market coordinate format (general symmetry), nonzeros only.
pub fn write_matrix_market<T: Scalar>(m: &DMatrix<T>) -> String {
    let (rows, cols) = m.shape();
    let mut ri = Vec::new();
    let mut ci = Vec::new();
    let mut vals = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let z = m[(i, j)].to_c64();
            if z != Complex64::new(0.0, 0.0) {
                ri.push(i);
                ci.push(j);
                vals.push(z);
            }
        }
    }
    match T::FIELD {
        FieldKind::Real => {
            let re = vals.iter().map(|z| z.re).collect();
            let coo = CooMatrix::try_from_triplets(rows, cols, ri, ci, re)
                .expect("indices are in range");
            save_to_matrix_market_str(&coo)
        }
        FieldKind::Complex => {
            let coo = CooMatrix::try_from_triplets(rows, cols, ri, ci, vals)
                .expect("indices are in range");
            save_to_matrix_market_str(&coo)
        }
    }
}

/// Reads a Matrix Market coordinate file (real, integer or complex; general,
/// symmetric, skew-symmetric or hermitian) into a dense matrix. Duplicate
/// entries are summed.
pub fn read_matrix_market<T: Scalar>(text: &str) -> Result<DMatrix<T>> {
    let header = text
        .lines()
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market input".into()))?
        .to_ascii_lowercase();
    let mm_err = |e: nalgebra_sparse::io::MatrixMarketError| Error::Parse(e.to_string());
    if header.contains("complex") {
        let coo = load_coo_from_matrix_market_str::<Complex64>(text).map_err(mm_err)?;
        let mut out = DMatrix::<T>::zeros(coo.nrows(), coo.ncols());
        for (i, j, z) in coo.triplet_iter() {
            out[(i, j)] += narrow::<T>(z.re, z.im)?;
        }
        Ok(out)
    } else {
        let coo = load_coo_from_matrix_market_str::<f64>(text).map_err(mm_err)?;
        let mut out = DMatrix::<T>::zeros(coo.nrows(), coo.ncols());
        for (i, j, &v) in coo.triplet_iter() {
            out[(i, j)] += T::of(v);
        }
        Ok(out)
    }
}

/// Signal CSV: header `value` and one value per line for the real field,
/// header `re,im` and paired columns for the complex field.
pub fn write_signal_csv<T: Scalar>(x: &GraphSignal<T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let complex = T::FIELD == FieldKind::Complex;
    let header: &[&str] = if complex { &["re", "im"] } else { &["value"] };
    w.write_record(header).expect("in-memory write");
    for v in x.values().iter() {
        let z = v.to_c64();
        if complex {
            w.write_record([fmt_f64(z.re), fmt_f64(z.im)])
        } else {
            w.write_record([fmt_f64(z.re)])
        }
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Reads a one- or two-column signal CSV. A non-numeric first row is taken
/// as a header.
pub fn read_signal_csv<T: Scalar>(text: &str) -> Result<GraphSignal<T>> {
    let table = read_numeric_table(text)?;
    if table.is_empty() {
        return Ok(GraphSignal::zeros(0));
    }
    let width = table[0].len();
    if width == 0 || width > 2 {
        return Err(Error::Parse(format!("signal CSV has {width} columns, expected 1 or 2")));
    }
    let vals = table
        .iter()
        .map(|row| narrow::<T>(row[0], if width == 2 { row[1] } else { 0.0 }))
        .collect::<Result<Vec<T>>>()?;
    Ok(GraphSignal::from_vec(vals))
}

/// Reads a rectangular numeric CSV (rows are observations, columns are
/// vertices) into a matrix. A non-numeric first row is taken as a header.
pub fn read_observations_csv(text: &str) -> Result<DMatrix<f64>> {
    let table = read_numeric_table(text)?;
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    let flat: Vec<f64> = table.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(rows, cols, &flat))
}

fn read_numeric_table(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("CSV record {}: {e}", k + 1))),
        }
    }
    Ok(rows)
}
