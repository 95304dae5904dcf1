//! Point sets and their on-disk formats.
//!
//! Two input formats are accepted:
//!
//! * CSV, UTF-8, comma separated, header `x0,...,x{d-1}`, one point per row.
//! * Binary: magic `KDC1`, little-endian `u32` n, `u32` d, then `n*d`
//!   little-endian `f64` values in row-major order.
//!
//! Loading is all-or-nothing: a file either yields a validated [`DataSet`]
//! or a typed [`Error`].

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for sphere and simplex membership at load time.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

pub const BINARY_MAGIC: &[u8; 4] = b"KDC1";

/// The geometric domain the points are declared to live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Euclidean,
    Sphere,
    Simplex,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Euclidean => "euclidean",
            Domain::Sphere => "sphere",
            Domain::Simplex => "simplex",
        }
    }

    /// Nearest point of the domain (Euclidean projection), in place.
    pub fn project(self, p: &mut [f64]) {
        match self {
            Domain::Euclidean => {}
            Domain::Sphere => {
                let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    p.iter_mut().for_each(|v| *v /= norm);
                } else {
                    p.iter_mut().for_each(|v| *v = 0.0);
                    p[0] = 1.0;
                }
            }
            Domain::Simplex => {
                let mut sorted = p.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let mut cumsum = 0.0;
                let mut theta = 0.0;
                for (j, &u) in sorted.iter().enumerate() {
                    cumsum += u;
                    let t = (cumsum - 1.0) / (j + 1) as f64;
                    if u - t > 0.0 {
                        theta = t;
                    }
                }
                p.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
                let sum: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Domain::Euclidean),
            "sphere" => Ok(Domain::Sphere),
            "simplex" => Ok(Domain::Simplex),
            other => Err(Error::param(format!("unknown domain '{other}'"))),
        }
    }
}

/// `n` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    id: String,
    domain: Domain,
    dim: usize,
    coords: Vec<f64>,
}

impl DataSet {
    /// Validates and builds a dataset from row vectors. Sphere and simplex
    /// rows within [`MEMBERSHIP_TOL`] of the domain are projected onto it.
    pub fn from_rows(id: impl Into<String>, domain: Domain, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("row has {} coordinates, expected {dim}", row.len()),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(id, domain, dim, coords)
    }

    /// Validates and builds a dataset from row-major coordinates.
    pub fn from_flat(
        id: impl Into<String>,
        domain: Domain,
        dim: usize,
        mut coords: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format { line: 0, message: "dimension must be at least 1".into() });
        }
        if coords.is_empty() {
            return Err(Error::Format { line: 0, message: "dataset has no points".into() });
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Format {
                line: 0,
                message: format!("{} coordinates do not divide into rows of {dim}", coords.len()),
            });
        }
        for (row, p) in coords.chunks_mut(dim).enumerate() {
            if let Some(j) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain { row, message: format!("coordinate {j} is not finite") });
            }
            project_row(domain, p).map_err(|message| Error::Domain { row, message })?;
        }
        Ok(DataSet { id: id.into(), domain, dim, coords })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Copies the given rows (in the given order) into a new dataset.
    ///
    /// Panics if `indices` is empty or out of range.
    pub fn subset(&self, indices: &[usize]) -> DataSet {
        assert!(!indices.is_empty(), "subset must be nonempty");
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        DataSet { id: self.id.clone(), domain: self.domain, dim: self.dim, coords }
    }
}

/// Checks membership and projects in place; returns a message on violation.
fn project_row(domain: Domain, p: &mut [f64]) -> std::result::Result<(), String> {
    match domain {
        Domain::Euclidean => Ok(()),
        Domain::Sphere => {
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > MEMBERSHIP_TOL {
                return Err(format!("norm {norm} is not 1"));
            }
            p.iter_mut().for_each(|v| *v /= norm);
            Ok(())
        }
        Domain::Simplex => {
            if let Some(j) = p.iter().position(|&v| v < -MEMBERSHIP_TOL) {
                return Err(format!("coordinate {j} is negative ({})", p[j]));
            }
            p.iter_mut().for_each(|v| *v = v.max(0.0));
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > MEMBERSHIP_TOL {
                return Err(format!("coordinates sum to {sum}, not 1"));
            }
            p.iter_mut().for_each(|v| *v /= sum);
            Ok(())
        }
    }
}

/// Reads a dataset from `path`, detecting the binary format by its magic.
pub fn load_dataset(path: impl AsRef<Path>, domain: Domain) -> Result<DataSet> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_dataset(&bytes, id, domain)
}

/// Parses an in-memory byte stream (binary or CSV).
pub fn parse_dataset(bytes: &[u8], id: impl Into<String>, domain: Domain) -> Result<DataSet> {
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(bytes, id, domain)
    } else {
        parse_csv(bytes, id, domain)
    }
}

fn parse_binary(bytes: &[u8], id: impl Into<String>, domain: Domain) -> Result<DataSet> {
    let header = |message: &str| Error::Format { line: 0, message: message.to_string() };
    if bytes.len() < 12 {
        return Err(header("binary header truncated"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n == 0 || d == 0 {
        return Err(header("binary header declares an empty dataset"));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(12))
        .ok_or_else(|| header("binary header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(header(&format!(
            "binary payload is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let coords = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DataSet::from_flat(id, domain, d, coords)
}

fn parse_csv(bytes: &[u8], id: impl Into<String>, domain: Domain) -> Result<DataSet> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::Format { line: 0, message: format!("not UTF-8: {e}") })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format { line: 1, message: e.to_string() })?
        .clone();
    let dim = headers.len();
    let header_ok = dim > 0
        && !(dim == 1 && headers[0].is_empty())
        && headers.iter().enumerate().all(|(j, h)| h == format!("x{j}"));
    if !header_ok {
        return Err(Error::Format {
            line: 1,
            message: "header must be x0,...,x{d-1}".to_string(),
        });
    }
    let mut coords = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != dim {
            return Err(Error::Format {
                line,
                message: format!("row has {} fields, expected {dim}", record.len()),
            });
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                line,
                message: format!("'{field}' is not a number"),
            })?;
            coords.push(v);
        }
    }
    DataSet::from_flat(id, domain, dim, coords)
}

/// Writes the CSV format. Values are printed in shortest round-trip form.
pub fn write_csv(dataset: &DataSet, mut out: impl Write) -> Result<()> {
    let header: Vec<String> = (0..dataset.dim()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in dataset.points() {
        let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Writes the `KDC1` binary format.
pub fn write_binary(dataset: &DataSet, mut out: impl Write) -> Result<()> {
    let too_big = |what: &str| Error::param(format!("{what} does not fit in u32"));
    let n = u32::try_from(dataset.len()).map_err(|_| too_big("n"))?;
    let d = u32::try_from(dataset.dim()).map_err(|_| too_big("d"))?;
    let mut buf = Vec::with_capacity(12 + dataset.coords().len() * 8);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    for v in dataset.coords() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(text: &str, domain: Domain) -> Result<DataSet> {
        parse_dataset(text.as_bytes(), "t", domain)
    }

    #[test]
    fn parses_plain_csv() {
        let ds = csv("x0,x1\n0,0\n1,0\n0,1\n", Domain::Euclidean).unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(ds.point(2), &[0.0, 1.0]);
    }

    #[test]
    fn parses_simplex_rows() {
        let ds = csv("x0,x1\n0.5,0.5\n1.0,0.0\n", Domain::Simplex).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));
    }

    #[test]
    fn simplex_violation_reports_row() {
        match csv("x0,x1\n0.6,0.5\n", Domain::Simplex) {
            Err(Error::Domain { row, .. }) => assert_eq!(row, 0),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn sphere_rows_are_projected() {
        let ds = csv("x0,x1\n0.6,0.8000000001\n", Domain::Sphere).unwrap();
        let p = ds.point(0);
        assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-15);
        assert!(matches!(csv("x0,x1\n0.6,0.81\n", Domain::Sphere), Err(Error::Domain { .. })));
    }

    #[test]
    fn format_errors() {
        assert!(matches!(csv("x0,x1\n1,2,3\n", Domain::Euclidean), Err(Error::Format { .. })));
        assert!(matches!(csv("x0,x1\n1,abc\n", Domain::Euclidean), Err(Error::Format { .. })));
        assert!(matches!(csv("a,b\n1,2\n", Domain::Euclidean), Err(Error::Format { .. })));
        assert!(matches!(csv("x0,x1\n", Domain::Euclidean), Err(Error::Format { .. })));
        assert!(matches!(csv("", Domain::Euclidean), Err(Error::Format { .. })));
        assert!(matches!(csv("x0\nNaN\n", Domain::Euclidean), Err(Error::Domain { row: 0, .. })));
    }

    #[test]
    fn duplicates_allowed() {
        let ds = csv("x0\n1\n1\n1\n", Domain::Euclidean).unwrap();
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let ds = DataSet::from_rows("b", Domain::Euclidean, &[vec![0.1, -3.5e-300], vec![1e300, 2.0]])
            .unwrap();
        let mut buf = Vec::new();
        write_binary(&ds, &mut buf).unwrap();
        let back = parse_dataset(&buf, "b", Domain::Euclidean).unwrap();
        assert_eq!(back, ds);
        buf.push(0);
        assert!(matches!(parse_dataset(&buf, "b", Domain::Euclidean), Err(Error::Format { .. })));
    }

    #[test]
    fn projections_land_in_domain() {
        let mut s = [3.0, 4.0];
        Domain::Sphere.project(&mut s);
        assert_eq!(s, [0.6, 0.8]);
        let mut q = [0.9, 0.5, -0.2];
        Domain::Simplex.project(&mut q);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(q.iter().all(|&v| v >= 0.0));
        assert!((q[0] - 0.7).abs() < 1e-15 && (q[1] - 0.3).abs() < 1e-15 && q[2] == 0.0);
        let mut inside = [0.25, 0.75];
        Domain::Simplex.project(&mut inside);
        assert_eq!(inside, [0.25, 0.75]);
    }

    #[test]
    fn truncated_binary_rejected() {
        assert!(parse_dataset(b"KDC1\x01\x00", "b", Domain::Euclidean).is_err());
        let mut hdr = b"KDC1".to_vec();
        hdr.extend_from_slice(&u32::MAX.to_le_bytes());
        hdr.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(parse_dataset(&hdr, "b", Domain::Euclidean), Err(Error::Format { .. })));
    }
}
