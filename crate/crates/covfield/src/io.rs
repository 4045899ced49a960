//! File schemas and writers.
//!
//! Points serialize as JSON arrays of ambient coordinates under a manifold
//! tag (`euclidean:n`, `sphere2`, `hyperbolic2`); SPD matrices as row-major
//! arrays with a dimension field. JSON numbers are emitted with 17
//! significant digits, CSV values with 12.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CovfieldError, Result};
use crate::field::{AmplitudeFn, Pmf};
use crate::manifold::{Manifold, ManifoldPoint};
use crate::recovery::{CovarianceSet, ObservationSet};
use crate::spd::SpdMatrix;

/// serde_json formatter printing every float with 17 significant digits,
/// which round-trips any f64 exactly.
struct SigDigits;

pub fn format_json_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        // Integral values stay readable.
        format!("{:.1}", v)
    } else {
        format!("{:.16e}", v)
    }
}

/// CSV cell with 12 significant digits.
pub fn format_csv_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{:.11e}", v)
    }
}

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<T: ?Sized + Write>(&mut self, writer: &mut T, value: f64) -> std::io::Result<()> {
        writer.write_all(format_json_f64(value).as_bytes())
    }
}

/// Serialize to JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| CovfieldError::InvalidArgument(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = to_json_bytes(value)?;
    std::fs::write(path, bytes)
        .map_err(|e| CovfieldError::InvalidArgument(format!("cannot write {path:?}: {e}")))
}

pub fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CovfieldError::InvalidArgument(format!("cannot read {path:?}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| {
        CovfieldError::InvalidArgument(format!(
            "parse error in {path:?} at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })
}

/// Stable hash of the canonical JSON encoding of a config.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).unwrap_or_default();
    let mut h = DefaultHasher::new();
    json.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Envelope for emitted reports: payload plus reproducibility metadata.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultRecord<T> {
    pub version: String,
    pub config_hash: String,
    pub payload: T,
}

impl<T: Serialize> ResultRecord<T> {
    pub fn new<C: Serialize>(config: &C, payload: T) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(config),
            payload,
        }
    }
}

// ---------------------------------------------------------------------------
// Point and pmf schemas

fn points_to_rows(points: &[ManifoldPoint]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| p.coords().iter().copied().collect())
        .collect()
}

fn rows_to_points(manifold: Manifold, rows: &[Vec<f64>], what: &str) -> Result<Vec<ManifoldPoint>> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            manifold.point(row.clone()).map_err(|e| {
                CovfieldError::InvalidArgument(format!("{what} point {i}: {e}"))
            })
        })
        .collect()
}

/// A pmf on a manifold: support rows of ambient coordinates plus weights.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PmfFile {
    pub manifold: String,
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl PmfFile {
    pub fn from_pmf(pmf: &Pmf) -> Self {
        Self {
            manifold: pmf.manifold().tag(),
            support: points_to_rows(pmf.support()),
            weights: pmf.weights().iter().copied().collect(),
        }
    }

    pub fn to_pmf(&self) -> Result<Pmf> {
        let m = Manifold::parse_tag(&self.manifold)?;
        Pmf::new(rows_to_points(m, &self.support, "support")?, self.weights.clone())
    }
}

/// Row-major SPD matrix payload.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorJson {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl TensorJson {
    pub fn from_spd(m: &SpdMatrix) -> Self {
        let n = m.dim();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(m.entries()[(i, j)]);
            }
        }
        Self { dim: n, entries }
    }

    pub fn to_spd(&self, index: usize) -> Result<SpdMatrix> {
        if self.entries.len() != self.dim * self.dim {
            return Err(CovfieldError::InvalidArgument(format!(
                "tensor {index}: {} entries for dimension {}",
                self.entries.len(),
                self.dim
            )));
        }
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        SpdMatrix::new(m).map_err(|e| {
            CovfieldError::InvalidArgument(format!("tensor {index}: {e}"))
        })
    }
}

/// A recovery problem: support candidates 𝒫, observation points 𝒬, the
/// amplitude spec, observed tensors, and (optionally) ground-truth weights.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemFile {
    pub manifold: String,
    pub amplitude: String,
    pub support: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub tensors: Vec<TensorJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
}

impl ProblemFile {
    pub fn from_parts(
        set: &CovarianceSet,
        support: &[ManifoldPoint],
        truth: Option<&[f64]>,
    ) -> Self {
        Self {
            manifold: set.observations().manifold().tag(),
            amplitude: set.amplitude().spec_string(),
            support: points_to_rows(support),
            observations: points_to_rows(set.observations().points()),
            tensors: set.tensors().iter().map(TensorJson::from_spd).collect(),
            truth: truth.map(|t| t.to_vec()),
        }
    }

    pub fn to_parts(&self) -> Result<(CovarianceSet, Vec<ManifoldPoint>)> {
        let m = Manifold::parse_tag(&self.manifold)?;
        let amplitude = AmplitudeFn::parse(&self.amplitude)?;
        let support = rows_to_points(m, &self.support, "support")?;
        let observations = rows_to_points(m, &self.observations, "observation")?;
        let tensors: Vec<SpdMatrix> = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| t.to_spd(i))
            .collect::<Result<_>>()?;
        let obs = ObservationSet::with_canonical_charts(observations)?;
        let set = CovarianceSet::new(obs, tensors, amplitude)?;
        Ok((set, support))
    }
}

/// Simple CSV writer with fixed 12-digit float cells.
pub struct CsvWriter {
    lines: Vec<String>,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        Self {
            lines: vec![header.join(",")],
        }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        let line = cells
            .iter()
            .map(|c| match c {
                CsvCell::Int(v) => v.to_string(),
                CsvCell::Float(v) => format_csv_f64(*v),
                CsvCell::Text(s) => s.clone(),
            })
            .collect::<Vec<_>>()
            .join(",");
        self.lines.push(line);
    }

    pub fn bytes(&self) -> Vec<u8> {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s.into_bytes()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.bytes())
            .map_err(|e| CovfieldError::InvalidArgument(format!("cannot write {path:?}: {e}")))
    }
}

pub enum CsvCell {
    Int(i64),
    Float(f64),
    Text(String),
}
