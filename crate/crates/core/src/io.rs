//! File formats: scenes, pairwise estimates, and solutions as JSON; cost
//! histories and metric tables as CSV.
//!
//! Matrices are stored row-major as flat 9-element arrays. JSON numbers are
//! written in shortest round-trip form and CSV numbers with 17 significant
//! digits, so every format reads back bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraPose;
use crate::multiview::{assemble, MultiviewBlockMatrix, PairwiseEstimateSet};
use crate::solver::{ScaleMatrix, SolveOutput, SolverStatus};
use crate::synth::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    #[serde(rename = "K")]
    pub k: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub n: usize,
    pub cameras: Vec<CameraRecord>,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "F")]
    pub f: [f64; 9],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub n: usize,
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub n: usize,
    pub pairs: Vec<PairRecord>,
    pub lambda: Vec<ScaleRecord>,
    pub status: SolverStatus,
}

pub fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

pub fn from_row_major(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(v)
}

impl SceneFile {
    pub fn from_scene(scene: &Scene) -> Self {
        SceneFile {
            n: scene.poses.len(),
            cameras: scene
                .poses
                .iter()
                .map(|p| CameraRecord {
                    r: row_major(p.rotation()),
                    t: [p.center().x, p.center().y, p.center().z],
                    k: row_major(p.intrinsics()),
                })
                .collect(),
            points: scene.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }

    pub fn to_scene(&self) -> Result<Scene> {
        if self.cameras.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "scene declares n = {} but lists {} cameras",
                self.n,
                self.cameras.len()
            )));
        }
        let poses = self
            .cameras
            .iter()
            .map(|c| {
                CameraPose::new(
                    from_row_major(&c.r),
                    Vector3::from(c.t),
                    from_row_major(&c.k),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            poses,
            points: self.points.iter().map(|p| Vector3::from(*p)).collect(),
        })
    }
}

impl EstimatesFile {
    /// One entry per unordered observed pair, `i < j`.
    pub fn from_matrix(m: &MultiviewBlockMatrix) -> Self {
        EstimatesFile {
            n: m.n(),
            pairs: pair_records(m),
        }
    }

    /// Assembles the measurement matrix; single orientations are mirrored.
    pub fn to_matrix(&self) -> Result<MultiviewBlockMatrix> {
        let mut set = PairwiseEstimateSet::new();
        for p in &self.pairs {
            set.insert(p.i, p.j, from_row_major(&p.f));
        }
        assemble(&set, self.n)
    }
}

fn pair_records(m: &MultiviewBlockMatrix) -> Vec<PairRecord> {
    m.unordered_pairs()
        .map(|(i, j)| PairRecord {
            i,
            j,
            f: row_major(&m.block(i, j)),
        })
        .collect()
}

impl SolutionFile {
    /// Every recovered pair, with scales for the observed ones.
    pub fn from_output(out: &SolveOutput, observed: &MultiviewBlockMatrix) -> Self {
        SolutionFile {
            n: out.f.n(),
            pairs: pair_records(&out.f),
            lambda: scale_records(&out.scales, observed),
            status: out.status,
        }
    }

    pub fn to_matrix(&self) -> Result<MultiviewBlockMatrix> {
        EstimatesFile {
            n: self.n,
            pairs: self.pairs.clone(),
        }
        .to_matrix()
    }
}

fn scale_records(scales: &ScaleMatrix, observed: &MultiviewBlockMatrix) -> Vec<ScaleRecord> {
    observed
        .unordered_pairs()
        .map(|(i, j)| ScaleRecord {
            i,
            j,
            value: scales.get(i, j),
        })
        .collect()
}

fn io_error(path: &Path, err: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_json(&text, path)
}

pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    read_json::<SceneFile>(path)?.to_scene()
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_json(path, &SceneFile::from_scene(scene))
}

pub fn read_estimates(path: &Path) -> Result<MultiviewBlockMatrix> {
    read_json::<EstimatesFile>(path)?.to_matrix()
}

pub fn write_estimates(path: &Path, m: &MultiviewBlockMatrix) -> Result<()> {
    write_json(path, &EstimatesFile::from_matrix(m))
}

/// 17 significant digits: enough to read back the same `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn cost_history_csv(costs: &[f64]) -> String {
    let mut out = String::from("pass,cost\n");
    for (k, c) in costs.iter().enumerate() {
        let _ = writeln!(out, "{k},{}", format_float(*c));
    }
    out
}

/// One row of the per-trial metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub trial: usize,
    pub seed: u64,
    pub median_ess_err: f64,
    pub mean_ess_err: f64,
    pub median_loc_err: f64,
    pub rel_improvement: f64,
    pub improved: bool,
}

pub const METRICS_HEADER: &str =
    "trial,seed,median_ess_err,mean_ess_err,median_loc_err,rel_improvement,improved";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            format_float(r.median_ess_err),
            format_float(r.mean_ess_err),
            format_float(r.median_loc_err),
            format_float(r.rel_improvement),
            r.improved
        );
    }
    out
}

pub fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<MetricsRow>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        column: 1,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == METRICS_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{METRICS_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(parse_err(line_no, format!("expected 7 fields, found {}", fields.len())));
        }
        let float = |k: usize| {
            fields[k]
                .parse::<f64>()
                .map_err(|e| parse_err(line_no, format!("field {}: {e}", k + 1)))
        };
        rows.push(MetricsRow {
            trial: fields[0]
                .parse()
                .map_err(|e| parse_err(line_no, format!("field 1: {e}")))?,
            seed: fields[1]
                .parse()
                .map_err(|e| parse_err(line_no, format!("field 2: {e}")))?,
            median_ess_err: float(2)?,
            mean_ess_err: float(3)?,
            median_loc_err: float(4)?,
            rel_improvement: float(5)?,
            improved: fields[6]
                .parse()
                .map_err(|e| parse_err(line_no, format!("field 7: {e}")))?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_metrics_csv(&text, path)
}
