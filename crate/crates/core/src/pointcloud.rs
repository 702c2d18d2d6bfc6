//! Point clouds, segmentation masks, scan IO and frame standardization.
//!
//! Binary scans are little-endian `f32` records: `x y z` (12 bytes) or `x y z i`
//! (16 bytes). Masks are one byte per point, `0` = ground and `1` = non-ground, with an
//! optional `<mask>.scores` sidecar of little-endian `f32` values.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub intensity: Option<Vec<f32>>,
    pub meta: String,
}

impl PointCloud {
    /// Builds a cloud after checking that every coordinate is finite.
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        Self::with_intensity(points, None)
    }

    pub fn with_intensity(points: Vec<[f64; 3]>, intensity: Option<Vec<f32>>) -> Result<Self> {
        if let Some((i, p)) = points
            .iter()
            .enumerate()
            .find(|(_, p)| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Data(format!("non-finite coordinate at point {i}: {p:?}")));
        }
        if let Some(int) = &intensity {
            if int.len() != points.len() {
                return Err(Error::LengthMismatch {
                    expected: points.len(),
                    got: int.len(),
                });
            }
        }
        Ok(Self {
            points,
            intensity,
            meta: String::new(),
        })
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = meta.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Returns the sub-cloud at `indices`, keeping intensities in lockstep.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|int| indices.iter().map(|&i| int[i]).collect()),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Ground,
    NonGround,
}

impl Label {
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Ground => 0,
            Label::NonGround => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::Ground),
            1 => Some(Label::NonGround),
            _ => None,
        }
    }

    pub fn is_ground(self) -> bool {
        self == Label::Ground
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentationMask {
    pub labels: Vec<Label>,
    /// Soft evidence per point; the pseudo-labeler stores the vertical residual here.
    pub scores: Option<Vec<f64>>,
}

impl SegmentationMask {
    pub fn new(labels: Vec<Label>) -> Self {
        Self {
            labels,
            scores: None,
        }
    }

    pub fn with_scores(labels: Vec<Label>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: labels.len(),
                got: scores.len(),
            });
        }
        Ok(Self {
            labels,
            scores: Some(scores),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ground_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_ground()).count()
    }

    /// Fails unless the mask annotates exactly `n` points.
    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.labels.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: self.labels.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanFormat {
    #[default]
    XyzF32,
    XyziF32,
    AsciiXyz,
}

impl ScanFormat {
    fn record_size(self) -> Option<usize> {
        match self {
            ScanFormat::XyzF32 => Some(12),
            ScanFormat::XyziF32 => Some(16),
            ScanFormat::AsciiXyz => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ScanFormat::XyzF32 | ScanFormat::XyziF32 => "bin",
            ScanFormat::AsciiXyz => "xyz",
        }
    }
}

impl FromStr for ScanFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xyz_f32" => Ok(ScanFormat::XyzF32),
            "xyzi_f32" => Ok(ScanFormat::XyziF32),
            "ascii_xyz" => Ok(ScanFormat::AsciiXyz),
            other => Err(Error::Config(format!("unknown scan format '{other}'"))),
        }
    }
}

impl fmt::Display for ScanFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanFormat::XyzF32 => "xyz_f32",
            ScanFormat::XyziF32 => "xyzi_f32",
            ScanFormat::AsciiXyz => "ascii_xyz",
        })
    }
}

pub fn load_scan(path: impl AsRef<Path>, format: ScanFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let cloud = match format.record_size() {
        Some(size) => decode_binary(&bytes, size)?,
        None => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::Format(format!("{}: not utf-8: {e}", path.display())))?;
            decode_ascii(text)?
        }
    };
    Ok(cloud.with_meta(meta))
}

fn decode_binary(bytes: &[u8], record: usize) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::Format(format!(
            "byte length {} is not a multiple of the {record}-byte record size",
            bytes.len()
        )));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let n = bytes.len() / record;
    let mut points = Vec::with_capacity(n);
    let mut intensity = (record == 16).then(|| Vec::with_capacity(n));
    for rec in bytes.chunks_exact(record) {
        points.push([f(&rec[0..4]) as f64, f(&rec[4..8]) as f64, f(&rec[8..12]) as f64]);
        if let Some(int) = intensity.as_mut() {
            int.push(f(&rec[12..16]));
        }
    }
    PointCloud::with_intensity(points, intensity)
}

fn decode_ascii(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: '{t}': {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 3 {
            return Err(Error::Format(format!(
                "line {}: expected 3 values, found {}",
                lineno + 1,
                vals.len()
            )));
        }
        points.push([vals[0], vals[1], vals[2]]);
    }
    PointCloud::new(points)
}

/// Writes a cloud in `format`. Binary formats narrow coordinates to `f32`; `xyzi_f32`
/// writes zero intensity when the cloud has none.
pub fn save_scan(cloud: &PointCloud, path: impl AsRef<Path>, format: ScanFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ScanFormat::XyzF32 | ScanFormat::XyziF32 => {
            let with_i = format == ScanFormat::XyziF32;
            let mut out = Vec::with_capacity(cloud.len() * if with_i { 16 } else { 12 });
            for (i, p) in cloud.points.iter().enumerate() {
                for c in p {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
                if with_i {
                    let v = cloud.intensity.as_ref().map_or(0.0, |int| int[i]);
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out
        }
        ScanFormat::AsciiXyz => {
            let mut s = String::with_capacity(cloud.len() * 32);
            for p in &cloud.points {
                s.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
            }
            s.into_bytes()
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Path of the score sidecar that accompanies `mask_path`.
pub fn scores_path(mask_path: &Path) -> PathBuf {
    let mut s = mask_path.as_os_str().to_owned();
    s.push(".scores");
    PathBuf::from(s)
}

pub fn save_mask(mask: &SegmentationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask.labels.iter().map(|l| l.to_byte()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if let Some(scores) = &mask.scores {
        let side = scores_path(path);
        let bytes: Vec<u8> = scores
            .iter()
            .flat_map(|s| (*s as f32).to_le_bytes())
            .collect();
        fs::write(&side, bytes).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

/// Reads a mask, plus its score sidecar when one exists next to it.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let labels = bytes
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            Label::from_byte(b)
                .ok_or_else(|| Error::Format(format!("mask byte {i} has invalid value {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let side = scores_path(path);
    if !side.exists() {
        return Ok(SegmentationMask::new(labels));
    }
    let raw = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    if raw.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "score sidecar length {} is not a multiple of 4",
            raw.len()
        )));
    }
    let scores = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    SegmentationMask::with_scores(labels, scores)
}

/// Semantic classes treated as ground when reading SemanticKITTI-style labels, plus
/// classes left out of evaluation entirely.
///
/// ```toml
/// ground = [40, 44, 48, 49, 60, 72]
/// ignore = [0, 1]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundClasses {
    pub ground: Vec<u16>,
    #[serde(default)]
    pub ignore: Vec<u16>,
}

impl GroundClasses {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.ground.is_empty() {
            return Err(Error::Config("ground class list is empty".into()));
        }
        if let Some(k) = c.ground.iter().find(|k| c.ignore.contains(k)) {
            return Err(Error::Config(format!("class {k} is both ground and ignored")));
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Reads a SemanticKITTI `.label` file: one little-endian `u32` per point with the
/// semantic class in the lower 16 bits. Also returns which points carry an ignored
/// class.
pub fn load_semantic_labels(path: impl AsRef<Path>, classes: &GroundClasses) -> Result<(SegmentationMask, Vec<bool>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    let (labels, ignored) = bytes
        .chunks_exact(4)
        .map(|b| {
            let class = (u32::from_le_bytes([b[0], b[1], b[2], b[3]]) & 0xffff) as u16;
            let label = if classes.ground.contains(&class) { Label::Ground } else { Label::NonGround };
            (label, classes.ignore.contains(&class))
        })
        .unzip();
    Ok((SegmentationMask::new(labels), ignored))
}

/// Rigid transform into the ground-aligned vehicle frame followed by ego removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    ego_radius: f64,
}

impl Default for StandardizationTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl StandardizationTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            ego_radius: 0.0,
        }
    }

    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3], ego_radius: f64) -> Result<Self> {
        if !(ego_radius >= 0.0 && ego_radius.is_finite()) {
            return Err(Error::Config(format!("ego_radius must be >= 0, got {ego_radius}")));
        }
        if !translation.iter().chain(rotation.iter().flatten()).all(|v| v.is_finite()) {
            return Err(Error::Config("transform has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "rotation is not orthonormal: (R^T R)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        Ok(Self {
            rotation,
            translation,
            ego_radius,
        })
    }

    /// Rotation about the z axis by `yaw` radians, then translation.
    pub fn from_yaw(yaw: f64, translation: [f64; 3], ego_radius: f64) -> Result<Self> {
        let (s, c) = yaw.sin_cos();
        Self::new([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], translation, ego_radius)
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    pub fn ego_radius(&self) -> f64 {
        self.ego_radius
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }
}

/// Maps every point into the standardized frame and drops points whose planar range
/// (after the transform) is strictly below the ego radius.
pub fn standardize(cloud: &PointCloud, t: &StandardizationTransform) -> PointCloud {
    standardize_indexed(cloud, t).0
}

/// Like [`standardize`], also returning the original index of every kept point.
pub fn standardize_indexed(cloud: &PointCloud, t: &StandardizationTransform) -> (PointCloud, Vec<usize>) {
    let mut points = Vec::with_capacity(cloud.len());
    let mut kept = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points.iter().enumerate() {
        let q = t.apply(*p);
        if q[0].hypot(q[1]) < t.ego_radius {
            continue;
        }
        points.push(q);
        kept.push(i);
    }
    let intensity = cloud
        .intensity
        .as_ref()
        .map(|src| kept.iter().map(|&i| src[i]).collect());
    let cloud = PointCloud {
        points,
        intensity,
        meta: cloud.meta.clone(),
    };
    (cloud, kept)
}
