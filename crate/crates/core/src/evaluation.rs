//! Binary segmentation metrics, terrain-flatness partitioning and throughput.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Label, PointCloud, SegmentationMask};

/// Scans with ground-height σ at or below this are flat.
pub const FLAT_SIGMA: f64 = 0.40;

/// Confusion counts with Ground as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accumulate(&mut self, pred: &SegmentationMask, truth: &SegmentationMask) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                got: pred.len(),
            });
        }
        for (p, t) in pred.labels.iter().zip(&truth.labels) {
            match (p, t) {
                (Label::Ground, Label::Ground) => self.tp += 1,
                (Label::Ground, Label::NonGround) => self.fp += 1,
                (Label::NonGround, Label::Ground) => self.fn_ += 1,
                (Label::NonGround, Label::NonGround) => self.tn += 1,
            }
        }
        Ok(())
    }

    /// Like [`accumulate`](Self::accumulate), skipping points flagged in `ignored`.
    pub fn accumulate_except(&mut self, pred: &SegmentationMask, truth: &SegmentationMask, ignored: &[bool]) -> Result<()> {
        if ignored.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                got: ignored.len(),
            });
        }
        let keep = |m: &SegmentationMask| {
            SegmentationMask::new(
                m.labels
                    .iter()
                    .zip(ignored)
                    .filter(|(_, &skip)| !skip)
                    .map(|(l, _)| *l)
                    .collect(),
            )
        };
        pred.check_len(truth.len())?;
        self.accumulate(&keep(pred), &keep(truth))
    }

    pub fn from_masks(pred: &SegmentationMask, truth: &SegmentationMask) -> Result<Self> {
        let mut c = Self::default();
        c.accumulate(pred, truth)?;
        Ok(c)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    /// The same counts with NonGround as the positive class.
    pub fn swapped(self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: f64,
    pub precision: f64,
    pub iou: f64,
}

impl ClassMetrics {
    fn positive(c: &ConfusionCounts) -> Self {
        // an empty denominator means the class never occurs, counted as perfect
        let pct = |num: u64, den: u64| if den == 0 { 100.0 } else { 100.0 * num as f64 / den as f64 };
        Self {
            recall: pct(c.tp, c.tp + c.fn_),
            precision: pct(c.tp, c.tp + c.fp),
            iou: pct(c.tp, c.tp + c.fp + c.fn_),
        }
    }

    fn rounded(self) -> Self {
        Self {
            recall: round2(self.recall),
            precision: round2(self.precision),
            iou: round2(self.iou),
        }
    }
}

/// Metrics in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ground: ClassMetrics,
    pub non_ground: ClassMetrics,
    pub miou: f64,
    pub scans: usize,
    pub points: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flatness_sigma: Option<f64>,
}

/// Two-decimal rounding as printed in results tables.
pub fn round2(v: f64) -> f64 {
    format!("{v:.2}").parse().unwrap_or(v)
}

pub fn report(counts: &ConfusionCounts, scans: usize) -> Result<EvalReport> {
    if counts.total() == 0 {
        return Err(Error::EmptyEval);
    }
    let ground = ClassMetrics::positive(counts);
    let non_ground = ClassMetrics::positive(&counts.swapped());
    Ok(EvalReport {
        miou: miou(ground.iou, non_ground.iou),
        ground,
        non_ground,
        scans,
        points: counts.total(),
        flatness_sigma: None,
    })
}

pub fn miou(iou_ground: f64, iou_non_ground: f64) -> f64 {
    (iou_ground + iou_non_ground) / 2.0
}

impl EvalReport {
    /// Every metric rounded to two decimals, as printed in tables.
    pub fn rounded(&self) -> Self {
        Self {
            ground: self.ground.rounded(),
            non_ground: self.non_ground.rounded(),
            miou: round2(self.miou),
            flatness_sigma: self.flatness_sigma.map(|s| (s * 1e4).round() / 1e4),
            ..self.clone()
        }
    }
}

impl fmt::Display for EvalReport {
    /// Aligned table: Ground and Non-Ground blocks of recall, precision and IoU,
    /// then mIoU.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} | {:>28} | {:>28} | {:>7}",
            "", "Ground", "Non-Ground", ""
        )?;
        writeln!(
            f,
            "{:<10} | {:>8} {:>9} {:>9} | {:>8} {:>9} {:>9} | {:>7}",
            "Method", "Recall", "Precision", "IoU", "Recall", "Precision", "IoU", "mIoU"
        )?;
        write!(f, "{}", self.row("groundfit"))
    }
}

impl EvalReport {
    pub fn row(&self, name: &str) -> String {
        let (g, n) = (&self.ground, &self.non_ground);
        format!(
            "{:<10} | {:>8.2} {:>9.2} {:>9.2} | {:>8.2} {:>9.2} {:>9.2} | {:>7.2}",
            name, g.recall, g.precision, g.iou, n.recall, n.precision, n.iou, self.miou
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flatness {
    Flat,
    NonFlat,
}

impl Flatness {
    pub fn of(sigma: f64) -> Self {
        if sigma <= FLAT_SIGMA {
            Self::Flat
        } else {
            Self::NonFlat
        }
    }
}

/// Population standard deviation of the heights of ground-truth ground points.
pub fn flatness_sigma(truth: &SegmentationMask, cloud: &PointCloud) -> Result<f64> {
    truth.check_len(cloud.len())?;
    let z: Vec<f64> = cloud
        .points
        .iter()
        .zip(&truth.labels)
        .filter(|(_, l)| l.is_ground())
        .map(|(p, _)| p[2])
        .collect();
    if z.len() < 2 {
        return Err(Error::TooFewGroundPoints(z.len()));
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedBand {
    Offline,
    NearRealTime,
    RealTime,
}

impl SpeedBand {
    pub fn of(hz: f64) -> Self {
        if hz < 5.0 {
            Self::Offline
        } else if hz <= 15.0 {
            Self::NearRealTime
        } else {
            Self::RealTime
        }
    }
}

impl fmt::Display for SpeedBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Offline => "offline",
            Self::NearRealTime => "near-real-time",
            Self::RealTime => "real-time",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub scans: usize,
    pub seconds: f64,
    pub hz: f64,
    pub band: SpeedBand,
}

impl Throughput {
    pub fn from_elapsed(scans: usize, seconds: f64) -> Self {
        let hz = if seconds > 0.0 { scans as f64 / seconds } else { f64::INFINITY };
        Self {
            scans,
            seconds,
            hz,
            band: SpeedBand::of(hz),
        }
    }
}

/// Runs `labeler` once on the first scan untimed, then times one pass over all scans.
pub fn throughput<S, F>(scans: &[S], mut labeler: F) -> Result<Throughput>
where
    F: FnMut(&S) -> Result<()>,
{
    let first = scans.first().ok_or(Error::EmptyInput)?;
    labeler(first)?;
    let start = Instant::now();
    for s in scans {
        labeler(s)?;
    }
    Ok(Throughput::from_elapsed(scans.len(), start.elapsed().as_secs_f64()))
}
