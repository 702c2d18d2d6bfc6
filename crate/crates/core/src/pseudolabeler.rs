//! The per-scan labeling pipeline: quantile noise pre-filter, elevation fit, residual
//! thresholding and pillar refinement.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::pointcloud::{Label, PointCloud, SegmentationMask};
use crate::surfacefit::{
    fit_elevation, residuals, ElevationModel, FitStats, LossConfig, ModelConfig, OptimConfig,
    MIN_FIT_POINTS,
};

/// Everything the surface fit needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Lower height quantile below which points are treated as noise.
    #[serde(rename = "q")]
    pub noise_quantile: f64,
    /// Points with residual `<= D` are ground (meters).
    #[serde(rename = "D")]
    pub distance_threshold: f64,
    #[serde(rename = "v_xy")]
    pub pillar_size: f64,
    #[serde(rename = "tau")]
    pub recovery_margin: f64,
    #[serde(rename = "H_p1")]
    pub window_below: f64,
    #[serde(rename = "H_p2")]
    pub window_above: f64,
    pub enable_prefilter: bool,
    pub enable_refine: bool,
    /// Upper bound on the points handed to the surface fit; larger clouds are
    /// subsampled with a seeded draw. `0` disables the cap.
    pub max_fit_points: usize,
    #[serde(skip)]
    pub fit: FitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            noise_quantile: 0.005,
            distance_threshold: 0.40,
            pillar_size: 0.50,
            recovery_margin: 0.05,
            window_below: 1.5,
            window_above: 1.5,
            enable_prefilter: true,
            enable_refine: true,
            max_fit_points: 2048,
            fit: FitConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.noise_quantile) {
            return bad(format!("q must be in [0, 1), got {}", self.noise_quantile));
        }
        if !(self.distance_threshold > 0.0) {
            return bad(format!("D must be > 0, got {}", self.distance_threshold));
        }
        if !(self.pillar_size > 0.0 && self.pillar_size.is_finite()) {
            return bad(format!("v_xy must be > 0, got {}", self.pillar_size));
        }
        if !(self.recovery_margin >= 0.0) {
            return bad(format!("tau must be >= 0, got {}", self.recovery_margin));
        }
        if !(self.window_below >= 0.0 && self.window_above >= 0.0) {
            return bad("H_p1 and H_p2 must be >= 0".into());
        }
        self.fit.model.validate()?;
        self.fit.loss.validate()?;
        self.fit.optim.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefilterResult {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    pub threshold: f64,
}

/// Removes points strictly below the nearest-rank lower height quantile
/// (the z value at rank `floor(q L)` in ascending order).
pub fn quantile_prefilter(cloud: &PointCloud, q: f64) -> Result<PrefilterResult> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Config(format!("q must be in [0, 1), got {q}")));
    }
    let mut z: Vec<f64> = cloud.points.iter().map(|p| p[2]).collect();
    let rank = ((q * z.len() as f64).floor() as usize).min(z.len() - 1);
    let (_, &mut threshold, _) = z.select_nth_unstable_by(rank, f64::total_cmp);
    let (kept, removed) = (0..cloud.len()).partition(|&i| cloud.points[i][2] >= threshold);
    Ok(PrefilterResult {
        kept,
        removed,
        threshold,
    })
}

/// Ground iff residual `<= d`; the residuals are kept as scores.
pub fn classify_by_threshold(residuals: &[f64], d: f64) -> SegmentationMask {
    let labels = residuals
        .iter()
        .map(|&r| if r <= d { Label::Ground } else { Label::NonGround })
        .collect();
    SegmentationMask {
        labels,
        scores: Some(residuals.to_vec()),
    }
}

fn pillar_key(p: &[f64; 3], size: f64) -> (i64, i64) {
    ((p[0] / size).floor() as i64, (p[1] / size).floor() as i64)
}

/// Pillar-based recovery of over-segmented object bottoms.
///
/// Points are binned into `v_xy` square pillars anchored at the origin. Inside each
/// pillar only points within `[h - H_p1, h + H_p2]` are considered, with `h` the
/// surface height at the pillar center. When that set holds both classes, every point
/// in it higher than its minimum plus `tau` becomes non-ground. Labels never move
/// toward ground.
pub fn pillar_refine(
    cloud: &PointCloud,
    mask: &SegmentationMask,
    model: &ElevationModel,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<SegmentationMask> {
    mask.check_len(cloud.len())?;
    let v = cfg.pillar_size;
    let mut order: Vec<(i64, i64, usize)> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (a, b) = pillar_key(p, v);
            (a, b, i)
        })
        .collect();
    order.sort_unstable();

    let mut groups: Vec<&[(i64, i64, usize)]> = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || (order[i].0, order[i].1) != (order[start].0, order[start].1) {
            groups.push(&order[start..i]);
            start = i;
        }
    }
    let centers: Vec<[f64; 2]> = groups
        .iter()
        .map(|g| [(g[0].0 as f64 + 0.5) * v, (g[0].1 as f64 + 0.5) * v])
        .collect();
    let surface = model.predict_with(&centers, exec);

    let flips = par::map_indices(exec, groups.len(), |gi| {
        let (lo, hi) = (surface[gi] - cfg.window_below, surface[gi] + cfg.window_above);
        let windowed = || {
            groups[gi]
                .iter()
                .map(|&(_, _, i)| i)
                .filter(move |&i| (lo..=hi).contains(&cloud.points[i][2]))
        };
        let mut has_ground = false;
        let mut has_other = false;
        let mut min_z = f64::INFINITY;
        for i in windowed() {
            match mask.labels[i] {
                Label::Ground => has_ground = true,
                Label::NonGround => has_other = true,
            }
            min_z = min_z.min(cloud.points[i][2]);
        }
        if !(has_ground && has_other) {
            return Vec::new();
        }
        let cut = min_z + cfg.recovery_margin;
        windowed()
            .filter(|&i| mask.labels[i] == Label::Ground && cloud.points[i][2] > cut)
            .collect::<Vec<_>>()
    });

    let mut out = mask.clone();
    for i in flips.into_iter().flatten() {
        out.labels[i] = Label::NonGround;
    }
    Ok(out)
}

/// Intermediate result of [`fit_scan`]: the fitted surface and the residuals of every
/// original point.
#[derive(Debug, Clone)]
pub struct FittedScan {
    pub model: ElevationModel,
    pub stats: FitStats,
    pub prefilter: Option<PrefilterResult>,
    pub residuals: Vec<f64>,
}

/// Pre-filter and surface fit. Only the fit-related parts of `cfg` are used, so one
/// fitted scan can be finished under several refinement settings.
pub fn fit_scan(cloud: &PointCloud, cfg: &PipelineConfig, exec: Exec) -> Result<FittedScan> {
    cfg.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let prefilter = cfg
        .enable_prefilter
        .then(|| quantile_prefilter(cloud, cfg.noise_quantile))
        .transpose()?;
    let mut fit_idx: Vec<usize> = match &prefilter {
        Some(p) => p.kept.clone(),
        None => (0..cloud.len()).collect(),
    };
    if fit_idx.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: fit_idx.len(),
        });
    }
    if cfg.max_fit_points > 0 && fit_idx.len() > cfg.max_fit_points.max(MIN_FIT_POINTS) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.fit.optim.seed);
        let mut pick = index::sample(&mut rng, fit_idx.len(), cfg.max_fit_points.max(MIN_FIT_POINTS)).into_vec();
        pick.sort_unstable();
        fit_idx = pick.into_iter().map(|k| fit_idx[k]).collect();
    }
    let fit_cloud = cloud.select(&fit_idx);
    let init = ElevationModel::init(&cfg.fit.model, cfg.fit.optim.seed)?;
    let (model, stats) = fit_elevation(&fit_cloud, init, &cfg.fit.loss, &cfg.fit.optim, exec)?;
    let residuals = residuals(&model, cloud, exec)?;
    Ok(FittedScan {
        model,
        stats,
        prefilter,
        residuals,
    })
}

/// Threshold classification, optional pillar refinement, and the noise override for
/// pre-filtered points.
pub fn finish_scan(
    cloud: &PointCloud,
    fitted: &FittedScan,
    cfg: &PipelineConfig,
    exec: Exec,
) -> Result<SegmentationMask> {
    if fitted.residuals.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            got: fitted.residuals.len(),
        });
    }
    let mut mask = classify_by_threshold(&fitted.residuals, cfg.distance_threshold);
    if cfg.enable_refine {
        mask = pillar_refine(cloud, &mask, &fitted.model, cfg, exec)?;
    }
    if let Some(pre) = &fitted.prefilter {
        for &i in &pre.removed {
            mask.labels[i] = Label::NonGround;
        }
    }
    Ok(mask)
}

pub fn label_scan(cloud: &PointCloud, cfg: &PipelineConfig, exec: Exec) -> Result<(SegmentationMask, FitStats)> {
    let fitted = fit_scan(cloud, cfg, exec)?;
    let mask = finish_scan(cloud, &fitted, cfg, exec)?;
    Ok((mask, fitted.stats))
}
