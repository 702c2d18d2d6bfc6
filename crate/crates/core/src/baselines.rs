//! RANSAC ground-plane baseline.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::pointcloud::{Label, PointCloud, SegmentationMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub seed: u64,
    pub min_inlier_fraction: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            inlier_threshold: 0.15,
            seed: 0,
            min_inlier_fraction: 0.1,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::Config("ransac inlier_threshold must be > 0".into()));
        }
        if !(self.min_inlier_fraction > 0.0 && self.min_inlier_fraction <= 1.0) {
            return Err(Error::Config("ransac min_inlier_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// `normal · p + offset = 0` with a unit normal pointing up (`normal[2] >= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    fn from_normal_point(n: Vector3<f64>, p: Vector3<f64>) -> Self {
        let n = if n.z < 0.0 { -n } else { n };
        Self {
            normal: n.into(),
            offset: -n.dot(&p),
        }
    }

    /// Plane through three points, or `None` when they are (nearly) collinear.
    pub fn through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<Self> {
        let (a, b, c) = (Vector3::from(*a), Vector3::from(*b), Vector3::from(*c));
        let cross = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        let norm = cross.norm();
        if !(norm > 1e-12 * scale) || scale == 0.0 {
            return None;
        }
        Some(Self::from_normal_point(cross / norm, a))
    }

    pub fn signed_distance(&self, p: &[f64; 3]) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.offset
    }
}

fn count_inliers(plane: &Plane, cloud: &PointCloud, threshold: f64) -> usize {
    cloud
        .points
        .iter()
        .filter(|p| plane.signed_distance(p).abs() <= threshold)
        .count()
}

/// Total least squares plane through the selected points.
fn refit(cloud: &PointCloud, indices: &[usize]) -> Option<Plane> {
    let n = indices.len() as f64;
    let centroid = indices
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + Vector3::from(cloud.points[i]))
        / n;
    let cov = indices.iter().fold(Matrix3::zeros(), |acc, &i| {
        let d = Vector3::from(cloud.points[i]) - centroid;
        acc + d * d.transpose()
    });
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let normal = eig.eigenvectors.column(k).into_owned();
    let len = normal.norm();
    (len > 0.0 && len.is_finite()).then(|| Plane::from_normal_point(normal / len, centroid))
}

fn all_collinear(cloud: &PointCloud) -> bool {
    let p = &cloud.points;
    let a = p[0];
    let Some(b) = p.iter().max_by(|u, v| dist2(&a, u).total_cmp(&dist2(&a, v))) else {
        return true;
    };
    p.iter().all(|c| Plane::through(&a, b, c).is_none())
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub plane: Plane,
    pub mask: SegmentationMask,
    pub inliers: usize,
    /// Inlier count of the best sampled hypothesis, before refinement.
    pub best_hypothesis_inliers: usize,
}

/// Fits the dominant plane with RANSAC and labels its inliers ground.
///
/// Hypotheses are drawn sequentially from the seeded generator, so the result does
/// not depend on `exec`; collinear samples are redrawn. The winning plane is refit to
/// its inliers by total least squares, and the refit is kept only when it does not
/// lose inliers.
pub fn ransac_plane(cloud: &PointCloud, cfg: &RansacConfig, exec: Exec) -> Result<RansacResult> {
    cfg.validate()?;
    if cloud.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 points, got {}",
            cloud.len()
        )));
    }
    if all_collinear(cloud) {
        return Err(Error::DegenerateInput("all points are collinear".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cloud.len();
    let hypotheses: Vec<Plane> = (0..cfg.iterations)
        .map(|_| loop {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let k = rng.random_range(0..n);
            if i == j || j == k || i == k {
                continue;
            }
            if let Some(p) = Plane::through(&cloud.points[i], &cloud.points[j], &cloud.points[k]) {
                break p;
            }
        })
        .collect();
    let counts = par::map_indices(exec, hypotheses.len(), |h| {
        count_inliers(&hypotheses[h], cloud, cfg.inlier_threshold)
    });
    // first maximum wins ties
    let (best, &best_count) = counts
        .iter()
        .enumerate()
        .fold((0, &0), |acc, (i, c)| if *c > *acc.1 { (i, c) } else { acc });
    let mut plane = hypotheses[best];
    let mut inliers = best_count;

    let idx: Vec<usize> = (0..n)
        .filter(|&i| plane.signed_distance(&cloud.points[i]).abs() <= cfg.inlier_threshold)
        .collect();
    if idx.len() >= 3 {
        if let Some(refined) = refit(cloud, &idx) {
            let c = count_inliers(&refined, cloud, cfg.inlier_threshold);
            if c >= inliers {
                plane = refined;
                inliers = c;
            }
        }
    }
    let fraction = inliers as f64 / n as f64;
    if fraction < cfg.min_inlier_fraction {
        return Err(Error::NoPlaneFound {
            best: fraction,
            min: cfg.min_inlier_fraction,
        });
    }
    let labels = cloud
        .points
        .iter()
        .map(|p| {
            if plane.signed_distance(p).abs() <= cfg.inlier_threshold {
                Label::Ground
            } else {
                Label::NonGround
            }
        })
        .collect();
    let scores = cloud.points.iter().map(|p| plane.signed_distance(p)).collect();
    Ok(RansacResult {
        plane,
        mask: SegmentationMask::with_scores(labels, scores)?,
        inliers,
        best_hypothesis_inliers: best_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane_with_clutter() -> PointCloud {
        let mut pts: Vec<[f64; 3]> = (0..100)
            .map(|i| [(i % 10) as f64 - 4.5, (i / 10) as f64 - 4.5, 0.0])
            .collect();
        pts.extend((0..10).map(|i| [i as f64 * 0.3, 1.0, 5.0]));
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn exact_plane_recovery() {
        let r = ransac_plane(&plane_with_clutter(), &RansacConfig { inlier_threshold: 0.1, ..Default::default() }, Exec::Sequential).unwrap();
        let n = r.plane.normal;
        assert!(n[0].abs() < 1e-6 && n[1].abs() < 1e-6 && (n[2] - 1.0).abs() < 1e-6);
        assert!(r.plane.offset.abs() < 1e-9);
        assert_eq!(r.mask.ground_count(), 100);
        assert!(r.mask.labels[..100].iter().all(|l| l.is_ground()));
        assert!(r.mask.labels[100..].iter().all(|l| !l.is_ground()));
    }

    #[test]
    fn three_points() {
        let c = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.5], [0.0, 1.0, -0.2]]).unwrap();
        let r = ransac_plane(&c, &RansacConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(r.mask.ground_count(), 3);
    }

    #[test]
    fn degenerate_inputs() {
        let line = PointCloud::new((0..20).map(|i| [i as f64, 2.0 * i as f64, 0.5]).collect()).unwrap();
        assert!(matches!(ransac_plane(&line, &RansacConfig::default(), Exec::Sequential), Err(Error::DegenerateInput(_))));
        let two = PointCloud::new(vec![[0.0; 3], [1.0; 3]]).unwrap();
        assert!(matches!(ransac_plane(&two, &RansacConfig::default(), Exec::Sequential), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn no_plane_found() {
        // scattered points: no plane gathers 90% of them within 1 mm
        let c = PointCloud::new(
            (0..60)
                .map(|i| {
                    let t = i as f64;
                    [(t * 1.7).sin() * 10.0, (t * 2.3).cos() * 10.0, (t * 0.9).sin() * 10.0]
                })
                .collect(),
        )
        .unwrap();
        let cfg = RansacConfig { inlier_threshold: 1e-3, min_inlier_fraction: 0.9, ..Default::default() };
        assert!(matches!(ransac_plane(&c, &cfg, Exec::Sequential), Err(Error::NoPlaneFound { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(RansacConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { inlier_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { min_inlier_fraction: 0.0, ..Default::default() }.validate().is_err());
    }

    fn arb_cloud() -> impl Strategy<Value = Vec<[f64; 3]>> {
        (
            prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 10..80),
            -0.2f64..0.2,
            -0.2f64..0.2,
        )
            .prop_map(|(mut pts, a, b)| {
                // bias most points toward a tilted plane so a dominant plane exists
                for (i, p) in pts.iter_mut().enumerate() {
                    if i % 3 != 0 {
                        p[2] = a * p[0] + b * p[1];
                    }
                }
                pts
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn invariants(pts in arb_cloud(), seed in 0u64..1000) {
            let c = PointCloud::new(pts).unwrap();
            let cfg = RansacConfig { seed, iterations: 50, ..Default::default() };
            let r = ransac_plane(&c, &cfg, Exec::Sequential).unwrap();
            let n = r.plane.normal;
            prop_assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-9);
            prop_assert!(r.inliers >= r.best_hypothesis_inliers);
            prop_assert_eq!(r.inliers, r.mask.ground_count());
            let again = ransac_plane(&c, &cfg, Exec::Parallel).unwrap();
            prop_assert_eq!(r, again);
        }
    }
}
