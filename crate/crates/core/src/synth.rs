//! Seeded synthetic scenes with exact per-point ground truth.
//!
//! Ground is sampled uniformly over a square, objects are sampled on their surfaces at
//! the same areal density, and optional multipath returns are mirrored copies of ground
//! points pushed below the surface.

use std::f64::consts::{PI, TAU};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Label, PointCloud, SegmentationMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Terrain {
    Flat { height: f64 },
    Ramp { slope_x: f64, slope_y: f64 },
    /// `amplitude * sin(2 pi x / wavelength)`.
    Sine { amplitude: f64, wavelength: f64 },
}

impl Terrain {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::Ramp { slope_x, slope_y } => slope_x * x + slope_y * y,
            Terrain::Sine {
                amplitude,
                wavelength,
            } => amplitude * (TAU * x / wavelength).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneObject {
    /// Axis-aligned box resting on the terrain; `size` is `[length_x, width_y, height]`.
    Box { center: [f64; 2], size: [f64; 3] },
    Pole { center: [f64; 2], radius: f64, height: f64 },
    /// Vertical plane along a segment.
    Wall { start: [f64; 2], end: [f64; 2], height: f64 },
}

impl SceneObject {
    /// Whether the object hides the ground at `(x, y)`.
    fn occludes(&self, x: f64, y: f64) -> bool {
        match *self {
            SceneObject::Box { center, size } => {
                (x - center[0]).abs() <= 0.5 * size[0] && (y - center[1]).abs() <= 0.5 * size[1]
            }
            SceneObject::Pole { center, radius, .. } => {
                (x - center[0]).hypot(y - center[1]) <= radius
            }
            SceneObject::Wall { .. } => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SceneObject::Box { center, size } => {
                center.iter().chain(&size).all(|v| v.is_finite()) && size.iter().all(|&s| s > 0.0)
            }
            SceneObject::Pole {
                center,
                radius,
                height,
            } => center.iter().all(|v| v.is_finite()) && radius > 0.0 && height > 0.0,
            SceneObject::Wall { start, end, height } => {
                start.iter().chain(&end).all(|v| v.is_finite())
                    && height > 0.0
                    && (end[0] - start[0]).hypot(end[1] - start[1]) > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("bad object {self:?}")))
        }
    }
}

/// Radial thinning emulating a spinning sensor: a point at planar range `r` survives
/// with probability `min(1, r0 / r)` where `r0 = max_range / rings`; nothing beyond
/// `max_range` is kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingPattern {
    pub rings: usize,
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub terrain: Terrain,
    /// Half-width of the square scene (meters).
    pub extent: f64,
    /// Ground points per square meter.
    pub density: f64,
    /// Points per square meter on object surfaces; defaults to `density`.
    #[serde(default)]
    pub object_density: Option<f64>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub z_noise_sigma: f64,
    #[serde(default)]
    pub multipath_fraction: f64,
    #[serde(default = "default_multipath_depth")]
    pub multipath_depth: f64,
    #[serde(default)]
    pub ring_pattern: Option<RingPattern>,
    #[serde(default)]
    pub seed: u64,
}

fn default_multipath_depth() -> f64 {
    2.0
}

impl SceneSpec {
    pub fn new(terrain: Terrain, extent: f64, density: f64) -> Self {
        Self {
            terrain,
            extent,
            density,
            object_density: None,
            objects: Vec::new(),
            z_noise_sigma: 0.0,
            multipath_fraction: 0.0,
            multipath_depth: default_multipath_depth(),
            ring_pattern: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad("extent must be > 0");
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be > 0");
        }
        if let Some(d) = self.object_density {
            if !(d > 0.0 && d.is_finite()) {
                return bad("object_density must be > 0");
            }
        }
        if !(self.z_noise_sigma >= 0.0 && self.z_noise_sigma.is_finite()) {
            return bad("z_noise_sigma must be >= 0");
        }
        if !(0.0..1.0).contains(&self.multipath_fraction) {
            return bad("multipath_fraction must be in [0, 1)");
        }
        if !(self.multipath_depth > 0.0 && self.multipath_depth.is_finite()) {
            return bad("multipath_depth must be > 0");
        }
        if let Terrain::Sine { wavelength, .. } = self.terrain {
            if !(wavelength > 0.0) {
                return bad("sine wavelength must be > 0");
            }
        }
        if let Some(r) = self.ring_pattern {
            if r.rings == 0 || !(r.max_range > 0.0) {
                return bad("ring pattern needs rings >= 1 and max_range > 0");
            }
        }
        self.objects.iter().try_for_each(SceneObject::validate)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec =
            toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A generated scene. Points are ordered ground, then objects, then multipath.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub truth: SegmentationMask,
    pub multipath_indices: Vec<usize>,
}

pub fn generate(spec: &SceneSpec) -> Result<(PointCloud, SegmentationMask)> {
    let scene = generate_scene(spec)?;
    Ok((scene.cloud, scene.truth))
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.extent;
    let keep_prob = |x: f64, y: f64| -> f64 {
        match spec.ring_pattern {
            None => 1.0,
            Some(rp) => {
                let r = x.hypot(y);
                if r > rp.max_range {
                    0.0
                } else {
                    (rp.max_range / rp.rings as f64 / r.max(1e-9)).min(1.0)
                }
            }
        }
    };

    let n_ground = (spec.density * 4.0 * w * w).round() as usize;
    let mut points = Vec::with_capacity(n_ground);
    let mut labels = Vec::with_capacity(n_ground);
    let noise = (spec.z_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.z_noise_sigma).expect("sigma checked"));
    for _ in 0..n_ground {
        let x = rng.random_range(-w..w);
        let y = rng.random_range(-w..w);
        let keep = rng.random::<f64>() < keep_prob(x, y);
        let dz = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
        if !keep || spec.objects.iter().any(|o| o.occludes(x, y)) {
            continue;
        }
        points.push([x, y, spec.terrain.height(x, y) + dz]);
        labels.push(Label::Ground);
    }
    let ground_count = points.len();

    for obj in &spec.objects {
        for p in sample_object(obj, &spec.terrain, spec.object_density.unwrap_or(spec.density), &mut rng) {
            if rng.random::<f64>() < keep_prob(p[0], p[1]) {
                points.push(p);
                labels.push(Label::NonGround);
            }
        }
    }

    let n_multi = (spec.multipath_fraction * ground_count as f64).round() as usize;
    let mut picks = index::sample(&mut rng, ground_count, n_multi).into_vec();
    picks.sort_unstable();
    let mut multipath_indices = Vec::with_capacity(n_multi);
    for i in picks {
        let p = points[i];
        multipath_indices.push(points.len());
        points.push([p[0], p[1], p[2] - spec.multipath_depth]);
        labels.push(Label::NonGround);
    }

    Ok(Scene {
        cloud: PointCloud::new(points)?,
        truth: SegmentationMask::new(labels),
        multipath_indices,
    })
}

fn poisson_count(area: f64, density: f64) -> usize {
    (area * density).round().max(1.0) as usize
}

/// Points on the visible surfaces of an object. Each vertical face runs from the local
/// terrain height (exclusive) up to the object's top.
fn sample_object(obj: &SceneObject, terrain: &Terrain, density: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    // (0, 1]
    let unit_open = |rng: &mut ChaCha8Rng| 1.0 - rng.random::<f64>();
    let column = |x: f64, y: f64, top: f64, rng: &mut ChaCha8Rng, out: &mut Vec<[f64; 3]>| {
        let base = terrain.height(x, y);
        out.push([x, y, base + unit_open(rng) * (top - base)]);
    };
    match *obj {
        SceneObject::Box { center, size } => {
            let [sx, sy, sz] = size;
            let top = terrain.height(center[0], center[1]) + sz;
            let (x0, x1) = (center[0] - 0.5 * sx, center[0] + 0.5 * sx);
            let (y0, y1) = (center[1] - 0.5 * sy, center[1] + 0.5 * sy);
            for _ in 0..poisson_count(sx * sy, density) {
                out.push([rng.random_range(x0..x1), rng.random_range(y0..y1), top]);
            }
            let perimeter = 2.0 * (sx + sy);
            for _ in 0..poisson_count(perimeter * sz, density) {
                let s = rng.random_range(0.0..perimeter);
                let (x, y) = if s < sx {
                    (x0 + s, y0)
                } else if s < sx + sy {
                    (x1, y0 + (s - sx))
                } else if s < 2.0 * sx + sy {
                    (x1 - (s - sx - sy), y1)
                } else {
                    (x0, y1 - (s - 2.0 * sx - sy))
                };
                column(x, y, top, rng, &mut out);
            }
        }
        SceneObject::Pole {
            center,
            radius,
            height,
        } => {
            let top = terrain.height(center[0], center[1]) + height;
            for _ in 0..poisson_count(TAU * radius * height, density) {
                let a = rng.random_range(0.0..TAU);
                column(center[0] + radius * a.cos(), center[1] + radius * a.sin(), top, rng, &mut out);
            }
            for _ in 0..poisson_count(PI * radius * radius, density) {
                let a = rng.random_range(0.0..TAU);
                let r = radius * rng.random::<f64>().sqrt();
                out.push([center[0] + r * a.cos(), center[1] + r * a.sin(), top]);
            }
        }
        SceneObject::Wall { start, end, height } => {
            let len = (end[0] - start[0]).hypot(end[1] - start[1]);
            for _ in 0..poisson_count(len * height, density) {
                let t = rng.random::<f64>();
                let x = start[0] + t * (end[0] - start[0]);
                let y = start[1] + t * (end[1] - start[1]);
                let top = terrain.height(x, y) + height;
                column(x, y, top, rng, &mut out);
            }
        }
    }
    out
}

/// Analytic standard deviation of the terrain height over the square extent.
pub fn sigma_of(spec: &SceneSpec) -> f64 {
    let w = spec.extent;
    match spec.terrain {
        Terrain::Flat { .. } => 0.0,
        Terrain::Ramp { slope_x, slope_y } => slope_x.hypot(slope_y) * w / 3f64.sqrt(),
        Terrain::Sine {
            amplitude,
            wavelength,
        } => {
            // mean of sin^2(kx) over [-w, w] is 1/2 - sin(2kw) / (4kw); the mean of sin is 0
            let k = TAU / wavelength;
            let mean_sq = 0.5 - (2.0 * k * w).sin() / (4.0 * k * w);
            amplitude.abs() * mean_sq.max(0.0).sqrt()
        }
    }
}

/// Whether the standard suite is generated with or without sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteVariant {
    Clean,
    Noisy,
}

/// Ten seeded scenes: flat, ramp and sine terrains carrying 5 to 20 boxes, poles and
/// walls. The noisy variant adds 0.02 m ground noise and 0.4 % multipath returns.
pub fn standard_suite(variant: SuiteVariant) -> Vec<(String, SceneSpec)> {
    const TERRAINS: [Terrain; 10] = [
        Terrain::Flat { height: 0.0 },
        Terrain::Ramp { slope_x: 0.02, slope_y: 0.0 },
        Terrain::Sine { amplitude: 0.3, wavelength: 20.0 },
        Terrain::Flat { height: 0.1 },
        Terrain::Ramp { slope_x: -0.01, slope_y: 0.015 },
        Terrain::Sine { amplitude: 0.2, wavelength: 30.0 },
        Terrain::Flat { height: -0.05 },
        Terrain::Ramp { slope_x: 0.0, slope_y: -0.02 },
        Terrain::Sine { amplitude: 0.4, wavelength: 25.0 },
        Terrain::Ramp { slope_x: 0.015, slope_y: 0.01 },
    ];
    TERRAINS
        .iter()
        .enumerate()
        .map(|(i, &terrain)| {
            let seed = 1000 + i as u64;
            let mut spec = SceneSpec::new(terrain, 25.0, 16.0);
            spec.seed = seed;
            // vertical surfaces close to the sensor return far more points per m² than the ground
            spec.object_density = Some(32.0);
            spec.objects = suite_objects(seed, spec.extent);
            if variant == SuiteVariant::Noisy {
                spec.z_noise_sigma = 0.02;
                spec.multipath_fraction = 0.004;
            }
            (format!("scene{i:02}"), spec)
        })
        .collect()
}

fn suite_objects(seed: u64, extent: f64) -> Vec<SceneObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0b1e);
    let count = rng.random_range(5..=20);
    let lim = extent - 3.0;
    let mut objects = Vec::with_capacity(count);
    while objects.len() < count {
        let c = [rng.random_range(-lim..lim), rng.random_range(-lim..lim)];
        // keep the sensor origin clear
        if c[0].hypot(c[1]) < 4.0 {
            continue;
        }
        let obj = match rng.random_range(0..3) {
            0 => {
                let (l, w) = (rng.random_range(3.5..5.0), rng.random_range(1.6..2.0));
                let size = if rng.random::<bool>() { [l, w, rng.random_range(1.3..1.9)] } else { [w, l, rng.random_range(1.3..1.9)] };
                SceneObject::Box { center: c, size }
            }
            1 => SceneObject::Pole {
                center: c,
                radius: rng.random_range(0.1..0.3),
                height: rng.random_range(2.5..6.0),
            },
            _ => {
                let a = rng.random_range(0.0..PI);
                let half = rng.random_range(2.0..6.0);
                SceneObject::Wall {
                    start: [c[0] - half * a.cos(), c[1] - half * a.sin()],
                    end: [c[0] + half * a.cos(), c[1] + half * a.sin()],
                    height: rng.random_range(1.0..3.0),
                }
            }
        };
        objects.push(obj);
    }
    objects
}
