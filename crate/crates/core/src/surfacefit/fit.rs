use serde::{Deserialize, Serialize};

use super::loss::{asymmetric_loss, asymmetric_loss_derivative, LossConfig};
use super::mlp::{ElevationModel, Scalar};
use super::optim::{AdamW, EmaEarlyStop, OptimConfig, PlateauScheduler, Precision, StopSignal};
use crate::error::{Error, Result};
use crate::par::{self, Exec, CHUNK};
use crate::pointcloud::PointCloud;

/// Smallest cloud `fit_elevation` accepts.
pub const MIN_FIT_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub iterations: usize,
    /// Mean loss of the returned model over the fitted points.
    pub final_loss: f64,
    pub final_lr: f64,
    pub stopped_early: bool,
}

/// Vertical residuals `z_i - g(x_i, y_i)`.
pub fn residuals(model: &ElevationModel, cloud: &PointCloud, exec: Exec) -> Result<Vec<f64>> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let g = model.predict_points(&cloud.points, exec);
    Ok(cloud.points.iter().zip(g).map(|(p, h)| p[2] - h).collect())
}

pub fn mean_loss(model: &ElevationModel, cloud: &PointCloud, cfg: &LossConfig, exec: Exec) -> Result<f64> {
    let dd = residuals(model, cloud, exec)?;
    // chunked partial sums in a fixed order, same as loss_and_grad
    let total: f64 = dd
        .chunks(CHUNK)
        .map(|c| c.iter().map(|&d| asymmetric_loss(d, cfg)).sum::<f64>())
        .sum();
    Ok(total / dd.len() as f64)
}

/// Mean asymmetric loss over the cloud and its exact gradient with respect to every
/// model parameter, in double precision.
pub fn loss_and_grad(
    model: &ElevationModel,
    cloud: &PointCloud,
    cfg: &LossConfig,
    exec: Exec,
) -> Result<(f64, Vec<f64>)> {
    loss_and_grad_in(model, cloud, cfg, exec, Precision::F64)
}

pub(crate) fn loss_and_grad_in(
    model: &ElevationModel,
    cloud: &PointCloud,
    cfg: &LossConfig,
    exec: Exec,
    precision: Precision,
) -> Result<(f64, Vec<f64>)> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    match precision {
        Precision::F64 => Ok(reduce::<f64>(model, cloud, cfg, exec)),
        Precision::F32 => Ok(reduce::<f32>(model, cloud, cfg, exec)),
    }
}

fn reduce<T: Scalar>(model: &ElevationModel, cloud: &PointCloud, cfg: &LossConfig, exec: Exec) -> (f64, Vec<f64>) {
    let net = model.net::<T>();
    let parts = par::map_chunks(exec, &cloud.points, CHUNK, |_, chunk| {
        net.chunk_loss_grad(chunk, |z, g| {
            let dd = z - g;
            // d/dg of loss(z - g)
            (asymmetric_loss(dd, cfg), -asymmetric_loss_derivative(dd, cfg))
        })
    });
    let inv_n = 1.0 / cloud.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.num_params()];
    for (l, g) in parts {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv_n);
    (loss * inv_n, grad)
}

/// Fits `init` to the cloud by runtime optimization.
///
/// Each iteration evaluates the full-batch loss and gradient, takes one AdamW step,
/// feeds the loss to the plateau scheduler and then to the EMA early-stopping rule.
pub fn fit_elevation(
    cloud: &PointCloud,
    init: ElevationModel,
    loss_cfg: &LossConfig,
    optim: &OptimConfig,
    exec: Exec,
) -> Result<(ElevationModel, FitStats)> {
    loss_cfg.validate()?;
    optim.validate()?;
    if cloud.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: cloud.len(),
        });
    }
    let mut model = init;
    let mut adam = AdamW::new(model.num_params());
    let mut sched = PlateauScheduler::new(optim);
    let mut stopper = EmaEarlyStop::new();
    let mut iterations = 0;
    let mut stopped_early = false;
    while iterations < optim.max_iters {
        let (loss, grad) = loss_and_grad_in(&model, cloud, loss_cfg, exec, optim.precision)?;
        if !loss.is_finite() {
            return Err(Error::Data(format!("loss diverged at iteration {iterations}")));
        }
        adam.step(model.params_mut(), &grad, sched.lr(), optim)?;
        iterations += 1;
        sched.observe(loss, optim);
        if stopper.observe(loss, optim) == StopSignal::Stop {
            stopped_early = true;
            break;
        }
    }
    let final_loss = mean_loss(&model, cloud, loss_cfg, exec)?;
    let stats = FitStats {
        iterations,
        final_loss,
        final_lr: sched.lr(),
        stopped_early,
    };
    Ok((model, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfacefit::ModelConfig;

    fn cloud(points: Vec<[f64; 3]>) -> PointCloud {
        PointCloud::new(points).unwrap()
    }

    #[test]
    fn residuals_of_simple_models() {
        let cfg = ModelConfig::default();
        let mut m = ElevationModel::zeros(&cfg).unwrap();
        let c = cloud(vec![[0.0, 0.0, 1.0], [3.0, 4.0, 0.0]]);
        assert_eq!(residuals(&m, &c, Exec::Sequential).unwrap(), vec![1.0, 0.0]);
        *m.output_bias_mut() = 0.5;
        let r = residuals(&m, &cloud(vec![[1.0, 1.0, 0.2]]), Exec::Sequential).unwrap();
        assert!((r[0] + 0.3).abs() < 1e-15);
        assert!(matches!(
            residuals(&m, &PointCloud::default(), Exec::Sequential),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn on_surface_has_zero_loss_and_grad() {
        let mut m = ElevationModel::zeros(&ModelConfig::default()).unwrap();
        *m.output_bias_mut() = 0.25;
        let c = cloud((0..20).map(|i| [i as f64, -(i as f64), 0.25]).collect());
        let (l, g) = loss_and_grad(&m, &c, &LossConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplication_invariant() {
        let m = ElevationModel::init(&ModelConfig::default(), 1).unwrap();
        let pts: Vec<[f64; 3]> = (0..10)
            .map(|i| [i as f64 * 3.0 - 10.0, (i * i) as f64 * 0.5 - 8.0, (i % 3) as f64 * 0.4 - 0.3])
            .collect();
        let mut doubled = pts.clone();
        doubled.extend(pts.iter().copied());
        let cfg = LossConfig::default();
        let (l1, g1) = loss_and_grad(&m, &cloud(pts), &cfg, Exec::Sequential).unwrap();
        let (l2, g2) = loss_and_grad(&m, &cloud(doubled), &cfg, Exec::Sequential).unwrap();
        assert!((l1 - l2).abs() <= 1e-14 * l1.abs());
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let m = ElevationModel::init(&ModelConfig::default(), 9).unwrap();
        let c = cloud(
            (0..3000)
                .map(|i| {
                    let t = i as f64 * 0.37;
                    [30.0 * t.sin(), 30.0 * (1.3 * t).cos(), 0.2 * (0.1 * t).sin()]
                })
                .collect(),
        );
        let cfg = LossConfig::default();
        let a = loss_and_grad(&m, &c, &cfg, Exec::Sequential).unwrap();
        let b = loss_and_grad(&m, &c, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_precision_tracks_double() {
        let m = ElevationModel::init(&ModelConfig::default(), 2).unwrap();
        let c = cloud(
            (0..500)
                .map(|i| {
                    let t = i as f64 * 0.71;
                    [20.0 * t.sin(), 20.0 * (0.7 * t).cos(), 0.5 * (0.3 * t).sin()]
                })
                .collect(),
        );
        let cfg = LossConfig::default();
        let (l64, g64) = loss_and_grad_in(&m, &c, &cfg, Exec::Sequential, Precision::F64).unwrap();
        let (l32, g32) = loss_and_grad_in(&m, &c, &cfg, Exec::Sequential, Precision::F32).unwrap();
        assert!((l64 - l32).abs() <= 1e-5 * l64);
        let norm = g64.iter().map(|g| g * g).sum::<f64>().sqrt();
        let err = g64.iter().zip(&g32).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4 * norm, "relative gradient error {}", err / norm);
    }

    #[test]
    fn fit_rejects_small_clouds() {
        let m = ElevationModel::zeros(&ModelConfig::default()).unwrap();
        let c = cloud(vec![[0.0; 3]; 99]);
        let r = fit_elevation(&c, m, &LossConfig::default(), &OptimConfig::default(), Exec::Sequential);
        assert!(matches!(r, Err(Error::TooFewPoints { needed: 100, got: 99 })));
    }

    #[test]
    fn fit_is_deterministic() {
        let cfg = ModelConfig {
            hidden: vec![16, 16],
            input_scale: 20.0,
        };
        let c = cloud(
            (0..400)
                .map(|i| {
                    let x = (i % 20) as f64 - 10.0;
                    let y = (i / 20) as f64 - 10.0;
                    [x, y, 0.05 * x]
                })
                .collect(),
        );
        let optim = OptimConfig {
            max_iters: 60,
            ..OptimConfig::default()
        };
        let run = || {
            fit_elevation(
                &c,
                ElevationModel::init(&cfg, 4).unwrap(),
                &LossConfig::default(),
                &optim,
                Exec::Parallel,
            )
            .unwrap()
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(sa, sb);
        assert_eq!(sa.iterations, 60);
        assert!(!sa.stopped_early);
    }
}
