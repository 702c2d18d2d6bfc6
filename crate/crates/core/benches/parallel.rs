use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use groundfit::baselines::{ransac_plane, RansacConfig};
use groundfit::pseudolabeler::{pillar_refine, PipelineConfig};
use groundfit::surfacefit::{loss_and_grad, residuals, ElevationModel, LossConfig, ModelConfig};
use groundfit::synth::{generate_scene, standard_suite, SuiteVariant};
use groundfit::{Exec, PointCloud, SegmentationMask};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn scene() -> (PointCloud, SegmentationMask) {
    let (_, spec) = standard_suite(SuiteVariant::Noisy).swap_remove(2);
    let s = generate_scene(&spec).expect("suite scene");
    (s.cloud, s.truth)
}

fn kernels(c: &mut Criterion) {
    let (cloud, truth) = scene();
    let model = ElevationModel::init(&ModelConfig::default(), 0).unwrap();
    let loss = LossConfig::default();
    let fit_cloud = cloud.select(&(0..2048).collect::<Vec<_>>());

    let mut g = c.benchmark_group("loss_and_grad_2048");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| loss_and_grad(&model, &fit_cloud, &loss, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("residuals_full_scan");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| residuals(&model, &cloud, exec).unwrap())
        });
    }
    g.finish();

    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("pillar_refine");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pillar_refine(&cloud, &truth, &model, &cfg, exec).unwrap())
        });
    }
    g.finish();

    let rc = RansacConfig::default();
    let mut g = c.benchmark_group("ransac");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ransac_plane(&cloud, &rc, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = kernels
}
criterion_main!(benches);
