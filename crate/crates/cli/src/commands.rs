use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use groundfit::baselines::{ransac_plane, Plane, RansacConfig};
use groundfit::config::ConfigFile;
use groundfit::evaluation::{self, report, ConfusionCounts, EvalReport, Flatness, Throughput};
use groundfit::pointcloud::{
    load_mask, load_scan, load_semantic_labels, save_mask, save_scan, standardize_indexed, GroundClasses,
    ScanFormat,
};
use groundfit::pseudolabeler::{finish_scan, fit_scan, PipelineConfig};
use groundfit::surfacefit::FitStats;
use groundfit::synth::{generate_scene, sigma_of, standard_suite, SceneSpec, SuiteVariant};
use groundfit::{Error, Exec, Label, PointCloud, SegmentationMask, StandardizationTransform};
use log::{error, info, warn};
use serde::Serialize;

use crate::{Cli, Command, GlobalArgs, Method, Suite};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// A command failure carrying its process exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidSpec(_) => Self::config(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type CmdResult = Result<u8, Failure>;

/// Runs one invocation and returns the process exit status.
pub fn run(cli: Cli) -> u8 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => {
            error!("{f}");
            f.code
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::Label { inputs } => cmd_label(&ctx, &inputs),
        Command::Ransac { inputs } => cmd_ransac(&ctx, &inputs),
        Command::Synth { spec, suite } => cmd_synth(&ctx, spec.as_deref(), suite),
        Command::Eval {
            pred,
            truth,
            scans,
            ground_classes,
            table,
        } => cmd_eval(&ctx, &pred, &truth, scans.as_deref(), ground_classes.as_deref(), table),
        Command::Bench { inputs, method } => cmd_bench(&ctx, &inputs, method),
        Command::Ablate {
            suite,
            scenes,
            pillars,
            taus,
            csv,
        } => cmd_ablate(&ctx, suite, scenes.as_deref(), &pillars, &taus, csv.as_deref()),
    }
}

/// Settings shared by all subcommands after merging the config file and flags.
struct Context {
    pipeline: PipelineConfig,
    ransac: RansacConfig,
    transform: StandardizationTransform,
    base_seed: u64,
    seed_flag: Option<u64>,
    out: PathBuf,
    format: ScanFormat,
    workers: usize,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self, Failure> {
        let file = match &g.config {
            Some(p) => ConfigFile::load(p).map_err(|e| Failure::config(e.to_string()))?,
            None => ConfigFile::default(),
        };
        let mut pipeline = file.pipeline();
        if g.no_prefilter {
            pipeline.enable_prefilter = false;
        }
        if g.no_refine {
            pipeline.enable_refine = false;
        }
        if let Some(q) = g.quantile {
            pipeline.noise_quantile = q;
        }
        if let Some(d) = g.threshold {
            pipeline.distance_threshold = d;
        }
        if let Some(v) = g.pillar {
            pipeline.pillar_size = v;
        }
        if let Some(t) = g.tau {
            pipeline.recovery_margin = t;
        }
        pipeline.validate()?;
        let base_seed = g.seed.unwrap_or(pipeline.fit.optim.seed);
        Ok(Self {
            transform: file.transform()?,
            ransac: file.ransac,
            pipeline,
            base_seed,
            seed_flag: g.seed,
            out: g.out.clone(),
            format: g.format,
            workers: g.parallel,
        })
    }

    fn seed_for(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }

    fn pipeline_for(&self, index: usize) -> PipelineConfig {
        let mut cfg = self.pipeline.clone();
        cfg.fit.optim.seed = self.seed_for(index);
        cfg
    }

    fn ensure_out(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", self.out.display())))
    }
}

fn exec() -> Exec {
    if cfg!(feature = "parallel") {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Applies `f` to every item on `workers` threads, keeping input order.
#[cfg(feature = "parallel")]
fn map_scans<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>, Failure>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_scans<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>, Failure>
where
    F: Fn(usize, &T) -> R,
{
    if workers > 1 {
        warn!("built without the parallel feature; running on one thread");
    }
    Ok(items.iter().enumerate().map(|(i, t)| f(i, t)).collect())
}

/// Writes results to stdout. A closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
    text.push('\n');
    emit(&text)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scan".into())
}

/// Loads a scan and moves it into the standardized frame. Returns the original index
/// of every surviving point.
fn load_standardized(path: &Path, ctx: &Context) -> Result<(PointCloud, PointCloud, Vec<usize>), Error> {
    let raw = load_scan(path, ctx.format)?;
    let (cloud, kept) = standardize_indexed(&raw, &ctx.transform);
    Ok((raw, cloud, kept))
}

/// Spreads a mask over the standardized points back to the original point order.
/// Ego-removed points become non-ground with a NaN score.
fn expand(mask: SegmentationMask, kept: &[usize], total: usize) -> SegmentationMask {
    if kept.len() == total {
        return mask;
    }
    let mut labels = vec![Label::NonGround; total];
    let mut scores = mask.scores.as_ref().map(|_| vec![f64::NAN; total]);
    for (j, &i) in kept.iter().enumerate() {
        labels[i] = mask.labels[j];
        if let (Some(out), Some(src)) = (scores.as_mut(), mask.scores.as_ref()) {
            out[i] = src[j];
        }
    }
    SegmentationMask { labels, scores }
}

#[derive(Debug, Serialize)]
struct ScanFailure {
    scan: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct BatchSummary<T: Serialize> {
    command: &'static str,
    scans: usize,
    succeeded: usize,
    outputs: Vec<T>,
    failed: Vec<ScanFailure>,
}

fn summarize<T: Serialize>(command: &'static str, inputs: &[PathBuf], results: Vec<Result<T, Error>>) -> CmdResult {
    let mut outputs = Vec::new();
    let mut failed = Vec::new();
    for (path, r) in inputs.iter().zip(results) {
        match r {
            Ok(v) => outputs.push(v),
            Err(e) => {
                error!("{}: {e}", path.display());
                failed.push(ScanFailure {
                    scan: path.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    let code = if failed.is_empty() { EXIT_OK } else { EXIT_FAILURE };
    print_json(&BatchSummary {
        command,
        scans: inputs.len(),
        succeeded: outputs.len(),
        outputs,
        failed,
    })?;
    Ok(code)
}

#[derive(Debug, Serialize)]
struct LabelStats {
    scan: String,
    seed: u64,
    points: usize,
    ground_points: usize,
    ego_removed: usize,
    prefilter_threshold: Option<f64>,
    prefilter_removed: usize,
    fit: FitStats,
}

fn label_one(ctx: &Context, index: usize, path: &Path) -> Result<String, Error> {
    let (raw, cloud, kept) = load_standardized(path, ctx)?;
    let cfg = ctx.pipeline_for(index);
    let fitted = fit_scan(&cloud, &cfg, exec())?;
    let mask = expand(finish_scan(&cloud, &fitted, &cfg, exec())?, &kept, raw.len());
    let name = stem(path);
    let mask_path = ctx.out.join(format!("{name}.label"));
    save_mask(&mask, &mask_path)?;
    let stats = LabelStats {
        scan: name.clone(),
        seed: cfg.fit.optim.seed,
        points: raw.len(),
        ground_points: mask.ground_count(),
        ego_removed: raw.len() - kept.len(),
        prefilter_threshold: fitted.prefilter.as_ref().map(|p| p.threshold),
        prefilter_removed: fitted.prefilter.as_ref().map_or(0, |p| p.removed.len()),
        fit: fitted.stats,
    };
    write_json(&ctx.out.join(format!("{name}.stats.json")), &stats)?;
    info!(
        "{}: {} points, {} ground, {} iterations",
        path.display(),
        stats.points,
        stats.ground_points,
        stats.fit.iterations
    );
    Ok(mask_path.display().to_string())
}

fn cmd_label(ctx: &Context, inputs: &[PathBuf]) -> CmdResult {
    ctx.ensure_out()?;
    let results = map_scans(ctx.workers, inputs, |i, p| label_one(ctx, i, p))?;
    summarize("label", inputs, results)
}

#[derive(Debug, Serialize)]
struct RansacStats {
    scan: String,
    seed: u64,
    points: usize,
    ground_points: usize,
    plane: Plane,
}

fn ransac_one(ctx: &Context, index: usize, path: &Path) -> Result<String, Error> {
    let (raw, cloud, kept) = load_standardized(path, ctx)?;
    let cfg = RansacConfig {
        seed: ctx.ransac.seed.wrapping_add(ctx.seed_for(index)),
        ..ctx.ransac.clone()
    };
    let r = ransac_plane(&cloud, &cfg, exec())?;
    let mask = expand(r.mask, &kept, raw.len());
    let name = stem(path);
    let mask_path = ctx.out.join(format!("{name}.label"));
    save_mask(&mask, &mask_path)?;
    let stats = RansacStats {
        scan: name.clone(),
        seed: cfg.seed,
        points: raw.len(),
        ground_points: mask.ground_count(),
        plane: r.plane,
    };
    write_json(&ctx.out.join(format!("{name}.stats.json")), &stats)?;
    Ok(mask_path.display().to_string())
}

fn cmd_ransac(ctx: &Context, inputs: &[PathBuf]) -> CmdResult {
    ctx.ensure_out()?;
    let results = map_scans(ctx.workers, inputs, |i, p| ransac_one(ctx, i, p))?;
    summarize("ransac", inputs, results)
}

#[derive(Debug, Serialize)]
struct SceneInfo {
    name: String,
    scan: String,
    truth: String,
    points: usize,
    ground_points: usize,
    multipath_points: usize,
    sigma: f64,
    flatness: Flatness,
}

fn variant(s: Suite) -> SuiteVariant {
    match s {
        Suite::Clean => SuiteVariant::Clean,
        Suite::Noisy => SuiteVariant::Noisy,
    }
}

fn cmd_synth(ctx: &Context, spec: Option<&Path>, suite: Option<Suite>) -> CmdResult {
    let specs: Vec<(String, SceneSpec)> = match (spec, suite) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            let mut s = SceneSpec::from_toml(&text)?;
            if let Some(seed) = ctx.seed_flag {
                s.seed = seed;
            }
            vec![(stem(p), s)]
        }
        (None, Some(v)) => standard_suite(variant(v)),
        (None, None) => return Err(Failure::config("synth needs --spec or --suite")),
    };
    ctx.ensure_out()?;
    let mut written = Vec::new();
    for (name, s) in specs {
        let scene = generate_scene(&s)?;
        let scan = ctx.out.join(format!("{name}.{}", ctx.format.extension()));
        let truth = ctx.out.join(format!("{name}.label"));
        save_scan(&scene.cloud, &scan, ctx.format)?;
        save_mask(&scene.truth, &truth)?;
        let sigma = sigma_of(&s);
        written.push(SceneInfo {
            name,
            scan: scan.display().to_string(),
            truth: truth.display().to_string(),
            points: scene.cloud.len(),
            ground_points: scene.truth.ground_count(),
            multipath_points: scene.multipath_indices.len(),
            sigma,
            flatness: Flatness::of(sigma),
        });
    }
    print_json(&written)?;
    Ok(EXIT_OK)
}

fn label_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "label"))
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize)]
struct ScanScore {
    scan: String,
    miou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    overall: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    flat: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    non_flat: Option<EvalReport>,
    per_scan: Vec<ScanScore>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn cmd_eval(
    ctx: &Context,
    pred_dir: &Path,
    truth_dir: &Path,
    scans: Option<&Path>,
    ground_classes: Option<&Path>,
    table: bool,
) -> CmdResult {
    let classes = ground_classes
        .map(GroundClasses::load)
        .transpose()
        .map_err(|e| Failure::config(e.to_string()))?;
    let truths = label_files(truth_dir)?;
    if truths.is_empty() {
        return Err(Failure::runtime(format!("no .label files in {}", truth_dir.display())));
    }
    let mut total = ConfusionCounts::default();
    let mut flat = ConfusionCounts::default();
    let mut non_flat = ConfusionCounts::default();
    let (mut n_flat, mut n_non_flat) = (0, 0);
    let mut sigmas = Vec::new();
    let mut per_scan = Vec::new();
    for truth_path in &truths {
        let name = stem(truth_path);
        let pred = load_mask(pred_dir.join(format!("{name}.label")))?;
        let (truth, ignored) = match &classes {
            Some(c) => load_semantic_labels(truth_path, c)?,
            None => {
                let t = load_mask(truth_path)?;
                let n = t.len();
                (t, vec![false; n])
            }
        };
        let mut c = ConfusionCounts::default();
        c.accumulate_except(&pred, &truth, &ignored)
            .map_err(|e| Failure::runtime(format!("{name}: {e}")))?;
        let sigma = match scans {
            Some(dir) => {
                // ground heights in the standardized frame, ignored points left out
                let raw = load_scan(dir.join(format!("{name}.{}", ctx.format.extension())), ctx.format)?;
                truth.check_len(raw.len())?;
                let (cloud, kept) = standardize_indexed(&raw, &ctx.transform);
                let labels = kept
                    .iter()
                    .map(|&i| if ignored[i] { Label::NonGround } else { truth.labels[i] })
                    .collect();
                Some(evaluation::flatness_sigma(&SegmentationMask::new(labels), &cloud)?)
            }
            None => None,
        };
        if let Some(s) = sigma {
            sigmas.push(s);
            if Flatness::of(s) == Flatness::Flat {
                flat = flat.merge(c);
                n_flat += 1;
            } else {
                non_flat = non_flat.merge(c);
                n_non_flat += 1;
            }
        }
        per_scan.push(ScanScore {
            scan: name,
            miou: report(&c, 1).map(|r| evaluation::round2(r.miou)).unwrap_or(f64::NAN),
            sigma: sigma.map(|s| (s * 1e4).round() / 1e4),
        });
        total = total.merge(c);
    }
    let mut overall = report(&total, truths.len())?;
    overall.flatness_sigma = median(sigmas);
    let part = |c: &ConfusionCounts, n: usize| (n > 0).then(|| report(c, n).map(|r| r.rounded())).transpose();
    let out = EvalOutput {
        overall: overall.rounded(),
        flat: part(&flat, n_flat)?,
        non_flat: part(&non_flat, n_non_flat)?,
        per_scan,
    };
    if table {
        let mut text = format!("{overall}\n");
        for (label, r) in [("flat", &out.flat), ("non-flat", &out.non_flat)] {
            if let Some(r) = r {
                text.push_str(&r.row(label));
                text.push('\n');
            }
        }
        emit(&text)?;
    } else {
        print_json(&out)?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct BenchOutput {
    method: &'static str,
    points: usize,
    #[serde(flatten)]
    throughput: Throughput,
}

fn cmd_bench(ctx: &Context, inputs: &[PathBuf], method: Method) -> CmdResult {
    let clouds = inputs
        .iter()
        .map(|p| load_standardized(p, ctx).map(|(_, c, _)| c))
        .collect::<Result<Vec<_>, _>>()?;
    let indexed: Vec<(usize, &PointCloud)> = clouds.iter().enumerate().collect();
    let work = |&(i, cloud): &(usize, &PointCloud)| -> Result<(), Error> {
        match method {
            Method::Pseudolabeler => {
                let cfg = ctx.pipeline_for(i);
                let fitted = fit_scan(cloud, &cfg, exec())?;
                finish_scan(cloud, &fitted, &cfg, exec()).map(|_| ())
            }
            Method::Ransac => {
                let cfg = RansacConfig {
                    seed: ctx.ransac.seed.wrapping_add(ctx.seed_for(i)),
                    ..ctx.ransac.clone()
                };
                ransac_plane(cloud, &cfg, exec()).map(|_| ())
            }
        }
    };
    let t = in_pool(ctx.workers, || evaluation::throughput(&indexed, work))??;
    info!("{:.3} Hz over {} scans ({})", t.hz, t.scans, t.band);
    print_json(&BenchOutput {
        method: match method {
            Method::Pseudolabeler => "pseudolabeler",
            Method::Ransac => "ransac",
        },
        points: clouds.iter().map(PointCloud::len).sum(),
        throughput: t,
    })?;
    Ok(EXIT_OK)
}

/// Runs `f` with the rayon pool sized to `workers`, so per-point kernels respect
/// `--parallel`.
#[cfg(feature = "parallel")]
fn in_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn in_pool<R>(_workers: usize, f: impl FnOnce() -> R) -> Result<R, Failure> {
    Ok(f())
}

struct AblationScene {
    name: String,
    cloud: PointCloud,
    truth: SegmentationMask,
}

fn ablation_scenes(ctx: &Context, suite: Option<Suite>, dir: Option<&Path>) -> Result<Vec<AblationScene>, Failure> {
    if let Some(v) = suite {
        return standard_suite(variant(v))
            .into_iter()
            .map(|(name, spec)| {
                let s = generate_scene(&spec)?;
                Ok(AblationScene {
                    name,
                    cloud: s.cloud,
                    truth: s.truth,
                })
            })
            .collect::<Result<Vec<_>, Error>>()
            .map_err(Failure::from);
    }
    let dir = dir.ok_or_else(|| Failure::config("ablate needs --suite or --scenes"))?;
    let mut scenes = Vec::new();
    for truth_path in label_files(dir)? {
        let name = stem(&truth_path);
        let scan = dir.join(format!("{name}.{}", ctx.format.extension()));
        if !scan.exists() {
            warn!("{}: no matching scan, skipped", truth_path.display());
            continue;
        }
        let cloud = load_scan(&scan, ctx.format)?;
        let truth = load_mask(&truth_path)?;
        truth.check_len(cloud.len())?;
        scenes.push(AblationScene { name, cloud, truth });
    }
    if scenes.is_empty() {
        return Err(Failure::runtime(format!("no scenes found in {}", dir.display())));
    }
    Ok(scenes)
}

/// One row per `(v_xy, tau)` cell: per-scene mIoU and their average.
pub fn ablation_csv(names: &[String], cells: &[(f64, f64, Vec<f64>)]) -> String {
    let mut out = format!("v_xy,tau,{},average\n", names.join(","));
    for (v, t, mious) in cells {
        let avg = mious.iter().sum::<f64>() / mious.len() as f64;
        let vals: Vec<String> = mious.iter().map(|m| format!("{m:.2}")).collect();
        out.push_str(&format!("{v:.2},{t:.2},{},{avg:.2}\n", vals.join(",")));
    }
    out
}

fn cmd_ablate(
    ctx: &Context,
    suite: Option<Suite>,
    scenes_dir: Option<&Path>,
    pillars: &[f64],
    taus: &[f64],
    csv: Option<&Path>,
) -> CmdResult {
    if pillars.is_empty() || taus.is_empty() {
        return Err(Failure::config("empty ablation grid"));
    }
    let grid: Vec<(f64, f64)> = pillars.iter().flat_map(|&v| taus.iter().map(move |&t| (v, t))).collect();
    for &(v, t) in &grid {
        PipelineConfig {
            pillar_size: v,
            recovery_margin: t,
            ..ctx.pipeline.clone()
        }
        .validate()?;
    }
    let scenes = ablation_scenes(ctx, suite, scenes_dir)?;
    // one surface fit per scene, shared by every grid cell
    let per_scene = map_scans(ctx.workers, &scenes, |i, s| -> Result<Vec<f64>, Error> {
        let base = PipelineConfig {
            enable_refine: true,
            ..ctx.pipeline_for(i)
        };
        let fitted = fit_scan(&s.cloud, &base, exec())?;
        info!("{}: fitted in {} iterations", s.name, fitted.stats.iterations);
        grid.iter()
            .map(|&(v, t)| {
                let cfg = PipelineConfig {
                    pillar_size: v,
                    recovery_margin: t,
                    ..base.clone()
                };
                let mask = finish_scan(&s.cloud, &fitted, &cfg, exec())?;
                Ok(report(&ConfusionCounts::from_masks(&mask, &s.truth)?, 1)?.miou)
            })
            .collect()
    })?;
    let per_scene = per_scene.into_iter().collect::<Result<Vec<_>, _>>()?;
    let cells: Vec<(f64, f64, Vec<f64>)> = grid
        .iter()
        .enumerate()
        .map(|(k, &(v, t))| (v, t, per_scene.iter().map(|m| m[k]).collect()))
        .collect();
    let names: Vec<String> = scenes.iter().map(|s| s.name.clone()).collect();
    let text = ablation_csv(&names, &cells);
    match csv {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::runtime(e.to_string()))?;
            }
            fs::write(p, &text).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?
        }
        None => emit(&text)?,
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape() {
        let names = vec!["a".to_string(), "b".to_string()];
        let text = ablation_csv(&names, &[(0.5, 0.05, vec![90.0, 91.0]), (1.0, 0.1, vec![80.125, 80.0])]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "v_xy,tau,a,b,average");
        assert_eq!(lines[1], "0.50,0.05,90.00,91.00,90.50");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn expand_restores_order() {
        let m = SegmentationMask::with_scores(vec![Label::Ground, Label::Ground], vec![0.1, 0.2]).unwrap();
        let e = expand(m, &[0, 2], 3);
        assert_eq!(e.labels, vec![Label::Ground, Label::NonGround, Label::Ground]);
        let s = e.scores.unwrap();
        assert!(s[1].is_nan() && s[2] == 0.2);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }
}
