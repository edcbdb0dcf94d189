//! `crf-fusion`: segmentation, region pooling, two-layer CRF fusion,
//! single-layer baselines, evaluation, parameter sweeps and synthetic
//! scenes.
//!
//! Every subcommand accepts `--config FILE` with `key = value` lines using
//! the flag names; flags given on the command line win.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crf_fusion::config::{read_flat, RunConfig, Settings};
use crf_fusion::graph::Layer;
use crf_fusion::io;
use crf_fusion::metrics::{aggregate, write_report, ReportRow, Scores};
use crf_fusion::pipeline::{
    baseline, best_cell, evaluate_labels, fuse, sweep, Scene, SweepCell, SweepGrid,
};
use crf_fusion::raster::{LabelMap, RegionMap};
use crf_fusion::segmentation::{pool_region_probs, segment};
use crf_fusion::synth::{generate, SynthParams};

#[derive(Parser)]
#[command(name = "crf-fusion", version, about = "Two-layer CRF decision fusion")]
struct Cli {
    /// Flat `key = value` settings file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More log output on stderr (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph-based segmentation of an image into regions.
    Segment(SegmentCmd),
    /// Average pixel posteriors over regions.
    Pool(PoolCmd),
    /// Joint pixel/region CRF inference.
    Fuse(FuseCmd),
    /// Single-layer CRF on the pixel or the region layer.
    Baseline(BaselineCmd),
    /// Accuracy metrics of label maps against references.
    Eval(EvalCmd),
    /// Fuse over a (lambda, mu) grid and score each cell.
    Sweep(SweepCmd),
    /// Write a synthetic scene with planted ground truth.
    Synth(SynthCmd),
}

/// Collects flag values into settings keyed like the config file.
#[derive(Default)]
struct Flags(Settings);

impl Flags {
    fn put<T: ToString>(&mut self, key: &str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.to_string());
        }
        self
    }

    fn path(&mut self, key: &str, value: &Option<PathBuf>) -> &mut Self {
        if let Some(p) = value {
            self.0.insert(key.to_string(), p.display().to_string());
        }
        self
    }
}

#[derive(Args)]
struct ImageArgs {
    /// RGB `.ppm`, or a `PRB1` float raster (needs `--width`).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Width of a `PRB1` image.
    #[arg(long)]
    width: Option<usize>,
}

impl ImageArgs {
    fn add(&self, f: &mut Flags) {
        f.path("image", &self.image).put("width", &self.width);
    }
}

#[derive(Args)]
struct SegmentationArgs {
    /// Scale parameter; larger values give larger regions.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    min_size: Option<usize>,
    /// 4 or 8.
    #[arg(long)]
    connectivity: Option<u32>,
}

impl SegmentationArgs {
    fn add(&self, f: &mut Flags) {
        f.put("k", &self.k)
            .put("min-size", &self.min_size)
            .put("connectivity", &self.connectivity);
    }
}

#[derive(Args)]
struct SceneArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    pixel_probs: Option<PathBuf>,
    /// Region posteriors; pooled from the pixel posteriors when absent.
    #[arg(long)]
    region_probs: Option<PathBuf>,
}

impl SceneArgs {
    fn add(&self, f: &mut Flags) {
        self.image.add(f);
        f.path("regions", &self.regions)
            .path("pixel-probs", &self.pixel_probs)
            .path("region-probs", &self.region_probs);
    }
}

#[derive(Args)]
struct EnergyArgs {
    /// Sets both `--lambda-p` and `--lambda-r`.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// `heuristic` or a fixed bandwidth, for both layers.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    sigma_p: Option<String>,
    #[arg(long)]
    sigma_r: Option<String>,
    #[arg(long)]
    prob_floor: Option<f64>,
}

impl EnergyArgs {
    fn add(&self, f: &mut Flags) {
        f.put("lambda", &self.lambda)
            .put("lambda-p", &self.lambda_p)
            .put("lambda-r", &self.lambda_r)
            .put("mu", &self.mu)
            .put("sigma", &self.sigma)
            .put("sigma-p", &self.sigma_p)
            .put("sigma-r", &self.sigma_r)
            .put("prob-floor", &self.prob_floor);
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    energy_tolerance: Option<f64>,
    /// trws, icm or brute.
    #[arg(long)]
    method: Option<String>,
}

impl SolverArgs {
    fn add(&self, f: &mut Flags) {
        f.put("max-iterations", &self.max_iterations)
            .put("energy-tolerance", &self.energy_tolerance)
            .put("method", &self.method);
    }
}

#[derive(Args)]
struct SegmentCmd {
    #[command(flatten)]
    image: ImageArgs,
    #[command(flatten)]
    segmentation: SegmentationArgs,
    #[arg(long)]
    out_regions: Option<PathBuf>,
}

#[derive(Args)]
struct PoolCmd {
    #[arg(long)]
    pixel_probs: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    out_region_probs: Option<PathBuf>,
}

#[derive(Args)]
struct FuseCmd {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    energy: EnergyArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out_pixel_labels: Option<PathBuf>,
    /// Region labels spread to pixel resolution.
    #[arg(long)]
    out_region_labels: Option<PathBuf>,
    /// Per-sweep `sweep,lower_bound,current_energy` CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayerArg {
    Pixel,
    Region,
}

#[derive(Args)]
struct BaselineCmd {
    #[arg(long, value_enum)]
    layer: LayerArg,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    energy: EnergyArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Labels at pixel resolution.
    #[arg(long)]
    out_labels: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCmd {
    /// Predicted label map.
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Reference label map.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Lines of `name pred ref`, paths relative to the list file.
    #[arg(long)]
    tile_list: Option<PathBuf>,
    /// Class count; inferred from the largest label when absent.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Value of the `layer` column.
    #[arg(long, default_value = "pixel")]
    layer_name: String,
    /// Value of the `method` column.
    #[arg(long, default_value = "fusion")]
    method_name: String,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    energy: EnergyArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// `lambda=a,b,... mu=c,d,...`
    #[arg(long, num_args = 2, required = true)]
    grid: Vec<String>,
    /// Reference labels scored for every cell.
    #[arg(long)]
    val_ref: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    /// Grid cells run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Label-noise rate of the pixel posteriors.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of the image noise (0-255 scale).
    #[arg(long, default_value_t = 20.0)]
    feature_noise: f64,
    /// Number of Voronoi cells in the ground truth.
    #[arg(long)]
    cells: Option<usize>,
    /// Receives image.ppm, truth.pgm and pixel_probs.prb.
    #[arg(long)]
    out_dir: PathBuf,
}

fn run_config(file: Option<&Path>, flags: &Flags) -> Result<RunConfig> {
    let from_file = match file {
        Some(path) => read_flat(path)?,
        None => Settings::new(),
    };
    Ok(RunConfig::from_layers(&[&from_file, &flags.0])?)
}

fn load_scene(cfg: &RunConfig, regions_required: bool) -> Result<Scene> {
    let image = io::read_image(cfg.path("image")?, cfg.image_width)?;
    let (h, w) = (image.height(), image.width());
    let regions = match cfg.optional_path("regions") {
        Some(p) => io::read_region_map(p)?,
        None if !regions_required => RegionMap::new(h, w, vec![0; h * w])?,
        None => bail!("missing required --regions"),
    };
    if (regions.height(), regions.width()) != (h, w) {
        bail!(
            "image is {h}x{w} but the region map is {}x{}",
            regions.height(),
            regions.width()
        );
    }
    let pixel_probs = io::read_probabilities(cfg.path("pixel-probs")?)?;
    let scene = match cfg.optional_path("region-probs") {
        Some(p) => Scene {
            region_probs: io::read_probabilities(p)?,
            image,
            regions,
            pixel_probs,
        },
        None => {
            log::info!("pooling region posteriors from pixel posteriors");
            Scene::with_pooled_regions(image, regions, pixel_probs)?
        }
    };
    Ok(scene)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_trace(path: Option<&Path>, result: &crf_fusion::solver::SolverResult) -> Result<()> {
    if let Some(p) = path {
        let mut out = create(p)?;
        result.write_trace_csv(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

fn cmd_segment(cmd: &SegmentCmd, config: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    cmd.image.add(&mut f);
    cmd.segmentation.add(&mut f);
    f.path("out-regions", &cmd.out_regions);
    let cfg = run_config(config, &f)?;
    let image = io::read_image(cfg.path("image")?, cfg.image_width)?;
    let regions = segment(&image, &cfg.segmentation)?;
    log::info!("{} regions", regions.num_regions());
    io::write_region_map(cfg.path("out-regions")?, &regions)?;
    Ok(())
}

fn cmd_pool(cmd: &PoolCmd, config: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.path("pixel-probs", &cmd.pixel_probs)
        .path("regions", &cmd.regions)
        .path("out-region-probs", &cmd.out_region_probs);
    let cfg = run_config(config, &f)?;
    let probs = io::read_probabilities(cfg.path("pixel-probs")?)?;
    let regions = io::read_region_map(cfg.path("regions")?)?;
    let pooled = pool_region_probs(&probs, &regions)?;
    io::write_probabilities(cfg.path("out-region-probs")?, &pooled)?;
    Ok(())
}

fn cmd_fuse(cmd: &FuseCmd, config: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    cmd.scene.add(&mut f);
    cmd.energy.add(&mut f);
    cmd.solver.add(&mut f);
    f.path("out-pixel-labels", &cmd.out_pixel_labels)
        .path("out-region-labels", &cmd.out_region_labels)
        .path("trace", &cmd.trace);
    let cfg = run_config(config, &f)?;
    let out_pixels = cfg.path("out-pixel-labels")?;
    let out_regions = cfg.path("out-region-labels")?;
    let scene = load_scene(&cfg, true)?;
    let out = fuse(&scene, &cfg.energy, &cfg.solver)?;
    log::info!(
        "energy {} lower bound {} after {} sweeps",
        out.result.energy,
        out.result.lower_bound,
        out.result.iterations_run
    );
    let (h, w) = (scene.image.height(), scene.image.width());
    io::write_labels(out_pixels, h, w, &out.pixel_labels)?;
    io::write_labels(out_regions, h, w, &out.region_labels_at_pixels)?;
    write_trace(cfg.optional_path("trace"), &out.result)
}

fn cmd_baseline(cmd: &BaselineCmd, config: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    cmd.scene.add(&mut f);
    cmd.energy.add(&mut f);
    cmd.solver.add(&mut f);
    f.path("out-labels", &cmd.out_labels).path("trace", &cmd.trace);
    let cfg = run_config(config, &f)?;
    let out_path = cfg.path("out-labels")?;
    let layer = match cmd.layer {
        LayerArg::Pixel => Layer::Pixel,
        LayerArg::Region => Layer::Region,
    };
    let scene = load_scene(&cfg, layer == Layer::Region)?;
    let (labels, result) = baseline(&scene, layer, &cfg.energy, &cfg.solver)?;
    log::info!("energy {} lower bound {}", result.energy, result.lower_bound);
    io::write_labels(out_path, scene.image.height(), scene.image.width(), &labels)?;
    write_trace(cfg.optional_path("trace"), &result)
}

struct Tile {
    name: String,
    pred: PathBuf,
    reference: PathBuf,
}

fn read_tile_list(path: &Path) -> Result<Vec<Tile>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut tiles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, pred, reference] = fields[..] else {
            bail!("{}:{}: expected `name pred ref`", path.display(), n + 1);
        };
        tiles.push(Tile {
            name: name.to_string(),
            pred: base.join(pred),
            reference: base.join(reference),
        });
    }
    if tiles.is_empty() {
        bail!("{} lists no tiles", path.display());
    }
    Ok(tiles)
}

/// Reads reference and prediction with a shared class count.
fn read_pair(
    reference: &Path,
    pred: &Path,
    classes: Option<usize>,
) -> Result<(LabelMap, LabelMap)> {
    let r = io::read_label_map(reference, classes)?;
    let p = io::read_label_map(pred, classes)?;
    if classes.is_some() {
        return Ok((r, p));
    }
    let c = r.num_classes().max(p.num_classes());
    Ok((r.with_num_classes(c)?, p.with_num_classes(c)?))
}

fn cmd_eval(cmd: &EvalCmd, config: Option<&Path>) -> Result<()> {
    let mut f = Flags::default();
    f.path("pred", &cmd.pred)
        .path("ref", &cmd.reference)
        .path("tile-list", &cmd.tile_list)
        .put("classes", &cmd.classes)
        .path("out-csv", &cmd.out_csv);
    let cfg = run_config(config, &f)?;
    let out_csv = cfg.path("out-csv")?;
    let tiles = match cfg.optional_path("tile-list") {
        Some(list) => read_tile_list(list)?,
        None => {
            let pred = cfg.path("pred")?;
            let name = pred
                .file_stem()
                .map_or("tile".into(), |s| s.to_string_lossy().into_owned());
            vec![Tile {
                name,
                pred: pred.to_path_buf(),
                reference: cfg.path("ref")?.to_path_buf(),
            }]
        }
    };

    let mut pairs = Vec::with_capacity(tiles.len());
    for t in &tiles {
        pairs.push(read_pair(&t.reference, &t.pred, cfg.num_classes)?);
    }
    // one class count across tiles so the matrices can be pooled
    let classes = pairs
        .iter()
        .map(|(r, _)| r.num_classes())
        .max()
        .unwrap_or(2);
    let mut matrices = Vec::with_capacity(pairs.len());
    for ((r, p), t) in pairs.into_iter().zip(&tiles) {
        let r = r.with_num_classes(classes)?;
        if (r.height(), r.width()) != (p.height(), p.width()) {
            bail!(
                "{}: prediction is {}x{}, reference is {}x{}",
                t.name,
                p.height(),
                p.width(),
                r.height(),
                r.width()
            );
        }
        matrices.push(evaluate_labels(&r, p.labels())?);
    }

    let agg = aggregate(&matrices)?;
    let row = |tile: &str, scores: Scores| ReportRow {
        tile: tile.to_string(),
        layer: cmd.layer_name.clone(),
        method: cmd.method_name.clone(),
        scores,
    };
    let mut rows: Vec<ReportRow> = tiles
        .iter()
        .zip(&agg.per_tile)
        .map(|(t, s)| row(&t.name, *s))
        .collect();
    rows.push(row("pooled", agg.pooled));
    rows.push(row("averaged", agg.averaged));
    let mut out = create(out_csv)?;
    write_report(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

fn parse_grid(specs: &[String]) -> Result<SweepGrid> {
    let mut lambdas = None;
    let mut mus = None;
    for spec in specs {
        let (key, values) = spec
            .split_once('=')
            .with_context(|| format!("grid axis {spec:?} is not `name=v1,v2,...`"))?;
        let parsed = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("grid axis {spec:?}"))?;
        let slot = match key.trim() {
            "lambda" => &mut lambdas,
            "mu" => &mut mus,
            other => bail!("unknown grid axis {other:?}; expected lambda and mu"),
        };
        if slot.replace(parsed).is_some() {
            bail!("grid axis {key:?} given twice");
        }
    }
    match (lambdas, mus) {
        (Some(lambdas), Some(mus)) => Ok(SweepGrid { lambdas, mus }),
        _ => bail!("--grid needs both lambda=... and mu=..."),
    }
}

fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(
        out,
        "lambda,mu,pixel_oa,pixel_aa,pixel_kappa,region_oa,region_aa,region_kappa,energy"
    )?;
    for c in cells {
        let (p, r) = (c.pixel_scores()?, c.region_scores()?);
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            c.lambda, c.mu, p.oa, p.aa, p.kappa, r.oa, r.aa, r.kappa, c.energy
        )?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_sweep(cmd: &SweepCmd, config: Option<&Path>) -> Result<()> {
    let grid = parse_grid(&cmd.grid)?;
    let mut f = Flags::default();
    cmd.scene.add(&mut f);
    cmd.energy.add(&mut f);
    cmd.solver.add(&mut f);
    f.path("val-ref", &cmd.val_ref)
        .put("classes", &cmd.classes)
        .put("jobs", &cmd.jobs)
        .path("out-csv", &cmd.out_csv);
    let cfg = run_config(config, &f)?;
    let out_csv = cfg.path("out-csv")?;
    let scene = load_scene(&cfg, true)?;
    let classes = cfg.num_classes.unwrap_or(scene.num_classes());
    let reference = io::read_label_map(cfg.path("val-ref")?, Some(classes))?;
    if (reference.height(), reference.width()) != (scene.image.height(), scene.image.width()) {
        bail!("validation reference does not match the image size");
    }
    let cells = sweep(&scene, &reference, &grid, &cfg.energy, &cfg.solver, cfg.jobs)?;
    write_sweep_csv(out_csv, &cells)?;
    let best = best_cell(&cells).context("sweep produced no cells")?;
    let s = best.pixel_scores()?;
    println!(
        "best lambda={} mu={} pixel_oa={:.4} pixel_aa={:.4} pixel_kappa={:.4}",
        best.lambda, best.mu, s.oa, s.aa, s.kappa
    );
    Ok(())
}

fn cmd_synth(cmd: &SynthCmd) -> Result<()> {
    let scene = generate(&SynthParams {
        height: cmd.height,
        width: cmd.width,
        classes: cmd.classes,
        noise: cmd.noise,
        seed: cmd.seed,
        feature_noise: cmd.feature_noise,
        cells: cmd.cells,
    })?;
    std::fs::create_dir_all(&cmd.out_dir)
        .with_context(|| format!("creating {}", cmd.out_dir.display()))?;
    io::write_image(&cmd.out_dir.join("image.ppm"), &scene.image)?;
    io::write_label_map(&cmd.out_dir.join("truth.pgm"), &scene.truth)?;
    io::write_probabilities(&cmd.out_dir.join("pixel_probs.prb"), &scene.pixel_probs)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Segment(c) => cmd_segment(c, config),
        Command::Pool(c) => cmd_pool(c, config),
        Command::Fuse(c) => cmd_fuse(c, config),
        Command::Baseline(c) => cmd_baseline(c, config),
        Command::Eval(c) => cmd_eval(c, config),
        Command::Sweep(c) => cmd_sweep(c, config),
        Command::Synth(c) => cmd_synth(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
