//! Command-line front end: synthetic scenes, training, inference,
//! evaluation, the invariant self-check and debug dumps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mvsmamba_core::config::RunConfig;
use mvsmamba_core::dynscan::{start_coords, ArrangementKind, Direction, ScanLayout, BASE_STARTS};
use mvsmamba_core::eval::depth_metrics;
use mvsmamba_core::io::{self, load_model, read_pfm, save_model, write_pfm, write_pgm, write_ppm, Scene};
use mvsmamba_core::mvs::{cascade_forward, MvsModel};
use mvsmamba_core::network::NUM_SCALES;
use mvsmamba_core::pca::{component_ranges, to_rgb, Pca};
use mvsmamba_core::selfcheck::{run_suite, SuiteOptions};
use mvsmamba_core::train::{train, CSV_HEADER};
use mvsmamba_core::{synth, ParamStore, Tape, Tensor};

#[derive(Parser, Debug)]
#[command(name = "mvsmamba", version, about = "Multi-view stereo with dynamic-scan state-space feature aggregation")]
struct Cli {
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a procedural scene bundle with exact depth.
    GenSynthetic,
    /// Train on a scene bundle and write a checkpoint plus CSV log.
    Train(SceneArg),
    /// Predict depth and confidence for one reference view.
    Infer(InferArgs),
    /// Compare a predicted depth map against ground truth.
    Eval(EvalArgs),
    /// Run the invariant suite; exits non-zero on any failure.
    Selfcheck(SelfcheckArgs),
    /// Write the visit order of the four directional scans as graymaps.
    DumpScan(DumpScanArgs),
    /// Write PCA colorings of decoder features for every view.
    DumpFeatures(DumpFeaturesArgs),
}

#[derive(Args, Debug)]
struct SceneArg {
    /// Scene bundle directory (defaults to `io.scene`).
    #[arg(long)]
    scene: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Checkpoint file (defaults to `io.checkpoint`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, default_value_t = 0)]
    reference: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated thresholds (defaults to `eval.thresholds`).
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SelfcheckArgs {
    /// Use zigzag traversal within scan lines.
    #[arg(long)]
    zigzag: bool,
    /// Replace the start-coordinate table, e.g. `1,0;0,0;0,1;1,1`.
    #[arg(long, hide = true)]
    start_table: Option<String>,
}

#[derive(Args, Debug)]
struct DumpScanArgs {
    /// Height of the reference (and source) feature.
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 4)]
    width: usize,
    /// Source index k (1-based).
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    zigzag: bool,
}

#[derive(Args, Debug)]
struct DumpFeaturesArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    scene: SceneArg,
    #[arg(long, default_value_t = 0)]
    reference: usize,
    /// Decoder scale, 0 (coarsest) to 3.
    #[arg(long, default_value_t = 3)]
    scale: usize,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.io.out = Some(o.clone());
    }
    Ok(cfg)
}

fn echo(cfg: &RunConfig, command: &str) {
    info!("command {command}, seed {}", cfg.train.seed);
    for line in cfg.to_text().lines() {
        info!("  {line}");
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.io.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn scene_dir(arg: &SceneArg, cfg: &RunConfig) -> Result<PathBuf> {
    match arg.scene.clone().or_else(|| cfg.io.scene.clone()) {
        Some(p) => Ok(p),
        None => bail!("no scene given (use --scene or io.scene)"),
    }
}

fn load_scene(dir: &std::path::Path) -> Result<Scene> {
    Scene::load(dir).with_context(|| format!("loading scene {}", dir.display()))
}

fn checkpoint_path(arg: &Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match arg.clone().or_else(|| cfg.io.checkpoint.clone()) {
        Some(p) => Ok(p),
        None => bail!("no checkpoint given (use --checkpoint or io.checkpoint)"),
    }
}

fn gen_synthetic(cfg: &RunConfig) -> Result<()> {
    let dir = out_dir(cfg)?;
    let scene = synth::generate(&cfg.synth)?;
    scene.write(&dir)?;
    println!("wrote {} views to {}", scene.views.len(), dir.display());
    Ok(())
}

fn run_train(cfg: &RunConfig, arg: &SceneArg) -> Result<()> {
    let scene = load_scene(&scene_dir(arg, cfg)?)?;
    let samples = cfg.train.refs.iter().map(|&r| scene.select(r, cfg.train.views)).collect::<Result<Vec<_>, _>>()?;
    let dir = out_dir(cfg)?;
    let mut store = ParamStore::new();
    let model = MvsModel::new(&mut store, cfg.model.clone(), cfg.train.seed)?;
    info!("model parameters: {}", store.num_scalars());
    let mut csv = format!("{CSV_HEADER}\n");
    let log = train(&model, &mut store, &samples, &cfg.train, |r| {
        info!("iter {:>4} loss {:.5} finest MAE {:.5}", r.iter, r.loss, r.scale_mae[NUM_SCALES - 1]);
    })?;
    for r in &log {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    io::write_atomic(&dir.join("train_log.csv"), csv.as_bytes())?;
    let ckpt = dir.join("model.ckpt");
    save_model(&ckpt, &store, cfg)?;
    println!("wrote {} and train_log.csv", ckpt.display());
    Ok(())
}

fn run_infer(cfg: &RunConfig, args: &InferArgs) -> Result<()> {
    let ckpt = checkpoint_path(&args.checkpoint, cfg)?;
    let (mcfg, model, store) = load_model(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let scene = load_scene(&scene_dir(&args.scene, cfg)?)?;
    let views = scene.select(args.reference, mcfg.train.views)?;
    let mut tape = Tape::new();
    let state = cascade_forward(&mut tape, &store, &model, &views)?;
    let fin = state.finest();
    let dir = out_dir(cfg)?;
    write_pfm(&dir.join("depth.pfm"), &fin.depth)?;
    write_pfm(&dir.join("confidence.pfm"), &fin.confidence)?;
    println!("wrote depth.pfm and confidence.pfm to {}", dir.display());
    Ok(())
}

fn run_eval(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let pred = read_pfm(&args.pred)?;
    let gt = read_pfm(&args.gt)?;
    let th = args.thresholds.clone().unwrap_or_else(|| cfg.eval.thresholds.clone());
    let m = depth_metrics(&pred, &gt, &th)?;
    print!("{}", m.text());
    if cfg.io.out.is_some() {
        io::write_atomic(&out_dir(cfg)?.join("metrics.csv"), m.csv().as_bytes())?;
    }
    Ok(())
}

fn parse_table(s: &str) -> Result<[(usize, usize); 4]> {
    let pairs: Vec<(usize, usize)> = s
        .split(';')
        .map(|p| {
            let (a, b) = p.split_once(',').context("table entries look like `h,w`")?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect::<Result<_>>()?;
    pairs.try_into().map_err(|_| anyhow::anyhow!("start table needs 4 entries"))
}

fn run_selfcheck(cfg: &RunConfig, args: &SelfcheckArgs) -> Result<bool> {
    let opts = SuiteOptions {
        zigzag: args.zigzag || cfg.model.net.zigzag,
        start_table: args.start_table.as_deref().map(parse_table).transpose()?.unwrap_or(BASE_STARTS),
        seed: cfg.train.seed,
    };
    let report = run_suite(&opts);
    print!("{}", report.text());
    Ok(report.passed())
}

fn run_dump_scan(cfg: &RunConfig, args: &DumpScanArgs) -> Result<()> {
    let dir = out_dir(cfg)?;
    for d in 1..=4 {
        let dir_tag = Direction::from_index(d)?;
        let kind: ArrangementKind = dir_tag.arrangement();
        let ((h, w), _, _) = kind.regions(args.height, args.width);
        let layout = ScanLayout::new(dir_tag, start_coords(d, args.k)?, h, w, args.zigzag || cfg.model.net.zigzag)?;
        let n = layout.len().max(1) as f64;
        let map = Tensor::new(vec![h, w], layout.order_map().iter().map(|o| o.map_or(0.0, |i| (i + 1) as f64 / n)).collect())?;
        let name = format!("scan_d{d}_{dir_tag}_k{}.pgm", args.k);
        write_pgm(&dir.join(&name), &map)?;
        println!("{name}: {kind} {h}x{w}, start {:?}, {} positions", layout.start, layout.len());
    }
    Ok(())
}

fn run_dump_features(cfg: &RunConfig, args: &DumpFeaturesArgs) -> Result<()> {
    if args.scale >= NUM_SCALES {
        bail!("scale must be below {NUM_SCALES}");
    }
    let ckpt = checkpoint_path(&args.checkpoint, cfg)?;
    let (mcfg, model, store) = load_model(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let scene = load_scene(&scene_dir(&args.scene, cfg)?)?;
    let views = scene.select(args.reference, mcfg.train.views)?;
    let mut tape = Tape::new();
    let images: Vec<_> = views.iter().map(|v| tape.constant(v.image.clone())).collect();
    let feats = model.features.forward(&mut tape, &store, &images)?;
    let pca = Pca::fit(tape.value(feats[0][args.scale]))?;
    let ref_coords = pca.project(tape.value(feats[0][args.scale]))?;
    let ranges = component_ranges(&ref_coords);
    let dir = out_dir(cfg)?;
    for (v, f) in feats.iter().enumerate() {
        let rgb = to_rgb(&pca.project(tape.value(f[args.scale]))?, &ranges);
        let name = format!("features_s{}_v{v}.ppm", args.scale);
        write_ppm(&dir.join(&name), &rgb)?;
        println!("{name}");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load_config(cli)?;
    let name = format!("{:?}", cli.cmd).split(['(', ' ']).next().unwrap_or("").to_lowercase();
    echo(&cfg, &name);
    match &cli.cmd {
        Command::GenSynthetic => gen_synthetic(&cfg)?,
        Command::Train(a) => run_train(&cfg, a)?,
        Command::Infer(a) => run_infer(&cfg, a)?,
        Command::Eval(a) => run_eval(&cfg, a)?,
        Command::Selfcheck(a) => return run_selfcheck(&cfg, a),
        Command::DumpScan(a) => run_dump_scan(&cfg, a)?,
        Command::DumpFeatures(a) => run_dump_features(&cfg, a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

