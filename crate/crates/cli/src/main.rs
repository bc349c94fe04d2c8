use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use fpd_core::dtc::{fuse, FusionPolicy};
use fpd_core::mcmd::{CameraSsim, McmdConfig};
use fpd_core::metrics::{average_jaccard, evaluate_dirs, MetricsConfig};
use fpd_core::mpd::{detect_static_points, MpdConfig};
use fpd_core::pipeline::{read_json, run_pipeline, sweep, sweep_csv, PipelineConfig, SweepParam};
use fpd_core::synth::{write_synthetic, SynthSpec};
use fpd_core::tracks::{load_tracks, save_tracks, TrackFormat, TrackSet};
use fpd_core::video_io::load_frame_sequence;
use fpd_core::Error;

#[derive(Parser)]
#[command(name = "fpd", version, about = "Camera/point motion discrimination and track fusion for point trackers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a frame sequence as static or moving camera.
    DetectCamera(DetectCameraArgs),
    /// Inspect track files.
    Tracks {
        #[command(subcommand)]
        command: TracksCommand,
    },
    /// Classify each tracked point as static or moving.
    DetectPoints(DetectPointsArgs),
    /// Fuse several track sources for one video.
    Fuse(FuseArgs),
    /// Average Jaccard of predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Render a synthetic scene with ground truth and degraded tracks.
    Synth(SynthArgs),
    /// Run the whole pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Re-run the pipeline over a list of parameter values.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum TracksCommand {
    /// Print shape, resolution and visibility statistics.
    Info { file: PathBuf },
}

#[derive(Args)]
struct McmdArgs {
    #[arg(long)]
    lambda_coarse: Option<f64>,
    #[arg(long)]
    lambda_fine: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    clip_seconds: Option<f64>,
}

impl McmdArgs {
    fn config(&self) -> McmdConfig {
        let mut cfg = McmdConfig::default();
        if let Some(v) = self.lambda_coarse {
            cfg.lambda_coarse = v;
        }
        if let Some(v) = self.lambda_fine {
            cfg.lambda_fine = v;
        }
        if let Some(v) = self.eta {
            cfg.eta = v;
        }
        if let Some(v) = self.clip_seconds {
            cfg.clip_seconds = v;
        }
        cfg
    }
}

#[derive(Args)]
struct DetectCameraArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    mcmd: McmdArgs,
    /// Write the whole-video SSIM series as `index,ssim` CSV.
    #[arg(long)]
    dump_ssim: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectPointsArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    min_visible: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// `LABEL=FILE`, repeatable.
    #[arg(long = "source", value_parser = parse_source, required = true)]
    sources: Vec<(String, PathBuf)>,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    stabilize: bool,
    #[command(flatten)]
    mcmd: McmdArgs,
    #[arg(long)]
    rho: Option<f64>,
    /// Output track file; `.json` selects the JSON format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, requires = "gt", conflicts_with_all = ["pred_dir", "gt_dir"])]
    pred: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, requires = "gt_dir")]
    pred_dir: Option<PathBuf>,
    #[arg(long)]
    gt_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    include_query_frame: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Ground truth for a single-video config.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<(String, PathBuf), String> {
    let (label, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LABEL=FILE, got `{s}`"))?;
    if label.is_empty() {
        return Err("empty source label".into());
    }
    Ok((label.to_owned(), PathBuf::from(path)))
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(&text, out)
}

fn detect_camera(args: DetectCameraArgs) -> anyhow::Result<()> {
    let cfg = args.mcmd.config();
    cfg.validate()?;
    let video = load_frame_sequence(&args.frames, args.manifest.as_deref())?;
    let series = CameraSsim::compute(&video, cfg.clip_seconds, &cfg.ssim)?;
    let result = series.classify(&cfg)?;
    if let Some(path) = &args.dump_ssim {
        let mut csv = String::from("index,ssim\n");
        for (i, s) in series.coarse.iter().enumerate() {
            let _ = writeln!(csv, "{i},{s}");
        }
        emit(&csv, Some(path))?;
    }
    emit_json(&result, args.out.as_deref())
}

fn detect_points(args: DetectPointsArgs) -> anyhow::Result<()> {
    let mut cfg = MpdConfig::default();
    if let Some(r) = args.rho {
        cfg.rho = r;
    }
    if let Some(n) = args.min_visible {
        cfg.min_visible = n;
    }
    let tracks = load_tracks(&args.tracks)?;
    let flags = detect_static_points(&tracks, &cfg)?;
    emit_json(&flags.points, args.out.as_deref())
}

fn fuse_cmd(args: FuseArgs) -> anyhow::Result<()> {
    let mut policy: FusionPolicy =
        read_json(&args.policy).map_err(|e| match e {
            Error::Json { .. } => Error::Config(e.to_string()),
            e => e,
        })?;
    if args.stabilize {
        policy.stabilize_static = true;
    }
    let mcmd = args.mcmd.config();
    let mut mpd = MpdConfig::default();
    if let Some(r) = args.rho {
        mpd.rho = r;
    }
    mcmd.validate()?;
    mpd.validate()?;
    let video = load_frame_sequence(&args.frames, args.manifest.as_deref())?;
    let mut sources: BTreeMap<String, TrackSet> = BTreeMap::new();
    for (label, path) in &args.sources {
        let mut ts = load_tracks(path)?;
        ts.set_source_name(label.clone());
        if sources.insert(label.clone(), ts).is_some() {
            return Err(Error::Config(format!("source label `{label}` given twice")).into());
        }
    }
    let camera = fpd_core::detect_camera_motion(&video, &mcmd)?;
    let fused = fuse(&sources, &camera, &policy, &mpd)?;
    save_tracks(&fused.tracks, &args.out, TrackFormat::from_path(&args.out))?;
    log::info!(
        "camera {}; wrote {}",
        if camera.moving { "moving" } else { "static" },
        args.out.display()
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let mut cfg = MetricsConfig::default();
    if let Some(t) = args.thresholds {
        cfg.thresholds = t;
    }
    cfg.exclude_query_frame = !args.include_query_frame;
    cfg.validate()?;
    match (args.pred, args.gt, args.pred_dir, args.gt_dir) {
        (Some(pred), Some(gt), None, None) => {
            let report = average_jaccard(&load_tracks(&pred)?, &load_tracks(&gt)?, &cfg)?;
            emit_json(&report, args.out.as_deref())
        }
        (None, None, Some(pd), Some(gd)) => {
            let report = evaluate_dirs(&pd, &gd, &cfg)?;
            emit(&report.to_csv(), args.out.as_deref())
        }
        _ => Err(Error::Config("use either --pred/--gt or --pred-dir/--gt-dir".into()).into()),
    }
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec: SynthSpec = read_json(&args.spec).map_err(|e| match e {
        Error::Json { .. } => Error::Config(e.to_string()),
        e => e,
    })?;
    let scene = write_synthetic(&spec, &args.out_dir)?;
    log::info!(
        "wrote {} frames and {} tracks to {}",
        scene.video.len(),
        scene.ground_truth.num_points(),
        args.out_dir.display()
    );
    Ok(())
}

fn pipeline(args: PipelineArgs) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(gt) = args.gt {
        if cfg.videos.len() != 1 {
            return Err(Error::Config("--gt needs a single-video config".into()).into());
        }
        cfg.videos[0].ground_truth = Some(gt);
    }
    if args.out_dir.is_some() {
        cfg.out_dir = args.out_dir;
    }
    let outcome = run_pipeline(&cfg)?;
    emit_json(&outcome.summary, None)
}

fn sweep_cmd(args: SweepArgs) -> anyhow::Result<()> {
    let param: SweepParam = args.param.parse()?;
    let cfg = PipelineConfig::load(&args.config)?;
    let rows = sweep(&cfg, param, &args.values)?;
    emit(&sweep_csv(param, &rows), args.out.as_deref())
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("FPD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("FPD_THREADS must be an integer, got `{raw}`")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!(e))?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(1)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::DetectCamera(a) => detect_camera(a),
        Command::Tracks {
            command: TracksCommand::Info { file },
        } => load_tracks(&file)
            .map_err(Into::into)
            .and_then(|ts| emit_json(&ts.summary(), None)),
        Command::DetectPoints(a) => detect_points(a),
        Command::Fuse(a) => fuse_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Sweep(a) => sweep_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
