//! Command-line driver.
//!
//! Exit status is 0 on success, 1 for usage errors (unknown flags, missing or
//! out-of-range values) and 2 for data errors. Numeric flags are range-checked
//! before any file is opened.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scalegrasp_core::eval::{self, ScaleClass, ScaleStats};
use scalegrasp_core::geom::{GraspPose, GripperModel};
use scalegrasp_core::mscg::{self, EncoderParams, FusionMode, MscgConfig};
use scalegrasp_core::ncm;
use scalegrasp_core::sampling;
use scalegrasp_core::scale_balance::{self, GraspLabelSet};
use scalegrasp_core::scenegen::{self, GraspGrid};

use crate::error::IoError;
use crate::formats::{self, EncoderDoc, HistogramDoc, ReportDoc, ScaleStatsDoc};
use crate::ply::{self, PlyFormat};
use crate::{config, records};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "scalegrasp",
    version,
    about = "Sampling, grouping, loss weighting, scene mixing and evaluation for parallel-jaw grasp detection",
    args_override_self = true,
    after_help = "Every subcommand also accepts --config FILE with 'flag = value' lines; command-line flags take precedence."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a primitive scene: noisy cloud, assets and analytic grasps.
    Gen(GenArgs),
    /// Sample candidate point indices.
    Sample(SampleArgs),
    /// Compute multi-scale cylinder features for candidates.
    Group(GroupArgs),
    /// Build a scale histogram and per-point loss weights from grasp labels.
    Weights(WeightsArgs),
    /// Replace noisy instances with visibility-filtered clean points.
    Mix(MixArgs),
    /// Evaluate grasps against a scene and write a JSON report.
    Eval(EvalArgs),
    /// Per-scale success table over each object's best grasps.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Ascii,
    Binary,
}

impl From<FormatArg> for PlyFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Ascii => PlyFormat::Ascii,
            FormatArg::Binary => PlyFormat::BinaryLittleEndian,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Scene spec JSON (array of primitive records).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Standard deviation of the capture noise, meters.
    #[arg(long, default_value_t = 0.001)]
    noise: f64,
    /// Fraction of each instance's points dropped from the capture.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Spacing of analytic grasp centers, meters.
    #[arg(long, default_value_t = 0.01)]
    grid_spacing: f64,
    /// Closing directions per cylinder cap.
    #[arg(long, default_value_t = 12)]
    grid_angles: usize,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Strategy {
    /// Farthest point sampling over the whole cloud.
    Fps,
    /// Farthest point sampling over foreground points.
    Fs,
    /// Equal per-instance quotas.
    Obs,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long, value_enum)]
    strategy: Strategy,
    /// Number of samples.
    #[arg(long)]
    m: usize,
    /// Starting index (fps only).
    #[arg(long, default_value_t = 0)]
    start: usize,
    /// Output index list.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Concat,
    Sum,
}

#[derive(Debug, Args)]
struct GroupArgs {
    #[arg(long)]
    cloud: PathBuf,
    /// Candidates: `x y z ax ay az angle` per line.
    #[arg(long)]
    candidates: PathBuf,
    /// Seed features: `x y z f1 .. fC` per line.
    #[arg(long)]
    seeds: PathBuf,
    /// Encoder weights JSON.
    #[arg(long, conflicts_with = "init_seed", required_unless_present = "init_seed")]
    params: Option<PathBuf>,
    /// Initialize encoder weights from this seed instead of --params.
    #[arg(long)]
    init_seed: Option<u64>,
    /// Feature channels for --init-seed.
    #[arg(long, default_value_t = 16)]
    channels: usize,
    /// Comma-separated hidden widths for --init-seed.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    hidden: Vec<usize>,
    /// Fusion mode for --init-seed.
    #[arg(long, value_enum, default_value = "concat")]
    mode: ModeArg,
    /// Number of cylinder scales.
    #[arg(long, default_value_t = 4)]
    scales: usize,
    /// Point cap per cylinder.
    #[arg(long, default_value_t = 64)]
    max_points: usize,
    /// Also write the encoder weights used.
    #[arg(long)]
    params_out: Option<PathBuf>,
    /// Output feature rows: `all_empty f1 .. fC`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct WeightsArgs {
    /// Grasp label file: `point_index [grasp record]` per line.
    #[arg(long)]
    labels: PathBuf,
    /// Existing histogram JSON; built from the labels when absent.
    #[arg(long)]
    hist: Option<PathBuf>,
    #[arg(long, default_value_t = scale_balance::DEFAULT_BINS)]
    bins: usize,
    /// Largest gripper opening, meters.
    #[arg(long, default_value_t = 0.10)]
    w_max: f64,
    /// Write the histogram used here.
    #[arg(long)]
    hist_out: Option<PathBuf>,
    /// Output weights, one per labelled point.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MixArgs {
    #[arg(long)]
    noisy: PathBuf,
    /// Asset manifest JSON.
    #[arg(long)]
    assets: PathBuf,
    #[arg(long, default_value_t = ncm::DEFAULT_REPLACE_PROB)]
    replace_prob: f64,
    #[arg(long)]
    seed: u64,
    /// Visibility radius, meters.
    #[arg(long, default_value_t = ncm::DEFAULT_VISIBILITY_RADIUS)]
    radius: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "binary")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Scene cloud used for collision checks.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    assets: PathBuf,
    #[arg(long)]
    grasps: PathBuf,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    assets: PathBuf,
    #[arg(long)]
    grasps: PathBuf,
    /// Also write the table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(IoError),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Self::Data(e)
    }
}

impl From<scalegrasp_core::Error> for Failure {
    fn from(e: scalegrasp_core::Error) -> Self {
        Self::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Usage(msg()))
    }
}

fn unit_interval(name: &str, v: f64) -> Outcome {
    ensure((0.0..=1.0).contains(&v), || format!("--{name} must lie in [0, 1], got {v}"))
}

fn positive(name: &str, v: f64) -> Outcome {
    ensure(v > 0.0 && v.is_finite(), || format!("--{name} must be positive, got {v}"))
}

fn at_least_one(name: &str, v: usize) -> Outcome {
    ensure(v >= 1, || format!("--{name} must be at least 1"))
}

/// Runs the CLI with process stdio.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

/// Runs the CLI with explicit output streams and returns the exit status.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = match config::expand(argv.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a, out),
        Command::Sample(a) => sample(a, err),
        Command::Group(a) => group(a),
        Command::Weights(a) => weights(a),
        Command::Mix(a) => mix(a),
        Command::Eval(a) => evaluate(a, out),
        Command::Stats(a) => stats(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

fn gen(a: GenArgs, out: &mut dyn Write) -> Outcome {
    ensure(a.noise >= 0.0 && a.noise.is_finite(), || {
        format!("--noise must be non-negative, got {}", a.noise)
    })?;
    unit_interval("dropout", a.dropout)?;
    positive("grid-spacing", a.grid_spacing)?;
    at_least_one("grid-angles", a.grid_angles)?;

    let specs = formats::read_scene_spec(&a.spec)?;
    let gm = GripperModel::default();
    let grid = GraspGrid {
        spacing: a.grid_spacing,
        angles: a.grid_angles,
    };
    let (noisy, assets) = scenegen::generate_scene(&specs, a.noise, a.dropout, a.seed)?;
    let mut per_point: Vec<Vec<GraspPose>> = Vec::new();
    for spec in &specs {
        per_point.extend(scenegen::analytic_grasps(spec, &gm, &grid)?.per_point().iter().cloned());
    }
    let grasps: Vec<GraspPose> = per_point.iter().flatten().copied().collect();

    std::fs::create_dir_all(&a.out_dir).map_err(|e| IoError::io(&a.out_dir, e))?;
    let format = PlyFormat::from(a.format);
    ply::write_cloud(a.out_dir.join("scene.ply"), &noisy, format)?;
    ply::write_cloud(
        a.out_dir.join("clean.ply"),
        &ncm::synthesize_clean_scene(&assets),
        format,
    )?;
    formats::write_manifest(&a.out_dir, "assets.json", &assets, format)?;
    records::write_grasps(a.out_dir.join("grasps.txt"), &grasps)?;
    records::write_labels(a.out_dir.join("labels.txt"), &per_point)?;
    let _ = writeln!(
        out,
        "{} points, {} instances, {} analytic grasps -> {}",
        noisy.len(),
        assets.len(),
        grasps.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn sample(a: SampleArgs, err: &mut dyn Write) -> Outcome {
    at_least_one("m", a.m)?;
    if !matches!(a.strategy, Strategy::Fps) {
        ensure(a.start == 0, || "--start only applies to --strategy fps".into())?;
    }
    let cloud = ply::read_cloud(&a.cloud)?;
    let sample = match a.strategy {
        Strategy::Fps => sampling::Sample {
            indices: sampling::fps(&cloud, a.m, a.start)?,
            shortfall: 0,
        },
        Strategy::Fs => sampling::foreground_sample(&cloud, a.m)?,
        Strategy::Obs => sampling::object_balanced_sample(&cloud, a.m)?,
    };
    if sample.shortfall > 0 {
        let _ = writeln!(
            err,
            "warning: only {} of {} samples available",
            sample.indices.len(),
            a.m
        );
    }
    records::write_indices(&a.out, &sample.indices)?;
    Ok(())
}

fn group(a: GroupArgs) -> Outcome {
    at_least_one("scales", a.scales)?;
    at_least_one("max-points", a.max_points)?;
    at_least_one("channels", a.channels)?;
    ensure(a.hidden.iter().all(|&h| h >= 1), || "--hidden widths must be at least 1".into())?;

    let params = match (&a.params, a.init_seed) {
        (Some(p), _) => formats::read_encoder(p)?,
        (None, Some(seed)) => {
            let mode = match a.mode {
                ModeArg::Concat => FusionMode::Concat,
                ModeArg::Sum => FusionMode::Sum,
            };
            EncoderParams::seeded(seed, a.scales, &a.hidden, a.channels, mode)?
        }
        (None, None) => unreachable!("clap requires one of --params and --init-seed"),
    };
    let cloud = ply::read_cloud(&a.cloud)?;
    let candidates = records::read_candidates(&a.candidates)?;
    let seeds = records::read_seeds(&a.seeds)?;
    let config = MscgConfig {
        scales: a.scales,
        max_points: a.max_points,
        ..MscgConfig::for_gripper(&GripperModel::default())
    };
    let features = mscg::mscg_features(&cloud, &candidates, &seeds, &params, &config)?;
    if let Some(p) = &a.params_out {
        formats::write_json(p, &EncoderDoc::from(&params))?;
    }
    records::write_features(&a.out, &features)?;
    Ok(())
}

fn weights(a: WeightsArgs) -> Outcome {
    at_least_one("bins", a.bins)?;
    positive("w-max", a.w_max)?;
    let gm = GripperModel {
        w_max: a.w_max,
        ..GripperModel::default()
    };
    let labels = GraspLabelSet::new(records::read_labels(&a.labels)?, &gm)?;
    let scales = scale_balance::best_scale_per_point(&labels);
    let hist = match &a.hist {
        Some(p) => formats::read_json::<HistogramDoc>(p)?.to_histogram(p)?,
        None => {
            let observed: Vec<f64> = scales.iter().flatten().copied().collect();
            scale_balance::build_scale_histogram(&observed, a.bins, a.w_max)?
        }
    };
    let w = scale_balance::sample_weights(&hist, &scales)?;
    if let Some(p) = &a.hist_out {
        formats::write_json(p, &HistogramDoc::from(&hist))?;
    }
    records::write_reals(&a.out, &w)?;
    Ok(())
}

fn mix(a: MixArgs) -> Outcome {
    unit_interval("replace-prob", a.replace_prob)?;
    positive("radius", a.radius)?;
    let noisy = ply::read_cloud(&a.noisy)?;
    let assets = formats::read_manifest(&a.assets)?;
    assets.covers(&noisy)?;
    let clean = ncm::synthesize_clean_scene(&assets);
    let filtered = ncm::visibility_filter(&clean, &noisy, a.radius)?;
    let mixed = ncm::mix_scene(&noisy, &filtered, a.replace_prob, a.seed)?;
    ply::write_cloud(&a.out, &mixed, a.format.into())?;
    Ok(())
}

fn evaluate(a: EvalArgs, out: &mut dyn Write) -> Outcome {
    let scene = ply::read_cloud(&a.scene)?;
    let assets = formats::read_manifest(&a.assets)?;
    let grasps = records::read_grasps(&a.grasps)?;
    let report = eval::evaluate(&grasps, &scene, &assets, &GripperModel::default())?;
    formats::write_json(&a.out, &ReportDoc::from(&report))?;
    let _ = writeln!(
        out,
        "AP {:.4}  AP_S {:.4}  AP_M {:.4}  AP_L {:.4}",
        report.ap, report.ap_small, report.ap_medium, report.ap_large
    );
    Ok(())
}

fn stats(a: StatsArgs, out: &mut dyn Write) -> Outcome {
    let assets = formats::read_manifest(&a.assets)?;
    let grasps = records::read_grasps(&a.grasps)?;
    let s = eval::per_scale_stats(&grasps, &assets, &GripperModel::default())?;
    let _ = write!(out, "{}", stats_table(&s));
    if let Some(p) = &a.out {
        formats::write_json(p, &ScaleStatsDoc::from(&s))?;
    }
    Ok(())
}

/// Plain-text table of per-class counts and success rates.
pub fn stats_table(s: &ScaleStats) -> String {
    let mut t = format!("{:<8} {:>8} {:>10} {:>8}\n", "scale", "count", "successes", "rate");
    for class in ScaleClass::ALL {
        let c = s.get(class);
        t.push_str(&format!(
            "{:<8} {:>8} {:>10} {:>8.4}\n",
            class.name(),
            c.count,
            c.successes,
            c.success_rate
        ));
    }
    t
}

