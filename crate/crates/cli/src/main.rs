use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use phasemag::features::{featurize, FeatureSpec, FeatureTable, LabelSeries, HR_BAND, RR_BAND};
use phasemag::regress::{
    evaluate, kfold_mae, load_model, mean_abs_error, save_model, Dataset, FoldStrategy, ForestParams,
    ModelSpec, TrainedModel,
};
use phasemag::render::{save_ppm, Colormap, RenderOptions};
use phasemag::simulator::{simulate, SceneSpec};
use phasemag::{
    load_radargram, magnify, magnify_windowed, save_radargram, BandSpec, Error, FileFormat, GaborBank,
    MagnifyConfig, RangeRoi, WindowSpec,
};

#[derive(Parser)]
#[command(
    name = "phasemag",
    version,
    about = "Phase-based motion magnification for UWB radargrams"
)]
struct Cli {
    /// Log level: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic radargram from a scene file.
    Simulate(SimulateArgs),
    /// Amplify or attenuate motion inside a temporal band.
    Magnify(MagnifyArgs),
    /// Extract per-window FFT-peak and zero-crossing features.
    Features(FeaturesArgs),
    /// Fit a regression model on feature CSVs.
    Train(TrainArgs),
    /// Score a trained model on feature CSVs.
    Eval(EvalArgs),
    /// Write a radargram heatmap as binary PPM.
    Render(RenderArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene file (key=value with [target] blocks).
    scene: PathBuf,
    /// Noise RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output radargram (.rgrm binary, or .csv with a .meta sidecar).
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth displacement CSV (time_s, one column per target in bins).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct MagnifyArgs {
    input: PathBuf,
    output: PathBuf,
    /// Magnification factor (dimensionless, >= -1; negative attenuates).
    #[arg(long, allow_hyphen_values = true)]
    alpha: f64,
    /// Temporal band LO:HI in Hz.
    #[arg(long)]
    band: Pair<f64>,
    /// Gabor bank file; defaults to the 7-level bank (wavelengths 75..4 bins).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Process in windows of this length, seconds.
    #[arg(long, requires = "window_shift")]
    window_length: Option<f64>,
    /// Window shift, seconds.
    #[arg(long, requires = "window_length")]
    window_shift: Option<f64>,
    /// Gaussian smoothing of filtered phase along range, sigma in bins.
    #[arg(long)]
    phase_smoothing: Option<f64>,
    /// Skip linear detrending of the unwrapped phase.
    #[arg(long)]
    no_detrend: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Vital {
    /// Breathing, 0.1-0.7 Hz.
    Rr,
    /// Heart rate, 0.7-3.0 Hz.
    Hr,
}

#[derive(Args)]
struct FeaturesArgs {
    input: PathBuf,
    /// Phase band and FFT-peak search band LO:HI in Hz.
    #[arg(long, conflicts_with = "vital", required_unless_present = "vital")]
    band: Option<Pair<f64>>,
    /// Preset band for a vital sign.
    #[arg(long, value_enum)]
    vital: Option<Vital>,
    /// Range bins FIRST:LAST (inclusive).
    #[arg(long)]
    roi: Pair<usize>,
    /// Gabor bank file; defaults to the 7-level bank.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Window length, seconds.
    #[arg(long, default_value_t = 30.0)]
    window: f64,
    /// Window shift, seconds.
    #[arg(long, default_value_t = 5.0)]
    shift: f64,
    /// Ground-truth CSV (time_s, bpm).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Magnification applied before extraction (dimensionless; 0 = phase only).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha: f64,
    /// Output feature CSV.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    /// Random forest.
    Rf,
    /// Linear regression.
    Lr,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSVs with labels; each file is one group.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Output model file.
    #[arg(short, long)]
    output: PathBuf,
    /// Also report k-fold cross-validated MAE (bpm).
    #[arg(long)]
    cv: Option<usize>,
    /// Keep each input file inside one fold.
    #[arg(long)]
    grouped: bool,
    /// Cross-validation report (.csv, otherwise text).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ridge penalty for linear regression (>= 0).
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Trees in the forest.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Maximum tree depth.
    #[arg(long, default_value_t = 12)]
    max_depth: usize,
    /// Minimum rows per leaf.
    #[arg(long, default_value_t = 2)]
    min_leaf: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Feature CSVs with labels.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Report file (.csv, otherwise text).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    input: PathBuf,
    /// Output PPM image.
    output: PathBuf,
    #[arg(long, value_enum, default_value = "gray")]
    colormap: ColormapArg,
    /// Clip percentiles LO:HI (0-100).
    #[arg(long, default_value = "1:99")]
    clip: Pair<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ColormapArg {
    Gray,
    Viridis,
    Jet,
}

/// `A:B` pair.
#[derive(Clone, Copy, Debug)]
struct Pair<T>(T, T);

impl<T: FromStr> FromStr for Pair<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected A:B, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<T>().map_err(|e| format!("`{v}`: {e}"));
        Ok(Pair(parse(a)?, parse(b)?))
    }
}

struct StageError {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for phasemag::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

type CmdResult = Result<(), StageError>;

fn load_bank(path: &Option<PathBuf>, n_bins: usize) -> phasemag::Result<GaborBank> {
    match path {
        Some(p) => GaborBank::load(p),
        None => Ok(GaborBank::default_bank(n_bins)),
    }
}

fn write_text(path: &Path, text: &str) -> phasemag::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::IoPath {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let scene = SceneSpec::load(&a.scene).stage("scene")?;
    let (r, truth) = simulate(&scene, a.seed).stage("simulate")?;
    save_radargram(&r, &a.output, FileFormat::from_path(&a.output)).stage("write")?;
    if let Some(t) = &a.truth {
        truth.save_csv(t).stage("write")?;
    }
    info!("wrote {} bins x {} frames", r.n_bins(), r.n_frames());
    Ok(())
}

fn cmd_magnify(a: MagnifyArgs) -> CmdResult {
    let r = load_radargram(&a.input, FileFormat::from_path(&a.input)).stage("read")?;
    let bank = load_bank(&a.bank, r.n_bins()).stage("bank")?;
    let band = BandSpec::new(a.band.0, a.band.1).stage("args")?;
    let mut cfg = MagnifyConfig::new(a.alpha, band).stage("args")?;
    if let Some(s) = a.phase_smoothing {
        cfg = cfg.with_phase_smoothing(s);
    }
    if a.no_detrend {
        cfg = cfg.without_detrend();
    }
    let out = match (a.window_length, a.window_shift) {
        (Some(len), Some(shift)) => {
            let w = WindowSpec::new(len, shift).stage("args")?;
            magnify_windowed(&r, &bank, &cfg, &w).stage("magnify")?
        }
        _ => magnify(&r, &bank, &cfg).stage("magnify")?,
    };
    save_radargram(&out, &a.output, FileFormat::from_path(&a.output)).stage("write")
}

fn cmd_features(a: FeaturesArgs) -> CmdResult {
    let r = load_radargram(&a.input, FileFormat::from_path(&a.input)).stage("read")?;
    let bank = load_bank(&a.bank, r.n_bins()).stage("bank")?;
    let (lo, hi) = match (a.band, a.vital) {
        (Some(b), _) => (b.0, b.1),
        (None, Some(Vital::Rr)) => RR_BAND,
        (None, Some(Vital::Hr)) | (None, None) => HR_BAND,
    };
    let spec = FeatureSpec {
        window: WindowSpec::new(a.window, a.shift).stage("args")?,
        band: BandSpec::new(lo, hi).stage("args")?,
        roi: RangeRoi::new(a.roi.0, a.roi.1).stage("args")?,
        alpha: a.alpha,
    };
    let labels = a
        .labels
        .as_ref()
        .map(LabelSeries::load_csv)
        .transpose()
        .stage("labels")?;
    let table = featurize(&r, &bank, &spec, labels.as_ref()).stage("features")?;
    info!("{} windows", table.rows.len());
    table.save_csv(&a.output).stage("write")
}

fn load_dataset(inputs: &[PathBuf]) -> phasemag::Result<(Dataset, Vec<FeatureTable>)> {
    let tables: Vec<FeatureTable> = inputs
        .iter()
        .map(FeatureTable::load_csv)
        .collect::<phasemag::Result<_>>()?;
    Ok((Dataset::from_tables(&tables)?, tables))
}

fn write_report(
    path: &Path,
    csv: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    text: &str,
) -> phasemag::Result<()> {
    if FileFormat::from_path(path) == FileFormat::Csv {
        let mut buf = Vec::new();
        csv(&mut buf)?;
        write_text(path, &String::from_utf8_lossy(&buf))
    } else {
        write_text(path, text)
    }
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let (data, _) = load_dataset(&a.inputs).stage("read")?;
    let spec = match a.model {
        ModelKind::Lr => ModelSpec::Linear { ridge: a.ridge },
        ModelKind::Rf => ModelSpec::Forest(ForestParams {
            n_trees: a.trees,
            max_depth: a.max_depth,
            min_leaf: a.min_leaf,
        }),
    };
    if let Some(k) = a.cv {
        let strategy = if a.grouped {
            FoldStrategy::Grouped
        } else {
            FoldStrategy::Shuffled
        };
        let report = kfold_mae(&data, k, &spec, a.seed, strategy).stage("cross-validate")?;
        print!("{}", report.to_text());
        if let Some(p) = &a.report {
            write_report(p, |b| report.write_csv(b), &report.to_text()).stage("write")?;
        }
    }
    let model = spec.fit(&data, a.seed).stage("train")?;
    let trained = TrainedModel {
        feature_names: data.feature_names.clone(),
        model,
    };
    save_model(&trained, &a.output).stage("write")
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let model = load_model(&a.model).stage("read")?;
    let (data, tables) = load_dataset(&a.inputs).stage("read")?;
    let mut report = evaluate(&model, &data).stage("eval")?;
    let baseline: Option<Vec<f64>> = tables
        .iter()
        .flat_map(|t| &t.rows)
        .map(|r| r.baseline_bpm)
        .collect();
    report.baseline_mae = baseline.map(|b| mean_abs_error(&b, &data.y));
    print!("{}", report.to_text());
    if let Some(p) = &a.report {
        write_report(p, |b| report.write_csv(b), &report.to_text()).stage("write")?;
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> CmdResult {
    let r = load_radargram(&a.input, FileFormat::from_path(&a.input)).stage("read")?;
    let colormap = match a.colormap {
        ColormapArg::Gray => Colormap::Gray,
        ColormapArg::Viridis => Colormap::Viridis,
        ColormapArg::Jet => Colormap::Jet,
    };
    let opts = RenderOptions {
        colormap,
        clip: (a.clip.0, a.clip.1),
    };
    save_ppm(&r, &opts, &a.output).stage("render")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Magnify(a) => cmd_magnify(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { stage, error }) => {
            eprintln!("error [{stage}]: {error}");
            ExitCode::from(if error.is_internal() { 2 } else { 1 })
        }
    }
}
