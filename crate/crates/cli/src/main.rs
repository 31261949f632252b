//! `fusetrack`: simulate scenarios, train the affinity network, run the tracker, score runs
//! and tabulate reports.

mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use fusetrack::pipeline::{evaluate_run, make_scorer, run_pipeline, train_from_frames, TrainingPitch};
use fusetrack::scenario::{
    load_frames, load_ground_truth, load_tracks, save_frames, save_ground_truth, save_tracks, ParseMode,
};
use fusetrack::{generate_scenario, Ablation, Config, DanModel, LossKind, MetricReport};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] fusetrack::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: not a metric report: {source}")]
    Report {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl CliError {
    /// Process exit code of each error category.
    fn exit_code(&self) -> u8 {
        use fusetrack::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Config(_)) => 3,
            CliError::Core(E::Parse { .. }) | CliError::Report { .. } => 4,
            CliError::Core(E::Model(_)) => 5,
            CliError::Core(E::Eval(_)) => 6,
            CliError::Io { .. } | CliError::Core(E::Io(_)) => 7,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "fusetrack", version, about = "Camera/radar fusion and tracking pipeline")]
struct Cli {
    /// Reject unknown fields in JSONL inputs.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set scenario.seed=7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        Ok(match &self.config {
            Some(path) => Config::load(path, &self.overrides)?,
            None => Config::from_toml("", &self.overrides)?,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScorerKind {
    Artificial,
    Dan,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Mask,
    Affinity,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mask => LossKind::Mask,
            LossArg::Affinity => LossKind::Affinity,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario: frames, ground truth and a manifest.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Scenario seed, overriding the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the affinity network on a simulated scenario.
    TrainDan {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        loss: Option<LossArg>,
        /// Initialization and shuffling seed, overriding the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Model output file.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Fuse and track a frame sequence.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        frames: PathBuf,
        /// Similarity used for association; `dan` needs `--model`.
        #[arg(long, value_enum)]
        scorer: Option<ScorerKind>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Drop all radar detections.
        #[arg(long)]
        no_radar: bool,
        /// Keep the camera at its nominal pitch.
        #[arg(long)]
        no_dca: bool,
        /// Track output, one JSON line per track per frame.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a track stream against ground truth.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Row label in comparison tables.
        #[arg(long, default_value = "run")]
        label: String,
        /// Directory receiving `<label>.json` and `<label>.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate metric reports side by side, with histogram data and a plot script.
    Report {
        /// Report JSON files written by `eval`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Attaches the input path to bare I/O errors from the loaders.
fn input<T>(path: &Path, loaded: fusetrack::Result<T>) -> Result<T> {
    loaded.map_err(|e| match e {
        fusetrack::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

fn parse_mode(strict: bool) -> ParseMode {
    if strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    }
}

fn config_hash(cfg: &Config) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn simulate(config: &ConfigArgs, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = config.load()?;
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    let (frames, truth) = generate_scenario(&cfg.scenario, &cfg.camera)?;
    create_dir(out)?;
    save_frames(&out.join("frames.jsonl"), &frames)?;
    save_ground_truth(&out.join("gt.jsonl"), &truth)?;
    let manifest = serde_json::json!({
        "seed": cfg.scenario.seed,
        "config_sha256": config_hash(&cfg),
        "frames": frames.len(),
        "frame_rate": cfg.scenario.frame_rate,
        "files": ["frames.jsonl", "gt.jsonl"],
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&out.join("manifest.json"), &text)?;
    log::info!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_dan(
    config: &ConfigArgs,
    frames: &Path,
    gt: &Path,
    loss: Option<LossArg>,
    seed: Option<u64>,
    out: &Path,
    curve: Option<&Path>,
    mode: ParseMode,
) -> Result<()> {
    let cfg = config.load()?;
    let frames = input(frames, load_frames(frames, mode))?;
    let truth = input(gt, load_ground_truth(gt, mode))?;
    let mut train = cfg.run.dan.clone();
    if let Some(loss) = loss {
        train.loss = loss.into();
    }
    if let Some(seed) = seed {
        train.seed = seed;
    }
    let report = train_from_frames(&frames, &truth, &cfg.camera, &cfg.run, &train, TrainingPitch::default())?;
    report.model.save(out)?;
    if let Some(curve) = curve {
        write(curve, &report.loss_curve_csv())?;
    }
    if let Some(last) = report.loss_curve.last() {
        log::info!("trained {} epochs, final loss {last:.6}", report.loss_curve.len());
    }
    Ok(())
}

fn run(
    config: &ConfigArgs,
    frames: &Path,
    scorer: Option<ScorerKind>,
    model: Option<&Path>,
    ablation: Ablation,
    out: &Path,
    mode: ParseMode,
) -> Result<()> {
    let cfg = config.load()?;
    let model = match (scorer, model) {
        (Some(ScorerKind::Dan), None) => {
            return Err(CliError::Usage("--scorer dan needs --model".into()));
        }
        (Some(ScorerKind::Artificial), _) | (None, None) => None,
        (_, Some(path)) => Some(input(path, DanModel::load(path))?),
    };
    let frames = input(frames, load_frames(frames, mode))?;
    let scorer = make_scorer(&cfg.run, model);
    let output = run_pipeline(&frames, &cfg.camera, &cfg.run, &scorer, ablation)?;
    save_tracks(out, &output.records)?;
    log::info!(
        "{} frames, {} track states, scorer {}",
        frames.len(),
        output.records.len(),
        scorer.name()
    );
    Ok(())
}

fn eval(config: &ConfigArgs, tracks: &Path, gt: &Path, label: &str, out: &Path, mode: ParseMode) -> Result<()> {
    let cfg = config.load()?;
    let records = input(tracks, load_tracks(tracks, mode))?;
    let truth = input(gt, load_ground_truth(gt, mode))?;
    let report = evaluate_run(label, &records, &truth, &cfg.run.eval)?;
    create_dir(out)?;
    write(&out.join(format!("{label}.json")), &report.to_json())?;
    let text = report.to_text();
    write(&out.join(format!("{label}.txt")), &text)?;
    print!("{text}");
    Ok(())
}

fn load_report(path: &Path) -> Result<MetricReport> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Report {
        path: path.to_path_buf(),
        source,
    })
}

fn report_cmd(paths: &[PathBuf], out: &Path) -> Result<()> {
    let reports = paths.iter().map(|p| load_report(p)).collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    let table = report::comparison(&reports);
    write(&out.join("comparison.txt"), &table.to_text())?;
    write(&out.join("comparison.csv"), &table.to_csv())?;
    write(&out.join("histogram.csv"), &report::histogram_csv(&reports))?;
    write(&out.join("histogram.gp"), &report::gnuplot_script(&reports))?;
    print!("{}", table.to_text());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mode = parse_mode(cli.strict);
    match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::TrainDan {
            config,
            frames,
            gt,
            loss,
            seed,
            out,
            curve,
        } => train_dan(&config, &frames, &gt, loss, seed, &out, curve.as_deref(), mode),
        Command::Run {
            config,
            frames,
            scorer,
            model,
            no_radar,
            no_dca,
            out,
        } => {
            let ablation = Ablation {
                radar: !no_radar,
                dca: !no_dca,
            };
            run(&config, &frames, scorer, model.as_deref(), ablation, &out, mode)
        }
        Command::Eval {
            config,
            tracks,
            gt,
            label,
            out,
        } => eval(&config, &tracks, &gt, &label, &out, mode),
        Command::Report { reports, out } => report_cmd(&reports, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FUSETRACK_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
