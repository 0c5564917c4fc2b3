//! `cuerec`: synthesize a dataset, train a system, evaluate a checkpoint.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cuerec_core::pipeline;
use cuerec_core::{
    Checkpoint, DenseArray, EpochLog, Error, ErrorClass, EvalReport, Result, RunConfig,
    SystemKind, TrainedSystem,
};
use serde::{Deserialize, Serialize};

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "cuerec", version, about = "Content-user embedding recommender experiments")]
struct Cli {
    /// JSON config file overlaid on the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set cue.max_epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Force sequential, bit-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-factor dataset into `data_dir`.
    Synth,
    /// Train one system and write `<output_dir>/<system>.ckpt`.
    Train { system: SystemArg },
    /// Evaluate a trained system and write a JSON report.
    Eval {
        system: SystemArg,
        #[arg(long, value_enum, default_value = "rec")]
        task: Task,
        /// Defaults to `<output_dir>/<system>.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also score the ground-truth factors (synthetic data only).
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Wmf,
    Regression,
    Cue,
    CueIndex,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Wmf => SystemKind::Wmf,
            SystemArg::Regression => SystemKind::Regression,
            SystemArg::Cue => SystemKind::Cue,
            SystemArg::CueIndex => SystemKind::CueIndex,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Task {
    Rec,
    Tags,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Rec => "rec",
            Task::Tags => "tags",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    task: String,
    reports: Vec<EvalReport>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::build(cli.config.as_deref(), &cli.sets, cli.deterministic)?;
    match cli.cmd {
        Command::Synth => synth(&cfg),
        Command::Train { system } => train(&cfg, system.into()),
        Command::Eval {
            system,
            task,
            checkpoint,
            oracle,
        } => eval(&cfg, system.into(), task, checkpoint, oracle),
    }
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let out = pipeline::synthesize(cfg)?;
    out!(
        "wrote {} users x {} items ({} pairs, density {:.4}) to {}",
        out.interactions.num_users(),
        out.interactions.num_items(),
        out.interactions.triples.len(),
        out.realized_density,
        out.dir.display()
    );
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn prepare_output(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))
}

fn train(cfg: &RunConfig, kind: SystemKind) -> Result<()> {
    prepare_output(cfg)?;
    let name = kind.name();
    write_file(
        &cfg.output_dir.join(format!("{name}_config.json")),
        &serde_json::to_vec_pretty(&cfg.to_json())?,
    )?;
    let ds = pipeline::load_dataset(cfg, kind.needs_audio())?;
    let splits = pipeline::make_splits(&ds, cfg)?;

    let log_path = cfg.output_dir.join(format!("{name}_log.tsv"));
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let header = EpochLog::TSV_HEADER;
    writeln!(log, "{header}").map_err(|e| Error::io(&log_path, e))?;
    out!("{header}");
    let mut io_err = None;
    let mut on_epoch = |e: &EpochLog| {
        let line = e.to_tsv();
        out!("{line}");
        if let Err(err) = writeln!(log, "{line}") {
            io_err.get_or_insert(err);
        }
    };

    let (system, normalizer) = match kind {
        SystemKind::Wmf => (pipeline::train_wmf_system(&ds, &splits, cfg)?, None),
        SystemKind::CueIndex => (
            pipeline::train_cue_index_system(&ds, &splits, cfg, &mut on_epoch)?,
            None,
        ),
        SystemKind::Regression | SystemKind::Cue => {
            let (norm, mels) = pipeline::normalize_mels(&ds, &splits, &cfg.dsp)?;
            let sys = if kind == SystemKind::Cue {
                pipeline::train_cue_system(&ds, &mels, &splits, cfg, &mut on_epoch)?
            } else {
                pipeline::train_regression_system(&mels, &splits, cfg, &mut on_epoch)?
            };
            (sys, Some(norm))
        }
    };
    if let Some(e) = io_err {
        return Err(Error::io(&log_path, e));
    }
    let ck = system.to_checkpoint(cfg, normalizer.as_ref(), ds.num_items());
    let path = cfg.output_dir.join(format!("{name}.ckpt"));
    ck.save(&path)?;
    out!("saved {}", path.display());
    Ok(())
}

/// Fields that must agree between training and evaluation so the
/// held-out interactions are the same.
fn check_same_split(cfg: &RunConfig, ck: &Checkpoint) -> Result<()> {
    let trained: RunConfig = serde_json::from_value(ck.config.clone())
        .map_err(|e| Error::Checkpoint(format!("config echo: {e}")))?;
    let same = trained.seed == cfg.seed
        && trained.protocol == cfg.protocol
        && trained.split == cfg.split
        && trained.filter == cfg.filter
        && trained.dsp == cfg.dsp;
    if !same {
        return Err(Error::Validation(
            "checkpoint was trained with a different seed, protocol, split, filter or DSP setup"
                .into(),
        ));
    }
    Ok(())
}

fn eval(
    cfg: &RunConfig,
    kind: SystemKind,
    task: Task,
    checkpoint: Option<PathBuf>,
    oracle: bool,
) -> Result<()> {
    let name = kind.name();
    let ck_path = checkpoint.unwrap_or_else(|| cfg.output_dir.join(format!("{name}.ckpt")));
    let ck = Checkpoint::load(&ck_path)?;
    ck.expect_kind(name)?;
    check_same_split(cfg, &ck)?;
    let (system, normalizer) = TrainedSystem::from_checkpoint(&ck)?;

    let with_audio = normalizer.is_some();
    let ds = pipeline::load_dataset(cfg, with_audio)?;
    if task == Task::Tags && ds.tags.is_none() {
        return Err(Error::Validation(format!(
            "task tags needs {}",
            cfg.tags_path().display()
        )));
    }
    let splits = pipeline::make_splits(&ds, cfg)?;
    let mels = match &normalizer {
        Some(n) => ds
            .mels
            .iter()
            .map(|m| m.as_ref().map(|m| cuerec_core::audio_frontend::apply_normalizer(m, n)))
            .collect(),
        None => Vec::new(),
    };
    let truth = if oracle {
        Some(cuerec_core::GroundTruth::load(cfg.ground_truth_path())?)
    } else {
        None
    };
    let config = cfg.to_json();

    let reports = match task {
        Task::Rec => {
            let mut v = vec![
                pipeline::evaluate_rec(name, system.scorer(&mels)?.as_ref(), &splits, config.clone())?,
                pipeline::evaluate_rec("popularity", &pipeline::popularity(&ds, &splits), &splits, config.clone())?,
            ];
            if let Some(t) = &truth {
                let o = pipeline::oracle_scorer(t, &ds)?;
                v.push(pipeline::evaluate_rec("oracle", &o, &splits, config.clone())?);
            }
            v
        }
        Task::Tags => {
            let items = pipeline::tagged_items(&ds, &splits);
            let n = ds.num_items();
            let feats = pipeline::scatter_rows(&system.item_features(&mels, &items)?, &items, n);
            let constant = DenseArray::new(vec![n, 1], vec![1.0; n])?;
            let mut v = vec![
                pipeline::evaluate_tags(name, &ds, &splits, &feats, &cfg.tag_mlp)?,
                pipeline::evaluate_tags("constant", &ds, &splits, &constant, &cfg.tag_mlp)?,
            ];
            if let Some(t) = &truth {
                let o = pipeline::oracle_scorer(t, &ds)?;
                v.push(pipeline::evaluate_tags("oracle", &ds, &splits, &o.items, &cfg.tag_mlp)?);
            }
            v
        }
    };

    prepare_output(cfg)?;
    for r in &reports {
        out!("{}\t{}\tauc={:.4}\tn={}\tskipped={}", r.task, r.system, r.mean_auc, r.n_evaluated, r.n_skipped);
    }
    let file = ReportFile {
        task: task.name().into(),
        reports,
    };
    let path = cfg.output_dir.join(format!("{name}_{}_report.json", task.name()));
    write_file(&path, &serde_json::to_vec_pretty(&file)?)?;
    out!("wrote {}", path.display());
    Ok(())
}
