//! Subcommands of the `surgflow` binary.
//!
//! Exit codes: 0 ok, 1 check failure, 2 config, 3 I/O, 4 data statistics,
//! 5 divergence, 6 mismatch.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::config::{explicit_seed, resolve_seed, RunConfig};
use crate::data::cholec80::{parse_phase_file, parse_tool_file, rate_match};
use crate::data::{generate_synthetic, load_dataset, write_dataset, PHASE_NAMES, TOOL_NAMES};
use crate::error::{Error, Result};
use crate::eval::{build_report, predict, EvalConfig};
use crate::gradcheck::{run_gradcheck, GradcheckOptions};
use crate::stats::{build_cooccurrence, compute_class_weights, ClassFrequencies};
use crate::train::{
    load_checkpoint, run_pipeline, save_checkpoint, Ablation, Stage, TrainData, TrainState, TrainingStats,
};

pub const FINAL_CHECKPOINT: &str = "final.swmt";
pub const HISTORY_FILE: &str = "history.json";
pub const CLASS_WEIGHTS_FILE: &str = "class_weights.json";
pub const COOCCURRENCE_FILE: &str = "cooccurrence.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Parser)]
#[command(name = "surgflow", version, about = "Multitask surgical tool and phase recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic workflow dataset.
    Synth(SynthArgs),
    /// Class weights and tool/phase co-occurrence of a dataset.
    Stats(StatsArgs),
    /// Train an ablation (BL1-BL5) or the proposed two-stage pipeline.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Convert Cholec80-style annotation files into a dataset.
    Parse(ParseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Run config JSON; only its `synthetic` and `seed` sections are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output dataset directory [default: paths.out from the config].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Generator seed [default: config seed, then SWMT_SEED, then synthetic.seed].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of videos [default: synthetic.n_videos, 80].
    #[arg(long)]
    pub n_videos: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory [default: the dataset directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only count the training half of the first-half/second-half split.
    #[arg(long)]
    pub train_split: bool,
    /// Zero-count guard for the inverse-frequency matrix.
    #[arg(long, default_value_t = crate::stats::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Use machine epsilon instead of --epsilon.
    #[arg(long)]
    pub strict_epsilon: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Run config JSON [default: built-in defaults].
    #[arg(long, conflicts_with = "resume")]
    pub config: Option<PathBuf>,
    /// Dataset directory [default: paths.data from the config].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoints and history [default: paths.out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// BL1, BL2, BL3, BL4, BL5 or proposed [default: proposed].
    #[arg(long, conflicts_with = "resume")]
    pub ablation: Option<Ablation>,
    /// Continue from a checkpoint; the run config and seed come from it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Training seed [default: config seed, then SWMT_SEED, then 42].
    #[arg(long, conflicts_with = "resume")]
    pub seed: Option<u64>,
    /// Stage-1 epochs [default: 200].
    #[arg(long, conflicts_with = "resume")]
    pub stage1_epochs: Option<usize>,
    /// Stage-2 epochs [default: 1000].
    #[arg(long, conflicts_with = "resume")]
    pub stage2_epochs: Option<usize>,
    /// Also checkpoint every k epochs within each stage; 0 disables [default: 0].
    #[arg(long, conflicts_with = "resume")]
    pub checkpoint_every: Option<usize>,
    /// Stop after this many epochs in total (stage 1 + stage 2), leaving a
    /// resumable checkpoint.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory; the second half of the videos is evaluated.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for report.json and report.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Run config JSON; only its `eval` section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Median filter window for phase predictions, odd [default: 9].
    #[arg(long)]
    pub smooth_window: Option<usize>,
    /// Tool presence threshold on sigmoid scores [default: 0.5].
    #[arg(long)]
    pub tool_threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Random trials per component.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = GradcheckOptions::default().seed)]
    pub seed: u64,
    /// Relative error tolerance.
    #[arg(long, default_value_t = crate::gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Write the per-component results as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ParseArgs {
    /// Directory with `<video>-phase.txt` and `<video>-tool.txt` pairs.
    #[arg(long)]
    pub input: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map(RunConfig::load).transpose().map(Option::unwrap_or_default)
}

fn required(v: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    v.ok_or_else(|| {
        Error::config(format!("paths.{what}"), format!("no --{what} flag and no paths.{what} in the config"))
    })
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let mut syn = cfg.synthetic.clone();
    if let Some(s) = explicit_seed(args.seed, cfg.seed)? {
        syn.seed = s;
    }
    if let Some(n) = args.n_videos {
        syn.n_videos = n;
    }
    syn.validate()?;
    let out = required(args.out.clone().or(cfg.paths.out), "out")?;
    let videos = generate_synthetic(&syn)?;
    let manifest = write_dataset(&out, &videos, Some(&syn))?;
    println!(
        "wrote {} videos ({} frames) to {}",
        manifest.videos.len(),
        videos.iter().map(|v| v.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ClassTable {
    names: Vec<String>,
    counts: Vec<u64>,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct ClassWeightsDoc {
    frames: usize,
    phase: ClassTable,
    tool: ClassTable,
}

pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let videos = if args.train_split { ds.train_test()?.0 } else { ds.videos.iter().collect() };
    let labels = || videos.iter().flat_map(|v| v.labels().iter());
    let eps = if args.strict_epsilon { crate::stats::STRICT_EPSILON } else { args.epsilon };
    let cooc = build_cooccurrence(labels(), eps)?;
    print!("{}", cooc.format_table());
    let out = args.out.clone().unwrap_or_else(|| args.data.clone());
    write_file(&out.join(COOCCURRENCE_FILE), &(cooc.to_json()? + "\n"))?;
    let table = |freq: ClassFrequencies, names: &[&str]| -> Result<ClassTable> {
        let weights = compute_class_weights(&freq)?;
        Ok(ClassTable {
            names: names.iter().map(|s| s.to_string()).collect(),
            counts: freq.counts().to_vec(),
            weights: weights.as_slice().to_vec(),
        })
    };
    let doc = ClassWeightsDoc {
        frames: labels().count(),
        phase: table(ClassFrequencies::phases(labels())?, &PHASE_NAMES)?,
        tool: table(ClassFrequencies::tools(labels())?, &TOOL_NAMES)?,
    };
    write_file(&out.join(CLASS_WEIGHTS_FILE), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(())
}

fn checkpoint_name(state: &TrainState) -> String {
    let stage = match state.stage {
        Stage::Stage1 => "stage1",
        Stage::Stage2 => "stage2",
        Stage::Done => "done",
    };
    format!("{stage}-epoch{:04}.swmt", state.next_epoch)
}

/// Trains and writes `final.swmt` (or the checkpoint at `--stop-after`)
/// plus `history.json` into the output directory.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainState> {
    let (mut state, data_dir, out) = match &args.resume {
        Some(ck) => {
            let state = load_checkpoint(ck)?;
            (state, required(args.data.clone(), "data")?, required(args.out.clone(), "out")?)
        }
        None => {
            let cfg = load_config(args.config.as_deref())?;
            let mut p = cfg.pipeline.clone();
            if let Some(a) = args.ablation {
                p.ablation = a;
            }
            if let Some(e) = args.stage1_epochs {
                p.stage1.epochs = e;
            }
            if let Some(e) = args.stage2_epochs {
                p.stage2.epochs = e;
            }
            if let Some(k) = args.checkpoint_every {
                p.checkpoint_every = k;
            }
            p.validate()?;
            let seed = resolve_seed(args.seed, cfg.seed)?;
            let data_dir = required(args.data.clone().or(cfg.paths.data.clone()), "data")?;
            let out = required(args.out.clone().or(cfg.paths.out.clone()), "out")?;
            let ds_dim = load_dataset(&data_dir)?
                .feature_dim()
                .ok_or_else(|| Error::Mismatch("dataset has no feature vectors".into()))?;
            (TrainState::new(p, seed, ds_dim)?, data_dir, out)
        }
    };
    let ds = load_dataset(&data_dir)?;
    if ds.feature_dim() != Some(state.input_dim()) {
        return Err(Error::Mismatch(format!(
            "dataset feature dimension {:?} does not match the model input {}",
            ds.feature_dim(),
            state.input_dim()
        )));
    }
    let (train, test) = ds.train_test()?;
    let data = TrainData::new(train, test)?;
    let stats = TrainingStats::from_videos(&data.train, state.config.resolved_epsilon())?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_file(&out.join(COOCCURRENCE_FILE), &(stats.cooccurrence.to_json()? + "\n"))?;
    info!(
        "training {} on {} videos, validating on {}, seed {}",
        state.config.ablation,
        data.train.len(),
        data.val.len(),
        state.seed
    );

    let every = state.config.checkpoint_every;
    let stop_after = args.stop_after;
    let mut stopped = false;
    let result = run_pipeline(&mut state, &data, &stats, &mut |s| {
        if s.stage != Stage::Done && every > 0 && s.next_epoch % every == 0 {
            save_checkpoint(&out.join(checkpoint_name(s)), s)?;
        }
        if stop_after.is_some_and(|n| s.epochs_done() >= n) && s.stage != Stage::Done {
            save_checkpoint(&out.join(checkpoint_name(s)), s)?;
            stopped = true;
            return Err(Error::InvalidArgument("stopped early".into()));
        }
        Ok(())
    });
    match result {
        Err(_) if stopped => {}
        r => r?,
    }
    write_file(&out.join(HISTORY_FILE), &(serde_json::to_string_pretty(&state.history)? + "\n"))?;
    if stopped {
        println!(
            "stopped after {} epochs; resume from {}",
            state.epochs_done(),
            out.join(checkpoint_name(&state)).display()
        );
    } else {
        save_checkpoint(&out.join(FINAL_CHECKPOINT), &state)?;
        let last = state.history.stage2.last().or(state.history.stage1.last());
        if let Some(r) = last {
            println!("done: val loss {:.5}, val phase accuracy {:.4}", r.val_loss, r.val_phase_accuracy);
        }
    }
    Ok(state)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<crate::eval::EvalReport> {
    let mut cfg: EvalConfig = load_config(args.config.as_deref())?.eval;
    if let Some(w) = args.smooth_window {
        cfg.smooth_window = w;
    }
    if let Some(t) = args.tool_threshold {
        cfg.tool_threshold = t;
    }
    cfg.validate()?;
    let state = load_checkpoint(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    let (_, test) = ds.train_test()?;
    let pred = predict(&state, &test)?;
    let report = build_report(&pred, &cfg, state.config.ablation, state.config.alphas)?;
    write_file(&args.out.join(REPORT_JSON), &report.to_json()?)?;
    write_file(&args.out.join(REPORT_CSV), &report.to_csv())?;
    if let Some(t) = &report.tool {
        println!(
            "tool:  mAP {:.4}  P {:.4}  R {:.4}  A {:.4}",
            t.map, t.mean_precision, t.mean_recall, t.mean_accuracy
        );
    }
    for (label, m) in [("phase", &report.phase_raw), ("phase (smoothed)", &report.phase_smoothed)] {
        if let Some(m) = m {
            println!(
                "{label}: mAP {:.4}  P {:.4}  R {:.4}  A {:.4}  frame acc {:.4}",
                m.map,
                m.mean_precision,
                m.mean_recall,
                m.mean_accuracy,
                m.frame_accuracy.unwrap_or(0.0)
            );
        }
    }
    Ok(report)
}

/// Returns whether every component passed.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<bool> {
    let opts = GradcheckOptions {
        trials: args.trials,
        seed: args.seed,
        tolerance: args.tolerance,
        inject_sign_flip: args.inject_fault,
        ..GradcheckOptions::default()
    };
    let report = run_gradcheck(&opts)?;
    for c in &report.components {
        println!(
            "{:<40} trials {:>5}  worst rel err {:.3e}  {}",
            c.name,
            c.trials,
            c.worst_rel_err,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    println!("worst {:.3e} (tolerance {:.0e})", report.worst(), report.tolerance);
    if let Some(p) = &args.out {
        write_file(p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(report.passed())
}

pub fn cmd_parse(args: &ParseArgs) -> Result<()> {
    let entries = fs::read_dir(&args.input).map_err(|e| Error::io(&args.input, e))?;
    let mut ids = Vec::new();
    for e in entries {
        let e = e.map_err(|err| Error::io(&args.input, err))?;
        if let Some(id) = e.file_name().to_str().and_then(|n| n.strip_suffix("-phase.txt")) {
            ids.push(id.to_string());
        }
    }
    if ids.is_empty() {
        return Err(Error::io(
            &args.input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no <video>-phase.txt files"),
        ));
    }
    ids.sort();
    let read = |p: PathBuf| fs::read_to_string(&p).map_err(|e| Error::io(p, e));
    let videos = ids
        .iter()
        .map(|id| {
            let phases = parse_phase_file(&read(args.input.join(format!("{id}-phase.txt")))?)?;
            let tools = parse_tool_file(&read(args.input.join(format!("{id}-tool.txt")))?)?;
            rate_match(id, &phases, &tools)
        })
        .collect::<Result<Vec<_>>>()?;
    write_dataset(&args.out, &videos, None)?;
    println!("parsed {} videos into {}", videos.len(), args.out.display());
    Ok(())
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| 0),
        Command::Stats(a) => cmd_stats(a).map(|_| 0),
        Command::Train(a) => cmd_train(a).map(|_| 0),
        Command::Evaluate(a) => cmd_evaluate(a).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(a).map(|ok| if ok { 0 } else { 1 }),
        Command::Parse(a) => cmd_parse(a).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
