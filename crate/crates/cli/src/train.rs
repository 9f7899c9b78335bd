use std::path::{Path, PathBuf};

use clap::Args;
use star_core::datasets::{load_bitemporal, load_single_temporal, BitemporalSample};
use star_core::evaluation::{compare_report, ChangeHead, CompareReport, Pcc, ReportOptions};
use star_core::model::ChangeStar;
use star_core::training::{read_log, TrainData, TrainMode, Trainer, METRICS_FILE};

use crate::config::{create_dir, LoadedConfig, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::ModeArg;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Continue from a checkpoint written by an earlier run of the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

/// The effective config after command-line overrides.
pub const RESOLVED_FILE: &str = "resolved.json";

pub fn run(args: TrainArgs) -> CliResult<()> {
    let overrides = Overrides {
        seed: args.seed,
        mode: args.mode.map(Into::into),
        out: args.out,
    };
    let cfg = LoadedConfig::load(&args.config)?.resolve(&overrides)?;
    let out = cfg.out_dir()?.to_path_buf();
    create_dir(&out)?;
    cfg.copy_into(&out)?;
    let outcome = execute(&cfg, &out, args.resume.as_deref())?;
    match &outcome.report {
        Some(r) => println!(
            "step {}: changestar iou {:.4} f1 {:.4} | pcc iou {:.4} f1 {:.4}",
            outcome.step, r.methods.changestar.iou, r.methods.changestar.f1, r.methods.pcc.iou, r.methods.pcc.f1
        ),
        None => println!("step {}: checkpoint at {}", outcome.step, outcome.checkpoint.display()),
    }
    Ok(())
}

pub struct Outcome {
    pub step: usize,
    pub checkpoint: PathBuf,
    pub report: Option<CompareReport>,
}

/// Trains into `out` (metrics log, checkpoints, resolved config) and, when the
/// config names an eval set, writes the final comparison report there too.
pub fn execute(cfg: &LoadedConfig, out: &Path, resume: Option<&Path>) -> CliResult<Outcome> {
    let run = &cfg.run;
    write_resolved(run, out)?;
    let eval = run.data.eval.as_deref().map(load_bitemporal).transpose()?;
    let metrics = out.join(METRICS_FILE);
    let trainer = match resume {
        Some(ckpt) => Trainer::resume(run.train.clone(), ckpt)?,
        None => {
            if metrics.exists() {
                std::fs::remove_file(&metrics).map_err(|e| CliError::io(&metrics, e))?;
            }
            Trainer::new(run.train.clone(), ChangeStar::new(run.model.clone(), run.train.seed)?)?
        }
    };
    let mut trainer = trainer.with_output_dir(out)?;
    let train_root = cfg.train_path()?;
    match run.train.mode {
        TrainMode::Star => {
            let samples = load_single_temporal(train_root)?;
            trainer.run(TrainData::Single(&samples), eval.as_deref())?;
        }
        TrainMode::Bitemporal => {
            let pairs = load_bitemporal(train_root)?;
            trainer.run(TrainData::Bitemporal(&pairs), eval.as_deref())?;
        }
    }
    let checkpoint = out.join("checkpoints").join("final");
    if !checkpoint.exists() {
        trainer.save_checkpoint(&checkpoint)?;
    }
    let step = trainer.step();
    let report = match &eval {
        Some(pairs) => Some(final_report(trainer.into_model(), pairs, run, out)?),
        None => None,
    };
    Ok(Outcome {
        step,
        checkpoint,
        report,
    })
}

fn write_resolved(run: &RunConfig, out: &Path) -> CliResult<()> {
    let path = out.join(RESOLVED_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(run)?).map_err(|e| CliError::io(&path, e))
}

fn final_report(
    model: ChangeStar<f32>,
    pairs: &[BitemporalSample],
    run: &RunConfig,
    out: &Path,
) -> CliResult<CompareReport> {
    let curve: Vec<_> = read_log(&out.join(METRICS_FILE))?
        .iter()
        .filter_map(|r| r.curve_point())
        .collect();
    let mut head_model = model;
    let mut pcc_model = head_model.clone();
    let opts = ReportOptions {
        eval: run.train.eval,
        panels: run.report.panels,
        curve: (!curve.is_empty()).then_some(curve),
    };
    Ok(compare_report(
        &mut ChangeHead(&mut head_model),
        &mut Pcc(&mut pcc_model),
        pairs,
        out,
        &opts,
    )?)
}
