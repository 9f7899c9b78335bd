use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use star_core::datasets::load_bitemporal;
use star_core::evaluation::{
    compare_report, evaluate, ChangeHead, ChangePredictor, ConfusionCounts, EvalOptions, Pcc, ReportOptions,
    REPORT_FILE,
};
use star_core::model::ChangeStar;

use crate::config::create_dir;
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The ChangeMixin head.
    Changestar,
    /// Post-classification comparison of the two segmentation maps.
    Pcc,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory (holding `meta.json` and `weights.bin`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Bitemporal dataset root.
    #[arg(long)]
    pub data: PathBuf,
    /// Score one method; without it both are scored and compared.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Directory for the report; without it only the summary is printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sliding-window side; the whole image when absent.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Error-map panels to render (comparison mode only).
    #[arg(long, default_value_t = 4)]
    pub panels: usize,
}

/// Single-method report, written as `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEval {
    pub method: Method,
    pub checkpoint: PathBuf,
    pub eval_pairs: usize,
    pub options: EvalOptions,
    pub iou: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub per_pair: Vec<PairCounts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    pub id: String,
    pub counts: ConfusionCounts,
}

pub const METHOD_REPORT_FILE: &str = "eval.json";

pub fn run(args: EvalArgs) -> CliResult<()> {
    let opts = EvalOptions {
        window: args.window,
        stride: args.stride,
        threshold: args.threshold,
    };
    if !(0.0..1.0).contains(&opts.threshold) {
        return Err(CliError::Usage(format!("threshold {} is outside [0, 1)", opts.threshold)));
    }
    let (mut model, _) = ChangeStar::<f32>::from_checkpoint(&args.checkpoint)?;
    let pairs = load_bitemporal(&args.data)?;
    match args.method {
        Some(method) => {
            let report = evaluate_method(&mut model, method, &pairs, &opts, &args.checkpoint)?;
            println!("{method:?}: iou {:.4} f1 {:.4}", report.iou, report.f1);
            if let Some(out) = &args.out {
                create_dir(out)?;
                let path = out.join(METHOD_REPORT_FILE);
                std::fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| CliError::io(&path, e))?;
            }
        }
        None => {
            let mut pcc_model = model.clone();
            let (head, pcc) = match &args.out {
                Some(out) => {
                    create_dir(out)?;
                    let ropts = ReportOptions {
                        eval: opts,
                        panels: args.panels,
                        curve: None,
                    };
                    let r = compare_report(&mut ChangeHead(&mut model), &mut Pcc(&mut pcc_model), &pairs, out, &ropts)?;
                    log::info!("wrote {}", out.join(REPORT_FILE).display());
                    ((r.methods.changestar.iou, r.methods.changestar.f1), (r.methods.pcc.iou, r.methods.pcc.f1))
                }
                None => {
                    let h = evaluate_method(&mut model, Method::Changestar, &pairs, &opts, &args.checkpoint)?;
                    let p = evaluate_method(&mut pcc_model, Method::Pcc, &pairs, &opts, &args.checkpoint)?;
                    ((h.iou, h.f1), (p.iou, p.f1))
                }
            };
            println!(
                "changestar: iou {:.4} f1 {:.4} | pcc: iou {:.4} f1 {:.4}",
                head.0, head.1, pcc.0, pcc.1
            );
        }
    }
    Ok(())
}

pub fn evaluate_method(
    model: &mut ChangeStar<f32>,
    method: Method,
    pairs: &[star_core::datasets::BitemporalSample],
    opts: &EvalOptions,
    checkpoint: &Path,
) -> CliResult<MethodEval> {
    let mut predictor: Box<dyn ChangePredictor + '_> = match method {
        Method::Changestar => Box::new(ChangeHead(model)),
        Method::Pcc => Box::new(Pcc(model)),
    };
    let result = evaluate(predictor.as_mut(), pairs, opts, |_, _| Ok(()))?;
    Ok(MethodEval {
        method,
        checkpoint: checkpoint.to_path_buf(),
        eval_pairs: pairs.len(),
        options: *opts,
        iou: result.counts.iou(),
        f1: result.counts.f1(),
        counts: result.counts,
        per_pair: result
            .per_pair
            .into_iter()
            .map(|(id, counts)| PairCounts { id, counts })
            .collect(),
    })
}
