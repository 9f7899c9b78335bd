use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use star_core::losses::LossFlags;
use star_core::pairing::LabelMode;

use crate::config::{create_dir, LoadedConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::train::execute;
use crate::ModeArg;

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Base run config; every grid point starts from it.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Seed for a single-seed sweep; `--seeds` takes precedence.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training seeds; medians over them are reported per grid point.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// ChangeMixin depths N.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    /// ChangeMixin widths d_c.
    #[arg(long, value_delimiter = ',')]
    pub width: Vec<usize>,
    /// Loss-flag rows: b (bare), c (+semantic), d (+symmetry), e (both).
    #[arg(long, value_delimiter = ',')]
    pub rows: Vec<char>,
    #[arg(long, value_delimiter = ',', value_parser = parse_label_mode)]
    pub label_mode: Vec<LabelMode>,
}

fn parse_label_mode(s: &str) -> Result<LabelMode, String> {
    match s {
        "xor" => Ok(LabelMode::Xor),
        "or" => Ok(LabelMode::Or),
        other => Err(format!("unknown label mode {other:?} (expected xor or or)")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub layers: usize,
    pub width: usize,
    /// `(b)` through `(e)`.
    pub row: String,
    pub label_mode: LabelMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub name: String,
    #[serde(flatten)]
    pub point: GridPoint,
    pub seed: u64,
    pub changestar_iou: f64,
    pub changestar_f1: f64,
    pub pcc_iou: f64,
    pub pcc_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    #[serde(flatten)]
    pub point: GridPoint,
    pub seeds: usize,
    pub median_iou: f64,
    pub median_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<SweepSummary>,
}

pub const SWEEP_FILE: &str = "sweep.json";
pub const SWEEP_TABLE_FILE: &str = "sweep.md";

pub fn run(args: AblateArgs) -> CliResult<()> {
    let base = LoadedConfig::load(&args.config)?.resolve(&Overrides {
        seed: args.seed,
        mode: args.mode.map(Into::into),
        out: args.out.clone(),
    })?;
    if base.run.data.eval.is_none() {
        return Err(CliError::Usage("ablation needs data.eval in the config".into()));
    }
    let out = base.out_dir()?.to_path_buf();
    create_dir(&out)?;
    base.copy_into(&out)?;

    let t = &base.run;
    let or_default = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
    let layers = or_default(&args.layers, t.model.mixin.layers);
    let widths = or_default(&args.width, t.model.mixin.width);
    let seeds = if args.seeds.is_empty() { vec![t.train.seed] } else { args.seeds.clone() };
    let labels = if args.label_mode.is_empty() { vec![t.train.label_mode] } else { args.label_mode.clone() };
    let rows = if args.rows.is_empty() {
        vec![t.train.loss]
    } else {
        args.rows
            .iter()
            .map(|&r| LossFlags::from_row(r).ok_or_else(|| CliError::Usage(format!("unknown ablation row {r:?}"))))
            .collect::<CliResult<Vec<_>>>()?
    };

    let mut runs = Vec::new();
    for &n in &layers {
        for &dc in &widths {
            for &flags in &rows {
                for &label in &labels {
                    for &seed in &seeds {
                        let mut cfg = base.clone();
                        cfg.run.model.mixin.layers = n;
                        cfg.run.model.mixin.width = dc;
                        cfg.run.train.loss = flags;
                        cfg.run.train.label_mode = label;
                        cfg.run.train.seed = seed;
                        let cfg = cfg.resolve(&Overrides::default())?;
                        let name = format!("N{n}_dc{dc}_{}_{}_s{seed}", flags.row(), label_name(label));
                        log::info!("ablation run {name}");
                        let dir = out.join("runs").join(&name);
                        create_dir(&dir)?;
                        let report = execute(&cfg, &dir, None)?
                            .report
                            .expect("eval set is present, so a report is written");
                        runs.push(SweepRun {
                            name,
                            point: GridPoint {
                                layers: n,
                                width: dc,
                                row: format!("({})", flags.row()),
                                label_mode: label,
                            },
                            seed,
                            changestar_iou: report.methods.changestar.iou,
                            changestar_f1: report.methods.changestar.f1,
                            pcc_iou: report.methods.pcc.iou,
                            pcc_f1: report.methods.pcc.f1,
                        });
                    }
                }
            }
        }
    }
    let sweep = Sweep {
        summary: summarize(&runs),
        runs,
    };
    let json = out.join(SWEEP_FILE);
    std::fs::write(&json, serde_json::to_string_pretty(&sweep)?).map_err(|e| CliError::io(&json, e))?;
    let table = render_table(&sweep);
    let md = out.join(SWEEP_TABLE_FILE);
    std::fs::write(&md, &table).map_err(|e| CliError::io(&md, e))?;
    print!("{table}");
    Ok(())
}

fn label_name(l: LabelMode) -> &'static str {
    match l {
        LabelMode::Xor => "xor",
        LabelMode::Or => "or",
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

fn summarize(runs: &[SweepRun]) -> Vec<SweepSummary> {
    let mut points: Vec<&GridPoint> = Vec::new();
    for r in runs {
        if !points.contains(&&r.point) {
            points.push(&r.point);
        }
    }
    points
        .into_iter()
        .map(|p| {
            let group: Vec<_> = runs.iter().filter(|r| &r.point == p).collect();
            let mut iou: Vec<f64> = group.iter().map(|r| r.changestar_iou).collect();
            let mut f1: Vec<f64> = group.iter().map(|r| r.changestar_f1).collect();
            SweepSummary {
                point: p.clone(),
                seeds: group.len(),
                median_iou: median(&mut iou),
                median_f1: median(&mut f1),
            }
        })
        .collect()
}

pub fn render_table(sweep: &Sweep) -> String {
    let mut s = String::new();
    s.push_str("| N | d_c | row | label | seeds | IoU (%) | F1 (%) |\n|---|---|---|---|---|---|---|\n");
    for r in &sweep.summary {
        let p = &r.point;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.2} | {:.2} |",
            p.layers,
            p.width,
            p.row,
            label_name(p.label_mode),
            r.seeds,
            100.0 * r.median_iou,
            100.0 * r.median_f1
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn label_modes_parse() {
        assert_eq!(parse_label_mode("xor"), Ok(LabelMode::Xor));
        assert_eq!(parse_label_mode("or"), Ok(LabelMode::Or));
        assert!(parse_label_mode("and").is_err());
    }

    #[test]
    fn summary_groups_seeds() {
        let point = |row: &str| GridPoint {
            layers: 4,
            width: 16,
            row: row.into(),
            label_mode: LabelMode::Xor,
        };
        let run = |row: &str, seed, iou| SweepRun {
            name: format!("{row}{seed}"),
            point: point(row),
            seed,
            changestar_iou: iou,
            changestar_f1: 2.0 * iou / (1.0 + iou),
            pcc_iou: 0.0,
            pcc_f1: 0.0,
        };
        let runs = vec![run("(b)", 0, 0.2), run("(b)", 1, 0.6), run("(b)", 2, 0.4), run("(e)", 0, 0.5)];
        let s = summarize(&runs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].point.row, "(b)");
        assert_eq!(s[0].seeds, 3);
        assert_eq!(s[0].median_iou, 0.4);
        assert_eq!(s[1].median_iou, 0.5);
        let table = render_table(&Sweep { runs, summary: s });
        assert!(table.contains("| 4 | 16 | (b) | xor | 3 | 40.00 |"), "{table}");
    }
}
