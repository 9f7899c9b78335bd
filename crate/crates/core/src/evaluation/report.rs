//! Error maps, learning-curve plots and the JSON comparison report.
//!
//! `report.json` keys: `eval_pairs`, `options`, `methods.{changestar,pcc}`
//! (`iou`, `f1`, `counts`), `delta` (changestar minus pcc), `per_pair`,
//! `error_maps` (paths relative to the report) and `learning_curve`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::{evaluate, ChangePredictor, ConfusionCounts, EvalOptions, Scores};
use crate::datasets::BitemporalSample;
use crate::error::{Result, StarError};

pub const REPORT_FILE: &str = "report.json";

const TP: Rgb<u8> = Rgb([0, 200, 0]);
const FP: Rgb<u8> = Rgb([220, 0, 0]);
const FN: Rgb<u8> = Rgb([0, 0, 230]);
const TN: Rgb<u8> = Rgb([0, 0, 0]);
const GAP: Rgb<u8> = Rgb([128, 128, 128]);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorCategory {
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

impl ErrorCategory {
    pub fn of(pred: u8, truth: u8) -> Self {
        match (pred != 0, truth != 0) {
            (true, true) => Self::TruePositive,
            (true, false) => Self::FalsePositive,
            (false, true) => Self::FalseNegative,
            (false, false) => Self::TrueNegative,
        }
    }

    /// TP green, FP red, FN blue, TN black.
    pub fn color(self) -> Rgb<u8> {
        match self {
            Self::TruePositive => TP,
            Self::FalsePositive => FP,
            Self::FalseNegative => FN,
            Self::TrueNegative => TN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap(pub Array2<ErrorCategory>);

impl ErrorMap {
    pub fn new(pred: &Array2<u8>, truth: &Array2<u8>) -> Result<Self> {
        if pred.dim() != truth.dim() {
            return Err(StarError::contract(format!(
                "prediction {:?} and truth {:?} differ in shape",
                pred.dim(),
                truth.dim()
            )));
        }
        Ok(Self(ndarray::Zip::from(pred).and(truth).map_collect(|&p, &t| ErrorCategory::of(p, t))))
    }

    pub fn to_image(&self) -> RgbImage {
        let (h, w) = self.0.dim();
        RgbImage::from_fn(w as u32, h as u32, |x, y| self.0[[y as usize, x as usize]].color())
    }
}

pub fn render_error_map(pred: &Array2<u8>, truth: &Array2<u8>) -> Result<RgbImage> {
    Ok(ErrorMap::new(pred, truth)?.to_image())
}

fn rgb_tile(image: &Array3<f32>) -> RgbImage {
    let (c, h, w) = image.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| (image[[ch.min(c - 1), y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    })
}

fn mask_tile(mask: &Array2<u8>) -> RgbImage {
    let (h, w) = mask.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        if mask[[y as usize, x as usize]] != 0 {
            Rgb([255, 255, 255])
        } else {
            TN
        }
    })
}

/// Tiles side by side with a 2-pixel gray separator.
fn hstack(tiles: &[RgbImage]) -> RgbImage {
    let gap = 2;
    let h = tiles.iter().map(|t| t.height()).max().unwrap_or(0);
    let w = tiles.iter().map(|t| t.width()).sum::<u32>() + gap * tiles.len().saturating_sub(1) as u32;
    let mut out = RgbImage::from_pixel(w, h, GAP);
    let mut x0 = 0;
    for t in tiles {
        image::imageops::replace(&mut out, t, i64::from(x0), 0);
        x0 += t.width() + gap;
    }
    out
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| StarError::io(parent, e))?;
    }
    img.save(path).map_err(|source| StarError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// One evaluation point of the dual learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub changestar: Scores,
    pub pcc: Scores,
}

/// IoU of the change head (orange) and of PCC from the same model's
/// semantic head (blue) against training step, on a `[0, 1]` axis.
pub fn render_learning_curve(points: &[CurvePoint]) -> RgbImage {
    let (w, h, m) = (640u32, 400u32, 40u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let (pw, ph) = (w - 2 * m, h - 2 * m);
    for x in m..=m + pw {
        img.put_pixel(x, m + ph, Rgb([0, 0, 0]));
    }
    for y in m..=m + ph {
        img.put_pixel(m, y, Rgb([0, 0, 0]));
    }
    for k in 1..=4 {
        let y = m + ph - ph * k / 4;
        for x in (m + 1..=m + pw).step_by(4) {
            img.put_pixel(x, y, Rgb([200, 200, 200]));
        }
    }
    let max_step = points.iter().map(|p| p.step).max().unwrap_or(0).max(1) as f64;
    let to_px = |step: usize, v: f64| {
        let x = m as f64 + pw as f64 * step as f64 / max_step;
        let y = (m + ph) as f64 - ph as f64 * v.clamp(0.0, 1.0);
        (x, y)
    };
    let series: [(Metric, Rgb<u8>); 2] = [
        (|p| p.changestar.iou, Rgb([230, 120, 0])),
        (|p| p.pcc.iou, Rgb([40, 90, 200])),
    ];
    for (value, color) in series {
        for pair in points.windows(2) {
            let a = to_px(pair[0].step, value(&pair[0]));
            let b = to_px(pair[1].step, value(&pair[1]));
            draw_line(&mut img, a, b, color);
        }
        for p in points {
            let (x, y) = to_px(p.step, value(p));
            for dx in -2i64..=2 {
                for dy in -2i64..=2 {
                    put(&mut img, x as i64 + dx, y as i64 + dy, color);
                }
            }
        }
    }
    img
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

type Metric = fn(&CurvePoint) -> f64;

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        put(img, x.round() as i64, y.round() as i64, c);
        put(img, x.round() as i64, y.round() as i64 + 1, c);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub iou: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

impl From<ConfusionCounts> for MethodReport {
    fn from(counts: ConfusionCounts) -> Self {
        Self {
            iou: counts.iou(),
            f1: counts.f1(),
            counts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Methods {
    pub changestar: MethodReport,
    pub pcc: MethodReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub id: String,
    pub changestar: ConfusionCounts,
    pub pcc: ConfusionCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub eval_pairs: usize,
    pub options: EvalOptions,
    pub methods: Methods,
    /// ChangeStar minus PCC.
    pub delta: Scores,
    pub per_pair: Vec<PairReport>,
    pub error_maps: Vec<String>,
    pub learning_curve: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ReportOptions {
    pub eval: EvalOptions,
    /// Number of pairs rendered as error-map panels
    /// (`t1 | t2 | truth | changestar | pcc`).
    pub panels: usize,
    pub curve: Option<Vec<CurvePoint>>,
}

/// Evaluates both methods on the same pairs and writes `report.json` plus
/// PNGs into `out_dir`.
pub fn compare_report(
    changestar: &mut dyn ChangePredictor,
    pcc: &mut dyn ChangePredictor,
    pairs: &[BitemporalSample],
    out_dir: &Path,
    opts: &ReportOptions,
) -> Result<CompareReport> {
    let mut kept: Vec<Array2<u8>> = Vec::new();
    let star = evaluate(changestar, pairs, &opts.eval, |_, pred| {
        if kept.len() < opts.panels {
            kept.push(pred.clone());
        }
        Ok(())
    })?;
    let mut error_maps = Vec::new();
    let mut index = 0;
    let base = evaluate(pcc, pairs, &opts.eval, |pair, pred| {
        if index < kept.len() {
            let panel = hstack(&[
                rgb_tile(&pair.image_t1),
                rgb_tile(&pair.image_t2),
                mask_tile(&pair.change),
                render_error_map(&kept[index], &pair.change)?,
                render_error_map(pred, &pair.change)?,
            ]);
            let rel = PathBuf::from("error_maps").join(format!("{}.png", pair.id));
            save_png(&panel, &out_dir.join(&rel))?;
            error_maps.push(rel.to_string_lossy().into_owned());
        }
        index += 1;
        Ok(())
    })?;

    let learning_curve = match &opts.curve {
        Some(points) if !points.is_empty() => {
            let rel = "learning_curve.png";
            save_png(&render_learning_curve(points), &out_dir.join(rel))?;
            Some(rel.to_string())
        }
        _ => None,
    };

    let methods = Methods {
        changestar: star.counts.into(),
        pcc: base.counts.into(),
    };
    let report = CompareReport {
        eval_pairs: pairs.len(),
        options: opts.eval,
        delta: Scores {
            iou: methods.changestar.iou - methods.pcc.iou,
            f1: methods.changestar.f1 - methods.pcc.f1,
        },
        methods,
        per_pair: star
            .per_pair
            .iter()
            .zip(&base.per_pair)
            .map(|((id, a), (_, b))| PairReport {
                id: id.clone(),
                changestar: *a,
                pcc: *b,
            })
            .collect(),
        error_maps,
        learning_curve,
    };
    fs::create_dir_all(out_dir).map_err(|e| StarError::io(out_dir, e))?;
    let path = out_dir.join(REPORT_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(|e| StarError::io(path, e))?;
    Ok(report)
}
