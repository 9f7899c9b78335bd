use std::path::{Path, PathBuf};

use ndarray::{Array3, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use star_nn::{Parameters, Sgd};

use super::config::{Objective, TrainConfig, TrainMode};
use super::log::{LogRecord, LogWriter, METRICS_FILE};
use super::poly_lr;
use crate::datasets::{augment, augment_pair, stack_images, stack_masks, BitemporalSample, Sample};
use crate::error::{Result, StarError};
use crate::evaluation::{evaluate_counts, ChangeHead, Pcc};
use crate::losses::{bce_with_grad, total_loss, LossBreakdown, LossFlags, LossTargets};
use crate::model::{load_checkpoint, read_meta, save_checkpoint, Architecture, ChangeStar, Mode, OutputGrads};
use crate::pairing::{assign_change_labels, Derangement};

/// Environment variable selecting the number of augmentation workers.
pub const NUM_WORKERS_ENV: &str = "STAR_NUM_WORKERS";

/// Loader worker count from [`NUM_WORKERS_ENV`], defaulting to the number of
/// available cores.
pub fn num_workers() -> Result<usize> {
    match std::env::var(NUM_WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(StarError::Config(format!("{NUM_WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum TrainData<'a> {
    Single(&'a [Sample]),
    Bitemporal(&'a [BitemporalSample]),
}

impl TrainData<'_> {
    fn len(&self) -> usize {
        match self {
            TrainData::Single(s) => s.len(),
            TrainData::Bitemporal(p) => p.len(),
        }
    }
}

/// A training run: model, optimizer state and step counter.
pub struct Trainer {
    cfg: TrainConfig,
    model: ChangeStar<f32>,
    optimizer: Sgd<f32>,
    step: usize,
    records: Vec<LogRecord>,
    out_dir: Option<PathBuf>,
    log: Option<LogWriter>,
    pool: rayon::ThreadPool,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(num_workers()?)
        .build()
        .map_err(|e| StarError::Config(format!("cannot start loader workers: {e}")))
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: ChangeStar<f32>) -> Result<Self> {
        cfg.validate()?;
        let optimizer = Sgd::new(cfg.momentum as f32, cfg.weight_decay as f32);
        Ok(Self {
            cfg,
            model,
            optimizer,
            step: 0,
            records: Vec::new(),
            out_dir: None,
            log: None,
            pool: thread_pool()?,
        })
    }

    /// Continues a run from a checkpoint written by [`Trainer::save_checkpoint`].
    /// The configuration must equal the one the checkpoint was trained with.
    pub fn resume(cfg: TrainConfig, checkpoint: &Path) -> Result<Self> {
        cfg.validate()?;
        let meta = read_meta(checkpoint)?;
        if meta.config != serde_json::to_value(&cfg)? {
            return Err(StarError::Config(
                "resume configuration differs from the checkpoint's configuration".into(),
            ));
        }
        let mut model = ChangeStar::new(meta.architecture.clone(), cfg.seed)?;
        let (meta, buffers) = load_checkpoint(checkpoint, &mut model)?;
        let mut trainer = Self::new(cfg, model)?;
        if meta.step > trainer.cfg.max_steps {
            return Err(StarError::Checkpoint(format!(
                "checkpoint step {} is past max_steps {}",
                meta.step, trainer.cfg.max_steps
            )));
        }
        trainer.step = meta.step;
        trainer.optimizer.set_buffers(buffers.unwrap_or_default());
        Ok(trainer)
    }

    /// Appends the metrics log to `<dir>/metrics.jsonl` and writes
    /// checkpoints under `<dir>/checkpoints/`.
    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        self.log = Some(LogWriter::append(&dir.join(METRICS_FILE))?);
        self.out_dir = Some(dir);
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn model(&self) -> &ChangeStar<f32> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut ChangeStar<f32> {
        &mut self.model
    }

    pub fn into_model(self) -> ChangeStar<f32> {
        self.model
    }

    /// Records produced by this trainer instance (not those of a resumed
    /// run's earlier segment).
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn save_checkpoint(&mut self, dir: &Path) -> Result<()> {
        save_checkpoint(
            dir,
            &mut self.model,
            serde_json::to_value(&self.cfg)?,
            self.step,
            self.cfg.seed,
            Some(self.optimizer.buffers()),
        )?;
        Ok(())
    }

    fn check_data(&self, data: TrainData<'_>) -> Result<()> {
        match (self.cfg.mode, data) {
            (TrainMode::Star, TrainData::Single(samples)) => {
                if let Some(s) = samples.iter().find(|s| s.mask.is_none()) {
                    return Err(StarError::Ingestion {
                        id: s.id.clone(),
                        reason: "star training needs a building mask for every tile".into(),
                    });
                }
            }
            (TrainMode::Bitemporal, TrainData::Bitemporal(_)) => {}
            (mode, _) => {
                return Err(StarError::Config(format!("training data does not match mode {mode:?}")));
            }
        }
        if data.len() == 0 {
            return Err(StarError::EmptyDataset("training set".into()));
        }
        if data.len() < self.cfg.batch_size {
            return Err(StarError::EmptyDataset(format!(
                "training set has {} samples, fewer than batch_size {}",
                data.len(),
                self.cfg.batch_size
            )));
        }
        Ok(())
    }

    /// Trains until `max_steps`, evaluating on `eval` at the configured cadence.
    pub fn run(&mut self, data: TrainData<'_>, eval: Option<&[BitemporalSample]>) -> Result<()> {
        self.run_until(data, eval, self.cfg.max_steps)
    }

    /// Trains until `step == until` (clamped to `max_steps`).
    pub fn run_until(&mut self, data: TrainData<'_>, eval: Option<&[BitemporalSample]>, until: usize) -> Result<()> {
        let until = until.min(self.cfg.max_steps);
        if self.step >= until {
            return Ok(());
        }
        self.check_data(data)?;
        let use_semantic = match data {
            TrainData::Bitemporal(pairs) => {
                let has = pairs.iter().all(|p| p.semantic_t1.is_some() && p.semantic_t2.is_some());
                if self.cfg.loss.use_semantic && !has {
                    log::warn!("bitemporal data has no semantic masks; training without the semantic term");
                }
                self.cfg.loss.use_semantic && has
            }
            TrainData::Single(_) => self.cfg.loss.use_semantic,
        };
        let flags = LossFlags {
            use_semantic,
            ..self.cfg.loss
        };
        while self.step < until {
            let breakdown = self.train_step(data, flags)?;
            let lr = poly_lr(self.step, self.cfg.max_steps, self.cfg.lr, self.cfg.poly_power)?;
            self.step += 1;
            self.emit(LogRecord::Train {
                step: self.step,
                lr,
                seg: breakdown.seg,
                change: breakdown.change,
                total: breakdown.total,
            })?;
            let last = self.step == self.cfg.max_steps;
            if self.step.is_multiple_of(100) || last {
                log::info!(
                    "step {}/{}: loss {:.4} (seg {:.4}, change {:.4}), lr {lr:.5}",
                    self.step,
                    self.cfg.max_steps,
                    breakdown.total,
                    breakdown.seg,
                    breakdown.change
                );
            }
            if let Some(pairs) = eval {
                if self.cfg.eval_every > 0 && (self.step.is_multiple_of(self.cfg.eval_every) || last) {
                    self.evaluate(pairs)?;
                }
            }
            if let Some(dir) = self.out_dir.clone() {
                if self.cfg.checkpoint_every > 0 && self.step.is_multiple_of(self.cfg.checkpoint_every) {
                    self.save_checkpoint(&dir.join("checkpoints").join(format!("step_{:06}", self.step)))?;
                }
                if last {
                    self.save_checkpoint(&dir.join("checkpoints").join("final"))?;
                }
            }
        }
        Ok(())
    }

    fn emit(&mut self, record: LogRecord) -> Result<()> {
        if let Some(log) = &mut self.log {
            log.write(&record)?;
        }
        self.records.push(record);
        Ok(())
    }

    /// Evaluates the change head and PCC from the same model and logs both.
    pub fn evaluate(&mut self, pairs: &[BitemporalSample]) -> Result<()> {
        let opts = self.cfg.eval;
        let changestar = evaluate_counts(&mut ChangeHead(&mut self.model), pairs, &opts)?.scores();
        let pcc = evaluate_counts(&mut Pcc(&mut self.model), pairs, &opts)?.scores();
        log::info!(
            "step {}: changestar iou {:.4} f1 {:.4} | pcc iou {:.4} f1 {:.4}",
            self.step,
            changestar.iou,
            changestar.f1,
            pcc.iou,
            pcc.f1
        );
        self.emit(LogRecord::Eval {
            step: self.step,
            changestar,
            pcc,
        })
    }

    fn step_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.step as u64);
        rng
    }

    fn train_step(&mut self, data: TrainData<'_>, flags: LossFlags) -> Result<LossBreakdown> {
        let mut rng = self.step_rng();
        let picks = index::sample(&mut rng, data.len(), self.cfg.batch_size).into_vec();
        let seeds: Vec<u64> = picks.iter().map(|_| rng.random()).collect();
        let aug = &self.cfg.augmentation;
        let lr = poly_lr(self.step, self.cfg.max_steps, self.cfg.lr, self.cfg.poly_power)?;

        let (breakdown, grads) = match data {
            TrainData::Single(samples) => {
                let batch: Vec<Sample> = self.pool.install(|| {
                    picks
                        .par_iter()
                        .zip(&seeds)
                        .map(|(&i, &s)| augment(&samples[i], aug, &mut ChaCha8Rng::seed_from_u64(s)))
                        .collect::<Result<_>>()
                })?;
                let x = stack_images(batch.iter().map(|s| &s.image))?;
                let y = stack_masks(batch.iter().map(|s| s.mask.as_ref().expect("checked")))?;
                match self.cfg.objective {
                    Objective::Segmentation => {
                        let seg = self.model.forward_segmentation(&x, Mode::Train)?;
                        let (loss, g) = bce_with_grad(&seg, &y, 1.0)?;
                        let grads = OutputGrads {
                            seg_t1: Some(g),
                            seg_t2: None,
                            change_forward: None,
                            change_backward: None,
                        };
                        (LossBreakdown::new(loss, 0.0), grads)
                    }
                    Objective::Changestar => {
                        let perm = Derangement::sample(x.len_of(Axis(0)), &mut rng)?;
                        let y2: Array3<u8> = y.select(Axis(0), perm.as_slice());
                        let y_change = assign_change_labels(&y, &y2, self.cfg.label_mode)?;
                        let out = self.model.forward_pseudo(&x, &perm, Mode::Train)?;
                        let targets = LossTargets {
                            semantic: Some((&y, &y2)),
                            change: &y_change,
                        };
                        total_loss(&out, targets, flags)?
                    }
                }
            }
            TrainData::Bitemporal(pairs) => {
                let batch: Vec<BitemporalSample> = self.pool.install(|| {
                    picks
                        .par_iter()
                        .zip(&seeds)
                        .map(|(&i, &s)| augment_pair(&pairs[i], aug, &mut ChaCha8Rng::seed_from_u64(s)))
                        .collect::<Result<_>>()
                })?;
                let x1 = stack_images(batch.iter().map(|p| &p.image_t1))?;
                let x2 = stack_images(batch.iter().map(|p| &p.image_t2))?;
                let change = stack_masks(batch.iter().map(|p| &p.change))?;
                let semantic = if flags.use_semantic {
                    Some((
                        stack_masks(batch.iter().map(|p| p.semantic_t1.as_ref().expect("checked")))?,
                        stack_masks(batch.iter().map(|p| p.semantic_t2.as_ref().expect("checked")))?,
                    ))
                } else {
                    None
                };
                let out = self.model.forward_pair(&x1, &x2, Mode::Train)?;
                let targets = LossTargets {
                    semantic: semantic.as_ref().map(|(a, b)| (a, b)),
                    change: &change,
                };
                total_loss(&out, targets, flags)?
            }
        };
        if !breakdown.is_finite() {
            return Err(StarError::NonFinite {
                step: self.step,
                seg: breakdown.seg,
                change: breakdown.change,
            });
        }
        self.model.zero_grad();
        self.model.backward(&grads)?;
        self.optimizer.step(&mut self.model, lr as f32);
        Ok(breakdown)
    }
}

/// Trains a fresh model in STAR mode and returns it with its log.
pub fn train_star(
    cfg: TrainConfig,
    architecture: Architecture,
    data: &[Sample],
    eval: Option<&[BitemporalSample]>,
) -> Result<(ChangeStar<f32>, Vec<LogRecord>)> {
    if cfg.mode != TrainMode::Star {
        return Err(StarError::Config("train_star needs mode = star".into()));
    }
    let model = ChangeStar::new(architecture, cfg.seed)?;
    let mut trainer = Trainer::new(cfg, model)?;
    trainer.run(TrainData::Single(data), eval)?;
    let records = trainer.records.clone();
    Ok((trainer.into_model(), records))
}

/// Trains a fresh model on real bitemporal pairs.
pub fn train_bitemporal(
    cfg: TrainConfig,
    architecture: Architecture,
    data: &[BitemporalSample],
    eval: Option<&[BitemporalSample]>,
) -> Result<(ChangeStar<f32>, Vec<LogRecord>)> {
    if cfg.mode != TrainMode::Bitemporal {
        return Err(StarError::Config("train_bitemporal needs mode = bitemporal".into()));
    }
    let model = ChangeStar::new(architecture, cfg.seed)?;
    let mut trainer = Trainer::new(cfg, model)?;
    trainer.run(TrainData::Bitemporal(data), eval)?;
    let records = trainer.records.clone();
    Ok((trainer.into_model(), records))
}
