//! STAR and bitemporal training with SGD, momentum and a poly schedule.
//!
//! Every step derives its randomness from `(seed, step)`: the step stream
//! picks the batch, one seed per sample drives augmentation and the same
//! stream then draws the pairing permutation. Batches therefore do not
//! depend on the number of loader workers, and a run resumed from a
//! checkpoint replays exactly what the uninterrupted run would have done.

mod config;
mod log;
mod trainer;

pub use config::{Objective, TrainConfig, TrainMode};
pub use log::{read_log, LogRecord, METRICS_FILE};
pub use trainer::{num_workers, train_bitemporal, train_star, TrainData, Trainer, NUM_WORKERS_ENV};

use crate::error::{Result, StarError};

/// `lr0 * (1 - step / max_steps)^power`.
pub fn poly_lr(step: usize, max_steps: usize, lr0: f64, power: f64) -> Result<f64> {
    if step > max_steps {
        return Err(StarError::contract(format!("step {step} is past max_steps {max_steps}")));
    }
    if max_steps == 0 {
        return Ok(lr0);
    }
    Ok(lr0 * (1.0 - step as f64 / max_steps as f64).powf(power))
}
