use serde::{Deserialize, Serialize};

use crate::datasets::AugmentationConfig;
use crate::error::{Result, StarError};
use crate::evaluation::EvalOptions;
use crate::losses::LossFlags;
use crate::pairing::LabelMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Pseudo pairs from single-temporal tiles.
    #[default]
    Star,
    /// Real co-registered pairs with change masks.
    Bitemporal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Semantic and change terms per the loss flags.
    #[default]
    Changestar,
    /// Semantic term only; the model is then used for post-classification
    /// comparison.
    Segmentation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub objective: Objective,
    pub max_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub poly_power: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub augmentation: AugmentationConfig,
    pub loss: LossFlags,
    pub label_mode: LabelMode,
    pub seed: u64,
    /// Evaluate every this many steps (and after the last); 0 disables.
    pub eval_every: usize,
    /// Write a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub eval: EvalOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Star,
            objective: Objective::Changestar,
            max_steps: 2000,
            batch_size: 8,
            lr: 0.03,
            poly_power: 0.9,
            momentum: 0.9,
            weight_decay: 1e-4,
            augmentation: AugmentationConfig {
                crop: 128,
                ..AugmentationConfig::default()
            },
            loss: LossFlags::default(),
            label_mode: LabelMode::Xor,
            seed: 0,
            eval_every: 200,
            checkpoint_every: 0,
            eval: EvalOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(StarError::Config(msg));
        if self.mode == TrainMode::Star && self.batch_size < 2 {
            return Err(StarError::InvalidBatch(format!(
                "star mode pairs samples within a batch and needs batch_size >= 2, got {}",
                self.batch_size
            )));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.poly_power > 0.0 && self.poly_power.is_finite()) {
            return bad(format!("poly_power must be positive, got {}", self.poly_power));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return bad(format!("eval.threshold must lie in (0, 1), got {}", self.eval.threshold));
        }
        if let (Some(w), Some(s)) = (self.eval.window, self.eval.stride) {
            if s == 0 || w < s {
                return bad(format!("eval window {w} must be >= stride {s} > 0"));
            }
        }
        if self.objective == Objective::Segmentation {
            if self.mode != TrainMode::Star {
                return bad("the segmentation objective trains on single-temporal tiles (mode = star)".into());
            }
            if !self.loss.use_semantic {
                return bad("the segmentation objective needs loss.use_semantic = true".into());
            }
        }
        self.augmentation.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorClass;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn star_batch_of_one_is_a_config_error() {
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.class(), ErrorClass::Config);
        let cfg = TrainConfig {
            batch_size: 1,
            mode: TrainMode::Bitemporal,
            ..TrainConfig::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_are_rejected() {
        for cfg in [
            TrainConfig { lr: 0.0, ..TrainConfig::default() },
            TrainConfig { poly_power: -1.0, ..TrainConfig::default() },
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig {
                objective: Objective::Segmentation,
                loss: LossFlags::new(false, true),
                ..TrainConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<TrainConfig>(r#"{"max_steps": 3, "lr0": 0.1}"#);
        assert!(err.is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"max_steps": 3, "loss": {"use_semantic": false, "use_symmetry": true}}"#).unwrap();
        assert_eq!(cfg.max_steps, 3);
        assert_eq!(cfg.batch_size, 8);
    }
}
