//! Run configuration files (TOML, or JSON when the extension is `.json`).
//!
//! ```toml
//! out = "runs/star"          # optional; --out overrides
//!
//! [data]
//! train = "data/train"       # single-temporal root (star) or bitemporal root
//! eval = "data/eval"         # optional bitemporal root
//!
//! [model]
//! backbone = "fpn-lite"
//! backbone_config = { base_width = 16, feature_channels = 32 }
//! mixin = { layers = 4, width = 16 }
//!
//! [train]
//! max_steps = 2000
//! batch_size = 8
//!
//! [report]
//! panels = 4
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use star_core::model::{Architecture, ChangeStar};
use star_core::training::{TrainConfig, TrainMode};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub model: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Error-map panels written next to the final report.
    pub panels: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { panels: 4 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<TrainMode>,
    pub out: Option<PathBuf>,
}

/// A parsed config together with its original text, kept for provenance.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub run: RunConfig,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut run: RunConfig = parse(path, &text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        resolve(&mut run.out);
        resolve(&mut run.data.train);
        resolve(&mut run.data.eval);
        Ok(Self {
            path: path.to_path_buf(),
            text,
            run,
        })
    }

    /// Applies overrides, then validates the whole document, including
    /// building the model once so a bad architecture fails before any I/O.
    pub fn resolve(mut self, overrides: &Overrides) -> CliResult<Self> {
        if let Some(seed) = overrides.seed {
            self.run.train.seed = seed;
        }
        if let Some(mode) = overrides.mode {
            self.run.train.mode = mode;
        }
        if let Some(out) = &overrides.out {
            self.run.out = Some(out.clone());
        }
        let schema = |e: star_core::StarError| CliError::ConfigFile {
            path: self.path.clone(),
            message: e.to_string(),
        };
        self.run.train.validate().map_err(schema)?;
        self.run.model.mixin.validate().map_err(schema)?;
        ChangeStar::<f32>::new(self.run.model.clone(), self.run.train.seed).map_err(schema)?;
        Ok(self)
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.run
            .out
            .as_deref()
            .ok_or_else(|| CliError::Usage("no output directory: set `out` in the config or pass --out".into()))
    }

    pub fn train_path(&self) -> CliResult<&Path> {
        self.run
            .data
            .train
            .as_deref()
            .ok_or_else(|| CliError::Usage("config has no data.train".into()))
    }

    /// Writes the file as read, byte for byte, as `<dir>/config.<ext>`.
    pub fn copy_into(&self, dir: &Path) -> CliResult<PathBuf> {
        let ext = self.path.extension().and_then(|e| e.to_str()).unwrap_or("toml");
        let dest = dir.join(format!("config.{ext}"));
        std::fs::write(&dest, &self.text).map_err(|e| CliError::io(&dest, e))?;
        Ok(dest)
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Parses any serde document by extension.
pub fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    let message = if is_json(path) {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    message.map_err(|message| CliError::ConfigFile {
        path: path.to_path_buf(),
        message,
    })
}

pub fn read_document<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok((parse(path, &text)?, text))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LoadedConfig::load(&write(dir.path(), "c.toml", "")).unwrap();
        assert_eq!(cfg.run, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let dir = tempfile::tempdir().unwrap();
        for text in [
            "bogus = 1",
            "[data]\ntrain_dir = \"x\"",
            "[train]\nlearning_rate = 0.1",
            "[train.augmentation]\nflip = true",
            "[model.mixin]\ndepth = 2",
            "[model.backbone_config]\nwidth = 2",
        ] {
            let p = write(dir.path(), "c.toml", text);
            let err = LoadedConfig::load(&p).and_then(|c| c.resolve(&Overrides::default())).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn semantic_validation_runs_before_work() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.toml", "[train]\nbatch_size = 1\n");
        let err = LoadedConfig::load(&p).unwrap().resolve(&Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("batch"), "{err}");
    }

    #[test]
    fn relative_paths_follow_the_file_and_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.json",
            r#"{"out": "o", "data": {"train": "t", "eval": "/abs/e"}, "train": {"seed": 3}}"#,
        );
        let cfg = LoadedConfig::load(&p).unwrap();
        assert_eq!(cfg.run.out.as_deref(), Some(dir.path().join("o").as_path()));
        assert_eq!(cfg.run.data.train.as_deref(), Some(dir.path().join("t").as_path()));
        assert_eq!(cfg.run.data.eval.as_deref(), Some(Path::new("/abs/e")));
        let cfg = cfg
            .resolve(&Overrides {
                seed: Some(9),
                mode: Some(TrainMode::Bitemporal),
                out: Some("/elsewhere".into()),
            })
            .unwrap();
        assert_eq!(cfg.run.train.seed, 9);
        assert_eq!(cfg.run.train.mode, TrainMode::Bitemporal);
        assert_eq!(cfg.out_dir().unwrap(), Path::new("/elsewhere"));
    }

    #[test]
    fn copy_is_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let text = "# comment kept\n[train]\nmax_steps   =  0\n";
        let cfg = LoadedConfig::load(&write(dir.path(), "run.toml", text)).unwrap();
        let out = dir.path().join("out");
        create_dir(&out).unwrap();
        let dest = cfg.copy_into(&out).unwrap();
        assert_eq!(std::fs::read_to_string(dest).unwrap(), text);
    }
}
