use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::evaluation::{CurvePoint, Scores};

pub const METRICS_FILE: &str = "metrics.jsonl";

/// One line of the metrics log. `step` counts completed optimizer steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum LogRecord {
    Train {
        step: usize,
        lr: f64,
        seg: f64,
        change: f64,
        total: f64,
    },
    /// Change head and post-classification comparison from the same model's
    /// semantic head, on the evaluation pairs.
    Eval {
        step: usize,
        changestar: Scores,
        pcc: Scores,
    },
}

impl LogRecord {
    pub fn step(&self) -> usize {
        match self {
            LogRecord::Train { step, .. } | LogRecord::Eval { step, .. } => *step,
        }
    }

    pub fn curve_point(&self) -> Option<CurvePoint> {
        match *self {
            LogRecord::Eval { step, changestar, pcc } => Some(CurvePoint { step, changestar, pcc }),
            LogRecord::Train { .. } => None,
        }
    }
}

pub(crate) struct LogWriter {
    file: File,
    path: std::path::PathBuf,
}

impl LogWriter {
    pub(crate) fn append(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| StarError::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StarError::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub(crate) fn write(&mut self, record: &LogRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| StarError::io(&self.path, e))
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| StarError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(StarError::from))
        .collect()
}
