use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AugmentEvent, AugmentationSpec, Batch, StepSeeds};
use crate::error::{Error, Result};

/// Ordered augmentation steps, optionally with a default master seed.
///
/// ```toml
/// seed = 7
///
/// [[steps]]
/// kind = "geometric"
///
/// [[steps]]
/// kind = "organ_transplantation"
/// p = 0.8
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub steps: Vec<AugmentationSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub step: usize,
    pub kind: String,
    #[serde(flatten)]
    pub event: AugmentEvent,
}

/// Everything a pipeline run did, in step order.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AugmentLog {
    pub entries: Vec<LogEntry>,
}

impl AugmentLog {
    pub fn skipped(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e.event, AugmentEvent::Skipped { .. }))
            .count()
    }
}

impl Pipeline {
    pub fn new(steps: Vec<AugmentationSpec>) -> Self {
        Self { seed: None, steps }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("pipeline: {}", e.message())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("pipeline: {e}")))
    }

    /// Reads a `.json` or `.toml` pipeline document.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline serializes")
    }

    /// Runs every step in order, in place. Step `i` draws from streams derived
    /// from `(master seed, i, image index)`.
    pub fn apply(&self, batch: &mut Batch, master_seed: u64) -> Result<AugmentLog> {
        let mut log = AugmentLog::default();
        for (step, spec) in self.steps.iter().enumerate() {
            let seeds = StepSeeds::new(spec.seed().unwrap_or(master_seed), step as u64);
            let events = spec.apply(batch, seeds)?;
            let kind = spec.kind().name();
            for event in events {
                if let AugmentEvent::Skipped { image, reason } = &event {
                    log::warn!("step {step} ({kind}): image {image} skipped: {reason}");
                }
                log.entries.push(LogEntry {
                    step,
                    kind: kind.to_string(),
                    event,
                });
            }
        }
        Ok(log)
    }
}

/// Pure form of [`Pipeline::apply`]: returns an augmented copy of `batch`.
pub fn compose(pipeline: &Pipeline, batch: &Batch, master_seed: u64) -> Result<(Batch, AugmentLog)> {
    let mut out = batch.clone();
    let log = pipeline.apply(&mut out, master_seed)?;
    Ok((out, log))
}
