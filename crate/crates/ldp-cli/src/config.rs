//! Experiment configuration: a flat `key = value` text format with
//! exhaustive validation. Unknown and duplicate keys are rejected so typos
//! cannot silently fall back to defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// The central accounting delta is fixed; local mechanisms are pure-epsilon.
pub const CENTRAL_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    DataCollection,
    NovelClass,
    DataJoin,
    Benchmark,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::DataCollection => "data_collection",
            Task::NovelClass => "novel_class",
            Task::DataJoin => "data_join",
            Task::Benchmark => "benchmark",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Latent,
    Feature,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Latent => "latent",
            Level::Feature => "feature",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetSource {
    SyntheticDigits,
    SyntheticLoans,
    Idx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub train_size: usize,
    pub test_size: usize,
    /// IDX paths, used only when `source = idx`.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlmConfig {
    pub latent_dim: usize,
    pub clip_radius: f64,
    pub hidden: Vec<usize>,
    /// Fixed-scale pretraining budget; `None` learns the scale instead.
    pub epsilon_pretraining: Option<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConfig {
    pub noise_multiplier: f64,
    pub max_grad_norm: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClfConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub dataset: DatasetConfig,
    /// Local epsilon grid; `inf` marks the non-private ceiling cell.
    pub local_epsilons: Vec<f64>,
    /// Central training budget; infinity disables stage-two DP training.
    pub central_epsilon: f64,
    pub delta: f64,
    pub level: Level,
    /// Feature/label budget split: epsilon_x = lambda * epsilon.
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
    pub vlm: VlmConfig,
    pub dp: DpConfig,
    pub clf: ClfConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::DataCollection,
            dataset: DatasetConfig {
                source: DatasetSource::SyntheticDigits,
                train_size: 2000,
                test_size: 500,
                images: None,
                labels: None,
                test_images: None,
                test_labels: None,
            },
            local_epsilons: vec![1.0, 4.0, 10.0, f64::INFINITY],
            central_epsilon: f64::INFINITY,
            delta: CENTRAL_DELTA,
            level: Level::Latent,
            lambda: 0.9,
            trials: 3,
            seed: 1,
            vlm: VlmConfig {
                latent_dim: 8,
                clip_radius: 1.0,
                hidden: vec![32],
                epsilon_pretraining: Some(10.0),
                learning_rate: 1e-3,
                batch_size: 64,
                epochs: 12,
            },
            dp: DpConfig {
                noise_multiplier: 1.0,
                max_grad_norm: 1.0,
                batch_size: 64,
                learning_rate: 1e-3,
                max_epochs: 4,
            },
            clf: ClfConfig {
                hidden: vec![32],
                learning_rate: 3e-3,
                batch_size: 32,
                epochs: 30,
            },
        }
    }
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| CliError::validation(format!("{key}: expected a nonnegative integer, got {value:?}")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| CliError::validation(format!("{key}: expected a nonnegative integer, got {value:?}")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "infinity" => Ok(f64::INFINITY),
        other => other
            .parse()
            .map_err(|_| CliError::validation(format!("{key}: expected a number, got {value:?}"))),
    }
}

fn parse_float_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_float(key, v.trim()))
        .collect()
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| parse_usize(key, v.trim()))
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    /// Parse the flat `key = value` format. Lines starting with `#` are
    /// comments. Every key may appear at most once; unknown keys error.
    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::validation(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::validation(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
            config.apply(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => {
                self.task = match value {
                    "data_collection" => Task::DataCollection,
                    "novel_class" => Task::NovelClass,
                    "data_join" => Task::DataJoin,
                    "benchmark" => Task::Benchmark,
                    other => {
                        return Err(CliError::validation(format!(
                            "task: expected data_collection, novel_class, data_join or benchmark, got {other:?}"
                        )))
                    }
                }
            }
            "dataset.source" => {
                self.dataset.source = match value {
                    "synthetic_digits" => DatasetSource::SyntheticDigits,
                    "synthetic_loans" => DatasetSource::SyntheticLoans,
                    "idx" => DatasetSource::Idx,
                    other => {
                        return Err(CliError::validation(format!(
                            "dataset.source: expected synthetic_digits, synthetic_loans or idx, got {other:?}"
                        )))
                    }
                }
            }
            "dataset.train_size" => self.dataset.train_size = parse_usize(key, value)?,
            "dataset.test_size" => self.dataset.test_size = parse_usize(key, value)?,
            "dataset.images" => self.dataset.images = Some(PathBuf::from(value)),
            "dataset.labels" => self.dataset.labels = Some(PathBuf::from(value)),
            "dataset.test_images" => self.dataset.test_images = Some(PathBuf::from(value)),
            "dataset.test_labels" => self.dataset.test_labels = Some(PathBuf::from(value)),
            "local_epsilons" => self.local_epsilons = parse_float_list(key, value)?,
            "central_epsilon" => self.central_epsilon = parse_float(key, value)?,
            "delta" => self.delta = parse_float(key, value)?,
            "level" => {
                self.level = match value {
                    "latent" => Level::Latent,
                    "feature" => Level::Feature,
                    other => {
                        return Err(CliError::validation(format!(
                            "level: expected latent or feature, got {other:?}"
                        )))
                    }
                }
            }
            "lambda" => self.lambda = parse_float(key, value)?,
            "trials" => self.trials = parse_usize(key, value)?,
            "seed" => self.seed = parse_u64(key, value)?,
            "vlm.latent_dim" => self.vlm.latent_dim = parse_usize(key, value)?,
            "vlm.clip_radius" => self.vlm.clip_radius = parse_float(key, value)?,
            "vlm.hidden" => self.vlm.hidden = parse_usize_list(key, value)?,
            "vlm.epsilon_pretraining" => {
                self.vlm.epsilon_pretraining = if value == "learned" {
                    None
                } else {
                    Some(parse_float(key, value)?)
                }
            }
            "vlm.learning_rate" => self.vlm.learning_rate = parse_float(key, value)?,
            "vlm.batch_size" => self.vlm.batch_size = parse_usize(key, value)?,
            "vlm.epochs" => self.vlm.epochs = parse_usize(key, value)?,
            "dp.noise_multiplier" => self.dp.noise_multiplier = parse_float(key, value)?,
            "dp.max_grad_norm" => self.dp.max_grad_norm = parse_float(key, value)?,
            "dp.batch_size" => self.dp.batch_size = parse_usize(key, value)?,
            "dp.learning_rate" => self.dp.learning_rate = parse_float(key, value)?,
            "dp.max_epochs" => self.dp.max_epochs = parse_usize(key, value)?,
            "clf.hidden" => self.clf.hidden = parse_usize_list(key, value)?,
            "clf.learning_rate" => self.clf.learning_rate = parse_float(key, value)?,
            "clf.batch_size" => self.clf.batch_size = parse_usize(key, value)?,
            "clf.epochs" => self.clf.epochs = parse_usize(key, value)?,
            other => {
                return Err(CliError::validation(format!("unknown config key {other:?}")))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta != CENTRAL_DELTA {
            return Err(CliError::validation(format!(
                "delta must be {CENTRAL_DELTA} (central accounting target), got {}",
                self.delta
            )));
        }
        if self.local_epsilons.is_empty() {
            return Err(CliError::validation("local_epsilons must be nonempty"));
        }
        for &e in &self.local_epsilons {
            if !(e > 0.0) {
                return Err(CliError::validation(format!(
                    "local epsilons must be positive, got {e}"
                )));
            }
        }
        if !(self.central_epsilon > 0.0) {
            return Err(CliError::validation("central_epsilon must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(CliError::validation(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.trials == 0 {
            return Err(CliError::validation("trials must be at least 1"));
        }
        if self.dataset.train_size == 0 || self.dataset.test_size == 0 {
            return Err(CliError::validation("dataset sizes must be positive"));
        }
        if self.dataset.source == DatasetSource::Idx {
            for (name, path) in [
                ("dataset.images", &self.dataset.images),
                ("dataset.labels", &self.dataset.labels),
                ("dataset.test_images", &self.dataset.test_images),
                ("dataset.test_labels", &self.dataset.test_labels),
            ] {
                if path.is_none() {
                    return Err(CliError::validation(format!(
                        "dataset.source = idx requires {name}"
                    )));
                }
            }
        }
        if self.vlm.latent_dim == 0 {
            return Err(CliError::validation("vlm.latent_dim must be positive"));
        }
        if !(self.vlm.clip_radius > 0.0) {
            return Err(CliError::validation("vlm.clip_radius must be positive"));
        }
        if let Some(e) = self.vlm.epsilon_pretraining {
            if !(e > 0.0) || !e.is_finite() {
                return Err(CliError::validation(
                    "vlm.epsilon_pretraining must be positive and finite (or the word learned)",
                ));
            }
        }
        for (name, lr, bs, epochs) in [
            ("vlm", self.vlm.learning_rate, self.vlm.batch_size, self.vlm.epochs),
            ("dp", self.dp.learning_rate, self.dp.batch_size, self.dp.max_epochs),
            ("clf", self.clf.learning_rate, self.clf.batch_size, self.clf.epochs),
        ] {
            if !(lr > 0.0) {
                return Err(CliError::validation(format!("{name}.learning_rate must be positive")));
            }
            if bs == 0 || epochs == 0 {
                return Err(CliError::validation(format!(
                    "{name} batch size and epoch count must be positive"
                )));
            }
        }
        if !(self.dp.noise_multiplier > 0.0) {
            return Err(CliError::validation("dp.noise_multiplier must be positive"));
        }
        if !(self.dp.max_grad_norm > 0.0) {
            return Err(CliError::validation("dp.max_grad_norm must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_validated_defaults() {
        let c = ExperimentConfig::from_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn keys_apply_and_comments_are_ignored() {
        let c = ExperimentConfig::from_str(
            "# an experiment\ntask = novel_class\nlocal_epsilons = 0.5, 4, inf\n\
             central_epsilon = 5\nvlm.hidden = 64,32\nvlm.epsilon_pretraining = learned\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(c.task, Task::NovelClass);
        assert_eq!(c.local_epsilons, vec![0.5, 4.0, f64::INFINITY]);
        assert_eq!(c.central_epsilon, 5.0);
        assert_eq!(c.vlm.hidden, vec![64, 32]);
        assert_eq!(c.vlm.epsilon_pretraining, None);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_str("tsak = data_collection\n").unwrap_err();
        assert!(err.to_string().contains("unknown config key"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = ExperimentConfig::from_str("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn wrong_delta_is_rejected() {
        let err = ExperimentConfig::from_str("delta = 1e-6\n").unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
    }

    #[test]
    fn nonpositive_epsilon_is_rejected() {
        assert!(ExperimentConfig::from_str("local_epsilons = 1, 0\n").is_err());
        assert!(ExperimentConfig::from_str("local_epsilons = -2\n").is_err());
    }

    #[test]
    fn idx_source_requires_paths() {
        let err = ExperimentConfig::from_str("dataset.source = idx\n").unwrap_err();
        assert!(err.to_string().contains("dataset.images"), "{err}");
    }

    #[test]
    fn malformed_line_names_its_number() {
        let err = ExperimentConfig::from_str("task data_collection\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
