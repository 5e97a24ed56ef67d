use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::align::AlignParams;
use crate::augment::AugmentConfig;
use crate::dataset::{load_dataset, Dataset, DescriptionSource, SplitSpec};
use crate::synth::{generate_corpus, CorpusConfig};
use crate::tokenizer::TokenizerParams;

/// Environment variable that overrides [`ExperimentConfig::seed`].
pub const SEED_ENV: &str = "NARRATE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synth(CorpusConfig),
    Path(PathBuf),
}

fn d_pool() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Candidates per query: the gold description plus sampled distractors.
    #[serde(default = "d_pool")]
    pub pool_size: usize,
    #[serde(default)]
    pub description_source: DescriptionSource,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self { pool_size: d_pool(), description_source: DescriptionSource::default() }
    }
}

fn d_splits() -> Vec<SplitSpec> {
    vec![SplitSpec::cross_subject()]
}
fn d_reps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub tokenizer: TokenizerParams,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub alignment: AlignParams,
    #[serde(default)]
    pub retrieval: RetrievalParams,
    #[serde(default = "d_splits")]
    pub splits: Vec<SplitSpec>,
    #[serde(default = "d_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn synthetic(corpus: CorpusConfig, seed: u64) -> Self {
        Self {
            data: DataSource::Synth(corpus),
            tokenizer: TokenizerParams::default(),
            augment: AugmentConfig::default(),
            alignment: AlignParams::default(),
            retrieval: RetrievalParams::default(),
            splits: d_splits(),
            repetitions: 1,
            seed,
            output_dir: None,
        }
    }

    /// Reads a JSON config; a relative dataset path resolves against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let DataSource::Path(p) = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies the seed override from the environment, if set.
    pub fn with_env_seed(mut self) -> Result<Self, HarnessError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.tokenizer.k < 2 {
            return bad(format!("codebook size K={} must be at least 2", self.tokenizer.k));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.splits.is_empty() {
            return bad("at least one split is required".into());
        }
        if self.retrieval.pool_size == 0 {
            return bad("pool_size must be positive".into());
        }
        if self.alignment.text_dim == 0 {
            return bad("text_dim must be positive".into());
        }
        self.tokenizer.check().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.augment.check().map_err(|e| HarnessError::Config(e.to_string()))?;
        match &self.data {
            DataSource::Synth(c) => c.check().map_err(|e| HarnessError::Config(e.to_string())),
            DataSource::Path(p) if !p.exists() => bad(format!("dataset path {} does not exist", p.display())),
            DataSource::Path(_) => Ok(()),
        }
    }

    pub fn load_data(&self) -> Result<Dataset, HarnessError> {
        match &self.data {
            DataSource::Synth(c) => Ok(generate_corpus(c).map_err(|e| HarnessError::Config(e.to_string()))?.0),
            DataSource::Path(p) => load_dataset(p).map_err(|e| HarnessError::Data(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"data": {"synth": {"n_subjects": 4, "n_positions": 3, "n_primitives": 8, "segments_per_subject": 10, "seed": 7}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.tokenizer.k, 128);
        assert_eq!(cfg.retrieval.pool_size, 100);
        assert_eq!(cfg.alignment.lambda, 1.0);
        assert_eq!(cfg.splits, vec![SplitSpec::cross_subject()]);
        assert!(cfg.check().is_ok());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = ExperimentConfig::synthetic(CorpusConfig::new(2, 1, 4, 4, 1), 0);
        cfg.tokenizer.k = 1;
        assert!(cfg.check().is_err());
        cfg.tokenizer.k = 8;
        cfg.repetitions = 0;
        assert!(cfg.check().is_err());
        cfg.repetitions = 1;
        cfg.data = DataSource::Path("/nonexistent/dir".into());
        assert!(cfg.check().unwrap_err().to_string().contains("/nonexistent/dir"));
    }
}
