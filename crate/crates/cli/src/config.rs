//! TOML run configuration. Unknown keys are rejected everywhere so typos
//! fail loudly instead of silently using defaults.

use mrnet_core::analytics::{ForestConfig, LogRegConfig};
use mrnet_core::catalog::CatalogSpec;
use mrnet_core::crosslingual::CrossAEConfig;
use mrnet_core::embeddings::Word2VecConfig;
use mrnet_core::multitask::TrainConfig;
use mrnet_core::projector::SparseAEConfig;
use mrnet_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub mrnet_checkpoint: Option<PathBuf>,
    pub loss_curve: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub agnostic_checkpoint: Option<PathBuf>,
    pub agnostic_embeddings: Option<PathBuf>,
    pub region_b_embeddings: Option<PathBuf>,
    pub crosslang_checkpoint: Option<PathBuf>,
    pub crosslang_embeddings: Option<PathBuf>,
    pub eval_report: Option<PathBuf>,
    pub train_split: Option<PathBuf>,
    pub test_split: Option<PathBuf>,
    pub stable_features: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// product embedding dimension; the encoder runs d/2 units per direction
    pub d: usize,
    pub cell: String,
    pub max_len: usize,
    /// TF-IDF dimension used as the decoding target
    pub decode_dim: usize,
    pub min_df: usize,
    pub decode_task: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 32,
            cell: "lstm".to_string(),
            max_len: 32,
            decode_dim: 256,
            min_df: 1,
            decode_task: "decode".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub t_h: f64,
    pub train_fraction: f64,
    /// forests trained for the importance-overlap statistic
    pub runs: usize,
    /// TF-IDF baseline dimension
    pub tfidf_dim: usize,
    pub min_df: usize,
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 5,
            t_h: 0.2,
            train_fraction: 0.7,
            runs: 5,
            tfidf_dim: 1000,
            min_df: 1,
            logreg: LogRegConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosslangSection {
    #[serde(flatten)]
    pub train: CrossAEConfig,
    /// noise added when synthesizing the second region
    pub noise: f64,
}

impl Default for CrosslangSection {
    fn default() -> Self {
        CrosslangSection {
            train: CrossAEConfig::default(),
            noise: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub catalog: CatalogSpec,
    pub model: ModelConfig,
    pub word2vec: Word2VecConfig,
    pub mrnet: TrainConfig,
    pub agnostic: SparseAEConfig,
    pub crosslang: CrosslangSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::config(format!("config is not UTF-8: {e}")))?;
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.d == 0 || self.model.d % 2 != 0 {
            return Err(Error::config(format!(
                "model.d must be a positive even number, got {}",
                self.model.d
            )));
        }
        if self.model.cell != "lstm" && self.model.cell != "rnn" {
            return Err(Error::config(format!(
                "model.cell must be \"lstm\" or \"rnn\", got {:?}",
                self.model.cell
            )));
        }
        if self.model.decode_dim == 0 {
            return Err(Error::config("model.decode_dim must be positive"));
        }
        self.catalog.validate()?;
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn resolve(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit
            .clone()
            .unwrap_or_else(|| self.out_dir().join(default_name))
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.resolve(&self.paths.catalog, "catalog.jsonl")
    }
    pub fn tasks_path(&self) -> PathBuf {
        self.resolve(&self.paths.tasks, "tasks.txt")
    }
    pub fn word_vectors_path(&self) -> PathBuf {
        self.resolve(&self.paths.word_vectors, "words.vec")
    }
    pub fn mrnet_checkpoint_path(&self) -> PathBuf {
        self.resolve(&self.paths.mrnet_checkpoint, "mrnet.ckpt")
    }
    pub fn loss_curve_path(&self) -> PathBuf {
        self.resolve(&self.paths.loss_curve, "loss.csv")
    }
    pub fn embeddings_path(&self) -> PathBuf {
        self.resolve(&self.paths.embeddings, "products.emb")
    }
    pub fn agnostic_checkpoint_path(&self) -> PathBuf {
        self.resolve(&self.paths.agnostic_checkpoint, "agnostic.ckpt")
    }
    pub fn agnostic_embeddings_path(&self) -> PathBuf {
        self.resolve(&self.paths.agnostic_embeddings, "agnostic.emb")
    }
    pub fn region_b_embeddings_path(&self) -> PathBuf {
        self.resolve(&self.paths.region_b_embeddings, "region_b.emb")
    }
    pub fn crosslang_checkpoint_path(&self) -> PathBuf {
        self.resolve(&self.paths.crosslang_checkpoint, "crosslang.ckpt")
    }
    pub fn crosslang_embeddings_path(&self) -> PathBuf {
        self.resolve(&self.paths.crosslang_embeddings, "crosslang.emb")
    }
    pub fn eval_report_path(&self) -> PathBuf {
        self.resolve(&self.paths.eval_report, "eval.csv")
    }
    pub fn train_split_path(&self) -> PathBuf {
        self.resolve(&self.paths.train_split, "train.jsonl")
    }
    pub fn test_split_path(&self) -> PathBuf {
        self.resolve(&self.paths.test_split, "test.jsonl")
    }
    pub fn stable_features_path(&self) -> PathBuf {
        self.resolve(&self.paths.stable_features, "stable.txt")
    }
}
