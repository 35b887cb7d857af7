//! Self-describing JSON checkpoint: model, imputation model, vocabulary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::predictor::model::{ModelRegistry, RiskModel};
use crate::predictor::train::TrainReport;
use crate::uncertainty::imputation::ImputationModel;

pub const FORMAT: &str = "sepsislab-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Model registry key.
    pub kind: String,
    pub vocabulary_hash: String,
    pub vocabulary: Vocabulary,
    pub model: serde_json::Value,
    pub imputation: ImputationModel,
    /// Patients held out from training, for evaluation.
    #[serde(default)]
    pub holdout: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_report: Option<TrainReport>,
}

/// A checkpoint ready to serve predictions.
#[derive(Debug)]
pub struct Loaded {
    pub model: Box<dyn RiskModel>,
    pub imputation: ImputationModel,
    pub vocabulary: Vocabulary,
    pub holdout: Vec<String>,
    pub train_report: Option<TrainReport>,
}

impl Checkpoint {
    pub fn new(model: &dyn RiskModel, imputation: ImputationModel, vocabulary: &Vocabulary) -> Result<Self> {
        imputation.check_vocabulary(vocabulary)?;
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: model.kind().into(),
            vocabulary_hash: vocabulary.hash(),
            vocabulary: vocabulary.clone(),
            model: model.to_json()?,
            imputation,
            holdout: Vec::new(),
            train_report: None,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let c: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint: format {:?}", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", c.version)));
        }
        if c.vocabulary.hash() != c.vocabulary_hash {
            return Err(Error::Checkpoint("embedded vocabulary does not match its hash".into()));
        }
        Ok(c)
    }

    /// Instantiates the model against `vocab`, refusing a different vocabulary.
    pub fn load(self, vocab: &Vocabulary, registry: &ModelRegistry) -> Result<Loaded> {
        let found = vocab.hash();
        if found != self.vocabulary_hash {
            return Err(Error::VocabularyMismatch {
                expected: self.vocabulary_hash,
                found,
            });
        }
        self.imputation.check_vocabulary(vocab)?;
        let model = registry.load(&self.kind, self.model)?;
        if model.n_variables() != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "model expects {} variables, vocabulary has {}",
                model.n_variables(),
                vocab.len()
            )));
        }
        Ok(Loaded {
            model,
            imputation: self.imputation,
            vocabulary: self.vocabulary,
            holdout: self.holdout,
            train_report: self.train_report,
        })
    }

    /// Loads against the embedded vocabulary.
    pub fn load_self(self, registry: &ModelRegistry) -> Result<Loaded> {
        let vocab = self.vocabulary.clone();
        self.load(&vocab, registry)
    }
}
