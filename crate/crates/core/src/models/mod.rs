//! Classifiers, the variance-threshold oracle, and a common fit/predict front.

pub mod forest;
pub mod knn;
pub mod logistic;
pub mod oracle;
pub mod qda;
pub mod tree;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectraMatrix;

pub use forest::{fit_forest, ForestModel, ForestParams};
pub use knn::{fit_knn, KnnModel};
pub use logistic::{fit_logistic, LogisticModel};
pub use oracle::{oracle_accuracy_analytic, oracle_threshold, OracleThresholdModel};
pub use qda::{fit_qda, QdaModel};
pub use tree::{fit_tree, DecisionTree};

pub const DEFAULT_QDA_LAMBDA: f64 = 0.4;
pub const DEFAULT_TREE_DEPTH: usize = 5;

/// Model family plus hyperparameters, ready to be fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Qda { lambda: f64 },
    /// Not fitted from data; the dimension is taken from the training matrix.
    Oracle { mu: f64, sigma_a: f64, sigma_b: f64 },
    Logistic { l2: f64, max_iter: usize },
    Knn { k: usize },
    Tree { max_depth: Option<usize>, min_leaf: usize },
    Forest(ForestParams),
}

impl ModelSpec {
    pub fn qda() -> Self {
        ModelSpec::Qda { lambda: DEFAULT_QDA_LAMBDA }
    }

    pub fn logistic() -> Self {
        ModelSpec::Logistic { l2: logistic::DEFAULT_L2, max_iter: logistic::DEFAULT_MAX_ITER }
    }

    pub fn knn() -> Self {
        ModelSpec::Knn { k: knn::DEFAULT_K }
    }

    pub fn tree() -> Self {
        ModelSpec::Tree { max_depth: Some(DEFAULT_TREE_DEPTH), min_leaf: 1 }
    }

    pub fn forest() -> Self {
        ModelSpec::Forest(ForestParams::default())
    }

    /// Logistic regression, kNN, depth-5 tree and 100-tree forest.
    pub fn standard_four() -> Vec<ModelSpec> {
        vec![Self::logistic(), Self::knn(), Self::tree(), Self::forest()]
    }

    /// Default spec for a family name. The oracle has no defaults.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "qda" => Ok(Self::qda()),
            "logistic" | "logreg" | "lr" => Ok(Self::logistic()),
            "knn" => Ok(Self::knn()),
            "tree" | "dt" => Ok(Self::tree()),
            "forest" | "rf" => Ok(Self::forest()),
            other => Err(Error::InvalidSpec(format!("unknown model family {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Qda { .. } => "qda",
            ModelSpec::Oracle { .. } => "oracle",
            ModelSpec::Logistic { .. } => "logistic",
            ModelSpec::Knn { .. } => "knn",
            ModelSpec::Tree { .. } => "tree",
            ModelSpec::Forest(_) => "forest",
        }
    }

    /// Fits the model. `seed` is used by the forest only.
    pub fn fit(&self, train: &SpectraMatrix, seed: u64) -> Result<TrainedModel> {
        Ok(match *self {
            ModelSpec::Qda { lambda } => TrainedModel::Qda(fit_qda(train, lambda)?),
            ModelSpec::Oracle { mu, sigma_a, sigma_b } => {
                TrainedModel::Oracle(oracle_threshold(train.n_cols(), mu, sigma_a, sigma_b)?)
            }
            ModelSpec::Logistic { l2, max_iter } => TrainedModel::Logistic(fit_logistic(train, l2, max_iter)?),
            ModelSpec::Knn { k } => TrainedModel::Knn(fit_knn(train, k)?),
            ModelSpec::Tree { max_depth, min_leaf } => TrainedModel::Tree(fit_tree(train, max_depth, min_leaf)?),
            ModelSpec::Forest(params) => TrainedModel::Forest(fit_forest(train, params, seed)?),
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum TrainedModel {
    Qda(QdaModel),
    Oracle(OracleThresholdModel),
    Logistic(LogisticModel),
    Knn(KnnModel),
    Tree(DecisionTree),
    Forest(ForestModel),
}

const FORMAT_TAG: &str = "sepaudit-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument<M> {
    format: String,
    version: u32,
    model: M,
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedModel::Qda(_) => "qda",
            TrainedModel::Oracle(_) => "oracle",
            TrainedModel::Logistic(_) => "logistic",
            TrainedModel::Knn(_) => "knn",
            TrainedModel::Tree(_) => "tree",
            TrainedModel::Forest(_) => "forest",
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Qda(m) => m.n_features,
            TrainedModel::Oracle(m) => m.n,
            TrainedModel::Logistic(m) => m.n_features(),
            TrainedModel::Knn(m) => m.train.n_cols(),
            TrainedModel::Tree(m) => m.n_features,
            TrainedModel::Forest(m) => m.n_features,
        }
    }

    /// One label per row. An empty matrix gives an empty vector.
    pub fn predict(&self, data: &SpectraMatrix) -> Result<Vec<u32>> {
        if data.n_rows() == 0 {
            return Ok(Vec::new());
        }
        if data.n_cols() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), actual: data.n_cols() });
        }
        Ok(match self {
            TrainedModel::Qda(m) => m.predict(data)?,
            TrainedModel::Oracle(m) => m.predict(data)?,
            TrainedModel::Logistic(m) => data.rows().map(|r| m.predict_row(r)).collect(),
            TrainedModel::Knn(m) => m.predict(data),
            TrainedModel::Tree(m) => data.rows().map(|r| m.predict_row(r)).collect(),
            TrainedModel::Forest(m) => data.rows().map(|r| m.predict_row(r)).collect(),
        })
    }

    /// Versioned JSON document `{format, version, model}`.
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument { format: FORMAT_TAG.to_string(), version: FORMAT_VERSION, model: self };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument<TrainedModel> = serde_json::from_str(text)?;
        if doc.format != FORMAT_TAG || doc.version != FORMAT_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported model document {} v{}, expected {FORMAT_TAG} v{FORMAT_VERSION}",
                doc.format, doc.version
            )));
        }
        Ok(doc.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[u32], truth: &[u32]) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "prediction and label lengths differ");
    if truth.is_empty() {
        return f64::NAN;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}
