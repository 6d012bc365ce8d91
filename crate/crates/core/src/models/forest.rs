//! Random forests of CART trees on bootstrap resamples.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{argmax_lowest, grow_tree, DecisionTree, TrainingSet, TreeParams};
use crate::error::{Error, Result};
use crate::seed::{self, derive_seed};
use crate::spectra::SpectraMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features per split; `None` means `ceil(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { tree_count: 100, max_depth: None, min_leaf: 1, max_features: None, bootstrap: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub params: ForestParams,
    pub seed: u64,
}

impl ForestModel {
    /// Class voted by each tree.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.n_classes];
        for tree in &self.trees {
            votes[tree.predict_row(x) as usize] += 1;
        }
        votes
    }

    /// Majority vote; ties go to the lowest label.
    pub fn predict_row(&self, x: &[f64]) -> u32 {
        let votes: Vec<f64> = self.votes(x).into_iter().map(|v| v as f64).collect();
        argmax_lowest(&votes)
    }

    /// Fraction of trees voting for `class`.
    pub fn vote_fraction(&self, x: &[f64], class: u32) -> f64 {
        self.votes(x)[class as usize] as f64 / self.trees.len() as f64
    }

    /// Mean of the trees' leaf probabilities for `class`.
    pub fn mean_probability(&self, x: &[f64], class: u32) -> f64 {
        self.trees.iter().map(|t| t.predict_proba_row(x)[class as usize]).sum::<f64>() / self.trees.len() as f64
    }
}

/// Trains `tree_count` trees; tree `i` draws its bootstrap sample and its
/// per-split feature subsets from the sub-seed `derive_seed(seed, "tree/i")`,
/// so the result does not depend on how trees are scheduled.
pub fn fit_forest(train: &SpectraMatrix, params: ForestParams, seed: u64) -> Result<ForestModel> {
    if train.n_rows() < 2 {
        return Err(Error::InvalidArgument("a forest needs at least 2 samples".into()));
    }
    if params.tree_count == 0 {
        return Err(Error::InvalidArgument("tree_count must be positive".into()));
    }
    let data = TrainingSet::new(train)?;
    let n = data.n_samples;
    let max_features = params
        .max_features
        .unwrap_or_else(|| (data.n_features as f64).sqrt().ceil() as usize)
        .clamp(1, data.n_features.max(1));
    let tree_params = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf, max_features: Some(max_features) };
    let trees = (0..params.tree_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(derive_seed(seed, &format!("tree/{i}")));
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            grow_tree(&data, &weights, tree_params, Some(&mut rng))
        })
        .collect();
    Ok(ForestModel { trees, n_features: data.n_features, n_classes: data.n_classes, params, seed })
}
