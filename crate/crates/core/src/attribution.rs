//! Exact path-dependent TreeSHAP for forests, and windowed attribution maps.
//!
//! Each tree is explained with the polynomial-time path algorithm: while
//! descending, the set of features met on the path is tracked together with
//! the fraction of training cover that flows down each branch ("zero"
//! fraction) and whether the explained sample follows it ("one" fraction).
//! At a leaf, every path feature receives its share of the leaf value via
//! the Shapley weights held in the path. Forest values are tree averages.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audits::windows;
use crate::error::{Error, Result};
use crate::evalharness::{evaluate, EvalPlan};
use crate::models::tree::{argmax_lowest, DecisionTree, TreeNode};
use crate::models::{fit_forest, ForestModel, ForestParams, ModelSpec};
use crate::seed::derive_seed;
use crate::spectra::SpectraMatrix;

/// Quantity being explained for the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapOutput {
    /// Fraction of trees voting for the class.
    #[default]
    VoteFraction,
    /// Mean leaf probability of the class.
    MeanProbability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub start: usize,
    pub width: usize,
    /// Cross-validated accuracy of the forest on this window.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub output: ShapOutput,
    pub positive_class: u32,
    /// Expected model output under the training cover.
    pub base_value: f64,
    /// Mean |SHAP| per feature.
    pub mean_abs: Vec<f64>,
    /// Column index in the original matrix for each feature.
    pub pixels: Vec<usize>,
    pub wavelengths: Option<Vec<f64>>,
    /// Model output per explained sample.
    pub predictions: Vec<f64>,
    /// Per-sample SHAP values, row-major `samples × features`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowInfo>,
}

impl AttributionMap {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns `pixel, wavelength, mean_abs_shap`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_maps_csv(std::slice::from_ref(self), writer)
    }
}

/// Several maps in one table with window columns.
pub fn write_maps_csv<W: Write>(maps: &[AttributionMap], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["window_start", "width", "pixel", "wavelength", "mean_abs_shap"])?;
    for map in maps {
        let (start, width) = map.window.as_ref().map_or((String::new(), String::new()), |wi| {
            (wi.start.to_string(), wi.width.to_string())
        });
        for (j, &pixel) in map.pixels.iter().enumerate() {
            let wl = map.wavelengths.as_ref().map(|a| a[j].to_string()).unwrap_or_default();
            w.write_record([start.clone(), width.clone(), pixel.to_string(), wl, map.mean_abs[j].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn leaf_value(probs: &[f64], output: ShapOutput, positive: u32) -> f64 {
    match output {
        ShapOutput::VoteFraction => f64::from(argmax_lowest(probs) == positive),
        ShapOutput::MeanProbability => probs.get(positive as usize).copied().unwrap_or(0.0),
    }
}

/// Tree output for `x` as explained by [`ShapOutput`].
pub fn tree_output(tree: &DecisionTree, x: &[f64], output: ShapOutput, positive: u32) -> f64 {
    leaf_value(tree.predict_proba_row(x), output, positive)
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let depth = path.len();
    path.push(PathElement { feature, zero, one, weight: if depth == 0 { 1.0 } else { 0.0 } });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let PathElement { one, zero, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * d1 / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement { one, zero, .. } = path[index];
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    total
}

struct TreeExplainer<'a> {
    tree: &'a DecisionTree,
    covers: Vec<f64>,
    output: ShapOutput,
    positive: u32,
}

impl TreeExplainer<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(&self, node: usize, x: &[f64], phi: &mut [f64], mut path: Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
        extend(&mut path, zero, one, feature);
        match &self.tree.nodes[node] {
            TreeNode::Leaf { probs, .. } => {
                let value = leaf_value(probs, self.output, self.positive);
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let e = path[i];
                    phi[e.feature.expect("non-root path element has a feature")] += w * (e.one - e.zero) * value;
                }
            }
            &TreeNode::Split { feature: f, threshold, left, right, .. } => {
                let (hot, cold) = if x[f] <= threshold { (left, right) } else { (right, left) };
                let cover = self.covers[node];
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
                    in_zero = path[k].zero;
                    in_one = path[k].one;
                    unwind(&mut path, k);
                }
                let hot_zero = self.covers[hot] / cover;
                let cold_zero = self.covers[cold] / cover;
                self.recurse(hot, x, phi, path.clone(), hot_zero * in_zero, in_one, Some(f));
                self.recurse(cold, x, phi, path, cold_zero * in_zero, 0.0, Some(f));
            }
        }
    }

    /// Cover-weighted mean of the leaf values.
    fn expected_value(&self) -> f64 {
        let root = self.covers[0];
        self.tree
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                TreeNode::Leaf { probs, .. } => Some(self.covers[i] / root * leaf_value(probs, self.output, self.positive)),
                TreeNode::Split { .. } => None,
            })
            .sum()
    }
}

fn explainer(tree: &DecisionTree, index: usize, output: ShapOutput, positive: u32) -> Result<TreeExplainer<'_>> {
    let covers = tree
        .nodes
        .iter()
        .enumerate()
        .map(|(node, n)| n.cover().filter(|c| *c > 0.0).ok_or(Error::MissingCover { tree: index, node }))
        .collect::<Result<Vec<_>>>()?;
    Ok(TreeExplainer { tree, covers, output, positive })
}

/// SHAP values of one tree for one sample, and the tree's expected output.
pub fn tree_shap_single(tree: &DecisionTree, x: &[f64], output: ShapOutput, positive: u32) -> Result<(Vec<f64>, f64)> {
    let ex = explainer(tree, 0, output, positive)?;
    let mut phi = vec![0.0; tree.n_features];
    ex.recurse(0, x, &mut phi, Vec::new(), 1.0, 1.0, None);
    Ok((phi, ex.expected_value()))
}

/// Vote-fraction SHAP for class 1 over every row of `data`.
pub fn tree_shap(forest: &ForestModel, data: &SpectraMatrix) -> Result<AttributionMap> {
    tree_shap_with(forest, data, ShapOutput::VoteFraction, 1, true)
}

/// SHAP values averaged over the forest's trees. Keeps per-sample values
/// when `keep_values`.
pub fn tree_shap_with(
    forest: &ForestModel,
    data: &SpectraMatrix,
    output: ShapOutput,
    positive_class: u32,
    keep_values: bool,
) -> Result<AttributionMap> {
    if data.n_rows() > 0 && data.n_cols() != forest.n_features {
        return Err(Error::DimensionMismatch { expected: forest.n_features, actual: data.n_cols() });
    }
    if forest.trees.is_empty() {
        return Err(Error::InvalidArgument("forest has no trees".into()));
    }
    let explainers = forest
        .trees
        .iter()
        .enumerate()
        .map(|(i, t)| explainer(t, i, output, positive_class))
        .collect::<Result<Vec<_>>>()?;
    let n_trees = explainers.len() as f64;
    let base_value = explainers.iter().map(|e| e.expected_value()).sum::<f64>() / n_trees;
    let n = forest.n_features;

    let per_sample: Vec<(Vec<f64>, f64)> = (0..data.n_rows())
        .into_par_iter()
        .map(|r| {
            let x = data.row(r);
            let mut phi = vec![0.0; n];
            let mut prediction = 0.0;
            for ex in &explainers {
                ex.recurse(0, x, &mut phi, Vec::new(), 1.0, 1.0, None);
                prediction += tree_output(ex.tree, x, output, positive_class);
            }
            phi.iter_mut().for_each(|p| *p /= n_trees);
            (phi, prediction / n_trees)
        })
        .collect();

    let mut mean_abs = vec![0.0; n];
    for (phi, _) in &per_sample {
        mean_abs.iter_mut().zip(phi).for_each(|(m, p)| *m += p.abs());
    }
    let rows = data.n_rows().max(1) as f64;
    mean_abs.iter_mut().for_each(|m| *m /= rows);
    let predictions = per_sample.iter().map(|s| s.1).collect();
    Ok(AttributionMap {
        output,
        positive_class,
        base_value,
        mean_abs,
        pixels: (0..n).collect(),
        wavelengths: data.axis().map(<[f64]>::to_vec),
        predictions,
        values: keep_values.then(|| per_sample.into_iter().map(|s| s.0).collect()),
        window: None,
    })
}

/// For every window of every width: the cross-validated forest accuracy,
/// then a forest refit on all rows of the window and explained on all rows.
/// Pixel positions are reported in the coordinates of `data`.
pub fn windowed_shap_map(
    data: &SpectraMatrix,
    widths: &[usize],
    params: ForestParams,
    plan: &EvalPlan,
    seed: u64,
) -> Result<Vec<AttributionMap>> {
    let tiles = windows(data.n_cols(), widths)?;
    let spec = ModelSpec::Forest(params);
    tiles
        .par_iter()
        .map(|&(start, width)| {
            let cols: Vec<usize> = (start..start + width).collect();
            let sub = data.select_columns(&cols);
            let window_seed = derive_seed(seed, &format!("window/{width}/{start}"));
            let accuracy = evaluate(&spec, &sub, &EvalPlan { seed: window_seed, ..*plan })?.mean;
            let forest = fit_forest(&sub, params, window_seed)?;
            let mut map = tree_shap_with(&forest, &sub, ShapOutput::VoteFraction, 1, false)?;
            map.pixels = cols;
            map.window = Some(WindowInfo { start, width, accuracy: Some(accuracy) });
            Ok(map)
        })
        .collect()
}
