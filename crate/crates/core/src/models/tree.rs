//! CART classification trees (Gini impurity, axis-aligned splits).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::spectra::SpectraMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted training samples reaching the node.
        #[serde(default)]
        cover: Option<f64>,
    },
    Leaf {
        probs: Vec<f64>,
        #[serde(default)]
        cover: Option<f64>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> Option<f64> {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }
}

/// A fitted tree. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
    pub n_classes: usize,
    pub max_depth: Option<usize>,
}

impl DecisionTree {
    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { .. } => return node,
            }
        }
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { probs, .. } => probs,
            TreeNode::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> u32 {
        argmax_lowest(self.predict_proba_row(x))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Features used by at least one split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_leaf: 1, max_features: None }
    }
}

/// Read-only training view shared by the trees of a forest.
pub(crate) struct TrainingSet<'a> {
    /// Column-major values, `columns[f * n_samples + i]`.
    pub columns: Vec<f64>,
    pub labels: &'a [u32],
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

impl<'a> TrainingSet<'a> {
    pub fn new(data: &'a SpectraMatrix) -> Result<Self> {
        let labels = data.label_ids()?;
        let n_classes = data.labels().map_or(0, |l| l.names().len()).max(1);
        Ok(TrainingSet {
            columns: data.to_column_major(),
            labels,
            n_samples: data.n_rows(),
            n_features: data.n_cols(),
            n_classes,
        })
    }

    #[inline]
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.columns[feature * self.n_samples + sample]
    }
}

struct Builder<'t, 'a> {
    data: &'t TrainingSet<'a>,
    weights: &'t [f64],
    params: TreeParams,
    rng: Option<&'t mut Rng>,
    nodes: Vec<TreeNode>,
    order: Vec<(f64, usize)>,
    feature_pool: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_, '_> {
    fn class_weights(&self, samples: &[usize]) -> Vec<f64> {
        let mut w = vec![0.0; self.data.n_classes];
        for &s in samples {
            w[self.data.labels[s] as usize] += self.weights[s];
        }
        w
    }

    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let class_w = self.class_weights(&samples);
        let total: f64 = class_w.iter().sum();
        let id = self.nodes.len();
        let leaf = TreeNode::Leaf { probs: class_w.iter().map(|w| w / total).collect(), cover: Some(total) };
        self.nodes.push(leaf);

        let pure = class_w.iter().filter(|&&w| w > 0.0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        let min_leaf = self.params.min_leaf.max(1);
        if pure || depth_reached || samples.len() < 2 * min_leaf {
            return id;
        }
        let Some(best) = self.find_split(&samples, &class_w, total) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&s| self.data.value(s, best.feature) <= best.threshold);
        drop(samples);
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left: l, right: r, cover: Some(total) };
        id
    }

    fn is_constant(&self, samples: &[usize], feature: usize) -> bool {
        let first = self.data.value(samples[0], feature);
        samples.iter().all(|&s| self.data.value(s, feature) == first)
    }

    /// Candidate features in ascending order.
    fn candidates(&mut self, samples: &[usize]) -> Vec<usize> {
        let n = self.data.n_features;
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < n => {
                // Draw features in random order; constant ones are skipped and
                // do not count towards k.
                self.feature_pool.clear();
                self.feature_pool.extend(0..n);
                self.feature_pool.shuffle(rng);
                let pool = std::mem::take(&mut self.feature_pool);
                let mut chosen = Vec::with_capacity(k);
                for &f in &pool {
                    if chosen.len() == k {
                        break;
                    }
                    if !self.is_constant(samples, f) {
                        chosen.push(f);
                    }
                }
                self.feature_pool = pool;
                chosen.sort_unstable();
                chosen
            }
            _ => (0..n).collect(),
        }
    }

    fn find_split(&mut self, samples: &[usize], class_w: &[f64], total: f64) -> Option<BestSplit> {
        let min_leaf = self.params.min_leaf.max(1);
        let n_classes = self.data.n_classes;
        let mut best: Option<BestSplit> = None;
        let mut left_w = vec![0.0; n_classes];
        for feature in self.candidates(samples) {
            self.order.clear();
            self.order.extend(samples.iter().map(|&s| (self.data.value(s, feature), s)));
            self.order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            left_w.iter_mut().for_each(|w| *w = 0.0);
            let mut left_total = 0.0;
            let m = self.order.len();
            for i in 0..m - 1 {
                let (v, s) = self.order[i];
                let w = self.weights[s];
                left_w[self.data.labels[s] as usize] += w;
                left_total += w;
                let next = self.order[i + 1].0;
                if !(v < next) || i + 1 < min_leaf || m - i - 1 < min_leaf {
                    continue;
                }
                let right_total = total - left_total;
                if left_total <= 0.0 || right_total <= 0.0 {
                    continue;
                }
                // maximise Σ_c wl_c²/W_L + Σ_c wr_c²/W_R  (== minimise weighted Gini)
                let mut sl = 0.0;
                let mut sr = 0.0;
                for c in 0..n_classes {
                    let r = class_w[c] - left_w[c];
                    sl += left_w[c] * left_w[c];
                    sr += r * r;
                }
                let score = sl / left_total + sr / right_total;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit { feature, threshold, score });
                }
            }
        }
        best
    }
}

/// Grows one tree on the samples with positive weight.
pub(crate) fn grow_tree(
    data: &TrainingSet<'_>,
    weights: &[f64],
    params: TreeParams,
    rng: Option<&mut Rng>,
) -> DecisionTree {
    let samples: Vec<usize> = (0..data.n_samples).filter(|&s| weights[s] > 0.0).collect();
    let mut builder = Builder {
        data,
        weights,
        params,
        rng,
        nodes: Vec::new(),
        order: Vec::with_capacity(samples.len()),
        feature_pool: Vec::new(),
    };
    builder.build(samples, 0);
    DecisionTree { nodes: builder.nodes, n_features: data.n_features, n_classes: data.n_classes, max_depth: params.max_depth }
}

/// Greedy CART on every feature. Ties between equally good splits go to the
/// lowest feature index, then the lowest threshold.
pub fn fit_tree(train: &SpectraMatrix, max_depth: Option<usize>, min_leaf: usize) -> Result<DecisionTree> {
    if train.n_rows() == 0 {
        return Err(Error::Empty("tree training set".into()));
    }
    let data = TrainingSet::new(train)?;
    let weights = vec![1.0; data.n_samples];
    Ok(grow_tree(&data, &weights, TreeParams { max_depth, min_leaf, max_features: None }, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Labels;

    fn labelled(rows: &[Vec<f64>], ids: &[u32]) -> SpectraMatrix {
        SpectraMatrix::from_rows(rows)
            .unwrap()
            .with_labels(Labels::new(ids.to_vec(), vec!["a".into(), "b".into()]).unwrap())
            .unwrap()
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let data = labelled(&[vec![1.0], vec![2.0], vec![3.0]], &[1, 1, 1]);
        let tree = fit_tree(&data, None, 1).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict_row(&[10.0]), 1);
    }

    #[test]
    fn threshold_separable_data_gives_one_split() {
        let xs = [0.3, -1.0, 2.5, 4.0, 7.5, 1.1, 6.0, 5.2];
        let ids: Vec<u32> = xs.iter().map(|&x| u32::from(x > 3.0)).collect();
        // brute force: some threshold between sorted values separates the labels
        let mut sorted: Vec<(f64, u32)> = xs.iter().copied().zip(ids.iter().copied()).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let separable = (1..sorted.len()).any(|k| sorted[..k].iter().all(|p| p.1 == 0) && sorted[k..].iter().all(|p| p.1 == 1));
        assert!(separable);

        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let data = labelled(&rows, &ids);
        let tree = fit_tree(&data, Some(5), 1).unwrap();
        assert_eq!(tree.depth(), 1);
        match &tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(*threshold, (2.5 + 4.0) / 2.0),
            TreeNode::Leaf { .. } => panic!("expected a split"),
        }
        let acc = rows.iter().zip(&ids).filter(|(r, &y)| tree.predict_row(r) == y).count();
        assert_eq!(acc, rows.len());
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // columns 0 and 2 identical and perfectly informative
        let rows = vec![vec![0.0, 5.0, 0.0], vec![1.0, 4.0, 1.0], vec![0.0, 6.0, 0.0], vec![1.0, 5.0, 1.0]];
        let data = labelled(&rows, &[0, 1, 0, 1]);
        let tree = fit_tree(&data, None, 1).unwrap();
        assert!(matches!(tree.nodes[0], TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn max_depth_respected_and_covers_consistent() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i * 3 % 11) as f64]).collect();
        let ids: Vec<u32> = (0..40).map(|i| (i % 3 == 0) as u32).collect();
        let tree = fit_tree(&labelled(&rows, &ids), Some(2), 1).unwrap();
        assert!(tree.depth() <= 2);
        for node in &tree.nodes {
            match node {
                TreeNode::Split { left, right, cover, .. } => {
                    let sum = tree.nodes[*left].cover().unwrap() + tree.nodes[*right].cover().unwrap();
                    assert_eq!(cover.unwrap(), sum);
                }
                TreeNode::Leaf { probs, .. } => assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12),
            }
        }
    }

    #[test]
    fn constant_feature_never_split() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![3.0, i as f64]).collect();
        let ids: Vec<u32> = (0..20).map(|i| (i % 2) as u32).collect();
        let tree = fit_tree(&labelled(&rows, &ids), None, 1).unwrap();
        assert_eq!(tree.used_features(), vec![1]);
    }
}
