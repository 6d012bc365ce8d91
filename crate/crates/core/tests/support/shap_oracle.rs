//! Random small forests and exact Shapley values by coalition enumeration.
#![allow(dead_code)]

use proptest::prelude::*;

use sepaudit::attribution::ShapOutput;
use sepaudit::models::tree::TreeNode;
use sepaudit::models::{DecisionTree, ForestModel, ForestParams};
use sepaudit::SpectraMatrix;

pub const TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Slot {
    pub feature: usize,
    pub threshold: f64,
    pub p1: f64,
    pub cover: u32,
    pub leaf: bool,
}

pub fn slot(features: usize) -> impl Strategy<Value = Slot> {
    (0..features, -1.0..1.0f64, prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0..1.0f64], 1u32..20, any::<bool>())
        .prop_map(|(feature, threshold, p1, cover, leaf)| Slot { feature, threshold, p1, cover, leaf })
}

/// Builds a tree of depth at most `max_depth` from heap-ordered slots.
pub fn build(slots: &[Slot], n_features: usize, max_depth: usize) -> DecisionTree {
    fn grow(slots: &[Slot], heap: usize, depth: usize, max_depth: usize, nodes: &mut Vec<TreeNode>) -> (usize, f64) {
        let s = &slots[heap];
        let id = nodes.len();
        if depth == max_depth || s.leaf {
            let cover = f64::from(s.cover);
            nodes.push(TreeNode::Leaf { probs: vec![1.0 - s.p1, s.p1], cover: Some(cover) });
            return (id, cover);
        }
        nodes.push(TreeNode::Leaf { probs: vec![], cover: None });
        let (left, cl) = grow(slots, 2 * heap + 1, depth + 1, max_depth, nodes);
        let (right, cr) = grow(slots, 2 * heap + 2, depth + 1, max_depth, nodes);
        nodes[id] = TreeNode::Split { feature: s.feature, threshold: s.threshold, left, right, cover: Some(cl + cr) };
        (id, cl + cr)
    }
    let mut nodes = Vec::new();
    grow(slots, 0, 0, max_depth, &mut nodes);
    DecisionTree { nodes, n_features, n_classes: 2, max_depth: Some(max_depth) }
}

pub fn forest_of(trees: Vec<DecisionTree>, n_features: usize) -> ForestModel {
    ForestModel { trees, n_features, n_classes: 2, params: ForestParams::default(), seed: 0 }
}

pub fn leaf_value(probs: &[f64], output: ShapOutput) -> f64 {
    match output {
        ShapOutput::VoteFraction => f64::from(u8::from(probs[1] > probs[0])),
        ShapOutput::MeanProbability => probs[1],
    }
}

pub fn cover(tree: &DecisionTree, node: usize) -> f64 {
    match &tree.nodes[node] {
        TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => cover.unwrap(),
    }
}

/// Path-dependent conditional expectation given the features in `known`.
pub fn conditional(tree: &DecisionTree, node: usize, x: &[f64], known: u32, output: ShapOutput) -> f64 {
    match &tree.nodes[node] {
        TreeNode::Leaf { probs, .. } => leaf_value(probs, output),
        TreeNode::Split { feature, threshold, left, right, .. } => {
            if known & (1 << feature) != 0 {
                let next = if x[*feature] <= *threshold { *left } else { *right };
                conditional(tree, next, x, known, output)
            } else {
                let (cl, cr) = (cover(tree, *left), cover(tree, *right));
                (cl * conditional(tree, *left, x, known, output) + cr * conditional(tree, *right, x, known, output))
                    / (cl + cr)
            }
        }
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Exact Shapley values by enumerating every coalition.
pub fn brute_force(forest: &ForestModel, x: &[f64], output: ShapOutput) -> (Vec<f64>, f64) {
    let m = forest.n_features;
    let value = |s: u32| {
        forest.trees.iter().map(|t| conditional(t, 0, x, s, output)).sum::<f64>() / forest.trees.len() as f64
    };
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0u32..(1 << m) {
            if s & (1 << i) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let weight = factorial(size) * factorial(m - size - 1) / factorial(m);
            *p += weight * (value(s | (1 << i)) - value(s));
        }
    }
    (phi, value(0))
}

pub fn small_forest() -> impl Strategy<Value = (ForestModel, Vec<Vec<f64>>)> {
    (1usize..=4, 1usize..=3, 0usize..=2).prop_flat_map(|(m, trees, depth)| {
        (
            prop::collection::vec(prop::collection::vec(slot(m), 7), trees),
            prop::collection::vec(prop::collection::vec(-1.5..1.5f64, m), 1..6),
        )
            .prop_map(move |(slots, xs)| {
                let trees = slots.iter().map(|s| build(s, m, depth)).collect();
                (forest_of(trees, m), xs)
            })
    })
}

pub fn matrix(rows: &[Vec<f64>]) -> SpectraMatrix {
    SpectraMatrix::from_rows(rows).unwrap()
}
