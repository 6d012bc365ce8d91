//! Regional sensitivity audits: column permutations, random pixel subsets
//! and fixed-width window sweeps over any labelled spectra matrix.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalharness::{evaluate, mean_sd, EvalPlan};
use crate::models::ModelSpec;
use crate::seed::{self, derive_seed};
use crate::spectra::SpectraMatrix;

pub use crate::dataio::RegionMask;

fn check_width(data: &SpectraMatrix) -> Result<()> {
    if data.n_cols() < 2 {
        return Err(Error::InvalidArgument(format!("permutation needs at least 2 columns, got {}", data.n_cols())));
    }
    Ok(())
}

/// The permutation `global_pixel_permutation` applies for `seed`: output
/// column `j` is input column `perm[j]`.
pub fn global_permutation_indices(width: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..width).collect();
    perm.shuffle(&mut seed::rng(derive_seed(seed, "global-permutation")));
    perm
}

/// One column permutation shared by every row. The axis is dropped.
pub fn global_pixel_permutation(data: &SpectraMatrix, seed: u64) -> Result<SpectraMatrix> {
    check_width(data)?;
    let perm = global_permutation_indices(data.n_cols(), seed);
    Ok(data.select_columns(&perm).without_axis())
}

/// An independent permutation per row, from `derive_seed(seed, "row/i")`.
/// The axis is dropped.
pub fn independent_row_permutation(data: &SpectraMatrix, seed: u64) -> Result<SpectraMatrix> {
    check_width(data)?;
    let n = data.n_cols();
    let values: Vec<f64> = (0..data.n_rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut row = data.row(i).to_vec();
            row.shuffle(&mut seed::rng(derive_seed(seed, &format!("row/{i}"))));
            debug_assert_eq!(row.len(), n);
            row
        })
        .collect();
    Ok(data.with_values(values).without_axis())
}

/// Accuracy of always predicting the most frequent label.
pub fn majority_baseline(labels: &[u32]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("no labels".into()));
    }
    let max = labels.iter().max().copied().unwrap_or(0) as usize;
    let mut counts = vec![0usize; max + 1];
    labels.iter().for_each(|&l| counts[l as usize] += 1);
    Ok(*counts.iter().max().unwrap_or(&0) as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    PixelCount,
    Window,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::PixelCount => "pixel-count",
            SweepKind::Window => "window",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Pixel count, for pixel-count sweeps.
    pub k: Option<usize>,
    /// Window start and width, for window sweeps.
    pub window_start: Option<usize>,
    pub width: Option<usize>,
    pub mean: f64,
    /// Over subsets for pixel-count sweeps, over folds for windows.
    pub sd: f64,
    pub n_repeats: usize,
    /// One accuracy per subset (pixel-count) or per fold (window).
    pub accuracies: Vec<f64>,
    /// Column indices of the input matrix, one list per subset.
    pub pixels: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub model: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns `kind, k, window_start, width, mean, sd, n_repeats, pixels`;
    /// subsets are `;`-separated and indices space-separated.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kind", "k", "window_start", "width", "mean", "sd", "n_repeats", "pixels"])?;
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            let pixels: Vec<String> = p
                .pixels
                .iter()
                .map(|s| s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
                .collect();
            w.write_record([
                self.kind.as_str().to_string(),
                opt(p.k),
                opt(p.window_start),
                opt(p.width),
                p.mean.to_string(),
                p.sd.to_string(),
                p.n_repeats.to_string(),
                pixels.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For each `k`, evaluates `repeats` random `k`-subsets of the region's
/// columns. Subset `r` of size `k` and its model seed come from
/// `derive_seed(seed, "k/r")`; folds within one evaluation share that seed.
pub fn pixel_count_sweep(
    data: &SpectraMatrix,
    region: &RegionMask,
    ks: &[usize],
    repeats: usize,
    spec: &ModelSpec,
    plan: &EvalPlan,
    seed: u64,
) -> Result<SweepResult> {
    if repeats == 0 || ks.is_empty() {
        return Err(Error::InvalidArgument("pixel sweep needs at least one k and one repeat".into()));
    }
    let columns = region.columns(data)?;
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > columns.len()) {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={} (width of region {})",
            columns.len(),
            region.name()
        )));
    }
    let tasks: Vec<(usize, usize)> = ks.iter().flat_map(|&k| (0..repeats).map(move |r| (k, r))).collect();
    let results = tasks
        .par_iter()
        .map(|&(k, r)| {
            let sub_seed = derive_seed(seed, &format!("{k}/{r}"));
            let mut rng = seed::rng(sub_seed);
            let mut picked: Vec<usize> =
                index::sample(&mut rng, columns.len(), k).into_iter().map(|i| columns[i]).collect();
            picked.sort_unstable();
            let sub_plan = EvalPlan { seed: derive_seed(sub_seed, "model"), ..*plan };
            let eval = evaluate(spec, &data.select_columns(&picked), &sub_plan)?;
            Ok((eval.mean, picked))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = results
        .chunks(repeats)
        .zip(ks)
        .map(|(chunk, &k)| {
            let accuracies: Vec<f64> = chunk.iter().map(|c| c.0).collect();
            let (mean, sd) = mean_sd(&accuracies);
            SweepPoint {
                k: Some(k),
                window_start: None,
                width: None,
                mean,
                sd,
                n_repeats: repeats,
                accuracies,
                pixels: chunk.iter().map(|c| c.1.clone()).collect(),
            }
        })
        .collect();
    Ok(SweepResult { kind: SweepKind::PixelCount, model: spec.name().to_string(), seed, points })
}

/// Non-overlapping windows `[0, W), [W, 2W), …` for each width; a trailing
/// partial window is dropped.
pub fn windows(width_total: usize, widths: &[usize]) -> Result<Vec<(usize, usize)>> {
    if widths.is_empty() {
        return Err(Error::InvalidArgument("no window widths given".into()));
    }
    let mut out = Vec::new();
    for &w in widths {
        if w == 0 || w > width_total {
            return Err(Error::InvalidArgument(format!("window width {w} outside 1..={width_total}")));
        }
        out.extend((0..=width_total - w).step_by(w).map(|start| (start, w)));
    }
    Ok(out)
}

/// Evaluates the model on every window with the plan.
pub fn window_sweep(
    data: &SpectraMatrix,
    widths: &[usize],
    spec: &ModelSpec,
    plan: &EvalPlan,
    seed: u64,
) -> Result<SweepResult> {
    let tiles = windows(data.n_cols(), widths)?;
    let points = tiles
        .par_iter()
        .map(|&(start, w)| {
            let cols: Vec<usize> = (start..start + w).collect();
            let sub_plan = EvalPlan { seed: derive_seed(seed, &format!("window/{w}/{start}")), ..*plan };
            let eval = evaluate(spec, &data.select_columns(&cols), &sub_plan)?;
            Ok(SweepPoint {
                k: None,
                window_start: Some(start),
                width: Some(w),
                mean: eval.mean,
                sd: eval.sd,
                n_repeats: 1,
                accuracies: eval.fold_accuracies,
                pixels: vec![cols],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { kind: SweepKind::Window, model: spec.name().to_string(), seed, points })
}

/// Control data: two classes of standard white noise whose means differ by
/// `shift` on columns `[lo, hi)` only. Pixel axis `0..width`.
pub fn planted_signal(
    per_class: usize,
    width: usize,
    signal: (usize, usize),
    shift: f64,
    seed: u64,
) -> Result<SpectraMatrix> {
    let (lo, hi) = signal;
    if per_class < 2 || lo >= hi || hi > width {
        return Err(Error::InvalidArgument(format!(
            "planted signal needs per_class >= 2 and 0 <= lo < hi <= width, got {per_class}, [{lo}, {hi}), {width}"
        )));
    }
    let blocks: Vec<SpectraMatrix> = (0..2u32)
        .map(|class| {
            let mut rng = seed::rng(derive_seed(seed, &format!("planted/class{class}")));
            let offset = if class == 1 { shift } else { 0.0 };
            let values: Vec<f64> = (0..per_class * width)
                .map(|i| {
                    let z: f64 = rng.sample(StandardNormal);
                    let col = i % width;
                    z + if (lo..hi).contains(&col) { offset } else { 0.0 }
                })
                .collect();
            SpectraMatrix::new(per_class, width, values)
        })
        .collect::<Result<_>>()?;
    SpectraMatrix::stack_classes(&blocks)?.with_axis((0..width).map(|i| i as f64).collect())
}

/// The same rows with the label vector randomly permuted.
pub fn shuffle_labels(data: &SpectraMatrix, seed: u64) -> Result<SpectraMatrix> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let mut ids = labels.ids().to_vec();
    ids.shuffle(&mut seed::rng(derive_seed(seed, "labels")));
    data.clone().with_labels(labels.with_ids(ids)?)
}
