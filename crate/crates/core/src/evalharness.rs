//! Train/test splitting, cross-validated accuracy, and the registry of
//! synthetic experiments run as parameter-grid sweeps.
//!
//! Every random choice is drawn from a sub-seed derived from the master seed
//! and a task tag (experiment, grid coordinates, repetition, fold), so a
//! report is a pure function of its configuration whatever the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::models::{accuracy, oracle_accuracy_analytic, ModelSpec};
use crate::seed::{self, coord_tag, derive_seed};
use crate::spectra::SpectraMatrix;
use crate::synthgen::{
    generate_lorentzian_class, sample_gaussian_class, sample_skew_normal_class, GaussianClassSpec,
    LorentzianSpectrumSpec, NoiseSpec, PixelGrid, SkewNormalClassSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Stratified single split.
    Holdout { test_fraction: f64 },
    StratifiedKFold { k: usize },
    LeaveOneOut,
    /// Train and test on every sample; for rules that are not fitted.
    Full,
}

/// How models are seeded across folds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Fold `i` uses `derive_seed(seed, "fold/i")`.
    #[default]
    PerFold,
    /// Every fold uses the plan seed.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPlan {
    pub split: SplitStrategy,
    pub seed: u64,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
}

impl EvalPlan {
    pub fn new(split: SplitStrategy, seed: u64) -> Self {
        EvalPlan { split, seed, seed_policy: SeedPolicy::PerFold }
    }

    pub fn fixed(split: SplitStrategy, seed: u64) -> Self {
        EvalPlan { split, seed, seed_policy: SeedPolicy::Fixed }
    }

    pub fn model_seed(&self, fold: usize) -> u64 {
        match self.seed_policy {
            SeedPolicy::PerFold => derive_seed(self.seed, &format!("fold/{fold}")),
            SeedPolicy::Fixed => self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_members(labels: &[u32]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let mut members = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l as usize].push(i);
    }
    members
}

/// Index partitions for a plan. Train and test lists are sorted.
pub fn split(plan: &EvalPlan, labels: &[u32]) -> Result<Vec<Split>> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("splitting needs at least 2 samples, got {n}")));
    }
    let mut rng = seed::rng(derive_seed(plan.seed, "split"));
    let all: Vec<usize> = (0..n).collect();
    match plan.split {
        SplitStrategy::Full => Ok(vec![Split { train: all.clone(), test: all }]),
        SplitStrategy::LeaveOneOut => {
            Ok((0..n).map(|i| Split { train: all.iter().copied().filter(|&j| j != i).collect(), test: vec![i] }).collect())
        }
        SplitStrategy::Holdout { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::InvalidArgument(format!("test fraction must lie in (0, 1), got {test_fraction}")));
            }
            let mut test = Vec::new();
            for mut members in class_members(labels) {
                members.shuffle(&mut rng);
                let take = (test_fraction * members.len() as f64).round() as usize;
                test.extend_from_slice(&members[..take.min(members.len())]);
            }
            test.sort_unstable();
            let mut in_test = vec![false; n];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            Ok(vec![Split { train, test }])
        }
        SplitStrategy::StratifiedKFold { k } => {
            if k < 2 {
                return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
            }
            let members = class_members(labels);
            for (c, m) in members.iter().enumerate() {
                if !m.is_empty() && m.len() < k {
                    return Err(Error::ClassTooSmall { class: format!("label {c}"), count: m.len(), needed: k });
                }
            }
            // Shuffled class blocks are dealt round-robin, continuing the
            // rotation across classes so fold sizes also stay balanced.
            let mut fold_of = vec![0usize; n];
            let mut position = 0;
            for mut m in members {
                m.shuffle(&mut rng);
                for i in m {
                    fold_of[i] = position % k;
                    position += 1;
                }
            }
            Ok((0..k)
                .map(|f| Split {
                    train: (0..n).filter(|&i| fold_of[i] != f).collect(),
                    test: (0..n).filter(|&i| fold_of[i] == f).collect(),
                })
                .collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub sd: f64,
    pub fold_accuracies: Vec<f64>,
    pub n_train: Vec<usize>,
    pub n_test: Vec<usize>,
    pub model_seeds: Vec<u64>,
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarise(folds: Vec<(f64, usize, usize, u64)>) -> Evaluation {
    let fold_accuracies: Vec<f64> = folds.iter().map(|f| f.0).collect();
    let (mean, sd) = mean_sd(&fold_accuracies);
    Evaluation {
        mean,
        sd,
        fold_accuracies,
        n_train: folds.iter().map(|f| f.1).collect(),
        n_test: folds.iter().map(|f| f.2).collect(),
        model_seeds: folds.iter().map(|f| f.3).collect(),
    }
}

/// Fits a fresh model per split and scores it on the held-out rows.
pub fn evaluate(spec: &ModelSpec, data: &SpectraMatrix, plan: &EvalPlan) -> Result<Evaluation> {
    let labels = data.label_ids()?;
    let splits = split(plan, labels)?;
    let folds = splits
        .par_iter()
        .enumerate()
        .map(|(fold, s)| {
            let run = || -> Result<(f64, usize, usize, u64)> {
                let model_seed = plan.model_seed(fold);
                let model = spec.fit(&data.select_rows(&s.train), model_seed)?;
                let predicted = model.predict(&data.select_rows(&s.test))?;
                let truth: Vec<u32> = s.test.iter().map(|&i| labels[i]).collect();
                Ok((accuracy(&predicted, &truth), s.train.len(), s.test.len(), model_seed))
            };
            run().map_err(|e| Error::Fold { fold, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarise(folds))
}

/// Seeded fair-coin predictions on each split, for rules that cannot
/// discriminate.
pub fn chance_evaluation(data: &SpectraMatrix, plan: &EvalPlan) -> Result<Evaluation> {
    let labels = data.label_ids()?;
    let n_classes = data.labels().map_or(2, |l| l.names().len()).max(1) as u32;
    let splits = split(plan, labels)?;
    let folds = splits
        .iter()
        .enumerate()
        .map(|(fold, s)| {
            let model_seed = plan.model_seed(fold);
            let mut rng = seed::rng(derive_seed(model_seed, "chance"));
            let predicted: Vec<u32> = s.test.iter().map(|_| rng.random_range(0..n_classes)).collect();
            let truth: Vec<u32> = s.test.iter().map(|&i| labels[i]).collect();
            (accuracy(&predicted, &truth), s.train.len(), s.test.len(), model_seed)
        })
        .collect();
    Ok(summarise(folds))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    N1,
    N2,
    N3,
    N4,
    S1,
    S2,
    S3,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] =
        [ExperimentId::N1, ExperimentId::N2, ExperimentId::N3, ExperimentId::N4, ExperimentId::S1, ExperimentId::S2, ExperimentId::S3];

    /// Swept axes, in grid order.
    pub fn axis_names(self) -> &'static [&'static str] {
        match self {
            ExperimentId::N1 => &["rho", "n", "dsigma"],
            ExperimentId::N2 => &["n", "dsigma"],
            ExperimentId::N3 => &["dsigma", "n"],
            ExperimentId::N4 => &["dmu_rel", "dsigma_rel", "dgamma_rel"],
            ExperimentId::S1 | ExperimentId::S2 | ExperimentId::S3 => &["n"],
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Inclusive `start, start + step, …, stop`, rounded to 10 decimals.
pub fn range_values(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidSpec(format!("bad range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| ((start + i as f64 * step) * 1e10).round() / 1e10).collect())
}

/// Parses `a,b,c` lists whose items may be `start:stop:step` ranges.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::InvalidSpec(format!("{s:?} is not a number")))
        };
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [a, b, c] => out.extend(range_values(num(a)?, num(b)?, num(c)?)?),
            _ => return Err(Error::InvalidSpec(format!("cannot parse {item:?}; use a value or start:stop:step"))),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidSpec(format!("no values in {text:?}")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    pub axes: Vec<Axis>,
    pub constants: BTreeMap<String, f64>,
    pub models: Vec<ModelSpec>,
    pub split: SplitStrategy,
    pub repetitions: usize,
    pub seed: u64,
    /// Evaluation positions of synthetic spectra.
    #[serde(default)]
    pub pixel_grid: PixelGrid,
}

fn consts(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn axis(name: &str, values: Vec<f64>) -> Axis {
    Axis { name: name.to_string(), values }
}

fn grid_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    range_values(start, stop, step).expect("built-in range is valid")
}

const SPECTRA_N: [f64; 8] = [5.0, 10.0, 50.0, 100.0, 1000.0, 2000.0, 5000.0, 10000.0];

impl ExperimentConfig {
    /// Built-in grid, models and split for an experiment.
    pub fn default_for(id: ExperimentId, seed: u64) -> Self {
        let holdout = SplitStrategy::Holdout { test_fraction: 0.2 };
        let kfold = SplitStrategy::StratifiedKFold { k: 5 };
        let (axes, constants, models, split) = match id {
            ExperimentId::N1 => (
                vec![axis("rho", vec![0.0, 0.95]), axis("n", vec![5.0, 10.0, 50.0, 500.0]), axis("dsigma", grid_range(0.0, 2.0, 0.1))],
                consts(&[("samples_per_class", 1000.0), ("mu", 1.0), ("sigma1", 1.0)]),
                vec![ModelSpec::qda()],
                holdout,
            ),
            ExperimentId::N2 => (
                vec![axis("n", vec![30.0, 100.0, 500.0, 1000.0, 5000.0]), axis("dsigma", grid_range(0.0, 2.0, 0.05))],
                consts(&[("samples_per_class", 1000.0), ("mu", 1.0), ("sigma1", 1.0)]),
                vec![ModelSpec::Oracle { mu: 1.0, sigma_a: 1.0, sigma_b: 1.0 }],
                SplitStrategy::Full,
            ),
            ExperimentId::N3 => (
                vec![
                    axis("dsigma", vec![0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 2.0]),
                    axis("n", vec![1.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0]),
                ],
                consts(&[("samples_per_class", 1000.0), ("mu", 0.0), ("sigma1", 1.0)]),
                vec![ModelSpec::qda()],
                holdout,
            ),
            ExperimentId::N4 => (
                vec![
                    axis("dmu_rel", grid_range(0.0, 0.15, 0.03)),
                    axis("dsigma_rel", grid_range(0.0, 2.0, 0.4)),
                    axis("dgamma_rel", grid_range(0.0, 8.0, 1.6)),
                ],
                consts(&[("n", 50.0), ("samples_per_class", 100.0), ("mu", 10.0), ("sigma", 1.0), ("gamma", 0.5)]),
                ModelSpec::standard_four(),
                kfold,
            ),
            ExperimentId::S1 => (
                vec![axis("n", SPECTRA_N.to_vec())],
                consts(&[("samples_per_class", 500.0), ("centre_mean", 50.0), ("centre_sd", 10.0), ("fwhm", 7.0)]),
                ModelSpec::standard_four(),
                kfold,
            ),
            ExperimentId::S2 => (
                vec![axis("n", SPECTRA_N.to_vec())],
                consts(&[
                    ("samples_per_class", 500.0),
                    ("centre_mean", 50.0),
                    ("centre_sd", 10.0),
                    ("fwhm0", 7.0),
                    ("fwhm1", 9.0),
                ]),
                ModelSpec::standard_four(),
                kfold,
            ),
            ExperimentId::S3 => (
                vec![axis("n", SPECTRA_N.to_vec())],
                consts(&[
                    ("samples_per_class", 500.0),
                    ("centre_mean", 50.0),
                    ("centre_sd", 10.0),
                    ("fwhm", 7.0),
                    ("noise_mean0", 0.0),
                    ("noise_mean1", 0.01),
                    ("noise_sd", 0.01),
                ]),
                ModelSpec::standard_four(),
                kfold,
            ),
        };
        ExperimentConfig { id, axes, constants, models, split, repetitions: 1, seed, pixel_grid: PixelGrid::Index }
    }

    /// Applies `key=values`. Axes take lists; constants take one value;
    /// `repetitions`, `folds` and `test_fraction` adjust the run itself.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, values) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidSpec(format!("override must look like key=values, got {assignment:?}")))?;
        if key.trim() == "pixel_grid" {
            self.pixel_grid = parse_pixel_grid(values)?;
            return self.validate();
        }
        self.set(key.trim(), parse_values(values)?)
    }

    pub fn set(&mut self, key: &str, values: Vec<f64>) -> Result<()> {
        let single = || -> Result<f64> {
            match values.as_slice() {
                [v] => Ok(*v),
                _ => Err(Error::InvalidSpec(format!("{key} takes a single value"))),
            }
        };
        if let Some(a) = self.axes.iter_mut().find(|a| a.name == key) {
            a.values = values;
        } else if self.constants.contains_key(key) {
            let v = single()?;
            self.constants.insert(key.to_string(), v);
        } else {
            match key {
                "repetitions" => self.repetitions = as_count(single()?, key)?,
                "folds" => self.split = SplitStrategy::StratifiedKFold { k: as_count(single()?, key)? },
                "test_fraction" => self.split = SplitStrategy::Holdout { test_fraction: single()? },
                _ => {
                    let known: Vec<&str> = self
                        .axes
                        .iter()
                        .map(|a| a.name.as_str())
                        .chain(self.constants.keys().map(String::as_str))
                        .collect();
                    return Err(Error::InvalidSpec(format!(
                        "{key} is not a parameter of {}; known: {}, repetitions, folds, test_fraction",
                        self.id,
                        known.join(", ")
                    )));
                }
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.id.axis_names();
        let names: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        if names != expected {
            return Err(Error::InvalidSpec(format!("{} sweeps {:?}, config has {:?}", self.id, expected, names)));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidSpec("model list is empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidSpec("repetitions must be positive".into()));
        }
        for a in &self.axes {
            if a.values.is_empty() || a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("axis {} needs finite values", a.name)));
            }
            if a.name == "n" {
                for &v in &a.values {
                    as_count(v, "n")?;
                }
            }
        }
        if let Some(&n) = self.constants.get("n") {
            as_count(n, "n")?;
        }
        as_count(self.constant("samples_per_class")?, "samples_per_class")?;
        Ok(())
    }

    fn constant(&self, key: &str) -> Result<f64> {
        self.constants.get(key).copied().ok_or_else(|| Error::InvalidSpec(format!("missing constant {key}")))
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.axes.iter().map(|a| a.name.clone()).collect()
    }

    /// Grid points in axis order. N4 is the union of its three coordinate
    /// planes (the third relative difference held at 0), duplicates removed.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let values: Vec<&[f64]> = self.axes.iter().map(|a| a.values.as_slice()).collect();
        if self.id == ExperimentId::N4 {
            let mut points: Vec<Vec<f64>> = Vec::new();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                for &a in values[i] {
                    for &b in values[j] {
                        let mut p = vec![0.0; 3];
                        p[i] = a;
                        p[j] = b;
                        if !points.contains(&p) {
                            points.push(p);
                        }
                    }
                }
            }
            return points;
        }
        let mut points = vec![Vec::new()];
        for vals in values {
            points = points
                .into_iter()
                .flat_map(|p| {
                    vals.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    fn lookup(&self, coords: &[f64], key: &str) -> Result<f64> {
        match self.axes.iter().position(|a| a.name == key) {
            Some(i) => Ok(coords[i]),
            None => self.constant(key),
        }
    }

    fn point_tag(&self, coords: &[f64], repetition: usize) -> String {
        let parts: Vec<String> =
            self.axes.iter().zip(coords).map(|(a, &v)| format!("{}={}", a.name, coord_tag(v))).collect();
        format!("{}/{}/rep{}", self.id, parts.join(","), repetition)
    }

    /// Both classes at one grid point, stacked as labels 0 and 1.
    pub fn point_dataset(&self, coords: &[f64], repetition: usize) -> Result<SpectraMatrix> {
        let tag = self.point_tag(coords, repetition);
        let seeds = [derive_seed(self.seed, &format!("{tag}/class0")), derive_seed(self.seed, &format!("{tag}/class1"))];
        let get = |k: &str| self.lookup(coords, k);
        let count = get("samples_per_class")? as usize;
        let blocks = match self.id {
            ExperimentId::N1 | ExperimentId::N2 | ExperimentId::N3 => {
                let n = get("n")? as usize;
                let (mu, s1) = (get("mu")?, get("sigma1")?);
                let s2 = s1 + get("dsigma")?;
                let rho = if self.id == ExperimentId::N1 { get("rho")? } else { 0.0 };
                let spec = |s: f64| {
                    if rho == 0.0 {
                        GaussianClassSpec::isotropic(n, mu, s)
                    } else {
                        GaussianClassSpec::toeplitz(n, mu, s, rho)
                    }
                };
                [sample_gaussian_class(&spec(s1), count, seeds[0])?, sample_gaussian_class(&spec(s2), count, seeds[1])?]
            }
            ExperimentId::N4 => {
                let dim = get("n")? as usize;
                let (mu, sigma, gamma) = (get("mu")?, get("sigma")?, get("gamma")?);
                let base = SkewNormalClassSpec { dim, location: mu, scale: sigma, shape: gamma };
                let other = SkewNormalClassSpec {
                    dim,
                    location: mu * (1.0 + get("dmu_rel")?),
                    scale: sigma * (1.0 + get("dsigma_rel")?),
                    shape: gamma * (1.0 + get("dgamma_rel")?),
                };
                [sample_skew_normal_class(&base, count, seeds[0])?, sample_skew_normal_class(&other, count, seeds[1])?]
            }
            ExperimentId::S1 | ExperimentId::S2 | ExperimentId::S3 => {
                let dim = get("n")? as usize;
                let (fwhm0, fwhm1) = match self.id {
                    ExperimentId::S2 => (get("fwhm0")?, get("fwhm1")?),
                    _ => (get("fwhm")?, get("fwhm")?),
                };
                let noise = |class: usize| -> Result<Option<NoiseSpec>> {
                    if self.id != ExperimentId::S3 {
                        return Ok(None);
                    }
                    let mean = get(if class == 0 { "noise_mean0" } else { "noise_mean1" })?;
                    Ok(Some(NoiseSpec { mean, sd: get("noise_sd")? }))
                };
                let spec = |fwhm: f64, class: usize| -> Result<LorentzianSpectrumSpec> {
                    Ok(LorentzianSpectrumSpec {
                        dim,
                        centre_mean: get("centre_mean")?,
                        centre_sd: get("centre_sd")?,
                        fwhm,
                        count,
                        noise: noise(class)?,
                        grid: self.pixel_grid,
                    })
                };
                [generate_lorentzian_class(&spec(fwhm0, 0)?, seeds[0])?, generate_lorentzian_class(&spec(fwhm1, 1)?, seeds[1])?]
            }
        };
        SpectraMatrix::stack_classes(&blocks)
    }

    /// Exact Bayes accuracy where the two classes are equal-mean isotropic
    /// Gaussians.
    fn reference_accuracy(&self, coords: &[f64]) -> Result<Option<f64>> {
        let isotropic = match self.id {
            ExperimentId::N2 | ExperimentId::N3 => true,
            ExperimentId::N1 => self.lookup(coords, "rho")? == 0.0,
            _ => false,
        };
        if !isotropic {
            return Ok(None);
        }
        let n = self.lookup(coords, "n")? as usize;
        let s1 = self.lookup(coords, "sigma1")?;
        Ok(Some(oracle_accuracy_analytic(n, s1, s1 + self.lookup(coords, "dsigma")?)))
    }

    /// The model to fit at a grid point; the oracle takes the point's
    /// class parameters.
    fn model_at(&self, spec: &ModelSpec, coords: &[f64]) -> Result<ModelSpec> {
        Ok(match spec {
            ModelSpec::Oracle { .. } => {
                let mu = self.lookup(coords, "mu")?;
                let s1 = self.lookup(coords, "sigma1")?;
                ModelSpec::Oracle { mu, sigma_a: s1, sigma_b: s1 + self.lookup(coords, "dsigma")? }
            }
            other => other.clone(),
        })
    }
}

/// `index` or `start:end`.
pub fn parse_pixel_grid(text: &str) -> Result<PixelGrid> {
    let text = text.trim();
    if text == "index" {
        return Ok(PixelGrid::Index);
    }
    let bad = || Error::InvalidSpec(format!("pixel grid must be `index` or `start:end`, got {text:?}"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let start: f64 = a.trim().parse().map_err(|_| bad())?;
    let end: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(start.is_finite() && end.is_finite() && end > start) {
        return Err(bad());
    }
    Ok(PixelGrid::Span { start, end })
}

fn as_count(v: f64, key: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidSpec(format!("{key} must be a positive integer, got {v}")))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub coords: Vec<f64>,
    pub model: String,
    pub repetition: usize,
    pub mean: f64,
    pub sd: f64,
    pub fold_accuracies: Vec<f64>,
    pub n_train: Vec<usize>,
    pub n_test: Vec<usize>,
    pub samples_per_class: usize,
    /// Seed of the evaluation plan at this point.
    pub seed: u64,
    pub reference_accuracy: Option<f64>,
    /// Set when the model degenerated to seeded coin flips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub experiment_id: String,
    pub axes: Vec<String>,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub code_version: String,
    pub records: Vec<Record>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

impl AuditReport {
    /// Records matching every `(axis, value)` pair and the model name.
    pub fn find(&self, model: &str, at: &[(&str, f64)]) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.model == model)
            .filter(|r| {
                at.iter().all(|(name, v)| {
                    self.axes.iter().position(|a| a == name).is_some_and(|i| (r.coords[i] - v).abs() < 1e-9)
                })
            })
            .collect()
    }

    /// Mean accuracy over repetitions at one point.
    pub fn mean_at(&self, model: &str, at: &[(&str, f64)]) -> Option<f64> {
        let found = self.find(model, at);
        if found.is_empty() {
            return None;
        }
        Some(found.iter().map(|r| r.mean).sum::<f64>() / found.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long format: one row per grid point × model × repetition × fold.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["experiment_id".to_string()];
        header.extend(self.axes.iter().cloned());
        header.extend(
            ["model", "repetition", "fold", "fold_accuracy", "mean", "sd", "n_train", "n_test", "seed", "reference_accuracy"]
                .map(String::from),
        );
        w.write_record(&header)?;
        for r in &self.records {
            for (fold, acc) in r.fold_accuracies.iter().enumerate() {
                let mut row = vec![self.experiment_id.clone()];
                row.extend(r.coords.iter().map(|v| v.to_string()));
                row.push(r.model.clone());
                row.push(r.repetition.to_string());
                row.push(fold.to_string());
                row.push(acc.to_string());
                row.push(r.mean.to_string());
                row.push(r.sd.to_string());
                row.push(r.n_train[fold].to_string());
                row.push(r.n_test[fold].to_string());
                row.push(r.seed.to_string());
                row.push(r.reference_accuracy.map(|v| v.to_string()).unwrap_or_default());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn is_degenerate(e: &Error) -> bool {
    match e {
        Error::DegenerateRule(_) => true,
        Error::Fold { source, .. } => is_degenerate(source),
        _ => false,
    }
}

fn run_point(config: &ExperimentConfig, coords: &[f64], repetition: usize) -> Result<Vec<Record>> {
    let data = config.point_dataset(coords, repetition)?;
    let tag = config.point_tag(coords, repetition);
    let plan = EvalPlan::new(config.split, derive_seed(config.seed, &format!("{tag}/eval")));
    let reference_accuracy = config.reference_accuracy(coords)?;
    let samples_per_class = config.constant("samples_per_class")? as usize;
    config
        .models
        .iter()
        .map(|spec| {
            let spec = config.model_at(spec, coords)?;
            let (eval, note) = match evaluate(&spec, &data, &plan) {
                Err(e) if is_degenerate(&e) => (chance_evaluation(&data, &plan)?, Some("chance fallback".to_string())),
                other => (other?, None),
            };
            Ok(Record {
                coords: coords.to_vec(),
                model: spec.name().to_string(),
                repetition,
                mean: eval.mean,
                sd: eval.sd,
                fold_accuracies: eval.fold_accuracies,
                n_train: eval.n_train,
                n_test: eval.n_test,
                samples_per_class,
                seed: plan.seed,
                reference_accuracy,
                note,
            })
        })
        .collect()
}

/// Runs every grid point, repetition and model. Records are ordered by grid
/// point, then repetition, then model.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AuditReport> {
    config.validate()?;
    let grid = config.grid();
    let tasks: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|p| (0..config.repetitions).map(move |r| (p, r))).collect();
    let chunks = tasks
        .par_iter()
        .map(|&(p, r)| run_point(config, &grid[p], r))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment_id: config.id.to_string(),
        axes: config.axis_names(),
        config: config.clone(),
        config_hash: config.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        records: chunks.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: &[usize]) -> Vec<u32> {
        counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c as u32, n)).collect()
    }

    #[test]
    fn leave_one_out_sizes() {
        let splits = split(&EvalPlan::new(SplitStrategy::LeaveOneOut, 0), &labels(&[12, 12])).unwrap();
        assert_eq!(splits.len(), 24);
        assert!(splits.iter().all(|s| s.test.len() == 1 && s.train.len() == 23));
    }

    #[test]
    fn stratified_folds_balanced() {
        let y = labels(&[500, 500]);
        let splits = split(&EvalPlan::new(SplitStrategy::StratifiedKFold { k: 5 }, 3), &y).unwrap();
        let mut seen = vec![0; y.len()];
        for s in &splits {
            for c in 0..2 {
                let count = s.test.iter().filter(|&&i| y[i] == c).count();
                assert!((99..=101).contains(&count));
            }
            s.test.iter().for_each(|&i| seen[i] += 1);
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn holdout_is_stratified() {
        let y = labels(&[1000, 1000]);
        let s = &split(&EvalPlan::new(SplitStrategy::Holdout { test_fraction: 0.2 }, 1), &y).unwrap()[0];
        for c in 0..2 {
            let count = s.test.iter().filter(|&&i| y[i] == c).count();
            assert!((199..=201).contains(&count));
        }
        assert_eq!(s.train.len() + s.test.len(), 2000);
    }

    #[test]
    fn small_class_rejected_for_kfold() {
        let err = split(&EvalPlan::new(SplitStrategy::StratifiedKFold { k: 5 }, 0), &labels(&[10, 3])).unwrap_err();
        assert!(matches!(err, Error::ClassTooSmall { count: 3, needed: 5, .. }));
    }

    #[test]
    fn value_grammar() {
        assert_eq!(parse_values("1,2, 5").unwrap(), vec![1.0, 2.0, 5.0]);
        assert_eq!(parse_values("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_values("0:0.3:0.1,7").unwrap(), vec![0.0, 0.1, 0.2, 0.3, 7.0]);
        assert_eq!(range_values(0.0, 2.0, 0.1).unwrap().len(), 21);
        assert!(parse_values("1:2").is_err());
        assert!(parse_values("x").is_err());
    }

    #[test]
    fn overrides_are_checked() {
        let mut c = ExperimentConfig::default_for(ExperimentId::N3, 1);
        c.apply_override("n=10,20").unwrap();
        assert_eq!(c.axes[1].values, vec![10.0, 20.0]);
        c.apply_override("samples_per_class=50").unwrap();
        assert!(c.apply_override("samples_per_class=50,60").is_err());
        assert!(c.apply_override("rho=0.5").is_err());
        assert!(c.apply_override("n=2.5").is_err());
    }

    #[test]
    fn n4_grid_is_three_planes() {
        let c = ExperimentConfig::default_for(ExperimentId::N4, 0);
        let g = c.grid();
        // 3 planes of 6×6 sharing the origin row/columns
        assert_eq!(g.len(), 3 * 36 - 3 * 6 + 1);
        assert!(g.iter().all(|p| p.iter().filter(|&&v| v != 0.0).count() <= 2));
    }

    #[test]
    fn default_configs_validate() {
        for id in ExperimentId::ALL {
            ExperimentConfig::default_for(id, 0).validate().unwrap();
            assert_eq!(id.to_string().parse::<ExperimentId>().unwrap(), id);
        }
    }

    #[test]
    fn mean_sd_population() {
        let (m, s) = mean_sd(&[1.0, 0.0]);
        assert_eq!((m, s), (0.5, 0.5));
    }
}
