//! Audits of labelled real spectra (experiments Ra1 to Rb5).

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use sepaudit::attribution::{windowed_shap_map, write_maps_csv};
use sepaudit::audits::{
    global_pixel_permutation, independent_row_permutation, majority_baseline, pixel_count_sweep, window_sweep,
    RegionMask,
};
use sepaudit::dataio::{prepare_task, ClassPairTask};
use sepaudit::evalharness::{evaluate, EvalPlan, Evaluation, SplitStrategy};
use sepaudit::models::{ForestParams, ModelSpec};
use sepaudit::seed::derive_seed;
use sepaudit::SpectraMatrix;

use crate::failure::{CliResult, Failure};
use crate::manifest::OutputSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    GlobalShuffle,
    RowShuffle,
    PixelSweep,
    WindowSweep,
    Shap,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::GlobalShuffle => "global-shuffle",
            AuditKind::RowShuffle => "row-shuffle",
            AuditKind::PixelSweep => "pixel-sweep",
            AuditKind::WindowSweep => "window-sweep",
            AuditKind::Shap => "shap",
        }
    }
}

/// `Ra1`..`Rb5`: `a` compares EVOO with LOO, `b` EVOO with VOO; the digit
/// selects global shuffle, row shuffle, pixel sweep, window sweep or SHAP.
pub fn parse_real_id(id: &str) -> Option<(AuditKind, &'static str)> {
    let rest = id.strip_prefix('R').or_else(|| id.strip_prefix('r'))?;
    let mut chars = rest.chars();
    let task = match chars.next()? {
        'a' | 'A' => "EVOO:LOO",
        'b' | 'B' => "EVOO:VOO",
        _ => return None,
    };
    let kind = match chars.as_str() {
        "1" => AuditKind::GlobalShuffle,
        "2" => AuditKind::RowShuffle,
        "3" => AuditKind::PixelSweep,
        "4" => AuditKind::WindowSweep,
        "5" => AuditKind::Shap,
        _ => return None,
    };
    Some((kind, task))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub kind: AuditKind,
    pub task: ClassPairTask,
    pub region: RegionMask,
    pub ks: Vec<usize>,
    pub repeats: usize,
    pub widths: Vec<usize>,
    pub seed: u64,
    pub forest: ForestParams,
    pub split: SplitStrategy,
}

impl AuditConfig {
    pub fn new(kind: AuditKind, task: &str, seed: u64) -> CliResult<Self> {
        Ok(AuditConfig {
            kind,
            task: ClassPairTask::parse(task)?,
            region: RegionMask::preset("first50")?,
            ks: (2..=35).collect(),
            repeats: 20,
            widths: vec![20, 50, 200, 400],
            seed,
            forest: ForestParams::default(),
            split: SplitStrategy::LeaveOneOut,
        })
    }

    /// Keys: `task`, `region`, `k_range`, `repeats`, `widths`, `seed`,
    /// `mask`, `trees`, `folds`.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "task" => {
                let masks = std::mem::take(&mut self.task.masks);
                self.task = ClassPairTask::parse(value)?;
                self.task.masks = masks;
            }
            "region" => self.region = RegionMask::preset(value)?,
            "k_range" | "k-range" => self.ks = parse_counts(value, key)?,
            "repeats" => self.repeats = parse_count(value, key)?,
            "widths" => self.widths = parse_counts(value, key)?,
            "seed" => self.seed = value.parse().map_err(|_| Failure::usage(format!("seed must be an integer, got {value:?}")))?,
            "mask" => self.task.masks = parse_masks(value)?,
            "trees" => self.forest.tree_count = parse_count(value, key)?,
            "folds" => self.split = SplitStrategy::StratifiedKFold { k: parse_count(value, key)? },
            _ => {
                return Err(Failure::usage(format!(
                    "unknown audit setting {key:?}; known: task, region, k_range, repeats, widths, seed, mask, trees, folds"
                )))
            }
        }
        Ok(())
    }

    /// Forest evaluation plan: one model seed for every fold.
    pub fn plan(&self) -> EvalPlan {
        EvalPlan::fixed(self.split, derive_seed(self.seed, "model"))
    }
}

fn parse_count(text: &str, key: &str) -> CliResult<usize> {
    match text.trim().parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(Failure::usage(format!("{key} must be a positive integer, got {text:?}"))),
    }
}

/// `lo-hi` (inclusive) or a comma list of integers.
pub fn parse_counts(text: &str, key: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (lo, hi) = (parse_count(a, key)?, parse_count(b, key)?);
                if lo > hi {
                    return Err(Failure::usage(format!("{key}: empty range {item:?}")));
                }
                out.extend(lo..=hi);
            }
            None => out.push(parse_count(item, key)?),
        }
    }
    if out.is_empty() {
        return Err(Failure::usage(format!("{key} needs at least one value")));
    }
    Ok(out)
}

/// `none` or a comma list of `lo-hi` wavelength intervals.
fn parse_masks(text: &str) -> CliResult<Vec<(f64, f64)>> {
    if text.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let bad = || Failure::usage(format!("mask interval must look like lo-hi, got {item:?}"));
            let (a, b) = item.split_once('-').ok_or_else(bad)?;
            let lo: f64 = a.trim().parse().map_err(|_| bad())?;
            let hi: f64 = b.trim().parse().map_err(|_| bad())?;
            if lo < hi {
                Ok((lo, hi))
            } else {
                Err(bad())
            }
        })
        .collect()
}

#[derive(Serialize)]
struct PermutationReport<'a> {
    kind: &'a str,
    task: String,
    rows: usize,
    columns: usize,
    class_counts: Vec<usize>,
    majority_baseline: f64,
    original: Evaluation,
    permuted: Evaluation,
}

/// Runs one audit, writes its files and returns a printable summary.
pub fn run_audit(config: &AuditConfig, data: &SpectraMatrix, out: &mut OutputSet) -> CliResult<String> {
    let prepared = prepare_task(data, &config.task)?;
    let labels = prepared.label_ids()?;
    let baseline = majority_baseline(labels)?;
    let spec = ModelSpec::Forest(config.forest);
    let plan = config.plan();
    let task = format!("{}:{}", config.task.first, config.task.second);
    let mut summary = format!(
        "{} on {task}: {} spectra x {} pixels, majority baseline {baseline:.4}\n",
        config.kind.as_str(),
        prepared.n_rows(),
        prepared.n_cols()
    );
    match config.kind {
        AuditKind::GlobalShuffle | AuditKind::RowShuffle => {
            let permute_seed = derive_seed(config.seed, "permute");
            let permuted = if config.kind == AuditKind::GlobalShuffle {
                global_pixel_permutation(&prepared, permute_seed)?
            } else {
                independent_row_permutation(&prepared, permute_seed)?
            };
            let original = evaluate(&spec, &prepared, &plan)?;
            let shuffled = evaluate(&spec, &permuted, &plan)?;
            let _ = writeln!(summary, "original accuracy {:.4}\npermuted accuracy {:.4}", original.mean, shuffled.mean);
            let mut csv = String::from("variant,mean,sd,folds,majority_baseline\n");
            for (name, e) in [("original", &original), ("permuted", &shuffled)] {
                let _ = writeln!(csv, "{name},{},{},{},{baseline}", e.mean, e.sd, e.fold_accuracies.len());
            }
            let report = PermutationReport {
                kind: config.kind.as_str(),
                task,
                rows: prepared.n_rows(),
                columns: prepared.n_cols(),
                class_counts: prepared.labels().map(|l| l.counts()).unwrap_or_default(),
                majority_baseline: baseline,
                original,
                permuted: shuffled,
            };
            out.write(".json", serde_json::to_string_pretty(&report)?.as_bytes())?;
            out.write(".csv", csv.as_bytes())?;
        }
        AuditKind::PixelSweep => {
            let result =
                pixel_count_sweep(&prepared, &config.region, &config.ks, config.repeats, &spec, &plan, config.seed)?;
            for p in &result.points {
                let _ = writeln!(summary, "k={:>3}  mean {:.4}  sd {:.4}", p.k.unwrap_or(0), p.mean, p.sd);
            }
            out.write(".json", result.to_json()?.as_bytes())?;
            let mut csv = Vec::new();
            result.write_csv(&mut csv)?;
            out.write(".csv", &csv)?;
        }
        AuditKind::WindowSweep => {
            let result = window_sweep(&prepared, &config.widths, &spec, &plan, config.seed)?;
            for p in &result.points {
                let _ = writeln!(
                    summary,
                    "W={:>3} start={:>4}  mean {:.4}",
                    p.width.unwrap_or(0),
                    p.window_start.unwrap_or(0),
                    p.mean
                );
            }
            out.write(".json", result.to_json()?.as_bytes())?;
            let mut csv = Vec::new();
            result.write_csv(&mut csv)?;
            out.write(".csv", &csv)?;
        }
        AuditKind::Shap => {
            let maps = windowed_shap_map(&prepared, &config.widths, config.forest, &plan, config.seed)?;
            for m in &maps {
                if let Some(w) = &m.window {
                    let total: f64 = m.mean_abs.iter().sum();
                    let _ = writeln!(
                        summary,
                        "W={:>3} start={:>4}  accuracy {:.4}  total mean|SHAP| {total:.4}",
                        w.width,
                        w.start,
                        w.accuracy.unwrap_or(f64::NAN)
                    );
                }
            }
            out.write(".json", serde_json::to_string_pretty(&maps)?.as_bytes())?;
            let mut csv = Vec::new();
            write_maps_csv(&maps, &mut csv)?;
            out.write(".csv", &csv)?;
        }
    }
    Ok(summary)
}
