//! Labelled spectra on disk, wavelength masking, region and class selection.
//!
//! The canonical file is a headered CSV: the first column is `label`, the
//! remaining header cells are the wavelengths (strictly increasing), and each
//! row holds one spectrum. Intensities are never rescaled.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{Labels, SpectraMatrix};

/// Rayleigh band removed before every real-data experiment, in nm.
pub const DEFAULT_MASK: (f64, f64) = (380.0, 420.0);

fn parse_f64(cell: &str, row: usize, column: usize) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse { row, column, message: format!("{cell:?} is not a number: {e}") })
}

/// Reads the canonical format. Class names are ordered by first appearance.
pub fn read_spectra<R: Read>(reader: R) -> Result<SpectraMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::Parse { row: 0, column: 0, message: "missing header".into() }),
    };
    if header.get(0).map(str::trim) != Some("label") {
        return Err(Error::Parse { row: 0, column: 0, message: "first header cell must be `label`".into() });
    }
    if header.len() < 2 {
        return Err(Error::Parse { row: 0, column: 1, message: "no wavelength columns".into() });
    }
    let axis = header.iter().enumerate().skip(1).map(|(c, v)| parse_f64(v, 0, c)).collect::<Result<Vec<_>>>()?;
    let cols = axis.len();

    let mut names: Vec<String> = Vec::new();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (r, rec) in records.enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != cols + 1 {
            return Err(Error::Parse {
                row,
                column: rec.len().min(cols + 1),
                message: format!("expected {} cells, found {}", cols + 1, rec.len()),
            });
        }
        let label = rec[0].trim().to_string();
        if label.is_empty() {
            return Err(Error::Parse { row, column: 0, message: "empty label".into() });
        }
        let id = match names.iter().position(|n| *n == label) {
            Some(i) => i,
            None => {
                names.push(label);
                names.len() - 1
            }
        };
        ids.push(id as u32);
        for c in 1..=cols {
            values.push(parse_f64(&rec[c], row, c)?);
        }
    }
    let rows = ids.len();
    SpectraMatrix::new(rows, cols, values)?.with_axis(axis)?.with_labels(Labels::new(ids, names)?)
}

pub fn load_spectra(path: &Path) -> Result<SpectraMatrix> {
    read_spectra(std::fs::File::open(path)?)
}

/// Loads a file whose labels must all belong to `classes`; the label ids
/// follow the order of `classes`.
pub fn load_spectra_with_classes(path: &Path, classes: &[String]) -> Result<SpectraMatrix> {
    let data = load_spectra(path)?;
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let mut ids = Vec::with_capacity(labels.len());
    for (row, &id) in labels.ids().iter().enumerate() {
        let name = labels.name_of(id);
        match classes.iter().position(|c| c == name) {
            Some(i) => ids.push(i as u32),
            None => return Err(Error::UnknownLabel { label: name.to_string(), row: row + 1 }),
        }
    }
    data.with_labels(Labels::new(ids, classes.to_vec())?)
}

/// Writes the canonical format with shortest round-trip float formatting.
/// A missing axis is written as pixel indices `1..=n`.
pub fn write_spectra<W: Write>(data: &SpectraMatrix, writer: W) -> Result<()> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    match data.axis() {
        Some(axis) => header.extend(axis.iter().map(|v| format!("{v:?}"))),
        None => header.extend((1..=data.n_cols()).map(|i| i.to_string())),
    }
    w.write_record(&header)?;
    for (i, row) in data.rows().enumerate() {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(labels.name_of(labels.ids()[i]).to_string());
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_spectra(data: &SpectraMatrix, path: &Path) -> Result<()> {
    write_spectra(data, std::fs::File::create(path)?)
}

/// Column range `[lo, hi)` either in wavelength units or in pixel indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum RegionMask {
    Wavelength { name: String, lo: f64, hi: f64 },
    Pixel { name: String, lo: usize, hi: usize },
}

impl RegionMask {
    /// `rho1`..`rho5` (nm) and `first50` (pixels 0..50).
    pub fn preset(name: &str) -> Result<RegionMask> {
        let nm = |lo: f64, hi: f64| RegionMask::Wavelength { name: name.to_string(), lo, hi };
        Ok(match name {
            "rho1" => nm(337.0, 380.0),
            "rho2" => nm(380.0, 420.0),
            "rho3" => nm(420.0, 630.0),
            "rho4" => nm(630.0, 775.0),
            "rho5" => nm(775.0, 800.0),
            "first50" => RegionMask::Pixel { name: name.to_string(), lo: 0, hi: 50 },
            _ => return Self::parse_interval(name),
        })
    }

    /// `lo-hi` in nm or `px:lo-hi` in pixel indices.
    fn parse_interval(text: &str) -> Result<RegionMask> {
        let bad = || Error::InvalidSpec(format!("unknown region {text:?}"));
        let (pixel, body) = match text.strip_prefix("px:") {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (a, b) = body.split_once('-').ok_or_else(bad)?;
        if pixel {
            let lo = a.trim().parse().map_err(|_| bad())?;
            let hi = b.trim().parse().map_err(|_| bad())?;
            Ok(RegionMask::Pixel { name: text.to_string(), lo, hi })
        } else {
            let lo = a.trim().parse().map_err(|_| bad())?;
            let hi = b.trim().parse().map_err(|_| bad())?;
            Ok(RegionMask::Wavelength { name: text.to_string(), lo, hi })
        }
    }

    pub fn name(&self) -> &str {
        match self {
            RegionMask::Wavelength { name, .. } | RegionMask::Pixel { name, .. } => name,
        }
    }

    /// Increasing column indices covered by the region.
    pub fn columns(&self, data: &SpectraMatrix) -> Result<Vec<usize>> {
        let cols: Vec<usize> = match *self {
            RegionMask::Wavelength { lo, hi, .. } => {
                let axis = data.axis().ok_or(Error::MissingAxis)?;
                (0..axis.len()).filter(|&i| axis[i] >= lo && axis[i] < hi).collect()
            }
            RegionMask::Pixel { lo, hi, .. } => (lo..hi.min(data.n_cols())).collect(),
        };
        if cols.is_empty() {
            return Err(Error::Empty(format!("region {} selects no columns", self.name())));
        }
        Ok(cols)
    }
}

/// Drops columns whose wavelength lies in any `[lo, hi)` interval.
pub fn apply_mask(data: &SpectraMatrix, intervals: &[(f64, f64)]) -> Result<SpectraMatrix> {
    let axis = data.axis().ok_or(Error::MissingAxis)?;
    let keep: Vec<usize> =
        (0..axis.len()).filter(|&i| !intervals.iter().any(|&(lo, hi)| axis[i] >= lo && axis[i] < hi)).collect();
    if keep.is_empty() {
        return Err(Error::Empty("mask removes every column".into()));
    }
    Ok(data.select_columns(&keep))
}

pub fn select_region(data: &SpectraMatrix, region: &RegionMask) -> Result<SpectraMatrix> {
    Ok(data.select_columns(&region.columns(data)?))
}

/// Two classes to compare plus the wavelength intervals removed first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPairTask {
    pub first: String,
    pub second: String,
    pub masks: Vec<(f64, f64)>,
}

impl ClassPairTask {
    pub fn new(first: &str, second: &str) -> Result<Self> {
        if first == second {
            return Err(Error::InvalidSpec(format!("task classes must differ, got {first} twice")));
        }
        Ok(ClassPairTask { first: first.to_string(), second: second.to_string(), masks: vec![DEFAULT_MASK] })
    }

    /// `FIRST:SECOND`, e.g. `EVOO:LOO`.
    pub fn parse(text: &str) -> Result<Self> {
        let (a, b) = text
            .split_once(':')
            .ok_or_else(|| Error::InvalidSpec(format!("task must look like A:B, got {text:?}")))?;
        Self::new(a.trim(), b.trim())
    }
}

/// Rows of the two task classes, relabelled `first → 0`, `second → 1`.
pub fn filter_classes(data: &SpectraMatrix, task: &ClassPairTask) -> Result<SpectraMatrix> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (i, &id) in labels.ids().iter().enumerate() {
        let name = labels.name_of(id);
        if name == task.first {
            rows.push(i);
            ids.push(0);
        } else if name == task.second {
            rows.push(i);
            ids.push(1);
        }
    }
    for class in [&task.first, &task.second] {
        if labels.id_of(class).is_none_or(|id| !labels.ids().contains(&id)) {
            return Err(Error::Empty(format!("class {class} is not present in the dataset")));
        }
    }
    data.select_rows(&rows).with_labels(Labels::new(ids, vec![task.first.clone(), task.second.clone()])?)
}

/// Masks, then keeps the task's two classes.
pub fn prepare_task(data: &SpectraMatrix, task: &ClassPairTask) -> Result<SpectraMatrix> {
    let masked = if task.masks.is_empty() { data.clone() } else { apply_mask(data, &task.masks)? };
    filter_classes(&masked, task)
}

/// Unbiased sample covariance of the rows labelled `class`.
pub fn class_covariance(data: &SpectraMatrix, class: &str) -> Result<DMatrix<f64>> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let id = labels.id_of(class).ok_or_else(|| Error::UnknownLabel { label: class.to_string(), row: 0 })?;
    let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels.ids()[i] == id).collect();
    if rows.len() < 2 {
        return Err(Error::ClassTooSmall { class: class.to_string(), count: rows.len(), needed: 2 });
    }
    let n = data.n_cols();
    let m = rows.len();
    let sub = data.select_rows(&rows);
    let means = sub.column_means();
    let centred = DMatrix::from_fn(m, n, |i, j| sub.get(i, j) - means[j]);
    let mut cov = centred.transpose() * &centred / (m as f64 - 1.0);
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok(cov)
}

/// Dense CSV, one matrix row per line, with a header of column indices.
pub fn write_matrix_csv<W: Write>(matrix: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((0..matrix.ncols()).map(|j| j.to_string()))?;
    for i in 0..matrix.nrows() {
        w.write_record((0..matrix.ncols()).map(|j| format!("{:?}", matrix[(i, j)])))?;
    }
    w.flush()?;
    Ok(())
}

/// Declared classes and expected row counts of a dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    #[serde(default)]
    pub expected_counts: BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheck {
    pub observed: BTreeMap<String, usize>,
    pub expected: BTreeMap<String, usize>,
    /// Classes whose observed count differs from the expected one.
    pub mismatches: Vec<String>,
    /// Labels found in the data but not declared.
    pub undeclared: Vec<String>,
}

impl ManifestCheck {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty() && self.undeclared.is_empty()
    }
}

/// Compares class counts with a manifest. Reports, never fails.
pub fn check_manifest(data: &SpectraMatrix, manifest: &DatasetManifest) -> Result<ManifestCheck> {
    let labels = data.labels().ok_or(Error::MissingLabels)?;
    let counts = labels.counts();
    let observed: BTreeMap<String, usize> =
        labels.names().iter().zip(&counts).map(|(n, &c)| (n.clone(), c)).collect();
    let mismatches = manifest
        .expected_counts
        .iter()
        .filter(|(name, &want)| observed.get(*name).copied().unwrap_or(0) != want)
        .map(|(name, _)| name.clone())
        .collect();
    let undeclared = observed.keys().filter(|n| !manifest.classes.contains(n)).cloned().collect();
    Ok(ManifestCheck { observed, expected: manifest.expected_counts.clone(), mismatches, undeclared })
}

/// Converts a wide table (first column wavelength, one column per sample id)
/// and a `sample,label` map into the canonical layout. Samples missing from
/// the map are skipped; rows appear in column order.
pub fn convert_wide<R1: Read, R2: Read>(wide: R1, label_map: R2) -> Result<SpectraMatrix> {
    let mut map = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(label_map);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Parse { row: i + 1, column: rec.len(), message: "expected sample,label".into() });
        }
        map.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }

    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(wide);
    let header = rdr.headers()?.clone();
    let samples: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(c, s)| map.get(s.trim()).map(|label| (c, label.clone())))
        .collect();
    if samples.is_empty() {
        return Err(Error::Empty("no sample column matches the label map".into()));
    }
    let mut axis = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); samples.len()];
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        axis.push(parse_f64(rec.get(0).unwrap_or(""), row, 0)?);
        for (k, (c, _)) in samples.iter().enumerate() {
            let cell = rec.get(*c).ok_or_else(|| Error::Parse { row, column: *c, message: "missing cell".into() })?;
            columns[k].push(parse_f64(cell, row, *c)?);
        }
    }
    let mut names: Vec<String> = Vec::new();
    let mut ids = Vec::new();
    for (_, label) in &samples {
        let id = match names.iter().position(|n| n == label) {
            Some(i) => i,
            None => {
                names.push(label.clone());
                names.len() - 1
            }
        };
        ids.push(id as u32);
    }
    SpectraMatrix::from_rows(&columns)?.with_axis(axis)?.with_labels(Labels::new(ids, names)?)
}
