//! The dataset carrier shared by every module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class labels as dense ids into a list of class names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    ids: Vec<u32>,
    names: Vec<String>,
}

impl Labels {
    pub fn new(ids: Vec<u32>, names: Vec<String>) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label id {bad} has no class name ({} names)",
                names.len()
            )));
        }
        Ok(Labels { ids, names })
    }

    /// `counts[i]` rows labelled with class `i`, in block order.
    pub fn blocks(counts: &[usize]) -> Self {
        let ids = counts
            .iter()
            .enumerate()
            .flat_map(|(class, &count)| std::iter::repeat_n(class as u32, count))
            .collect();
        let names = (0..counts.len()).map(|c| format!("class{c}")).collect();
        Labels { ids, names }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn name_of(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|p| p as u32)
    }

    /// Row count per class id.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.names.len()];
        for &id in &self.ids {
            counts[id as usize] += 1;
        }
        counts
    }

    pub fn select(&self, rows: &[usize]) -> Labels {
        Labels {
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            names: self.names.clone(),
        }
    }

    /// Same names, different ids (e.g. after shuffling labels).
    pub fn with_ids(&self, ids: Vec<u32>) -> Result<Labels> {
        Labels::new(ids, self.names.clone())
    }
}

/// Row-major N×n matrix of intensities with optional axis and labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectraMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    axis: Option<Vec<f64>>,
    labels: Option<Labels>,
}

impl SpectraMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(SpectraMatrix { rows, cols, values, axis: None, labels: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidArgument(format!("row {bad} has a different length")));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn empty(cols: usize) -> Self {
        SpectraMatrix { rows: 0, cols, values: Vec::new(), axis: None, labels: None }
    }

    pub fn with_axis(mut self, axis: Vec<f64>) -> Result<Self> {
        if axis.len() != self.cols {
            return Err(Error::InvalidArgument(format!(
                "axis has {} entries for {} columns",
                axis.len(),
                self.cols
            )));
        }
        if let Some(i) = axis.windows(2).position(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::NonMonotoneAxis(i + 1));
        }
        self.axis = Some(axis);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.len() != self.rows {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} rows",
                labels.len(),
                self.rows
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_axis(mut self) -> Self {
        self.axis = None;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axis(&self) -> Option<&[f64]> {
        self.axis.as_deref()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Label ids, or [`Error::MissingLabels`].
    pub fn label_ids(&self) -> Result<&[u32]> {
        self.labels.as_ref().map(Labels::ids).ok_or(Error::MissingLabels)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Copy of one column.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// Column subset in the given order. The axis follows the columns when
    /// they are increasing and is dropped otherwise.
    pub fn select_columns(&self, columns: &[usize]) -> SpectraMatrix {
        let mut values = Vec::with_capacity(self.rows * columns.len());
        for row in self.rows() {
            values.extend(columns.iter().map(|&c| row[c]));
        }
        let increasing = columns.windows(2).all(|w| w[0] < w[1]);
        SpectraMatrix {
            rows: self.rows,
            cols: columns.len(),
            values,
            axis: self
                .axis
                .as_ref()
                .filter(|_| increasing)
                .map(|a| columns.iter().map(|&c| a[c]).collect()),
            labels: self.labels.clone(),
        }
    }

    /// Row subset in the given order; labels follow the rows.
    pub fn select_rows(&self, rows: &[usize]) -> SpectraMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        SpectraMatrix {
            rows: rows.len(),
            cols: self.cols,
            values,
            axis: self.axis.clone(),
            labels: self.labels.as_ref().map(|l| l.select(rows)),
        }
    }

    /// Stacks class blocks vertically and labels them `0, 1, ...` in order.
    pub fn stack_classes(blocks: &[SpectraMatrix]) -> Result<SpectraMatrix> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::InvalidArgument("class blocks differ in width".into()));
        }
        let counts: Vec<usize> = blocks.iter().map(|b| b.rows).collect();
        let values = blocks.iter().flat_map(|b| b.values.iter().copied()).collect();
        let rows = counts.iter().sum();
        SpectraMatrix::new(rows, cols, values)?.with_labels(Labels::blocks(&counts))
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> SpectraMatrix {
        SpectraMatrix { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> SpectraMatrix {
        debug_assert_eq!(values.len(), self.values.len());
        SpectraMatrix { values, ..self.clone() }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for row in self.rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Column-major copy, convenient for per-feature scans.
    pub fn to_column_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }
}
