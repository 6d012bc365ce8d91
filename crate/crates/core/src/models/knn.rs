//! k-nearest-neighbour classification under the Euclidean distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectraMatrix;

pub const DEFAULT_K: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub n_classes: usize,
    pub train: SpectraMatrix,
}

pub fn fit_knn(train: &SpectraMatrix, k: usize) -> Result<KnnModel> {
    let labels = train.labels().ok_or(Error::MissingLabels)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if k > train.n_rows() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds the {} training samples", train.n_rows())));
    }
    Ok(KnnModel { k, n_classes: labels.names().len(), train: train.clone() })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnModel {
    /// Indices and squared distances of the `k` nearest training rows,
    /// ordered by distance then index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> =
            self.train.rows().enumerate().map(|(i, r)| (i, squared_distance(r, x))).collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        if self.k < all.len() {
            all.select_nth_unstable_by(self.k - 1, cmp);
            all.truncate(self.k);
        }
        all.sort_by(cmp);
        all
    }

    /// Majority label among the neighbours. Ties go to the class with the
    /// smallest summed distance, then to the lowest label.
    pub fn predict_row(&self, x: &[f64]) -> u32 {
        let ids = self.train.labels().expect("fitted kNN keeps labels").ids();
        let mut count = vec![0usize; self.n_classes];
        let mut dist = vec![0.0f64; self.n_classes];
        for (i, d2) in self.neighbours(x) {
            let c = ids[i] as usize;
            count[c] += 1;
            dist[c] += d2.sqrt();
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if count[c] > count[best] || (count[c] == count[best] && dist[c] < dist[best]) {
                best = c;
            }
        }
        best as u32
    }

    pub fn predict(&self, data: &SpectraMatrix) -> Vec<u32> {
        (0..data.n_rows()).into_par_iter().map(|i| self.predict_row(data.row(i))).collect()
    }
}
