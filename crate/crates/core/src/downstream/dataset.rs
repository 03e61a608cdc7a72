use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::ReadEmbeddings;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    /// Index into `classes` per row.
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
    /// Row identifiers, kept aligned with `labels`.
    pub ids: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        let ids = (0..labels.len()).map(|i| format!("row{i}")).collect();
        Self::with_ids(features, labels, classes, ids)
    }

    pub fn with_ids(features: Array2<f64>, labels: Vec<usize>, classes: Vec<String>, ids: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() || ids.len() != labels.len() {
            return Err(Error::Domain(format!(
                "dataset has {} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Domain(format!("label index {bad} outside {} classes", classes.len())));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset features must be finite".into()));
        }
        Ok(LabeledDataset {
            features,
            labels,
            classes,
            ids,
        })
    }

    /// Labeled rows of `emb`. With `classes = None` the catalog is the sorted
    /// set of labels present. Unlabeled rows, and rows whose label is not in
    /// the catalog, are dropped.
    pub fn from_embeddings(emb: &ReadEmbeddings, classes: Option<&[String]>) -> Result<Self> {
        let classes: Vec<String> = match classes {
            Some(c) => c.to_vec(),
            None => emb.labels.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect(),
        };
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (i, label) in emb.labels.iter().enumerate() {
            if let Some(c) = label.as_ref().and_then(|l| classes.iter().position(|c| c == l)) {
                rows.push(i);
                labels.push(c);
                ids.push(emb.ids[i].clone());
            }
        }
        let mut features = Array2::zeros((rows.len(), emb.dim));
        for (r, &i) in rows.iter().enumerate() {
            features.row_mut(r).assign(&ndarray::ArrayView1::from(emb.row(i)));
        }
        Self::with_ids(features, labels, classes, ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes.clone(),
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Stratified split: within every class a `test_fraction` share (rounded,
    /// at least one row when the class has two or more) goes to the test set.
    /// Both parts keep the original row order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut test = Vec::new();
        for c in 0..self.classes.len() {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let mut n = (members.len() as f64 * test_fraction).round() as usize;
            if test_fraction > 0.0 && n == 0 && members.len() >= 2 {
                n = 1;
            }
            test.extend_from_slice(&members[..n]);
        }
        test.sort_unstable();
        let mut is_test = vec![false; self.len()];
        for &i in &test {
            is_test[i] = true;
        }
        let train: Vec<usize> = (0..self.len()).filter(|&i| !is_test[i]).collect();
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Per-column affine rescaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    /// Constant columns get scale 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut scale = Array1::zeros(x.ncols());
        for (j, s) in scale.iter_mut().enumerate() {
            let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            *s = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Incompatible(format!(
                "features have {} columns, model expects {}",
                x.ncols(),
                self.mean.len()
            )));
        }
        Ok((x - &self.mean) / &self.scale)
    }
}

/// Copy of `x` with every row scaled to unit Euclidean norm (zero rows kept).
pub fn l2_normalized(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}
