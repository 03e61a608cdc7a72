//! Read classifiers, clustering with cluster-to-class matching, and
//! evaluation metrics.

mod dataset;
mod hungarian;
mod kmeans;
mod logreg;
mod metrics;
mod network;

pub use dataset::{l2_normalized, LabeledDataset, Standardizer};
pub use hungarian::{hungarian_map, Mapping};
pub use kmeans::{kmeans, KMeansResult};
pub use logreg::{train_logreg, LinearModel, LogRegConfig};
pub use metrics::{average_precision, evaluate, pr_curve, write_pr_csv, ClassMetrics, EvalReport, MappingEntry, PrCurve, PrPoint};
pub use network::{class_weights, train_deep, train_mlp, DeepConfig, MlpConfig, Network};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Any trained read classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classifier {
    Linear(LinearModel),
    Network(Network),
}

impl Classifier {
    /// Class probabilities, one row per input row.
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Classifier::Linear(m) => m.predict_proba(x),
            Classifier::Network(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }

    pub fn classes(&self) -> &[String] {
        match self {
            Classifier::Linear(m) => &m.classes,
            Classifier::Network(m) => &m.classes,
        }
    }
}

/// Index of the largest entry per row; ties go to the lower index.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}
