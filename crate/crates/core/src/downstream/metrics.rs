use std::fmt::Write as _;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True members of the class.
    pub support: u64,
    /// Rows predicted as the class.
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub cluster: usize,
    pub class: Option<String>,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub total: u64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    /// Rows of each true class that received no class (unmatched clusters).
    pub unassigned: Vec<u64>,
    /// Average precision per class, when scores were available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_precision: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<Vec<MappingEntry>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics for single-label predictions; `None` marks a row that was given
/// no class.
pub fn evaluate(truth: &[usize], predicted: &[Option<usize>], classes: &[String]) -> Result<EvalReport> {
    if truth.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let c = classes.len();
    if truth.iter().chain(predicted.iter().flatten()).any(|&l| l >= c) {
        return Err(Error::Domain("label index outside the class catalog".into()));
    }
    let mut confusion = vec![vec![0u64; c]; c];
    let mut unassigned = vec![0u64; c];
    for (&t, p) in truth.iter().zip(predicted) {
        match p {
            Some(p) => confusion[t][*p] += 1,
            None => unassigned[t] += 1,
        }
    }
    let mut per_class = Vec::with_capacity(c);
    let (mut tp_all, mut pred_all) = (0u64, 0u64);
    for k in 0..c {
        let tp = confusion[k][k];
        let support = confusion[k].iter().sum::<u64>() + unassigned[k];
        let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        tp_all += tp;
        pred_all += predicted;
        per_class.push(ClassMetrics {
            class: classes[k].clone(),
            precision,
            recall,
            f1: f1(precision, recall),
            support,
            predicted,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if c == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / c as f64
        }
    };
    let total = truth.len() as u64;
    let micro_precision = ratio(tp_all, pred_all);
    let micro_recall = ratio(tp_all, total);
    Ok(EvalReport {
        classes: classes.to_vec(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        micro_precision,
        micro_recall,
        micro_f1: f1(micro_precision, micro_recall),
        accuracy: ratio(tp_all, total),
        total,
        per_class,
        confusion,
        unassigned,
        average_precision: None,
        mapping: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct score, highest threshold first.
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
}

/// Precision-recall curve of `scores` against binary `positives`. Equal
/// scores form one threshold. Average precision is
/// `sum_i (R_i - R_{i-1}) * P_i` over those thresholds; 0 without positives.
pub fn pr_curve(scores: &[f64], positives: &[bool]) -> Result<PrCurve> {
    if scores.len() != positives.len() {
        return Err(Error::Domain("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores must not be NaN".into()));
    }
    let total_pos = positives.iter().filter(|&&p| p).count() as u64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut ap = 0.0;
    let mut last_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, total_pos);
        ap += (recall - last_recall) * precision;
        last_recall = recall;
        points.push(PrPoint {
            threshold: s,
            precision,
            recall,
        });
    }
    Ok(PrCurve {
        points,
        average_precision: ap,
    })
}

pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    Ok(pr_curve(scores, positives)?.average_precision)
}

impl EvalReport {
    /// One-vs-rest curves from per-class scores (`rows x classes`), also
    /// recording each class's average precision in the report.
    pub fn attach_scores(&mut self, truth: &[usize], scores: &Array2<f64>) -> Result<Vec<PrCurve>> {
        if scores.nrows() != truth.len() || scores.ncols() != self.classes.len() {
            return Err(Error::Domain("score matrix does not match labels and classes".into()));
        }
        let mut curves = Vec::with_capacity(self.classes.len());
        for k in 0..self.classes.len() {
            let pos: Vec<bool> = truth.iter().map(|&t| t == k).collect();
            let col: Vec<f64> = scores.column(k).to_vec();
            curves.push(pr_curve(&col, &pos)?);
        }
        self.average_precision = Some(curves.iter().map(|c| c.average_precision).collect());
        Ok(curves)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Fixed-width summary for terminals and logs.
    pub fn render_table(&self) -> String {
        let width = self.classes.iter().map(String::len).max().unwrap_or(5).max(9);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  precision  recall     f1  support", "class");
        for (k, m) in self.per_class.iter().enumerate() {
            let _ = write!(out, "{:<width$}  {:>9.4}  {:>6.4}  {:>5.4}  {:>7}", m.class, m.precision, m.recall, m.f1, m.support);
            if let Some(ap) = &self.average_precision {
                let _ = write!(out, "  AP {:.4}", ap[k]);
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>6.4}  {:>5.4}  {:>7}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1, self.total
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>6.4}  {:>5.4}  {:>7}",
            "micro", self.micro_precision, self.micro_recall, self.micro_f1, self.total
        );
        let _ = writeln!(out, "accuracy {:.4}", self.accuracy);
        if let Some(mapping) = &self.mapping {
            out.push_str("cluster -> class\n");
            for m in mapping {
                let _ = writeln!(out, "  {:>3} -> {} ({} rows)", m.cluster, m.class.as_deref().unwrap_or("unassigned"), m.size);
            }
        }
        out
    }
}

/// `class,threshold,precision,recall` rows for every curve.
pub fn write_pr_csv<W: Write>(mut out: W, classes: &[String], curves: &[PrCurve]) -> Result<()> {
    writeln!(out, "class,threshold,precision,recall")?;
    for (class, curve) in classes.iter().zip(curves) {
        for p in &curve.points {
            writeln!(out, "{class},{:?},{:?},{:?}", p.threshold, p.precision, p.recall)?;
        }
    }
    out.flush()?;
    Ok(())
}
