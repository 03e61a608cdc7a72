use log::{debug, warn};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{softmax_rows, LabeledDataset, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegConfig {
    /// Coefficient of `0.5 * ||W||^2` added to the mean cross-entropy.
    pub l2: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient norm.
    pub tol: f64,
    pub standardize: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 0.1,
            max_iters: 10_000,
            tol: 1e-6,
            standardize: true,
        }
    }
}

/// Multinomial logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: Vec<String>,
    pub standardizer: Option<Standardizer>,
    /// `features x classes`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_grad_norm: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = match &self.standardizer {
            Some(s) => s.apply(x)?,
            None => {
                if x.ncols() != self.weights.nrows() {
                    return Err(Error::Incompatible(format!(
                        "features have {} columns, model expects {}",
                        x.ncols(),
                        self.weights.nrows()
                    )));
                }
                x.clone()
            }
        };
        Ok(z.dot(&self.weights) + &self.bias)
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut z = self.decision(x)?;
        softmax_rows(&mut z);
        Ok(z)
    }
}

struct Problem<'a> {
    x: &'a Array2<f64>,
    y: &'a [usize],
    l2: f64,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.x.nrows() as f64
    }

    fn probs(&self, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
        let mut z = self.x.dot(w) + b;
        softmax_rows(&mut z);
        z
    }

    fn loss(&self, w: &Array2<f64>, b: &Array1<f64>) -> f64 {
        let z = self.x.dot(w) + b;
        let mut total = 0.0;
        for (row, &y) in z.rows().into_iter().zip(self.y) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[y];
        }
        total / self.n() + 0.5 * self.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, w: &Array2<f64>, p: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let mut r = p.clone();
        for (i, &y) in self.y.iter().enumerate() {
            r[[i, y]] -= 1.0;
        }
        let gw = self.x.t().dot(&r) / self.n() + w * self.l2;
        let gb = r.sum_axis(Axis(0)) / self.n();
        (gw, gb)
    }

    /// Hessian-vector product at the probabilities `p`.
    fn hess_vec(&self, p: &Array2<f64>, vw: &Array2<f64>, vb: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
        let z = self.x.dot(vw) + vb;
        let mut r = p * &z;
        for (mut row, prow) in r.rows_mut().into_iter().zip(p.rows()) {
            let s = row.sum();
            row.zip_mut_with(&prow, |v, &pv| *v -= pv * s);
        }
        let hw = self.x.t().dot(&r) / self.n() + vw * self.l2;
        let hb = r.sum_axis(Axis(0)) / self.n();
        (hw, hb)
    }
}

fn dot2(a: &(Array2<f64>, Array1<f64>), b: &(Array2<f64>, Array1<f64>)) -> f64 {
    (&a.0 * &b.0).sum() + a.1.dot(&b.1)
}

/// Fit by truncated Newton (conjugate gradient on Hessian-vector products)
/// with a backtracking line search. Features are standardised first unless
/// disabled; the bias is not penalised.
pub fn train_logreg(data: &LabeledDataset, config: &LogRegConfig) -> Result<LinearModel> {
    if data.num_classes() < 2 {
        return Err(Error::Domain("logistic regression needs at least two classes".into()));
    }
    if data.is_empty() {
        return Err(Error::Domain("logistic regression needs training rows".into()));
    }
    if !(config.l2 >= 0.0) {
        return Err(Error::Config("classify: l2 must be non-negative".into()));
    }
    let standardizer = config.standardize.then(|| Standardizer::fit(&data.features));
    let x = match &standardizer {
        Some(s) => s.apply(&data.features)?,
        None => data.features.clone(),
    };
    let prob = Problem {
        x: &x,
        y: &data.labels,
        l2: config.l2,
    };
    let (d, c) = (x.ncols(), data.num_classes());
    let mut w = Array2::zeros((d, c));
    let mut b = Array1::zeros(c);
    let mut loss = prob.loss(&w, &b);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;

    while iterations < config.max_iters {
        let p = prob.probs(&w, &b);
        let g = prob.gradient(&w, &p);
        grad_norm = dot2(&g, &g).sqrt();
        if grad_norm < config.tol {
            converged = true;
            break;
        }
        iterations += 1;

        // CG on H s = -g
        let cg_tol = grad_norm.sqrt().min(0.5) * grad_norm;
        let mut s = (Array2::zeros((d, c)), Array1::zeros(c));
        let mut r = (-&g.0, -&g.1);
        let mut dir = r.clone();
        let mut rr = dot2(&r, &r);
        for _ in 0..(d + 1) * c {
            let hd = prob.hess_vec(&p, &dir.0, &dir.1);
            let curv = dot2(&dir, &hd);
            if curv <= 1e-30 {
                break;
            }
            let alpha = rr / curv;
            s.0.scaled_add(alpha, &dir.0);
            s.1.scaled_add(alpha, &dir.1);
            r.0.scaled_add(-alpha, &hd.0);
            r.1.scaled_add(-alpha, &hd.1);
            let rr_new = dot2(&r, &r);
            if rr_new.sqrt() <= cg_tol {
                break;
            }
            let beta = rr_new / rr;
            dir = (&r.0 + &(&dir.0 * beta), &r.1 + &(&dir.1 * beta));
            rr = rr_new;
        }
        let mut slope = dot2(&g, &s);
        if !(slope < 0.0) {
            // not a descent direction; fall back to steepest descent
            s = (-&g.0, -&g.1);
            slope = -grad_norm * grad_norm;
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_try = &w + &(&s.0 * step);
            let b_try = &b + &(&s.1 * step);
            let l_try = prob.loss(&w_try, &b_try);
            if l_try.is_finite() && l_try <= loss + 1e-4 * step * slope {
                w = w_try;
                b = b_try;
                loss = l_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        debug!("newton iteration {iterations}: loss {loss:.6e}, |g| {grad_norm:.3e}, step {step}");
        if !accepted {
            warn!("logistic regression line search stalled at |g| = {grad_norm:.3e}; keeping best iterate");
            break;
        }
    }
    if !converged {
        let p = prob.probs(&w, &b);
        let g = prob.gradient(&w, &p);
        grad_norm = dot2(&g, &g).sqrt();
        converged = grad_norm < config.tol;
        if !converged {
            warn!("logistic regression stopped after {iterations} iterations with |g| = {grad_norm:.3e}");
        }
    }
    Ok(LinearModel {
        classes: data.classes.clone(),
        standardizer,
        weights: w,
        bias: b,
        iterations,
        converged,
        final_grad_norm: grad_norm,
    })
}
