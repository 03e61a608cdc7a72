use log::debug;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{softmax_rows, LabeledDataset, Standardizer};
use crate::error::{Error, Result};
use crate::mlm::{warmup_lr, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![256, 256],
            learning_rate: 4e-5,
            l2: 1e-5,
            batch_size: 32,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeepConfig {
    pub hidden: Vec<usize>,
    /// Add the first hidden layer's output, linearly projected, to the input
    /// of the third hidden layer.
    pub residual: bool,
    /// Weight the loss by normalised inverse class frequency.
    pub class_weighted: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub lr_scale: f64,
    pub l2: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DeepConfig {
    fn default() -> Self {
        DeepConfig {
            hidden: vec![256, 512, 1024],
            residual: true,
            class_weighted: true,
            epochs: 10,
            batch_size: 64,
            warmup_steps: 400,
            lr_scale: 1.0,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl DeepConfig {
    /// Longer regimen with large batches.
    pub fn long_profile() -> Self {
        DeepConfig {
            epochs: 15,
            batch_size: 512,
            ..Self::default()
        }
    }
}

/// Inverse class frequencies rescaled to mean 1 over the classes present.
/// Absent classes get weight 0.
pub fn class_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total as f64 / c as f64 })
        .collect();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present == 0 {
        return raw;
    }
    let mean = raw.iter().sum::<f64>() / present as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

/// Feed-forward ReLU classifier with an optional skip connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub classes: Vec<String>,
    pub standardizer: Standardizer,
    /// One matrix per layer, hidden layers first, output layer last.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// `(from, into, projection)`: hidden output `from` times `projection`
    /// is added to the input of layer `into`.
    pub residual: Option<(usize, usize, Array2<f64>)>,
}

struct Trace {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Network {
    fn init(
        classes: Vec<String>,
        standardizer: Standardizer,
        input: usize,
        hidden: &[usize],
        residual: Option<(usize, usize)>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes.len());
        let mut matrix = |rows: usize, cols: usize, gain: f64| -> Array2<f64> {
            let normal = Normal::new(0.0, (gain / rows as f64).sqrt()).expect("positive std");
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
        };
        let layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let gain = if l + 1 == layers { 1.0 } else { 2.0 };
            weights.push(matrix(dims[l], dims[l + 1], gain));
            biases.push(Array1::zeros(dims[l + 1]));
        }
        let residual = match residual {
            Some((from, into)) => {
                if from + 1 >= into || into >= hidden.len() {
                    return Err(Error::Config(format!(
                        "skip connection from hidden layer {from} into layer {into} needs at least {} hidden layers",
                        into + 1
                    )));
                }
                Some((from, into, matrix(hidden[from], dims[into], 1.0)))
            }
            None => None,
        };
        Ok(Network {
            classes,
            standardizer,
            weights,
            biases,
            residual,
        })
    }

    fn run(&self, x: &Array2<f64>) -> (Array2<f64>, Trace) {
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(last);
        let mut cur = x.clone();
        for l in 0..=last {
            if let Some((from, into, p)) = &self.residual {
                if *into == l {
                    cur += &outputs[*from].dot(p);
                }
            }
            let mut z = cur.dot(&self.weights[l]) + &self.biases[l];
            inputs.push(cur);
            if l == last {
                return (z, Trace { inputs, outputs });
            }
            z.mapv_inplace(|v| v.max(0.0));
            outputs.push(z.clone());
            cur = z;
        }
        unreachable!("network has an output layer")
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.standardizer.apply(x)?;
        let (mut logits, _) = self.run(&z);
        softmax_rows(&mut logits);
        Ok(logits)
    }

    fn zeros_like(&self) -> Network {
        Network {
            classes: Vec::new(),
            standardizer: self.standardizer.clone(),
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            residual: self.residual.as_ref().map(|(f, i, p)| (*f, *i, Array2::zeros(p.raw_dim()))),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.push(w.as_slice().expect("standard layout"));
            v.push(b.as_slice().expect("standard layout"));
        }
        if let Some((_, _, p)) = &self.residual {
            v.push(p.as_slice().expect("standard layout"));
        }
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            v.push(w.as_slice_mut().expect("standard layout"));
            v.push(b.as_slice_mut().expect("standard layout"));
        }
        if let Some((_, _, p)) = &mut self.residual {
            v.push(p.as_slice_mut().expect("standard layout"));
        }
        v
    }

    /// Weighted mean cross-entropy plus `0.5 * l2 * sum ||W||^2`, and its gradient.
    fn loss_and_grad(&self, x: &Array2<f64>, y: &[usize], weights: &[f64], l2: f64) -> (f64, Network) {
        let n = x.nrows() as f64;
        let (mut logits, trace) = self.run(x);
        let mut loss = 0.0;
        for (row, &t) in logits.rows().into_iter().zip(y) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += weights[t] * (lse - row[t]);
        }
        loss /= n;
        softmax_rows(&mut logits);
        let mut d = logits;
        for (i, &t) in y.iter().enumerate() {
            d[[i, t]] -= 1.0;
            let w = weights[t] / n;
            d.row_mut(i).mapv_inplace(|v| v * w);
        }

        let mut g = self.zeros_like();
        let last = self.weights.len() - 1;
        let mut d_hidden: Vec<Option<Array2<f64>>> = vec![None; last];
        for l in (0..=last).rev() {
            let dz = if l == last {
                d.clone()
            } else {
                let mut da = d_hidden[l].take().expect("gradient flows from above");
                da.zip_mut_with(&trace.outputs[l], |v, &a| {
                    if a <= 0.0 {
                        *v = 0.0;
                    }
                });
                da
            };
            g.weights[l] = trace.inputs[l].t().dot(&dz) + &self.weights[l] * l2;
            g.biases[l] = dz.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let d_in = dz.dot(&self.weights[l].t());
            if let Some((from, into, p)) = &self.residual {
                if *into == l {
                    let gp = trace.outputs[*from].t().dot(&d_in) + p * l2;
                    if let Some((_, _, slot)) = &mut g.residual {
                        *slot = gp;
                    }
                    let extra = d_in.dot(&p.t());
                    match &mut d_hidden[*from] {
                        Some(acc) => *acc += &extra,
                        slot => *slot = Some(extra),
                    }
                }
            }
            match &mut d_hidden[l - 1] {
                Some(acc) => *acc += &d_in,
                slot => *slot = Some(d_in),
            }
        }
        let mut penalty: f64 = self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum();
        if let Some((_, _, p)) = &self.residual {
            penalty += p.iter().map(|v| v * v).sum::<f64>();
        }
        (loss + 0.5 * l2 * penalty, g)
    }
}

struct Schedule<'a> {
    epochs: usize,
    batch_size: usize,
    l2: f64,
    lr: &'a dyn Fn(usize) -> f64,
    class_weights: Vec<f64>,
}

fn fit(mut net: Network, x: &Array2<f64>, y: &[usize], s: Schedule<'_>, rng: &mut ChaCha8Rng) -> Result<Network> {
    let mut adam = Adam::new(net.slices().iter().map(|v| v.len()), 0.9, 0.999, 1e-8);
    let mut order: Vec<usize> = (0..y.len()).collect();
    for epoch in 0..s.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(s.batch_size.max(1)) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, grads) = net.loss_and_grad(&xb, &yb, &s.class_weights, s.l2);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("classifier loss became {loss} in epoch {}", epoch + 1)));
            }
            total += loss * chunk.len() as f64;
            let lr = (s.lr)(adam.steps() as usize + 1);
            adam.step(net.slices_mut(), grads.slices(), lr);
        }
        debug!("epoch {}: loss {:.6}", epoch + 1, total / y.len() as f64);
    }
    Ok(net)
}

fn check(data: &LabeledDataset) -> Result<()> {
    if data.num_classes() < 2 || data.is_empty() {
        return Err(Error::Domain("classifier training needs rows and at least two classes".into()));
    }
    Ok(())
}

/// Multi-layer perceptron trained with Adam at a constant learning rate.
pub fn train_mlp(data: &LabeledDataset, config: &MlpConfig) -> Result<Network> {
    check(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let standardizer = Standardizer::fit(&data.features);
    let x = standardizer.apply(&data.features)?;
    let net = Network::init(data.classes.clone(), standardizer, x.ncols(), &config.hidden, None, &mut rng)?;
    let lr = config.learning_rate;
    let schedule = Schedule {
        epochs: config.epochs,
        batch_size: config.batch_size,
        l2: config.l2,
        lr: &move |_| lr,
        class_weights: vec![1.0; data.num_classes()],
    };
    fit(net, &x, &data.labels, schedule, &mut rng)
}

/// Three-hidden-layer network with a skip connection, class-weighted loss
/// and the warmup learning-rate schedule.
pub fn train_deep(data: &LabeledDataset, config: &DeepConfig) -> Result<Network> {
    check(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let standardizer = Standardizer::fit(&data.features);
    let x = standardizer.apply(&data.features)?;
    let residual = config.residual.then_some((0, 2));
    let net = Network::init(data.classes.clone(), standardizer, x.ncols(), &config.hidden, residual, &mut rng)?;
    let width = config.hidden.first().copied().unwrap_or(x.ncols());
    let (warmup, scale) = (config.warmup_steps, config.lr_scale);
    let schedule = Schedule {
        epochs: config.epochs,
        batch_size: config.batch_size,
        l2: config.l2,
        lr: &move |step| warmup_lr(step, width, warmup, scale),
        class_weights: if config.class_weighted {
            class_weights(&data.class_counts())
        } else {
            vec![1.0; data.num_classes()]
        },
    };
    fit(net, &x, &data.labels, schedule, &mut rng)
}
