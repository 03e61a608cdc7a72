use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{apply_mask, MaskedWindow, MaskingConfig, Params, PretrainConfig, TransformerConfig, TransformerModel};
use crate::error::{Error, Result};
use crate::kmer::{KmerVocabulary, TokenId};
use crate::seed::mix;
use crate::table::EmbeddingTable;

/// Split a token sequence into consecutive non-overlapping windows of at
/// most `max_tokens`. Trailing windows shorter than two tokens are dropped.
pub fn make_windows(tokens: &[TokenId], max_tokens: usize) -> Vec<Vec<TokenId>> {
    tokens
        .chunks(max_tokens.max(1))
        .filter(|w| w.len() >= 2)
        .map(<[TokenId]>::to_vec)
        .collect()
}

/// Inverse-square-root schedule with linear warmup:
/// `lr_scale * dim^-0.5 * min(step^-0.5, step * warmup^-1.5)`, `step >= 1`.
pub fn warmup_lr(step: usize, dim: usize, warmup: usize, lr_scale: f64) -> f64 {
    let step = step.max(1) as f64;
    let warmup = warmup.max(1) as f64;
    lr_scale * (dim as f64).powf(-0.5) * step.powf(-0.5).min(step * warmup.powf(-1.5))
}

/// Adam over a flat list of parameter slices.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(shapes: impl IntoIterator<Item = usize>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Adam {
            beta1,
            beta2,
            epsilon,
            m,
            v,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of `params[i] -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut [f64]>, grads: impl IntoIterator<Item = &'a [f64]>, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainStats {
    /// Masked loss of the initial model on the fixed diagnostic windows.
    pub initial_loss: f64,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub windows: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub model: TransformerModel,
    /// Trained embedding layer.
    pub contextual: EmbeddingTable,
    pub stats: PretrainStats,
}

fn diagnostic_set(windows: &[Vec<TokenId>], n: usize, masking: &MaskingConfig, vocab: &KmerVocabulary, seed: u64) -> Vec<MaskedWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xD1A6));
    windows.iter().take(n).map(|w| apply_mask(w, masking, vocab, &mut rng)).collect()
}

/// Mean masked loss over pre-masked windows (inference mode).
pub fn masked_loss(model: &TransformerModel, windows: &[MaskedWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Domain("no windows to evaluate".into()));
    }
    let losses = windows
        .par_iter()
        .map(|w| model.masked_loss(&w.input, &w.targets, &w.positions))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Fraction of masked positions whose arg-max prediction is the original token.
pub fn masked_accuracy(model: &TransformerModel, windows: &[MaskedWindow]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for w in windows {
        let out = model.forward(&w.input)?;
        for (&p, &t) in w.positions.iter().zip(&w.targets) {
            let row = out.logits.row(p);
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0;
            hits += usize::from(best == t as usize);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Domain("no masked positions to evaluate".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Masked-token pretraining over `windows`.
///
/// The embedding layer starts as a copy of `global` when given. Each batch
/// averages per-window gradients; Adam follows [`warmup_lr`].
pub fn pretrain(
    windows: &[Vec<TokenId>],
    vocab: &KmerVocabulary,
    global: Option<&EmbeddingTable>,
    config: &TransformerConfig,
    masking: &MaskingConfig,
    schedule: &PretrainConfig,
) -> Result<PretrainOutput> {
    schedule.validate()?;
    masking.validate()?;
    let mut model = TransformerModel::new(*config, vocab.len(), vocab.fingerprint())?;
    if let Some(table) = global {
        table.check_vocab(vocab)?;
        model.init_embedding_from(table)?;
    }
    let mut windows: Vec<&Vec<TokenId>> = windows.iter().filter(|w| w.len() >= 2).collect();
    if windows.is_empty() {
        return Err(Error::Domain("pretraining corpus has no window of two or more tokens".into()));
    }
    if let Some(w) = windows.iter().find(|w| w.len() > config.max_tokens) {
        return Err(Error::TooLong {
            len: w.len(),
            max: config.max_tokens,
        });
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(schedule.seed, 0x5EED));
    if schedule.max_windows > 0 && windows.len() > schedule.max_windows {
        windows.shuffle(&mut order_rng);
        windows.truncate(schedule.max_windows);
    }

    let owned: Vec<Vec<TokenId>> = windows.iter().map(|w| (*w).clone()).collect();
    let diag = diagnostic_set(&owned, schedule.diagnostic_windows.max(1), masking, vocab, masking.seed);
    let initial_loss = masked_loss(&model, &diag)?;
    info!(
        "pretraining on {} windows, {} parameters, initial masked loss {:.4}",
        owned.len(),
        model.params.num_parameters(),
        initial_loss
    );

    let shapes: Vec<usize> = model.params.named_tensors().iter().map(|(_, _, v)| v.len()).collect();
    let mut adam = Adam::new(shapes, schedule.beta1, schedule.beta2, schedule.epsilon);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(masking.seed);
    let mut order: Vec<usize> = (0..owned.len()).collect();
    let mut epoch_losses = Vec::with_capacity(schedule.epochs);
    let mut above = 0usize;
    let batch = schedule.batch_size.max(1);

    for epoch in 0..schedule.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let masked: Vec<MaskedWindow> = chunk.iter().map(|&i| apply_mask(&owned[i], masking, vocab, &mut mask_rng)).collect();
            let step = adam.steps() + 1;
            let scale = 1.0 / chunk.len() as f64;
            let results = masked
                .par_iter()
                .enumerate()
                .map(|(j, w)| {
                    let mut grads = Params::zeros(vocab.len(), config);
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(config.seed, step), j as u64));
                    let loss = model.accumulate_mlm_grads(&w.input, &w.targets, &w.positions, Some(&mut rng), &mut grads, scale)?;
                    Ok((loss, grads))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut iter = results.into_iter();
            let (mut batch_loss, mut total) = iter.next().expect("non-empty batch");
            for (loss, grads) in iter {
                batch_loss += loss;
                total.add_scaled(&grads, 1.0);
            }
            let lr = warmup_lr(step as usize, config.model_dim, schedule.warmup_steps, schedule.lr_scale);
            let grad_slices: Vec<&[f64]> = total.named_tensors().into_iter().map(|(_, _, v)| v).collect();
            adam.step(model.params.named_slices_mut().into_iter().map(|(_, s)| s), grad_slices, lr);
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / owned.len() as f64;
        debug!("epoch {} masked loss {:.4} after {} steps", epoch + 1, mean, adam.steps());
        epoch_losses.push(mean);
        if !mean.is_finite() || !model.params.all_finite() {
            return Err(Error::Divergence(format!(
                "pretraining produced non-finite values in epoch {} (losses so far {:?})",
                epoch + 1,
                epoch_losses
            )));
        }
        above = if mean > 2.0 * initial_loss { above + 1 } else { 0 };
        if above >= 3 {
            return Err(Error::Divergence(format!(
                "masked loss exceeded twice the initial {:.4} for 3 consecutive epochs: {:?}",
                initial_loss, epoch_losses
            )));
        }
    }
    if let Some(last) = epoch_losses.last() {
        info!("pretraining finished: {} steps, final epoch loss {last:.4}", adam.steps());
    }
    let contextual = model.embedding_table()?;
    Ok(PretrainOutput {
        contextual,
        stats: PretrainStats {
            initial_loss,
            epoch_losses,
            steps: adam.steps(),
            windows: owned.len(),
        },
        model,
    })
}
