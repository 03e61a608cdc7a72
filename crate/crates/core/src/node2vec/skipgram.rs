use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmer::TokenId;
use crate::table::{dot, EmbeddingTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Context positions taken on each side of the centre token.
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial step size, decayed linearly to `learning_rate * min_lr_fraction`.
    pub learning_rate: f64,
    pub min_lr_fraction: f64,
    /// Pairs in the batch used for the pre-training loss diagnostic.
    pub diagnostic_pairs: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_lr_fraction: 1e-4,
            diagnostic_pairs: 1024,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "skipgram: dim, window, negatives and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Input (centre) and output (context) vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramModel {
    pub dim: usize,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl SkipGramModel {
    /// Input rows uniform in `(-0.5/dim, 0.5/dim)`, output rows zero.
    pub fn init(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dim as f64;
        let input = (0..rows * dim).map(|_| rng.random_range(-half..half)).collect();
        SkipGramModel {
            dim,
            input,
            output: vec![0.0; rows * dim],
        }
    }

    pub fn input_row(&self, id: TokenId) -> &[f64] {
        &self.input[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    pub fn output_row(&self, id: TokenId) -> &[f64] {
        &self.output[id as usize * self.dim..(id as usize + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramGrads {
    pub center: Vec<f64>,
    /// Gradient per distinct output row (repeated negatives are summed).
    pub outputs: Vec<(TokenId, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramStats {
    /// Mean pair loss over the first `diagnostic_pairs` pairs at initialization.
    pub initial_batch_loss: f64,
    /// Mean pair loss per epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
    pub pairs_per_epoch: usize,
}

fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss and the scalar coefficient `sigmoid(u.v) - label` for each output row.
fn pair_terms(
    model: &SkipGramModel,
    center: TokenId,
    context: TokenId,
    negatives: &[TokenId],
    coeffs: &mut Vec<(TokenId, f64)>,
) -> f64 {
    coeffs.clear();
    let u = model.input_row(center);
    let s = dot(u, model.output_row(context));
    let mut loss = -log_sigmoid(s);
    coeffs.push((context, sigmoid(s) - 1.0));
    for &n in negatives {
        let s = dot(u, model.output_row(n));
        loss -= log_sigmoid(-s);
        coeffs.push((n, sigmoid(s)));
    }
    loss
}

/// Negative-sampling loss
/// `-log sigmoid(u_c . v_o) - sum_n log sigmoid(-u_c . v_n)`
/// with exact gradients for the centre input vector and every touched
/// output vector.
pub fn skipgram_loss_and_grad(
    center: TokenId,
    context: TokenId,
    negatives: &[TokenId],
    model: &SkipGramModel,
) -> (f64, SkipGramGrads) {
    let mut coeffs = Vec::with_capacity(negatives.len() + 1);
    let loss = pair_terms(model, center, context, negatives, &mut coeffs);
    let u = model.input_row(center);
    let mut g_center = vec![0.0; model.dim];
    let mut outputs: Vec<(TokenId, Vec<f64>)> = Vec::new();
    for &(id, c) in &coeffs {
        for (g, v) in g_center.iter_mut().zip(model.output_row(id)) {
            *g += c * v;
        }
        let slot = match outputs.iter().position(|(o, _)| *o == id) {
            Some(i) => i,
            None => {
                outputs.push((id, vec![0.0; model.dim]));
                outputs.len() - 1
            }
        };
        for (g, x) in outputs[slot].1.iter_mut().zip(u) {
            *g += c * x;
        }
    }
    (
        loss,
        SkipGramGrads {
            center: g_center,
            outputs,
        },
    )
}

/// One SGD step on a single (centre, context) pair. Gradients are taken at
/// the current parameters before any row is written.
fn sgd_pair(
    model: &mut SkipGramModel,
    center: TokenId,
    context: TokenId,
    negatives: &[TokenId],
    lr: f64,
    coeffs: &mut Vec<(TokenId, f64)>,
    g_center: &mut [f64],
) -> f64 {
    let loss = pair_terms(model, center, context, negatives, coeffs);
    let dim = model.dim;
    let c0 = center as usize * dim;
    g_center.iter_mut().for_each(|g| *g = 0.0);
    for &(id, c) in coeffs.iter() {
        let o0 = id as usize * dim;
        for d in 0..dim {
            g_center[d] += c * model.output[o0 + d];
        }
    }
    for &(id, c) in coeffs.iter() {
        let o0 = id as usize * dim;
        for d in 0..dim {
            model.output[o0 + d] -= lr * c * model.input[c0 + d];
        }
    }
    for d in 0..dim {
        model.input[c0 + d] -= lr * g_center[d];
    }
    loss
}

fn pairs<'a>(corpus: &'a [Vec<TokenId>], window: usize) -> impl Iterator<Item = (TokenId, TokenId)> + 'a {
    corpus.iter().flat_map(move |walk| {
        (0..walk.len()).flat_map(move |i| {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(walk.len() - 1);
            (lo..=hi).filter(move |&j| j != i).map(move |j| (walk[i], walk[j]))
        })
    })
}

struct NegativeSampler {
    dist: Option<WeightedIndex<f64>>,
    ids: Vec<TokenId>,
}

impl NegativeSampler {
    /// Unigram distribution raised to the 3/4 power.
    fn new(corpus: &[Vec<TokenId>], rows: usize) -> Self {
        let mut counts = vec![0u64; rows];
        for walk in corpus {
            for &t in walk {
                counts[t as usize] += 1;
            }
        }
        let (ids, weights): (Vec<TokenId>, Vec<f64>) = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as TokenId, (c as f64).powf(0.75)))
            .unzip();
        NegativeSampler {
            dist: WeightedIndex::new(&weights).ok(),
            ids,
        }
    }

    fn draw(&self, avoid: TokenId, out: &mut Vec<TokenId>, n: usize, rng: &mut ChaCha8Rng) {
        out.clear();
        let Some(dist) = &self.dist else { return };
        for _ in 0..n {
            let mut id = self.ids[dist.sample(rng)];
            for _ in 0..8 {
                if id != avoid {
                    break;
                }
                id = self.ids[dist.sample(rng)];
            }
            out.push(id);
        }
    }
}

/// Train skip-gram on a walk corpus and return the input-side table.
///
/// Training is single-threaded: pairs are visited in corpus order and each
/// pair takes one SGD step, so the result is a pure function of the corpus
/// and the seed.
pub fn train_skipgram(
    corpus: &[Vec<TokenId>],
    rows: usize,
    vocab_fingerprint: u64,
    config: &SkipGramConfig,
) -> Result<(EmbeddingTable, SkipGramStats)> {
    config.validate()?;
    if corpus.iter().all(|w| w.is_empty()) {
        return Err(Error::Domain("skipgram: empty walk corpus".into()));
    }
    if let Some(&bad) = corpus.iter().flatten().find(|&&t| t as usize >= rows) {
        return Err(Error::Domain(format!("skipgram: token {bad} outside table of {rows} rows")));
    }
    let mut model = SkipGramModel::init(rows, config.dim, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e_ed0f_5a3b);
    let sampler = NegativeSampler::new(corpus, rows);

    let pairs_per_epoch = pairs(corpus, config.window).count();
    let mut coeffs = Vec::with_capacity(config.negatives + 1);
    let mut negs = Vec::with_capacity(config.negatives);

    let mut diag_rng = rng.clone();
    let mut diag = 0.0;
    let mut diag_n = 0usize;
    for (c, o) in pairs(corpus, config.window).take(config.diagnostic_pairs.max(1)) {
        sampler.draw(o, &mut negs, config.negatives, &mut diag_rng);
        diag += pair_terms(&model, c, o, &negs, &mut coeffs);
        diag_n += 1;
    }
    let initial_batch_loss = if diag_n > 0 { diag / diag_n as f64 } else { f64::NAN };

    let total = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut g_center = vec![0.0; config.dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for (c, o) in pairs(corpus, config.window) {
            let lr = config.learning_rate * (1.0 - step as f64 / total).max(config.min_lr_fraction);
            sampler.draw(o, &mut negs, config.negatives, &mut rng);
            let loss = sgd_pair(&mut model, c, o, &negs, lr, &mut coeffs, &mut g_center);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "skipgram loss {loss} at epoch {epoch}, step {step} (centre {c}, context {o}, lr {lr})"
                )));
            }
            sum += loss;
            step += 1;
        }
        let mean = sum / pairs_per_epoch.max(1) as f64;
        log::debug!("skipgram epoch {epoch}: mean loss {mean:.5}");
        epoch_losses.push(mean);
    }

    let table = EmbeddingTable::from_vec(rows, config.dim, vocab_fingerprint, model.input)?;
    Ok((
        table,
        SkipGramStats {
            initial_batch_loss,
            epoch_losses,
            pairs_per_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vectors_give_ln2_per_term() {
        let model = SkipGramModel {
            dim: 3,
            input: vec![0.0; 9],
            output: vec![0.0; 9],
        };
        let (loss, _) = skipgram_loss_and_grad(0, 1, &[2], &model);
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn identical_unit_vectors_without_negatives() {
        let model = SkipGramModel {
            dim: 2,
            input: vec![1.0, 0.0, 0.0, 0.0],
            output: vec![0.0, 0.0, 1.0, 0.0],
        };
        let (loss, _) = skipgram_loss_and_grad(0, 1, &[], &model);
        assert!((loss - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
        assert!((loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn training_step_matches_reported_gradient() {
        let mut model = SkipGramModel::init(5, 4, 3);
        model.output.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 * 0.7).sin() * 0.1);
        let (_, grads) = skipgram_loss_and_grad(1, 2, &[3, 3, 4], &model);
        let mut stepped = model.clone();
        let mut coeffs = Vec::new();
        let mut gc = vec![0.0; 4];
        sgd_pair(&mut stepped, 1, 2, &[3, 3, 4], 0.1, &mut coeffs, &mut gc);
        for d in 0..4 {
            let expect = model.input_row(1)[d] - 0.1 * grads.center[d];
            assert!((stepped.input_row(1)[d] - expect).abs() < 1e-15);
        }
        for (id, g) in &grads.outputs {
            for d in 0..4 {
                let expect = model.output_row(*id)[d] - 0.1 * g[d];
                assert!((stepped.output_row(*id)[d] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let corpus = vec![vec![0, 1, 2, 1, 0]];
        let cfg = SkipGramConfig { dim: 8, epochs: 0, seed: 5, ..SkipGramConfig::default() };
        let (table, stats) = train_skipgram(&corpus, 4, 0, &cfg).unwrap();
        let init = SkipGramModel::init(4, 8, 5);
        assert_eq!(table.as_slice(), &init.input[..]);
        assert!(stats.epoch_losses.is_empty());
    }

    #[test]
    fn initial_loss_is_one_plus_negatives_ln2() {
        let corpus = vec![vec![0, 1, 2, 3, 2, 1, 0, 3]; 4];
        let cfg = SkipGramConfig { dim: 8, epochs: 1, negatives: 3, ..SkipGramConfig::default() };
        let (_, stats) = train_skipgram(&corpus, 4, 0, &cfg).unwrap();
        assert!((stats.initial_batch_loss - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_tokens_rejected() {
        let cfg = SkipGramConfig::default();
        assert!(train_skipgram(&[vec![0, 9]], 4, 0, &cfg).is_err());
        assert!(train_skipgram(&[vec![]], 4, 0, &cfg).is_err());
    }
}
