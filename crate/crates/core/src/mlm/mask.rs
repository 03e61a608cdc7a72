use rand::Rng;

use super::MaskingConfig;
use crate::kmer::{KmerVocabulary, TokenId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedWindow {
    pub input: Vec<TokenId>,
    /// Positions whose original token must be predicted, ascending.
    pub positions: Vec<usize>,
    pub targets: Vec<TokenId>,
}

/// Select each position independently with probability `mask_ratio`, so a
/// particular set of `T` positions out of `N` is chosen with probability
/// `s^T (1-s)^(N-T)`. If nothing is selected one position is forced so the
/// loss is always defined.
pub fn apply_mask<R: Rng>(
    ids: &[TokenId],
    config: &MaskingConfig,
    vocab: &KmerVocabulary,
    rng: &mut R,
) -> MaskedWindow {
    let mut input = ids.to_vec();
    let mut positions: Vec<usize> = (0..ids.len())
        .filter(|_| rng.random_bool(config.mask_ratio.clamp(0.0, 1.0)))
        .collect();
    if positions.is_empty() && !ids.is_empty() {
        positions.push(rng.random_range(0..ids.len()));
    }
    let targets = positions.iter().map(|&p| ids[p]).collect();
    let replace_all = config.mask_token_prob >= 1.0;
    for &p in &positions {
        if replace_all {
            input[p] = vocab.mask();
            continue;
        }
        let u: f64 = rng.random();
        if u < config.mask_token_prob {
            input[p] = vocab.mask();
        } else if u < config.mask_token_prob + config.random_token_prob {
            input[p] = rng.random_range(0..vocab.num_kmers());
        }
    }
    MaskedWindow {
        input,
        positions,
        targets,
    }
}
