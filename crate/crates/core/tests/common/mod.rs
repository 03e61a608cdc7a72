//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mg2vec::kmer::TokenId;
use mg2vec::mlm::{Params, TransformerConfig, TransformerModel};
use mg2vec::node2vec::{skipgram_loss_and_grad, SkipGramModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adjacent k-mer pair counts by direct string slicing.
pub fn brute_force_pairs(reads: &[String], k: usize) -> BTreeMap<(String, String), u64> {
    let valid = |s: &str| s.bytes().all(|b| b"ACGT".contains(&b));
    let mut out = BTreeMap::new();
    for r in reads {
        if r.len() < k + 1 {
            continue;
        }
        for i in 0..=r.len() - k - 1 {
            let a = &r[i..i + k];
            let b = &r[i + 1..i + 1 + k];
            if valid(a) && valid(b) {
                *out.entry((a.to_string(), b.to_string())).or_insert(0) += 1;
            }
        }
    }
    out
}

/// Weight after `n` observations with the default saturating rule, by plain
/// iteration from 1.
pub fn brute_force_weight(n: u64) -> f64 {
    let mut w = 1.0f64;
    for _ in 1..n {
        let psi = w / (w - 1.0).abs().max(1.0);
        w = 2.0 * (psi - 1.0).max(1.0).sqrt() + ((psi - 2.0).min(2.0) + 2.0);
    }
    w
}

/// Best injective cluster -> class agreement by exhaustive search.
pub fn brute_force_agreement(table: &[Vec<u64>]) -> u64 {
    fn go(table: &[Vec<u64>], row: usize, used: &mut Vec<bool>) -> u64 {
        if row == table.len() {
            return 0;
        }
        // this cluster stays unassigned
        let mut best = go(table, row + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(table[row][c] + go(table, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = table.first().map_or(0, Vec::len);
    go(table, 0, &mut vec![false; cols])
}

/// `||a - n|| / max(||a|| + ||n||, floor)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-7)
}

/// Largest per-group relative error of transformer gradients against
/// central differences for one random tiny configuration.
pub fn transformer_gradient_error(seed: u64) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_heads = rng.random_range(1..=2);
    let head_dim = rng.random_range(2..=4);
    let cfg = TransformerConfig {
        num_layers: rng.random_range(1..=2),
        num_heads,
        model_dim: num_heads * head_dim,
        ff_dim: rng.random_range(3..=10),
        dropout: 0.1,
        max_tokens: 8,
        bidirectional: rng.random_bool(0.7),
        init_std: rng.random_range(0.1..0.6),
        seed: rng.random(),
    };
    let vocab = 7 + rng.random_range(0..6);
    let mut model = TransformerModel::new(cfg, vocab, 0).unwrap();
    // move biases and gains off their initial values so their gradients are generic
    for (_, t) in model.params.named_slices_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    let n = rng.random_range(2..=6);
    let ids: Vec<TokenId> = (0..n).map(|_| rng.random_range(0..vocab as TokenId)).collect();
    let mut positions: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
    if positions.is_empty() {
        positions.push(0);
    }
    let targets: Vec<TokenId> = positions.iter().map(|_| rng.random_range(0..vocab as TokenId)).collect();

    let (_, grads) = model.mlm_loss_and_grads(&ids, &targets, &positions).unwrap();
    let analytic: Vec<(String, Vec<f64>)> =
        grads.named_tensors().into_iter().map(|(name, _, v)| (name, v.to_vec())).collect();
    let h = 1e-4;
    let mut worst = (0.0, String::new());
    for (gi, (name, a)) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = value(&model.params, gi, i);
            set(&mut model.params, gi, i, orig + h);
            let up = model.masked_loss(&ids, &targets, &positions).unwrap();
            set(&mut model.params, gi, i, orig - h);
            let down = model.masked_loss(&ids, &targets, &positions).unwrap();
            set(&mut model.params, gi, i, orig);
            *slot = (up - down) / (2.0 * h);
        }
        let err = relative_error(a, &numeric);
        if err > worst.0 {
            worst = (err, name.clone());
        }
    }
    worst
}

fn value(params: &Params, group: usize, i: usize) -> f64 {
    params.named_tensors()[group].2[i]
}

fn set(params: &mut Params, group: usize, i: usize, v: f64) {
    params.named_slices_mut().swap_remove(group).1[i] = v;
}

/// Relative error of skip-gram gradients for one random configuration.
pub fn skipgram_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(3..12usize);
    let dim = rng.random_range(1..9usize);
    let mut model = SkipGramModel::init(rows, dim, seed);
    for v in model.output.iter_mut().chain(model.input.iter_mut()) {
        *v = rng.random_range(-1.0..1.0);
    }
    let center = rng.random_range(0..rows) as TokenId;
    let context = rng.random_range(0..rows) as TokenId;
    let negatives: Vec<TokenId> = (0..rng.random_range(0..6)).map(|_| rng.random_range(0..rows) as TokenId).collect();
    let loss = |m: &SkipGramModel| skipgram_loss_and_grad(center, context, &negatives, m).0;
    let (_, grads) = skipgram_loss_and_grad(center, context, &negatives, &model);

    let h = 1e-5;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let c0 = center as usize * dim;
    for j in 0..dim {
        let orig = model.input[c0 + j];
        model.input[c0 + j] = orig + h;
        let up = loss(&model);
        model.input[c0 + j] = orig - h;
        let down = loss(&model);
        model.input[c0 + j] = orig;
        analytic.push(grads.center[j]);
        numeric.push((up - down) / (2.0 * h));
    }
    for (id, g) in &grads.outputs {
        let o0 = *id as usize * dim;
        for j in 0..dim {
            let orig = model.output[o0 + j];
            model.output[o0 + j] = orig + h;
            let up = loss(&model);
            model.output[o0 + j] = orig - h;
            let down = loss(&model);
            model.output[o0 + j] = orig;
            analytic.push(g[j]);
            numeric.push((up - down) / (2.0 * h));
        }
    }
    relative_error(&analytic, &numeric)
}

/// Up to 10 reads of up to 20 bases, with an occasional ambiguous base.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.random_range(1..=10);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=20);
            (0..len)
                .map(|_| if rng.random_bool(0.03) { 'N' } else { ['A', 'C', 'G', 'T'][rng.random_range(0..4)] })
                .collect()
        })
        .collect()
}

/// Compare `build_graph` with the brute-force pair counts and the iterated
/// weight rule. Returns a description of the first disagreement.
pub fn graph_disagreement(reads: &[String], k: usize) -> Option<String> {
    use mg2vec::kmer::KmerVocabulary;
    use mg2vec::structgraph::{build_graph, WeightMode, WeightParams};
    use std::collections::BTreeSet;

    let vocab = KmerVocabulary::new(k, "ACGT").unwrap();
    let oracle = brute_force_pairs(reads, k);
    let built = build_graph(reads.iter().map(|r| r.as_bytes()), &vocab, &WeightParams::default(), WeightMode::Normalized);
    let graph = match built {
        Ok(g) => g,
        Err(_) if oracle.is_empty() => return None,
        Err(e) => return Some(format!("build failed: {e}")),
    };
    let name = |id| vocab.id_to_token(id).unwrap();
    let got: BTreeMap<(String, String), (u64, f64)> = graph
        .edges()
        .iter()
        .map(|e| ((name(e.src), name(e.dst)), (e.count, e.weight)))
        .collect();
    if got.len() != oracle.len() {
        return Some(format!("{} edges, oracle has {}", got.len(), oracle.len()));
    }
    for (pair, &count) in &oracle {
        match got.get(pair) {
            None => return Some(format!("missing edge {pair:?}")),
            Some(&(c, w)) if c != count || w != brute_force_weight(count) => {
                return Some(format!("edge {pair:?}: count {c} weight {w}, oracle {count}"));
            }
            _ => {}
        }
    }
    let nodes: BTreeSet<String> = graph.nodes().iter().map(|&n| name(n)).collect();
    let oracle_nodes: BTreeSet<String> = oracle.keys().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    if nodes != oracle_nodes {
        return Some(format!("nodes {nodes:?}, oracle {oracle_nodes:?}"));
    }
    None
}

/// Five 2-mer nodes (AC, CG, GT, TA, CA) on two cycles with unequal counts.
pub fn five_node_reads() -> Vec<String> {
    let mut reads = vec!["ACGTACGTACGTAC".to_string(); 3];
    reads.push("ACACACAC".into());
    reads.push("TACA".into());
    reads
}

/// Largest absolute gap between empirical transition frequencies of the
/// walks and the normalised edge weights.
pub fn walk_frequency_gap(walks: &[Vec<TokenId>], graph: &mg2vec::structgraph::KmerGraph) -> (f64, usize) {
    let mut counts: BTreeMap<(TokenId, TokenId), f64> = BTreeMap::new();
    let mut from: BTreeMap<TokenId, f64> = BTreeMap::new();
    let mut steps = 0;
    for w in walks {
        for pair in w.windows(2) {
            *counts.entry((pair[0], pair[1])).or_default() += 1.0;
            *from.entry(pair[0]).or_default() += 1.0;
            steps += 1;
        }
    }
    let mut worst = 0.0f64;
    for &node in graph.nodes() {
        let out = graph.out_edges(node);
        let total: f64 = out.iter().map(|e| e.weight).sum();
        for e in out {
            let expect = e.weight / total;
            let seen = counts.get(&(node, e.dst)).copied().unwrap_or(0.0) / from.get(&node).copied().unwrap_or(1.0);
            worst = worst.max((seen - expect).abs());
        }
    }
    (worst, steps)
}
