use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmer::TokenId;
use crate::seed::mix;
use crate::structgraph::KmerGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Return parameter: weight multiplier `1/p` for stepping back.
    pub p: f64,
    /// In-out parameter: weight multiplier `1/q` for moving outward.
    pub q: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            p: 1.0,
            q: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 || self.walk_length < 2 || !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::Config(
                "walk: need walks_per_node >= 1, walk_length >= 2, p > 0, q > 0".into(),
            ));
        }
        Ok(())
    }
}

/// `walks_per_node` walks from every node, round-major in node order.
///
/// Each walk owns an RNG seeded from `(seed, node, round)`, so the corpus is
/// identical however the work is scheduled across threads.
pub fn generate_walks(graph: &KmerGraph, config: &WalkConfig) -> Result<Vec<Vec<TokenId>>> {
    config.validate()?;
    if graph.nodes().is_empty() {
        return Err(Error::EmptyGraph);
    }
    let starts: Vec<(usize, TokenId)> = (0..config.walks_per_node)
        .flat_map(|round| graph.nodes().iter().map(move |&n| (round, n)))
        .collect();
    Ok(starts
        .par_iter()
        .map(|&(round, node)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(config.seed, node as u64), round as u64));
            walk_from(graph, node, config, &mut rng)
        })
        .collect())
}

fn walk_from(graph: &KmerGraph, start: TokenId, config: &WalkConfig, rng: &mut ChaCha8Rng) -> Vec<TokenId> {
    let mut walk = Vec::with_capacity(config.walk_length);
    walk.push(start);
    let unbiased = config.p == 1.0 && config.q == 1.0;
    let mut scores: Vec<f64> = Vec::new();
    while walk.len() < config.walk_length {
        let cur = *walk.last().expect("walk starts non-empty");
        let out = graph.out_edges(cur);
        if out.is_empty() {
            break;
        }
        scores.clear();
        let prev = if walk.len() >= 2 { Some(walk[walk.len() - 2]) } else { None };
        for e in out {
            let bias = match prev {
                Some(t) if !unbiased => {
                    if e.dst == t {
                        1.0 / config.p
                    } else if graph.has_edge(t, e.dst) {
                        1.0
                    } else {
                        1.0 / config.q
                    }
                }
                _ => 1.0,
            };
            scores.push(e.weight * bias);
        }
        let total: f64 = scores.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = out.len() - 1;
        for (i, s) in scores.iter().enumerate() {
            if r < *s {
                pick = i;
                break;
            }
            r -= s;
        }
        walk.push(out[pick].dst);
    }
    walk
}

pub fn write_walks<W: Write>(mut out: W, walks: &[Vec<TokenId>]) -> std::io::Result<()> {
    let mut line = String::new();
    for walk in walks {
        line.clear();
        for (i, id) in walk.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&id.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

pub fn read_walks<R: BufRead>(reader: R) -> Result<Vec<Vec<TokenId>>> {
    let mut walks = Vec::new();
    let mut offset = 0u64;
    for line in reader.lines() {
        let line = line?;
        let walk = line
            .split_ascii_whitespace()
            .map(|t| t.parse::<TokenId>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                offset,
                message: format!("bad token id in walk: {e}"),
            })?;
        offset += line.len() as u64 + 1;
        if !walk.is_empty() {
            walks.push(walk);
        }
    }
    Ok(walks)
}
