//! Global weighted directed k-mer co-occurrence graph.
//!
//! Nodes are k-mers observed in the reads; an edge `u -> v` records that `v`
//! immediately follows `u` (stride 1) in some read. Each edge stores its raw
//! observation count, and the weight is a pure function of that count: the
//! first observation sets the weight to 1 and every repeat applies
//! [`update_weight`] with an incoming weight of 1. Keeping counts as the
//! source of truth makes construction order-invariant and lets shards be
//! merged by summing counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmer::{KmerVocabulary, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightParams {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Lower bound on the `|e - e'|` denominator of the relative increase.
    pub denom_floor: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        WeightParams {
            lambda_max: 2.0,
            lambda_min: 2.0,
            denom_floor: 1.0,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max > 0.0 && self.lambda_min > 0.0 && self.denom_floor > 0.0) {
            return Err(Error::Config(
                "graph: lambda_max, lambda_min and denom_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How edge weights are derived from counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Saturating update rule applied once per repeat observation.
    Normalized,
    /// Raw observation counts used as weights.
    RawCounts,
}

/// One application of the weight update rule.
///
/// With `psi = e / max(|e - e_new|, denom_floor)` the new weight is
/// `lambda_max * sqrt(max(psi - 1, 1)) + min(psi - lambda_min, lambda_min) + lambda_min`.
pub fn update_weight(e: f64, e_new: f64, params: &WeightParams) -> Result<f64> {
    if !(e > 0.0 && e_new > 0.0) || !e.is_finite() || !e_new.is_finite() {
        return Err(Error::Domain(format!(
            "edge weights must be positive and finite (e={e}, e_new={e_new})"
        )));
    }
    let psi = e / (e - e_new).abs().max(params.denom_floor);
    let damp = (psi - params.lambda_min).min(params.lambda_min) + params.lambda_min;
    Ok(params.lambda_max * (psi - 1.0).max(1.0).sqrt() + damp)
}

/// Weight after `n` observations: `f^(n-1)(1)` with `f(e) = update_weight(e, 1)`.
pub fn weight_from_count(n: u64, params: &WeightParams) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain("observation count must be at least 1".into()));
    }
    WeightCurve::new(*params)?.weight(n)
}

/// Memoised weight sequence. The recurrence reaches a floating-point fixed
/// point after a few dozen steps for sane parameters; once `f(w) == w` every
/// later count has the same weight.
#[derive(Debug, Clone)]
pub struct WeightCurve {
    params: WeightParams,
    values: Vec<f64>,
    fixed: bool,
}

const CURVE_PRECOMPUTE: usize = 4096;

impl WeightCurve {
    pub fn new(params: WeightParams) -> Result<Self> {
        params.validate()?;
        let mut values = vec![1.0];
        let mut fixed = false;
        while values.len() < CURVE_PRECOMPUTE {
            let last = *values.last().expect("non-empty");
            let next = update_weight(last, 1.0, &params)?;
            if next == last {
                fixed = true;
                break;
            }
            values.push(next);
        }
        Ok(WeightCurve { params, values, fixed })
    }

    pub fn weight(&self, n: u64) -> Result<f64> {
        if n < 1 {
            return Err(Error::Domain("observation count must be at least 1".into()));
        }
        let idx = (n - 1) as usize;
        if let Some(&w) = self.values.get(idx) {
            return Ok(w);
        }
        let mut w = *self.values.last().expect("non-empty");
        if self.fixed {
            return Ok(w);
        }
        for _ in self.values.len()..=idx {
            w = update_weight(w, 1.0, &self.params)?;
        }
        Ok(w)
    }
}

/// Edge observation counts, accumulated per shard and merged by summation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    counts: BTreeMap<(TokenId, TokenId), u64>,
}

impl EdgeCounts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add all stride-1 adjacencies of one read. UNK windows break adjacency.
    pub fn add_read(&mut self, seq: &[u8], vocab: &KmerVocabulary) {
        let tokens = vocab.tokenize(seq, 1);
        for pair in tokens.windows(2) {
            if vocab.is_special(pair[0]) || vocab.is_special(pair[1]) {
                continue;
            }
            *self.counts.entry((pair[0], pair[1])).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: &EdgeCounts) {
        for (&edge, &c) in &other.counts {
            *self.counts.entry(edge).or_insert(0) += c;
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, src: TokenId, dst: TokenId) -> u64 {
        self.counts.get(&(src, dst)).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: TokenId,
    pub dst: TokenId,
    pub count: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmerGraph {
    vocab: KmerVocabulary,
    params: WeightParams,
    mode: WeightMode,
    nodes: Vec<TokenId>,
    /// Sorted by `(src, dst)`.
    edges: Vec<Edge>,
    /// `out_start[i]..out_start[i+1]` indexes the out-edges of `nodes[i]`.
    out_start: Vec<usize>,
}

/// Build the graph from reads in one pass.
pub fn build_graph<'a, I>(
    reads: I,
    vocab: &KmerVocabulary,
    params: &WeightParams,
    mode: WeightMode,
) -> Result<KmerGraph>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut counts = EdgeCounts::new();
    for seq in reads {
        counts.add_read(seq, vocab);
    }
    KmerGraph::from_counts(&counts, vocab, params, mode)
}

impl KmerGraph {
    pub fn from_counts(
        counts: &EdgeCounts,
        vocab: &KmerVocabulary,
        params: &WeightParams,
        mode: WeightMode,
    ) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let curve = WeightCurve::new(*params)?;
        let mut nodes = BTreeSet::new();
        let mut edges = Vec::with_capacity(counts.len());
        for (&(src, dst), &count) in &counts.counts {
            nodes.insert(src);
            nodes.insert(dst);
            let weight = match mode {
                WeightMode::Normalized => curve.weight(count)?,
                WeightMode::RawCounts => count as f64,
            };
            edges.push(Edge { src, dst, count, weight });
        }
        let nodes: Vec<TokenId> = nodes.into_iter().collect();
        let mut out_start = Vec::with_capacity(nodes.len() + 1);
        let mut e = 0;
        for &n in &nodes {
            while e < edges.len() && edges[e].src < n {
                e += 1;
            }
            out_start.push(e);
        }
        out_start.push(edges.len());
        Ok(KmerGraph {
            vocab: vocab.clone(),
            params: *params,
            mode,
            nodes,
            edges,
            out_start,
        })
    }

    pub fn vocab(&self) -> &KmerVocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &WeightParams {
        &self.params
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn nodes(&self) -> &[TokenId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, node: TokenId) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }

    pub fn out_edges(&self, node: TokenId) -> &[Edge] {
        match self.nodes.binary_search(&node) {
            Ok(i) => &self.edges[self.out_start[i]..self.out_start[i + 1]],
            Err(_) => &[],
        }
    }

    pub fn has_edge(&self, src: TokenId, dst: TokenId) -> bool {
        self.out_edges(src).binary_search_by_key(&dst, |e| e.dst).is_ok()
    }

    pub fn edge(&self, src: TokenId, dst: TokenId) -> Option<&Edge> {
        let out = self.out_edges(src);
        out.binary_search_by_key(&dst, |e| e.dst).ok().map(|i| &out[i])
    }

    /// Probabilities over out-neighbours, proportional to edge weight.
    pub fn transition_distribution(&self, node: TokenId) -> Result<Vec<(TokenId, f64)>> {
        let out = self.out_edges(node);
        if out.is_empty() {
            return Err(Error::DeadEnd(node));
        }
        let total: f64 = out.iter().map(|e| e.weight).sum();
        Ok(out.iter().map(|e| (e.dst, e.weight / total)).collect())
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = String::new();
        writeln!(header, "#mg2vec-graph v1").unwrap();
        writeln!(
            header,
            "#vocab\tk={}\talphabet={}\tfingerprint={:016x}",
            self.vocab.k(),
            String::from_utf8_lossy(self.vocab.alphabet()),
            self.vocab.fingerprint()
        )
        .unwrap();
        let mode = match self.mode {
            WeightMode::Normalized => "normalized",
            WeightMode::RawCounts => "raw-counts",
        };
        writeln!(
            header,
            "#weights\t{mode}\tlambda_max={:?}\tlambda_min={:?}\tdenom_floor={:?}",
            self.params.lambda_max, self.params.lambda_min, self.params.denom_floor
        )
        .unwrap();
        out.write_all(header.as_bytes())?;
        for e in &self.edges {
            writeln!(
                out,
                "{}\t{}\t{}\t{:?}",
                self.vocab.id_to_token(e.src)?,
                self.vocab.id_to_token(e.dst)?,
                e.count,
                e.weight
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Load an edge list written by [`KmerGraph::write_tsv`]. Weights are
    /// re-derived from counts and must match the stored values exactly.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |m: String| Error::Incompatible(format!("graph file: {m}"));
        let mut lines = reader.lines();
        let magic = lines.next().transpose()?.unwrap_or_default();
        if magic != "#mg2vec-graph v1" {
            return Err(bad(format!("unsupported header '{magic}'")));
        }
        let mut k = None;
        let mut alphabet = None;
        let mut params = WeightParams::default();
        let mut mode = None;
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if let Some(meta) = line.strip_prefix('#') {
                let mut fields = meta.split('\t');
                match fields.next() {
                    Some("vocab") => {
                        for f in fields {
                            match f.split_once('=') {
                                Some(("k", v)) => k = v.parse::<usize>().ok(),
                                Some(("alphabet", v)) => alphabet = Some(v.to_string()),
                                _ => {}
                            }
                        }
                    }
                    Some("weights") => {
                        for f in fields {
                            let parse = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
                            match f.split_once('=') {
                                Some(("lambda_max", v)) => params.lambda_max = parse(v)?,
                                Some(("lambda_min", v)) => params.lambda_min = parse(v)?,
                                Some(("denom_floor", v)) => params.denom_floor = parse(v)?,
                                None if f == "normalized" => mode = Some(WeightMode::Normalized),
                                None if f == "raw-counts" => mode = Some(WeightMode::RawCounts),
                                _ => {}
                            }
                        }
                    }
                    _ => {}
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            rows.push(line);
        }
        let vocab = match (k, alphabet) {
            (Some(k), Some(a)) => KmerVocabulary::new(k, &a)?,
            _ => return Err(bad("missing #vocab header".into())),
        };
        let mode = mode.ok_or_else(|| bad("missing #weights header".into()))?;
        let mut counts = EdgeCounts::new();
        let mut stored = Vec::with_capacity(rows.len());
        for row in &rows {
            let f: Vec<&str> = row.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 columns: '{row}'")));
            }
            let src = vocab.token_to_id(f[0]);
            let dst = vocab.token_to_id(f[1]);
            if vocab.is_special(src) || vocab.is_special(dst) {
                return Err(bad(format!("edge with non-k-mer endpoint: '{row}'")));
            }
            let count: u64 = f[2].parse().map_err(|_| bad(format!("bad count in '{row}'")))?;
            let weight: f64 = f[3].parse().map_err(|_| bad(format!("bad weight in '{row}'")))?;
            *counts.counts.entry((src, dst)).or_insert(0) += count;
            stored.push(((src, dst), weight));
        }
        let graph = KmerGraph::from_counts(&counts, &vocab, &params, mode)?;
        for ((src, dst), w) in stored {
            let derived = graph.edge(src, dst).map(|e| e.weight);
            if derived != Some(w) {
                return Err(bad(format!(
                    "weight {w} for {src}->{dst} does not match its count (expected {derived:?})"
                )));
            }
        }
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> WeightParams {
        WeightParams::default()
    }

    #[test]
    fn update_weight_examples() {
        assert_eq!(update_weight(1.0, 1.0, &p()).unwrap(), 3.0);
        assert_eq!(update_weight(3.0, 1.0, &p()).unwrap(), 3.5);
        let w = update_weight(4.0, 3.0, &p()).unwrap();
        assert!((w - (2.0 * 3f64.sqrt() + 4.0)).abs() < 1e-12);
        assert!((w - 7.4641).abs() < 1e-4);
    }

    #[test]
    fn update_weight_rejects_non_positive() {
        assert!(update_weight(0.0, 1.0, &p()).is_err());
        assert!(update_weight(1.0, -1.0, &p()).is_err());
    }

    #[test]
    fn weight_sequence_saturates() {
        assert_eq!(weight_from_count(1, &p()).unwrap(), 1.0);
        assert_eq!(weight_from_count(2, &p()).unwrap(), 3.0);
        assert_eq!(weight_from_count(3, &p()).unwrap(), 3.5);
        let limit = 2.0 + 2f64.sqrt();
        assert!((weight_from_count(50, &p()).unwrap() - limit).abs() < 1e-4);
        assert!((weight_from_count(1_000_000_000, &p()).unwrap() - limit).abs() < 1e-12);
        assert!(weight_from_count(0, &p()).is_err());
        for n in 1..200 {
            assert!(weight_from_count(n, &p()).unwrap() <= limit + 0.1);
        }
    }

    #[test]
    fn curve_matches_direct_iteration() {
        let params = WeightParams {
            lambda_max: 1.5,
            lambda_min: 0.5,
            denom_floor: 0.25,
        };
        let curve = WeightCurve::new(params).unwrap();
        let mut w = 1.0;
        for n in 1..100u64 {
            assert_eq!(curve.weight(n).unwrap(), w);
            w = update_weight(w, 1.0, &params).unwrap();
        }
    }

    fn acgt(k: usize) -> KmerVocabulary {
        KmerVocabulary::new(k, "ACGT").unwrap()
    }

    #[test]
    fn single_read_graph() {
        let v = acgt(2);
        let g = build_graph([&b"ACGT"[..]], &v, &p(), WeightMode::Normalized).unwrap();
        let ids: Vec<_> = ["AC", "CG", "GT"].iter().map(|t| v.token_to_id(t)).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(g.nodes(), &sorted[..]);
        assert_eq!(g.edges().len(), 2);
        let e = g.edge(ids[0], ids[1]).unwrap();
        assert_eq!((e.count, e.weight), (1, 1.0));
        let e = g.edge(ids[1], ids[2]).unwrap();
        assert_eq!((e.count, e.weight), (1, 1.0));
    }

    #[test]
    fn repeated_read_doubles_counts() {
        let v = acgt(2);
        let g = build_graph([&b"ACGT"[..], b"ACGT"], &v, &p(), WeightMode::Normalized).unwrap();
        for e in g.edges() {
            assert_eq!((e.count, e.weight), (2, 3.0));
        }
    }

    #[test]
    fn raw_count_mode_uses_counts() {
        let v = acgt(2);
        let g = build_graph([&b"ACGT"[..], b"ACGT", b"ACG"], &v, &p(), WeightMode::RawCounts).unwrap();
        let e = g.edge(v.token_to_id("AC"), v.token_to_id("CG")).unwrap();
        assert_eq!((e.count, e.weight), (3, 3.0));
    }

    #[test]
    fn short_reads_give_empty_graph() {
        let v = acgt(4);
        assert!(matches!(
            build_graph([&b"AC"[..]], &v, &p(), WeightMode::Normalized),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn unk_breaks_adjacency() {
        let v = acgt(2);
        let g = build_graph([&b"ACGNGTA"[..]], &v, &p(), WeightMode::Normalized).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert!(!g.has_edge(v.token_to_id("CG"), v.token_to_id("GT")));
        assert!(g.nodes().iter().all(|&n| !v.is_special(n)));
        assert!(matches!(
            build_graph([&b"ACNGT"[..]], &v, &p(), WeightMode::Normalized),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn transition_probabilities() {
        let v = acgt(2);
        // AC -> CG three times (weight 3.5), AC -> CA once (weight 1.0)
        let g = build_graph(
            [&b"ACG"[..], b"ACG", b"ACG", b"ACA"],
            &v,
            &p(),
            WeightMode::RawCounts,
        )
        .unwrap();
        let d = g.transition_distribution(v.token_to_id("AC")).unwrap();
        let cg = d.iter().find(|(t, _)| *t == v.token_to_id("CG")).unwrap().1;
        let ca = d.iter().find(|(t, _)| *t == v.token_to_id("CA")).unwrap().1;
        assert!((cg - 0.75).abs() < 1e-12 && (ca - 0.25).abs() < 1e-12);
        assert!(matches!(
            g.transition_distribution(v.token_to_id("CG")),
            Err(Error::DeadEnd(_))
        ));
    }

    #[test]
    fn singleton_and_uniform_distributions() {
        let v = acgt(2);
        let g = build_graph([&b"ACG"[..]], &v, &p(), WeightMode::Normalized).unwrap();
        assert_eq!(g.transition_distribution(v.token_to_id("AC")).unwrap()[0].1, 1.0);
        let g = build_graph([&b"AAA"[..], b"AAC", b"AAG", b"AAT"], &v, &p(), WeightMode::Normalized).unwrap();
        let d = g.transition_distribution(v.token_to_id("AA")).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|(_, q)| (q - 0.25).abs() < 1e-12));
    }

    #[test]
    fn tsv_roundtrip_is_byte_exact() {
        let v = acgt(3);
        let reads: Vec<&[u8]> = vec![b"ACGTTGCAACGT", b"ACGTACGT", b"TTTTTT"];
        let g = build_graph(reads, &v, &p(), WeightMode::Normalized).unwrap();
        let mut buf = Vec::new();
        g.write_tsv(&mut buf).unwrap();
        let back = KmerGraph::read_tsv(&buf[..]).unwrap();
        assert_eq!(g, back);
        let mut buf2 = Vec::new();
        back.write_tsv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn tampered_weight_is_rejected() {
        let v = acgt(2);
        let g = build_graph([&b"ACGT"[..], b"ACGT"], &v, &p(), WeightMode::Normalized).unwrap();
        let mut buf = Vec::new();
        g.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\t3.0\n", "\t2.5\n");
        assert!(KmerGraph::read_tsv(text.as_bytes()).is_err());
    }
}
