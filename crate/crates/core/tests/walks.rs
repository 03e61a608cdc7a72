mod common;

use common::{five_node_reads, walk_frequency_gap};
use mg2vec::kmer::KmerVocabulary;
use mg2vec::node2vec::{generate_walks, read_walks, write_walks, WalkConfig};
use mg2vec::structgraph::{build_graph, KmerGraph, WeightMode, WeightParams};

fn five_node_graph() -> KmerGraph {
    let vocab = KmerVocabulary::new(2, "ACGT").unwrap();
    let reads = five_node_reads();
    build_graph(reads.iter().map(|r| r.as_bytes()), &vocab, &WeightParams::default(), WeightMode::RawCounts).unwrap()
}

#[test]
fn fixture_has_five_nodes_and_branching() {
    let g = five_node_graph();
    assert_eq!(g.nodes().len(), 5);
    assert!(g.nodes().iter().any(|&n| g.out_edges(n).len() > 1));
}

#[test]
fn empirical_transitions_follow_weights() {
    let g = five_node_graph();
    let cfg = WalkConfig {
        walks_per_node: 200,
        walk_length: 101,
        seed: 42,
        ..WalkConfig::default()
    };
    let walks = generate_walks(&g, &cfg).unwrap();
    let (gap, steps) = walk_frequency_gap(&walks, &g);
    assert!(steps >= 100_000, "{steps} steps");
    assert!(gap < 0.02, "max gap {gap}");
}

#[test]
fn walks_are_reproducible_and_roundtrip() {
    let g = five_node_graph();
    let cfg = WalkConfig {
        walks_per_node: 3,
        walk_length: 12,
        seed: 9,
        ..WalkConfig::default()
    };
    let a = generate_walks(&g, &cfg).unwrap();
    assert_eq!(a, generate_walks(&g, &cfg).unwrap());
    assert_ne!(a, generate_walks(&g, &WalkConfig { seed: 10, ..cfg }).unwrap());
    let mut buf = Vec::new();
    write_walks(&mut buf, &a).unwrap();
    assert_eq!(read_walks(buf.as_slice()).unwrap(), a);
    for w in &a {
        assert_eq!(w.len(), 12);
        for pair in w.windows(2) {
            assert!(g.has_edge(pair[0], pair[1]));
        }
    }
}

#[test]
fn return_bias_changes_second_order_walks() {
    // with a tiny return parameter walks bounce back along the edge they came from
    let g = five_node_graph();
    let cfg = WalkConfig {
        walks_per_node: 50,
        walk_length: 30,
        p: 0.01,
        q: 1.0,
        seed: 1,
    };
    let walks = generate_walks(&g, &cfg).unwrap();
    let backtracks = |ws: &[Vec<u32>]| {
        ws.iter().flat_map(|w| w.windows(3)).filter(|t| t[0] == t[2]).count() as f64
            / ws.iter().map(|w| w.len().saturating_sub(2)).sum::<usize>() as f64
    };
    let biased = backtracks(&walks);
    let plain = backtracks(&generate_walks(&g, &WalkConfig { p: 1.0, ..cfg }).unwrap());
    assert!(biased > plain + 0.1, "biased {biased} plain {plain}");
}
