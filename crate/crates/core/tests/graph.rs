mod common;

use common::{brute_force_weight, graph_disagreement, random_corpus};
use mg2vec::kmer::KmerVocabulary;
use mg2vec::structgraph::{build_graph, weight_from_count, KmerGraph, WeightMode, WeightParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_micro_corpora_match_brute_force() {
    for trial in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let reads = random_corpus(&mut rng);
        for k in 2..=4 {
            if let Some(diff) = graph_disagreement(&reads, k) {
                panic!("trial {trial}, k={k}, reads {reads:?}: {diff}");
            }
        }
    }
}

#[test]
fn weight_fixed_point() {
    let p = WeightParams::default();
    assert_eq!(weight_from_count(1, &p).unwrap(), 1.0);
    assert_eq!(weight_from_count(2, &p).unwrap(), 3.0);
    assert_eq!(weight_from_count(3, &p).unwrap(), 3.5);
    let limit = 2.0 + 2f64.sqrt();
    assert!((weight_from_count(50, &p).unwrap() - limit).abs() < 1e-4);
    for n in 1..200 {
        assert_eq!(weight_from_count(n, &p).unwrap(), brute_force_weight(n));
    }
}

#[test]
fn order_of_reads_does_not_matter() {
    let vocab = KmerVocabulary::new(3, "ACGT").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut reads = random_corpus(&mut rng);
    reads.push("ACGTACGTTT".into());
    let build = |rs: &[String]| {
        build_graph(rs.iter().map(|r| r.as_bytes()), &vocab, &WeightParams::default(), WeightMode::Normalized).unwrap()
    };
    let forward = build(&reads);
    reads.reverse();
    assert_eq!(build(&reads), forward);
}

#[test]
fn three_edge_graph_roundtrip() {
    let vocab = KmerVocabulary::new(2, "ACGT").unwrap();
    // AC->CG, CG->GT, GT->TT
    let reads = ["ACGTT", "ACG", "ACG"];
    let g = build_graph(reads.iter().map(|r| r.as_bytes()), &vocab, &WeightParams::default(), WeightMode::Normalized).unwrap();
    assert_eq!(g.edges().len(), 3);
    let mut buf = Vec::new();
    g.write_tsv(&mut buf).unwrap();
    let back = KmerGraph::read_tsv(buf.as_slice()).unwrap();
    assert_eq!(back, g);
    let ac = vocab.token_to_id("AC");
    let cg = vocab.token_to_id("CG");
    let e = back.edge(ac, cg).unwrap();
    assert_eq!((e.count, e.weight), (3, 3.5));
}

proptest! {
    #[test]
    fn any_corpus_matches_brute_force(
        reads in proptest::collection::vec("[ACGTN]{0,20}", 1..10),
        k in 2usize..5,
    ) {
        prop_assert_eq!(graph_disagreement(&reads, k), None);
    }

    #[test]
    fn weights_approach_the_limit(n in 2u64..500) {
        let p = WeightParams::default();
        let limit = 2.0 + 2f64.sqrt();
        let w = weight_from_count(n, &p).unwrap();
        let next = weight_from_count(n + 1, &p).unwrap();
        prop_assert!((3.0..=3.5).contains(&w));
        prop_assert!((next - limit).abs() <= (w - limit).abs());
    }
}
