//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_force_agreement, five_node_reads, graph_disagreement, random_corpus, skipgram_gradient_error,
    transformer_gradient_error, walk_frequency_gap,
};
use mg2vec::downstream::{average_precision, evaluate, hungarian_map};
use mg2vec::embed::RepresentationMode;
use mg2vec::kmer::{KmerVocabulary, TokenId};
use mg2vec::mlm::{
    apply_mask, masked_accuracy, masked_loss, pretrain, MaskingConfig, PretrainConfig, TransformerConfig,
    TransformerModel,
};
use mg2vec::node2vec::{generate_walks, WalkConfig};
use mg2vec::pipeline::{
    cluster_report_file, load_report, preset, report_file, run_stages, ClassifierKind, PipelineConfig,
    Stage,
};
use mg2vec::structgraph::{build_graph, weight_from_count, WeightMode, WeightParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed < limit, format!("{:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn graph_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut bad = Vec::new();
    for i in 0..50 {
        let reads = random_corpus(&mut rng);
        let k = 2 + i % 3;
        if let Some(msg) = graph_disagreement(&reads, k) {
            bad.push(format!("corpus {i} (k={k}): {msg}"));
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    let detail = match bad.first() {
        Some(first) => format!("{} of 50 corpora disagree, first: {first}; {time}", bad.len()),
        None => format!("50 corpora match; {time}"),
    };
    verdict(bad.is_empty() && fast, detail)
}

fn weight_recurrence() -> Verdict {
    let p = WeightParams::default();
    let w = |n| weight_from_count(n, &p).unwrap();
    let limit = 2.0 + 2f64.sqrt();
    let gap = (w(50) - limit).abs();
    let exact = w(1) == 1.0 && w(2) == 3.0 && w(3) == 3.5;
    verdict(
        exact && gap < 1e-4,
        format!("w(1..3) = {}, {}, {}; |w(50) - (2+sqrt 2)| = {gap:.2e}", w(1), w(2), w(3)),
    )
}

fn walk_fidelity() -> Verdict {
    let vocab = KmerVocabulary::new(2, "ACGT").unwrap();
    let reads = five_node_reads();
    let graph =
        build_graph(reads.iter().map(|r| r.as_bytes()), &vocab, &WeightParams::default(), WeightMode::RawCounts).unwrap();
    let cfg = WalkConfig {
        walks_per_node: 200,
        walk_length: 101,
        p: 1.0,
        q: 1.0,
        seed: 42,
    };
    let walks = generate_walks(&graph, &cfg).unwrap();
    let (gap, steps) = walk_frequency_gap(&walks, &graph);
    verdict(
        graph.nodes().len() == 5 && steps >= 100_000 && gap < 0.02,
        format!("{} nodes, {steps} steps, max |empirical - expected| = {gap:.4}", graph.nodes().len()),
    )
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let sg = (0..100).map(skipgram_gradient_error).fold(0.0, f64::max);
    let tf = (0..100).map(|s| transformer_gradient_error(s).0).fold(0.0, f64::max);
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    verdict(
        sg < 1e-5 && tf < 1e-3 && fast,
        format!("100 configs each: skip-gram max rel err {sg:.2e}, transformer {tf:.2e}; {time}"),
    )
}

fn mlm_sanity() -> Verdict {
    let start = Instant::now();
    let vocab = KmerVocabulary::new(4, "ACGT").unwrap();
    let masking = MaskingConfig {
        seed: 3,
        ..MaskingConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let model = TransformerModel::new(TransformerConfig::desk(), vocab.len(), vocab.fingerprint()).unwrap();
    let random: Vec<_> = (0..32)
        .map(|_| {
            let seq: Vec<u8> = (0..123).map(|_| b"ACGT"[rng.random_range(0..4)]).collect();
            apply_mask(&vocab.tokenize(&seq, 1), &masking, &vocab, &mut rng)
        })
        .collect();
    let uniform = (vocab.len() as f64).ln();
    let untrained = masked_loss(&model, &random).unwrap();
    let loss_ok = (untrained - uniform).abs() / uniform < 0.05;

    let n = 10_000;
    let tokens: Vec<TokenId> = {
        let seq: Vec<u8> = (0..n + 3).map(|_| b"ACGT"[rng.random_range(0..4)]).collect();
        vocab.tokenize(&seq, 1)
    };
    let sigma = (n as f64 * 0.15 * 0.85).sqrt();
    let trials = 200;
    let inside = (0..trials)
        .filter(|_| {
            let m = apply_mask(&tokens, &masking, &vocab, &mut rng).positions.len() as f64;
            (m - n as f64 * 0.15).abs() <= 3.0 * sigma
        })
        .count();
    // P(|Z| > 3) is 0.27%: a few stray draws out of 200 are expected
    let counts_ok = inside >= trials - 3;

    let read = vocab.tokenize("ACGT".repeat(16).as_bytes(), 1);
    let windows = vec![read.clone(); 320];
    let schedule = PretrainConfig {
        epochs: 16,
        batch_size: 8,
        warmup_steps: 50,
        seed: 4,
        ..PretrainConfig::default()
    };
    let out = pretrain(&windows, &vocab, None, &TransformerConfig::desk(), &masking, &schedule).unwrap();
    let probe: Vec<_> = (0..64).map(|_| apply_mask(&read, &masking, &vocab, &mut rng)).collect();
    let acc = masked_accuracy(&out.model, &probe).unwrap();
    let (fast, time) = within(start.elapsed(), Duration::from_secs(300));
    verdict(
        loss_ok && counts_ok && acc > 0.9 && fast,
        format!(
            "untrained loss {untrained:.4} vs ln|V| {uniform:.4}; {inside}/{trials} mask counts within 3 sigma; \
             memorization accuracy {acc:.3}; {time}"
        ),
    )
}

fn hungarian() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut wrong = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=6);
        let c = rng.random_range(1..=6);
        let t: Vec<Vec<u64>> = (0..k).map(|_| (0..c).map(|_| rng.random_range(0..50)).collect()).collect();
        if hungarian_map(&t).agreement != brute_force_agreement(&t) {
            wrong += 1;
        }
    }
    verdict(wrong == 0, format!("{} of 1000 contingencies match factorial search", 1000 - wrong))
}

fn metrics() -> Verdict {
    let names = vec!["a".to_string(), "b".to_string()];
    let mut truth = vec![0; 10];
    truth.extend([1, 1]);
    let mut pred: Vec<Option<usize>> = vec![Some(0); 8];
    pred.extend([Some(1), Some(1), Some(0), Some(0)]);
    let r = evaluate(&truth, &pred, &names).unwrap();
    let c = &r.per_class[0];
    let prf_ok = c.precision == 0.8 && c.recall == 0.8 && (c.f1 - 0.8).abs() < 1e-12;
    let perfect = average_precision(&[0.9, 0.7, 0.4, 0.2], &[true, true, false, false]).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for prevalence in [0.05, 0.3, 0.7] {
        let n = 100_000;
        let pos: Vec<bool> = (0..n).map(|_| rng.random_bool(prevalence)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        worst = worst.max((average_precision(&scores, &pos).unwrap() - prevalence).abs());
    }
    verdict(
        prf_ok && perfect == 1.0 && worst <= 0.02,
        format!(
            "P/R/F1 = {}/{}/{:.4}; separable AP {perfect}; random-score AP max |AP - prevalence| {worst:.4}",
            c.precision, c.recall, c.f1
        ),
    )
}

fn with_dir(name: &str, dir: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_toml_str(preset(name).unwrap()).unwrap();
    cfg.paths.artifacts = Some(dir.to_path_buf());
    cfg
}

fn macro_f1(cfg: &PipelineConfig, mode: RepresentationMode) -> f64 {
    let dir = cfg.paths.artifacts.as_ref().unwrap();
    load_report(&dir.join(report_file(mode, ClassifierKind::Logreg))).unwrap().macro_f1
}

fn synthetic_benchmark() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = with_dir("targeted-constrained", dir.path());
    cfg.embed.mode = RepresentationMode::Concat;
    cfg.classify.model = ClassifierKind::Logreg;
    run_stages(&cfg, &Stage::ALL).unwrap();
    for mode in [RepresentationMode::Global, RepresentationMode::KmerFrequency] {
        cfg.embed.mode = mode;
        run_stages(&cfg, &[Stage::Embed, Stage::Train, Stage::Evaluate]).unwrap();
    }
    let concat = macro_f1(&cfg, RepresentationMode::Concat);
    let global = macro_f1(&cfg, RepresentationMode::Global);
    let kmer = macro_f1(&cfg, RepresentationMode::KmerFrequency);
    let (fast, time) = within(start.elapsed(), Duration::from_secs(1800));
    let a = concat > kmer;
    let b = concat >= global - 0.02;
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    verdict(
        a && b && fast,
        format!(
            "macro-F1 concat {concat:.4}, k-mer frequency {kmer:.4}, global {global:.4}; \
             (a) concat > k-mer frequency: {}; (b) concat >= global - 0.02: {}; {time}",
            mark(a),
            mark(b)
        ),
    )
}

fn generalized_unseen() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = with_dir("generalized-unseen", dir.path());
    run_stages(&cfg, &Stage::ALL).unwrap();
    let report = load_report(&dir.path().join(cluster_report_file(cfg.embed.mode))).unwrap();
    let k = report.classes.len();
    let chance = 1.0 / k as f64;
    let (fast, time) = within(start.elapsed(), Duration::from_secs(1800));
    verdict(
        report.accuracy >= 2.0 * chance && fast,
        format!("K = {k}, mapped accuracy {:.4} vs 2x chance {:.4}; {time}", report.accuracy, 2.0 * chance),
    )
}

fn tiny(dir: &Path) -> PipelineConfig {
    let text = format!(
        "seed = 23\n[paths]\nartifacts = \"{}\"\n[simulate]\nnum_reads = 400\nancestor_length = 3000\n\
         host_length = 5000\n[walk]\nwalks_per_node = 2\nwalk_length = 20\n[skipgram]\ndim = 8\nepochs = 1\n\
         [transformer]\nnum_layers = 1\nnum_heads = 2\nmodel_dim = 8\nff_dim = 16\n\
         [pretrain]\nepochs = 1\nmax_windows = 30\nwarmup_steps = 5\n",
        dir.display()
    );
    PipelineConfig::from_toml_str(&text).unwrap()
}

fn determinism() -> Verdict {
    let runs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let cfg = tiny(dir.path());
            run_stages(&cfg, &Stage::ALL).unwrap();
            let read = |name: String| std::fs::read(dir.path().join(name)).unwrap();
            (
                read(report_file(cfg.embed.mode, cfg.classify.model)),
                read(cluster_report_file(cfg.embed.mode)),
            )
        })
        .collect();
    let same = runs[0] == runs[1];
    verdict(
        same,
        format!(
            "classification report {} bytes, cluster report {} bytes, identical: {same}",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    )
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("graph matches brute-force oracle", graph_oracle),
        ("weight recurrence", weight_recurrence),
        ("walk transition fidelity", walk_fidelity),
        ("analytic gradients", gradients),
        ("masked-LM sanity", mlm_sanity),
        ("Hungarian optimality", hungarian),
        ("metric arithmetic", metrics),
        ("targeted-constrained benchmark", synthetic_benchmark),
        ("generalized-unseen clustering", generalized_unseen),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {:>2} {:<34} {}  {}", i + 1, name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
