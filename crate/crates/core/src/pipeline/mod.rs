//! Stage orchestration over a flat artifact directory.
//!
//! Each stage reads upstream artifacts, writes its own outputs atomically and
//! records a `manifest-<stage>.json` with the config hash, seeds and SHA-256
//! digests of everything it read and wrote. A lock file keeps two runs from
//! sharing a directory.
//!
//! Per-stage seeds come from [`crate::seed::derive`] applied to the global
//! seed and a fixed label (`simulate`, `walk`, `skipgram`, `transformer`,
//! `masking`, `pretrain`, `split`, `classifier`, `cluster`).

mod config;
mod store;

pub use config::{
    AblationConfig, ClassifierKind, ClassifyConfig, ClusterConfig, CorpusConfig, EmbedConfig, KmerConfig, Paths,
    PipelineConfig, ReadsConfig,
};
pub use store::{sha256_file, write_atomic, DirLock, FileDigest, RunManifest};

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use ndarray::Array2;

use crate::downstream::{
    evaluate, hungarian_map, kmeans, l2_normalized, train_deep, train_logreg, train_mlp, write_pr_csv, Classifier,
    EvalReport, LabeledDataset, MappingEntry,
};
use crate::embed::{embed_reads, Artifacts, Embedder, ReadEmbeddings, RepresentationMode};
use crate::error::{Error, Result};
use crate::kmer::KmerVocabulary;
use crate::mlm::{load_checkpoint, make_windows, pretrain, save_checkpoint, TransformerConfig, TransformerModel};
use crate::node2vec::{generate_walks, train_skipgram, write_walks};
use crate::seqio::{attach_labels, read_labels, read_sequences, simulate_metagenome, write_fasta, write_fastq, write_labels, ReadRecord};
use crate::structgraph::{build_graph, KmerGraph};
use crate::table::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Simulate,
    BuildGraph,
    TrainStructural,
    Pretrain,
    Embed,
    Train,
    Evaluate,
    Cluster,
}

impl Stage {
    /// Every stage in dependency order.
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::BuildGraph,
        Stage::TrainStructural,
        Stage::Pretrain,
        Stage::Embed,
        Stage::Train,
        Stage::Evaluate,
        Stage::Cluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::BuildGraph => "build-graph",
            Stage::TrainStructural => "train-structural",
            Stage::Pretrain => "pretrain",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Cluster => "cluster",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// What a finished stage wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub const READS_FILE: &str = "reads.fastq";
pub const LABELS_FILE: &str = "labels.tsv";
pub const REFS_FILE: &str = "refs.fasta";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const GRAPH_FILE: &str = "graph.tsv";
pub const WALKS_FILE: &str = "walks.txt";
pub const GLOBAL_FILE: &str = "global.emb";
pub const CONTEXTUAL_FILE: &str = "contextual.emb";
pub const MODEL_FILE: &str = "model.ckpt";

pub fn embeddings_file(mode: RepresentationMode) -> String {
    format!("embeddings-{}.bin", mode.name())
}

pub fn classifier_file(mode: RepresentationMode, model: ClassifierKind) -> String {
    format!("classifier-{}-{}.json", mode.name(), model.name())
}

pub fn report_file(mode: RepresentationMode, model: ClassifierKind) -> String {
    format!("report-{}-{}.json", mode.name(), model.name())
}

pub fn cluster_report_file(mode: RepresentationMode) -> String {
    format!("cluster-{}.json", mode.name())
}

/// Read a report written by `evaluate` or `cluster`.
pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvalReport::from_json(&text)
}

struct Produced {
    tag: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    dir: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Path of an upstream artifact, or an error naming the stage that makes it.
    fn require(&self, name: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                path: p,
                stage: stage.name(),
            })
        }
    }

    fn open(&self, path: &Path) -> Result<BufReader<File>> {
        File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
    }

    /// All reads with labels attached where a label file is available.
    fn load_reads(&self, inputs: &mut Vec<PathBuf>) -> Result<Vec<ReadRecord>> {
        let paths = &self.config.paths;
        let reads_path = match &paths.reads {
            Some(p) => p.clone(),
            None => self.require(READS_FILE, Stage::Simulate)?,
        };
        let mut reads = read_sequences(&reads_path, self.config.reads.min_quality)?;
        inputs.push(reads_path);
        let labels_path = match &paths.labels {
            Some(p) => Some(p.clone()),
            None if paths.reads.is_none() => Some(self.path(LABELS_FILE)).filter(|p| p.exists()),
            None => None,
        };
        if let Some(lp) = labels_path {
            let labels = read_labels(self.open(&lp)?)?;
            let missing = attach_labels(&mut reads, &labels);
            if missing > 0 {
                info!("{missing} reads have no label");
            }
            inputs.push(lp);
        }
        info!("loaded {} reads", reads.len());
        Ok(reads)
    }

    /// Reads used for graph construction and pretraining.
    fn corpus_reads(&self, inputs: &mut Vec<PathBuf>) -> Result<Vec<ReadRecord>> {
        let reads = self.load_reads(inputs)?;
        let exclude: HashSet<&str> = self.config.corpus.exclude_labels.iter().map(String::as_str).collect();
        if exclude.is_empty() {
            return Ok(reads);
        }
        if reads.iter().all(|r| r.label.is_none()) {
            return Err(Error::Config("corpus.exclude_labels needs labeled reads".into()));
        }
        let kept: Vec<ReadRecord> = reads
            .into_iter()
            .filter(|r| !r.label.as_deref().is_some_and(|l| exclude.contains(l)))
            .collect();
        info!("{} reads remain after excluding {:?}", kept.len(), self.config.corpus.exclude_labels);
        Ok(kept)
    }

    fn load_vocab(&self, inputs: &mut Vec<PathBuf>) -> Result<KmerVocabulary> {
        let p = self.require(VOCAB_FILE, Stage::BuildGraph)?;
        let vocab = KmerVocabulary::from_manifest(self.open(&p)?)?;
        let want = KmerVocabulary::new(self.config.kmer.k, &self.config.kmer.alphabet)?;
        if vocab.fingerprint() != want.fingerprint() {
            return Err(Error::Incompatible(format!(
                "{} was built for different k-mer settings; re-run build-graph",
                p.display()
            )));
        }
        inputs.push(p);
        Ok(vocab)
    }

    fn load_table(&self, name: &str, stage: Stage, vocab: &KmerVocabulary, inputs: &mut Vec<PathBuf>) -> Result<EmbeddingTable> {
        let p = self.require(name, stage)?;
        let table = EmbeddingTable::read_binary(self.open(&p)?)?;
        table.check_vocab(vocab)?;
        inputs.push(p);
        Ok(table)
    }

    fn transformer_config(&self) -> TransformerConfig {
        TransformerConfig {
            bidirectional: !self.config.ablation.unidirectional_attention,
            seed: self.config.stage_seed("transformer"),
            ..self.config.transformer
        }
    }

    fn load_embeddings(&self, inputs: &mut Vec<PathBuf>) -> Result<ReadEmbeddings> {
        let p = self.require(&embeddings_file(self.config.embed.mode), Stage::Embed)?;
        let emb = ReadEmbeddings::read_binary(self.open(&p)?)?;
        inputs.push(p);
        Ok(emb)
    }

    /// Labeled rows split into train and test, deterministically from the seed.
    fn split(&self, emb: &ReadEmbeddings) -> Result<(LabeledDataset, LabeledDataset)> {
        let data = LabeledDataset::from_embeddings(emb, None)?;
        if data.num_classes() < 2 {
            return Err(Error::Config("classification needs labeled reads from at least two classes".into()));
        }
        let (train, test) = data.split(self.config.classify.test_fraction, self.config.stage_seed("split"))?;
        let cap = self.config.classify.max_train_per_class;
        if cap == 0 {
            return Ok((train, test));
        }
        let mut seen = vec![0usize; train.num_classes()];
        let keep: Vec<usize> = (0..train.len())
            .filter(|&i| {
                let c = train.labels[i];
                seen[c] += 1;
                seen[c] <= cap
            })
            .collect();
        Ok((train.subset(&keep), test))
    }

    fn write_json<T: serde::Serialize>(&self, name: &str, value: &T, outputs: &mut Vec<PathBuf>) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(io_err(&p))
        })?;
        outputs.push(p);
        Ok(())
    }

    fn write_text(&self, name: &str, text: &str, outputs: &mut Vec<PathBuf>) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, |w| w.write_all(text.as_bytes()).map_err(io_err(&p)))?;
        outputs.push(p);
        Ok(())
    }

    fn simulate(&self) -> Result<Produced> {
        let mut spec = self.config.simulate.clone();
        spec.seed = self.config.stage_seed("simulate");
        let sim = simulate_metagenome(&spec)?;
        info!(
            "simulated {} reads from {} genomes ({} non-unique reads dropped)",
            sim.reads.len(),
            sim.references.len(),
            sim.dropped_non_unique
        );
        let mut outputs = Vec::new();
        let p = self.path(READS_FILE);
        write_atomic(&p, |w| write_fastq(w, &sim.reads, 30).map_err(io_err(&p)))?;
        outputs.push(p);
        let p = self.path(LABELS_FILE);
        write_atomic(&p, |w| write_labels(w, &sim.reads).map_err(io_err(&p)))?;
        outputs.push(p);
        let refs: Vec<ReadRecord> = sim
            .references
            .iter()
            .map(|(name, g)| ReadRecord {
                id: name.clone(),
                sequence: g.clone(),
                qualities: None,
                label: None,
            })
            .collect();
        let p = self.path(REFS_FILE);
        write_atomic(&p, |w| write_fasta(w, &refs).map_err(io_err(&p)))?;
        outputs.push(p);
        Ok(Produced {
            tag: "simulate".into(),
            inputs: Vec::new(),
            outputs,
        })
    }

    fn build_graph(&self) -> Result<Produced> {
        let mut inputs = Vec::new();
        let reads = self.corpus_reads(&mut inputs)?;
        let vocab = KmerVocabulary::new(self.config.kmer.k, &self.config.kmer.alphabet)?;
        let graph = build_graph(
            reads.iter().map(|r| r.sequence.as_slice()),
            &vocab,
            &self.config.graph,
            self.config.weight_mode(),
        )?;
        info!("graph: {} nodes, {} edges", graph.nodes().len(), graph.edges().len());
        let mut outputs = Vec::new();
        let vocab_text = vocab.manifest();
        self.write_text(VOCAB_FILE, &vocab_text, &mut outputs)?;
        let p = self.path(GRAPH_FILE);
        write_atomic(&p, |w| graph.write_tsv(w))?;
        outputs.push(p);
        Ok(Produced {
            tag: "build-graph".into(),
            inputs,
            outputs,
        })
    }

    fn train_structural(&self) -> Result<Produced> {
        let mut inputs = Vec::new();
        let vocab = self.load_vocab(&mut inputs)?;
        let gp = self.require(GRAPH_FILE, Stage::BuildGraph)?;
        let graph = KmerGraph::read_tsv(self.open(&gp)?)?;
        if graph.vocab().fingerprint() != vocab.fingerprint() {
            return Err(Error::Incompatible("graph and vocabulary disagree; re-run build-graph".into()));
        }
        inputs.push(gp);
        let walk_cfg = crate::node2vec::WalkConfig {
            seed: self.config.stage_seed("walk"),
            ..self.config.walk
        };
        let walks = generate_walks(&graph, &walk_cfg)?;
        info!("generated {} walks", walks.len());
        let sg_cfg = crate::node2vec::SkipGramConfig {
            seed: self.config.stage_seed("skipgram"),
            ..self.config.skipgram
        };
        let (table, stats) = train_skipgram(&walks, vocab.len(), vocab.fingerprint(), &sg_cfg)?;
        info!(
            "skip-gram loss {:.4} -> {:.4}",
            stats.initial_batch_loss,
            stats.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );
        let mut outputs = Vec::new();
        let p = self.path(WALKS_FILE);
        write_atomic(&p, |w| write_walks(w, &walks).map_err(io_err(&p)))?;
        outputs.push(p);
        let p = self.path(GLOBAL_FILE);
        write_atomic(&p, |w| table.write_binary(w))?;
        outputs.push(p);
        let p = self.path("global.tsv");
        write_atomic(&p, |w| table.write_tsv(w, &vocab))?;
        outputs.push(p);
        self.write_json("skipgram-stats.json", &stats, &mut outputs)?;
        Ok(Produced {
            tag: "train-structural".into(),
            inputs,
            outputs,
        })
    }

    fn pretrain(&self) -> Result<Produced> {
        let mut inputs = Vec::new();
        let vocab = self.load_vocab(&mut inputs)?;
        let global = if self.config.ablation.no_global_prior {
            None
        } else {
            Some(self.load_table(GLOBAL_FILE, Stage::TrainStructural, &vocab, &mut inputs)?)
        };
        let reads = self.corpus_reads(&mut inputs)?;
        let tcfg = self.transformer_config();
        let windows: Vec<_> = reads
            .iter()
            .flat_map(|r| make_windows(&vocab.tokenize(&r.sequence, self.config.kmer.stride), tcfg.max_tokens))
            .collect();
        info!("pretraining on {} windows", windows.len());
        let masking = crate::mlm::MaskingConfig {
            seed: self.config.stage_seed("masking"),
            ..self.config.masking
        };
        let schedule = crate::mlm::PretrainConfig {
            seed: self.config.stage_seed("pretrain"),
            ..self.config.pretrain
        };
        let out = pretrain(&windows, &vocab, global.as_ref(), &tcfg, &masking, &schedule)?;
        let mut outputs = Vec::new();
        let p = self.path(MODEL_FILE);
        write_atomic(&p, |w| save_checkpoint(&out.model, w))?;
        outputs.push(p);
        let p = self.path(CONTEXTUAL_FILE);
        write_atomic(&p, |w| out.contextual.write_binary(w))?;
        outputs.push(p);
        self.write_json("pretrain-stats.json", &out.stats, &mut outputs)?;
        Ok(Produced {
            tag: "pretrain".into(),
            inputs,
            outputs,
        })
    }

    fn embed(&self) -> Result<Produced> {
        let mode = self.config.embed.mode;
        let mut inputs = Vec::new();
        let vocab = self.load_vocab(&mut inputs)?;
        let global = if mode.needs_global() {
            Some(self.load_table(GLOBAL_FILE, Stage::TrainStructural, &vocab, &mut inputs)?)
        } else {
            None
        };
        let contextual = if mode.needs_contextual() {
            Some(self.load_table(CONTEXTUAL_FILE, Stage::Pretrain, &vocab, &mut inputs)?)
        } else {
            None
        };
        let model: Option<TransformerModel> = if mode.needs_model() {
            let p = self.require(MODEL_FILE, Stage::Pretrain)?;
            let m = load_checkpoint(self.open(&p)?, Some(&self.transformer_config()))?;
            inputs.push(p);
            Some(m)
        } else {
            None
        };
        let reads = self.load_reads(&mut inputs)?;
        let art = Artifacts {
            vocab: &vocab,
            global: global.as_ref(),
            contextual: contextual.as_ref(),
            model: model.as_ref(),
        };
        let embedder = Embedder::new(mode, self.config.embed.pooling, art)?.with_stride(self.config.kmer.stride);
        let emb = embed_reads(&reads, &embedder)?;
        info!("embedded {} reads in {} dimensions ({} skipped)", emb.len(), emb.dim, emb.skipped.len());
        let mut outputs = Vec::new();
        let p = self.path(&embeddings_file(mode));
        write_atomic(&p, |w| emb.write_binary(w))?;
        outputs.push(p);
        if self.config.embed.export_tsv {
            let p = self.path(&format!("embeddings-{}.tsv", mode.name()));
            write_atomic(&p, |w| emb.write_tsv(w))?;
            outputs.push(p);
        }
        Ok(Produced {
            tag: format!("embed-{}", mode.name()),
            inputs,
            outputs,
        })
    }

    fn train(&self) -> Result<Produced> {
        let cc = &self.config.classify;
        let mode = self.config.embed.mode;
        let mut inputs = Vec::new();
        let emb = self.load_embeddings(&mut inputs)?;
        let (train, _) = self.split(&emb)?;
        info!("training {} on {} rows, class counts {:?}", cc.model.name(), train.len(), train.class_counts());
        let seed = self.config.stage_seed("classifier");
        let classifier = match cc.model {
            ClassifierKind::Logreg => {
                let m = train_logreg(&train, &cc.logreg)?;
                info!("logistic regression: {} iterations, converged {}", m.iterations, m.converged);
                Classifier::Linear(m)
            }
            ClassifierKind::Mlp => Classifier::Network(train_mlp(&train, &crate::downstream::MlpConfig { seed, ..cc.mlp.clone() })?),
            ClassifierKind::Deep => {
                Classifier::Network(train_deep(&train, &crate::downstream::DeepConfig { seed, ..cc.deep.clone() })?)
            }
        };
        let mut outputs = Vec::new();
        self.write_json(&classifier_file(mode, cc.model), &classifier, &mut outputs)?;
        Ok(Produced {
            tag: format!("train-{}-{}", mode.name(), cc.model.name()),
            inputs,
            outputs,
        })
    }

    fn evaluate(&self) -> Result<Produced> {
        let cc = &self.config.classify;
        let mode = self.config.embed.mode;
        let mut inputs = Vec::new();
        let emb = self.load_embeddings(&mut inputs)?;
        let cp = self.require(&classifier_file(mode, cc.model), Stage::Train)?;
        let classifier: Classifier = serde_json::from_reader(self.open(&cp)?)?;
        inputs.push(cp);
        let (_, test) = self.split(&emb)?;
        if classifier.classes() != test.classes.as_slice() {
            return Err(Error::Incompatible("classifier was trained on a different class catalog; re-run train".into()));
        }
        let proba = classifier.predict_proba(&test.features)?;
        let predicted: Vec<Option<usize>> = crate::downstream::argmax_rows(&proba).into_iter().map(Some).collect();
        let mut report = evaluate(&test.labels, &predicted, &test.classes)?;
        let curves = report.attach_scores(&test.labels, &proba)?;
        info!("{} + {}: macro-F1 {:.4}, accuracy {:.4}", mode.name(), cc.model.name(), report.macro_f1, report.accuracy);
        let mut outputs = Vec::new();
        let stem = format!("report-{}-{}", mode.name(), cc.model.name());
        self.write_text(&format!("{stem}.json"), &report.to_json()?, &mut outputs)?;
        self.write_text(&format!("{stem}.txt"), &report.render_table(), &mut outputs)?;
        let p = self.path(&format!("pr-{}-{}.csv", mode.name(), cc.model.name()));
        write_atomic(&p, |w| write_pr_csv(w, &test.classes, &curves))?;
        outputs.push(p);
        Ok(Produced {
            tag: format!("evaluate-{}-{}", mode.name(), cc.model.name()),
            inputs,
            outputs,
        })
    }

    fn cluster(&self) -> Result<Produced> {
        let mode = self.config.embed.mode;
        let cfg = &self.config.cluster;
        let mut inputs = Vec::new();
        let mut emb = self.load_embeddings(&mut inputs)?;
        for label in emb.labels.iter_mut().flatten() {
            if let Some(group) = cfg.groups.get(label.as_str()) {
                *label = group.clone();
            }
        }
        let data = LabeledDataset::from_embeddings(&emb, None)?;
        if data.is_empty() {
            return Err(Error::Config("cluster evaluation needs labeled reads".into()));
        }
        let k = if cfg.k == 0 { data.num_classes() } else { cfg.k };
        let x: Array2<f64> = if cfg.normalize {
            l2_normalized(&data.features)
        } else {
            data.features.clone()
        };
        let result = kmeans(&x, k, self.config.stage_seed("cluster"), cfg.max_iters)?;
        let c = data.num_classes();
        let mut table = vec![vec![0u64; c]; k];
        for (&a, &l) in result.assignments.iter().zip(&data.labels) {
            table[a][l] += 1;
        }
        let mapping = hungarian_map(&table);
        let predicted: Vec<Option<usize>> = result.assignments.iter().map(|&a| mapping.cluster_to_class[a]).collect();
        let mut report = evaluate(&data.labels, &predicted, &data.classes)?;
        report.mapping = Some(
            mapping
                .cluster_to_class
                .iter()
                .enumerate()
                .map(|(i, m)| MappingEntry {
                    cluster: i,
                    class: m.map(|j| data.classes[j].clone()),
                    size: table[i].iter().sum(),
                })
                .collect(),
        );
        info!(
            "k-means K={k}: {} iterations, mapped accuracy {:.4} (chance {:.4})",
            result.iterations,
            report.accuracy,
            1.0 / k as f64
        );
        let mut outputs = Vec::new();
        let stem = format!("cluster-{}", mode.name());
        self.write_text(&format!("{stem}.json"), &report.to_json()?, &mut outputs)?;
        self.write_text(&format!("{stem}.txt"), &report.render_table(), &mut outputs)?;
        let mut assignments = String::from("read_id\tcluster\tlabel\n");
        for (i, &a) in result.assignments.iter().enumerate() {
            assignments.push_str(&format!("{}\t{a}\t{}\n", data.ids[i], data.classes[data.labels[i]]));
        }
        self.write_text(&format!("{stem}-assignments.tsv"), &assignments, &mut outputs)?;
        Ok(Produced {
            tag: stem,
            inputs,
            outputs,
        })
    }
}

/// Run one stage against the artifact directory named in `config`.
pub fn run_stage(stage: Stage, config: &PipelineConfig) -> Result<StageOutcome> {
    config.validate()?;
    let dir = config.artifacts_dir()?.to_path_buf();
    let _lock = DirLock::acquire(&dir)?;
    let ctx = Ctx { config, dir };
    info!("stage {stage} in {}", ctx.dir.display());
    let produced = match stage {
        Stage::Simulate => ctx.simulate()?,
        Stage::BuildGraph => ctx.build_graph()?,
        Stage::TrainStructural => ctx.train_structural()?,
        Stage::Pretrain => ctx.pretrain()?,
        Stage::Embed => ctx.embed()?,
        Stage::Train => ctx.train()?,
        Stage::Evaluate => ctx.evaluate()?,
        Stage::Cluster => ctx.cluster()?,
    };
    let seed_label = match stage {
        Stage::Simulate => "simulate",
        Stage::BuildGraph | Stage::Embed | Stage::Evaluate => "",
        Stage::TrainStructural => "walk",
        Stage::Pretrain => "pretrain",
        Stage::Train => "classifier",
        Stage::Cluster => "cluster",
    };
    let manifest = RunManifest {
        stage: stage.name().into(),
        config_hash: config.hash(),
        seed: config.seed,
        stage_seed: if seed_label.is_empty() { 0 } else { config.stage_seed(seed_label) },
        inputs: store::digests(&ctx.dir, &produced.inputs)?,
        outputs: store::digests(&ctx.dir, &produced.outputs)?,
    };
    let manifest_path = ctx.path(&format!("manifest-{}.json", produced.tag));
    manifest.write(&manifest_path)?;
    Ok(StageOutcome {
        stage,
        outputs: produced.outputs,
        manifest: manifest_path,
    })
}

/// Run stages in the order given, stopping at the first failure.
pub fn run_stages(config: &PipelineConfig, stages: &[Stage]) -> Result<Vec<StageOutcome>> {
    stages.iter().map(|&s| run_stage(s, config)).collect()
}

/// A shipped scenario configuration by name.
pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub const PRESETS: &[(&str, &str)] = &[
    ("targeted-constrained", include_str!("../../presets/targeted-constrained.toml")),
    ("targeted-unconstrained", include_str!("../../presets/targeted-unconstrained.toml")),
    ("generalized-seen", include_str!("../../presets/generalized-seen.toml")),
    ("generalized-unseen", include_str!("../../presets/generalized-unseen.toml")),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("graph".parse::<Stage>().is_err());
    }

    #[test]
    fn presets_parse() {
        for (name, text) in PRESETS {
            PipelineConfig::from_toml_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
