use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::downstream::{DeepConfig, LogRegConfig, MlpConfig};
use crate::embed::{Pooling, RepresentationMode};
use crate::error::{Error, Result};
use crate::mlm::{MaskingConfig, PretrainConfig, TransformerConfig};
use crate::node2vec::{SkipGramConfig, WalkConfig};
use crate::seed::derive;
use crate::seqio::SyntheticSpec;
use crate::structgraph::{WeightMode, WeightParams};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory holding every artifact and manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<PathBuf>,
    /// FASTA/FASTQ input. Defaults to the simulated `reads.fastq`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reads: Option<PathBuf>,
    /// `read_id<TAB>label` file. Defaults to the simulated `labels.tsv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadsConfig {
    /// FASTQ reads with mean Phred quality at or below this are dropped.
    pub min_quality: f64,
}

impl Default for ReadsConfig {
    fn default() -> Self {
        ReadsConfig { min_quality: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KmerConfig {
    pub k: usize,
    pub alphabet: String,
    pub stride: usize,
}

impl Default for KmerConfig {
    fn default() -> Self {
        KmerConfig {
            k: 4,
            alphabet: "ACGT".into(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Reads with these labels are left out of graph construction and
    /// pretraining (they stay in embedding, classification and clustering).
    pub exclude_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    /// Start the transformer embedding layer from random values.
    pub no_global_prior: bool,
    /// Use raw co-occurrence counts as edge weights.
    pub raw_count_weights: bool,
    /// Causal instead of bidirectional self-attention.
    pub unidirectional_attention: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub mode: RepresentationMode,
    pub pooling: Pooling,
    /// Also write the read vectors as TSV.
    pub export_tsv: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            mode: RepresentationMode::Concat,
            pooling: Pooling::Mean,
            export_tsv: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Logreg,
    Mlp,
    Deep,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Logreg => "logreg",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Deep => "deep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub model: ClassifierKind,
    /// Share of each class held out for evaluation.
    pub test_fraction: f64,
    /// Cap on training rows per class after the split (0 = no cap).
    pub max_train_per_class: usize,
    pub logreg: LogRegConfig,
    pub mlp: MlpConfig,
    pub deep: DeepConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            model: ClassifierKind::Logreg,
            test_fraction: 0.3,
            max_train_per_class: 0,
            logreg: LogRegConfig::default(),
            mlp: MlpConfig::default(),
            deep: DeepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    /// Number of clusters; 0 uses the number of label classes.
    pub k: usize,
    pub max_iters: usize,
    /// Cluster unit-length copies of the vectors.
    pub normalize: bool,
    /// Optional coarser labels for evaluation (`label = "group"`). Labels not
    /// listed keep their own name.
    pub groups: BTreeMap<String, String>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            k: 0,
            max_iters: 300,
            normalize: true,
            groups: BTreeMap::new(),
        }
    }
}

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub reads: ReadsConfig,
    pub simulate: SyntheticSpec,
    pub kmer: KmerConfig,
    pub graph: WeightParams,
    pub walk: WalkConfig,
    pub skipgram: SkipGramConfig,
    pub transformer: TransformerConfig,
    pub masking: MaskingConfig,
    pub pretrain: PretrainConfig,
    pub corpus: CorpusConfig,
    pub ablation: AblationConfig,
    pub embed: EmbedConfig,
    pub classify: ClassifyConfig,
    pub cluster: ClusterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            reads: ReadsConfig::default(),
            simulate: SyntheticSpec::default(),
            kmer: KmerConfig::default(),
            graph: WeightParams::default(),
            walk: WalkConfig::default(),
            skipgram: SkipGramConfig {
                dim: TransformerConfig::desk().model_dim,
                ..SkipGramConfig::default()
            },
            transformer: TransformerConfig::desk(),
            masking: MaskingConfig::default(),
            pretrain: PretrainConfig::default(),
            corpus: CorpusConfig::default(),
            ablation: AblationConfig::default(),
            embed: EmbedConfig::default(),
            classify: ClassifyConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

/// Keys accepted somewhere in the file even though the default value omits
/// them when serialised.
const OPTIONAL_KEYS: &[(&str, &str)] = &[("paths", "artifacts"), ("paths", "reads"), ("paths", "labels")];

/// Tables whose keys are user data rather than settings.
const OPEN_TABLES: &[&str] = &["cluster.groups"];

fn key_template() -> toml::Table {
    let mut t = toml::Table::try_from(PipelineConfig::default()).expect("default config serialises");
    for (section, key) in OPTIONAL_KEYS {
        if let Some(toml::Value::Table(s)) = t.get_mut(*section) {
            s.insert((*key).to_string(), toml::Value::String(String::new()));
        }
    }
    t
}

fn check_keys(user: &toml::Table, template: &toml::Table, path: &str) -> Result<()> {
    for (key, value) in user {
        let here = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        match template.get(key) {
            None => {
                let best = template
                    .keys()
                    .map(|k| (strsim::jaro_winkler(key, k), k))
                    .filter(|(score, _)| *score > 0.7)
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                let section = if path.is_empty() { "top level".to_string() } else { format!("[{path}]") };
                let hint = best.map(|(_, k)| format!("; did you mean `{k}`?")).unwrap_or_default();
                return Err(Error::Config(format!("unknown key `{key}` in {section}{hint}")));
            }
            Some(toml::Value::Table(sub)) => {
                if OPEN_TABLES.contains(&here.as_str()) {
                    continue;
                }
                if let toml::Value::Table(u) = value {
                    check_keys(u, sub, &here)?;
                }
            }
            Some(_) => {}
        }
    }
    Ok(())
}

impl PipelineConfig {
    /// Parse a TOML document. Unknown keys are rejected with a suggestion.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        check_keys(&user, &key_template(), "")?;
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Section-level checks that do not depend on artifacts.
    pub fn validate(&self) -> Result<()> {
        if self.kmer.k == 0 || self.kmer.stride == 0 {
            return Err(Error::Config("kmer: k and stride must be positive".into()));
        }
        self.graph.validate()?;
        self.walk.validate()?;
        self.skipgram.validate()?;
        self.transformer.validate()?;
        self.masking.validate()?;
        self.pretrain.validate()?;
        if !(0.0..1.0).contains(&self.classify.test_fraction) {
            return Err(Error::Config("classify: test_fraction must lie in [0, 1)".into()));
        }
        if !self.ablation.no_global_prior && self.skipgram.dim != self.transformer.model_dim {
            return Err(Error::Config(format!(
                "skipgram.dim ({}) must equal transformer.model_dim ({}) to initialise the transformer \
                 from the structural embeddings (or set ablation.no_global_prior)",
                self.skipgram.dim, self.transformer.model_dim
            )));
        }
        Ok(())
    }

    /// The artifact directory; required.
    pub fn artifacts_dir(&self) -> Result<&Path> {
        self.paths
            .artifacts
            .as_deref()
            .ok_or_else(|| Error::Config("paths.artifacts is required (or pass --out)".into()))
    }

    pub fn weight_mode(&self) -> WeightMode {
        if self.ablation.raw_count_weights {
            WeightMode::RawCounts
        } else {
            WeightMode::Normalized
        }
    }

    pub fn stage_seed(&self, label: &str) -> u64 {
        derive(self.seed, label)
    }

    /// Canonical hash of the whole configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
