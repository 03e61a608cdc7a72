//! Per-k-mer vectors and pooled per-read feature vectors.

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmer::{KmerVocabulary, TokenId};
use crate::mlm::TransformerModel;
use crate::table::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationMode {
    /// Structural (random-walk) embedding rows.
    Global,
    /// Rows of the pretrained transformer's embedding layer.
    Contextual,
    /// Final hidden states of the transformer, token in its window.
    Encoder,
    /// Structural and contextual rows side by side.
    Concat,
    /// One-hot k-mer indicators; pooled, this is the k-mer frequency profile.
    KmerFrequency,
}

impl RepresentationMode {
    pub const ALL: [RepresentationMode; 5] = [
        RepresentationMode::Global,
        RepresentationMode::Contextual,
        RepresentationMode::Encoder,
        RepresentationMode::Concat,
        RepresentationMode::KmerFrequency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepresentationMode::Global => "global",
            RepresentationMode::Contextual => "contextual",
            RepresentationMode::Encoder => "encoder",
            RepresentationMode::Concat => "concat",
            RepresentationMode::KmerFrequency => "kmer-frequency",
        }
    }

    pub fn needs_global(self) -> bool {
        matches!(self, RepresentationMode::Global | RepresentationMode::Concat)
    }

    pub fn needs_contextual(self) -> bool {
        matches!(self, RepresentationMode::Contextual | RepresentationMode::Concat)
    }

    pub fn needs_model(self) -> bool {
        self == RepresentationMode::Encoder
    }
}

impl std::fmt::Display for RepresentationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

/// Learned artifacts a mode may draw on.
#[derive(Debug, Clone, Copy)]
pub struct Artifacts<'a> {
    pub vocab: &'a KmerVocabulary,
    pub global: Option<&'a EmbeddingTable>,
    pub contextual: Option<&'a EmbeddingTable>,
    pub model: Option<&'a TransformerModel>,
}

impl<'a> Artifacts<'a> {
    pub fn new(vocab: &'a KmerVocabulary) -> Self {
        Artifacts {
            vocab,
            global: None,
            contextual: None,
            model: None,
        }
    }
}

/// Turns reads into fixed-length vectors for one representation mode.
#[derive(Debug, Clone, Copy)]
pub struct Embedder<'a> {
    mode: RepresentationMode,
    pooling: Pooling,
    stride: usize,
    art: Artifacts<'a>,
    dim: usize,
}

fn missing(what: &str, mode: RepresentationMode) -> Error {
    Error::Config(format!("representation mode {mode} needs {what}"))
}

impl<'a> Embedder<'a> {
    pub fn new(mode: RepresentationMode, pooling: Pooling, art: Artifacts<'a>) -> Result<Self> {
        let check = |t: Option<&EmbeddingTable>, what: &str| -> Result<usize> {
            let t = t.ok_or_else(|| missing(what, mode))?;
            t.check_vocab(art.vocab)?;
            Ok(t.dim())
        };
        let dim = match mode {
            RepresentationMode::Global => check(art.global, "structural embeddings")?,
            RepresentationMode::Contextual => check(art.contextual, "contextual embeddings")?,
            RepresentationMode::Concat => {
                check(art.global, "structural embeddings")? + check(art.contextual, "contextual embeddings")?
            }
            RepresentationMode::Encoder => {
                let m = art.model.ok_or_else(|| missing("a pretrained transformer", mode))?;
                if m.vocab_fingerprint() != art.vocab.fingerprint() || m.vocab_size() != art.vocab.len() {
                    return Err(Error::Incompatible("transformer was trained on a different vocabulary".into()));
                }
                m.config().model_dim
            }
            RepresentationMode::KmerFrequency => art.vocab.num_kmers() as usize,
        };
        Ok(Embedder {
            mode,
            pooling,
            stride: 1,
            art,
            dim,
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn mode(&self) -> RepresentationMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position-independent vector of one k-mer. Not defined for the
    /// encoder mode, whose vectors depend on the surrounding window.
    pub fn kmer_vector(&self, id: TokenId) -> Result<Vec<f64>> {
        if id as usize >= self.art.vocab.len() {
            return Err(Error::Domain(format!("token id {id} outside the vocabulary")));
        }
        let row = |t: Option<&EmbeddingTable>| t.expect("checked at construction").row(id).to_vec();
        Ok(match self.mode {
            RepresentationMode::Global => row(self.art.global),
            RepresentationMode::Contextual => row(self.art.contextual),
            RepresentationMode::Concat => {
                let mut v = row(self.art.global);
                v.extend_from_slice(self.art.contextual.expect("checked at construction").row(id));
                v
            }
            RepresentationMode::KmerFrequency => {
                let mut v = vec![0.0; self.dim];
                if !self.art.vocab.is_special(id) {
                    v[id as usize] = 1.0;
                }
                v
            }
            RepresentationMode::Encoder => {
                return Err(Error::Config("encoder vectors depend on context; embed whole reads instead".into()))
            }
        })
    }

    /// Pooled vector of a read, UNK positions excluded.
    pub fn embed_read(&self, seq: &[u8]) -> Result<Vec<f64>> {
        let vocab = self.art.vocab;
        let tokens = vocab.tokenize(seq, self.stride);
        let known = tokens.iter().filter(|&&t| t != vocab.unk()).count();
        if known == 0 {
            return Err(Error::Unembeddable(if tokens.is_empty() {
                format!("read of length {} is shorter than k={}", seq.len(), vocab.k())
            } else {
                "every k-mer contains an ambiguous base".to_string()
            }));
        }
        let mut pool = Pool::new(self.pooling, self.dim);
        if self.mode == RepresentationMode::Encoder {
            let model = self.art.model.expect("checked at construction");
            for window in tokens.chunks(model.config().max_tokens) {
                let hidden = model.hidden_states(window)?;
                for (row, &t) in hidden.rows().into_iter().zip(window) {
                    if t != vocab.unk() {
                        pool.add(row.iter().copied());
                    }
                }
            }
        } else {
            for &t in tokens.iter().filter(|&&t| t != vocab.unk()) {
                match self.mode {
                    RepresentationMode::KmerFrequency => pool.add_one_hot(t as usize),
                    RepresentationMode::Concat => pool.add(
                        self.art.global.expect("checked").row(t).iter().chain(self.art.contextual.expect("checked").row(t)).copied(),
                    ),
                    RepresentationMode::Global => pool.add(self.art.global.expect("checked").row(t).iter().copied()),
                    RepresentationMode::Contextual => pool.add(self.art.contextual.expect("checked").row(t).iter().copied()),
                    RepresentationMode::Encoder => unreachable!(),
                }
            }
        }
        Ok(pool.finish())
    }
}

struct Pool {
    kind: Pooling,
    acc: Vec<f64>,
    n: usize,
}

impl Pool {
    fn new(kind: Pooling, dim: usize) -> Self {
        let init = match kind {
            Pooling::Mean => 0.0,
            Pooling::Max => f64::NEG_INFINITY,
        };
        Pool {
            kind,
            acc: vec![init; dim],
            n: 0,
        }
    }

    fn add(&mut self, v: impl Iterator<Item = f64>) {
        self.n += 1;
        for (a, x) in self.acc.iter_mut().zip(v) {
            match self.kind {
                Pooling::Mean => *a += x,
                Pooling::Max => *a = a.max(x),
            }
        }
    }

    fn add_one_hot(&mut self, i: usize) {
        self.n += 1;
        if self.kind == Pooling::Max {
            for a in self.acc.iter_mut() {
                *a = a.max(0.0);
            }
        }
        match self.kind {
            Pooling::Mean => self.acc[i] += 1.0,
            Pooling::Max => self.acc[i] = 1.0,
        }
    }

    fn finish(mut self) -> Vec<f64> {
        if self.kind == Pooling::Mean {
            let inv = 1.0 / self.n as f64;
            self.acc.iter_mut().for_each(|a| *a *= inv);
        }
        self.acc
    }
}

/// One row per embeddable read.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadEmbeddings {
    pub mode: RepresentationMode,
    pub dim: usize,
    pub ids: Vec<String>,
    pub labels: Vec<Option<String>>,
    /// Row-major `ids.len() x dim`.
    pub data: Vec<f64>,
    /// Ids of reads that could not be embedded.
    pub skipped: Vec<String>,
}

impl ReadEmbeddings {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    /// `read_id<TAB>label<TAB>v1...vD`; an absent label is written empty.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, id) in self.ids.iter().enumerate() {
            write!(out, "{id}\t{}", self.labels[i].as_deref().unwrap_or(""))?;
            for v in self.row(i) {
                write!(out, "\t{v:?}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, mode: RepresentationMode) -> Result<Self> {
        let mut out = ReadEmbeddings {
            mode,
            dim: 0,
            ids: Vec::new(),
            labels: Vec::new(),
            data: Vec::new(),
            skipped: Vec::new(),
        };
        let mut offset = 0u64;
        for line in input.lines() {
            let line = line?;
            let here = offset;
            offset += line.len() as u64 + 1;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let label = fields.next().ok_or_else(|| Error::Parse {
                offset: here,
                message: "embedding row has no label column".into(),
            })?;
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        offset: here,
                        message: format!("bad embedding value {f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if out.ids.is_empty() {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(Error::Parse {
                    offset: here,
                    message: format!("row has {} values, expected {}", values.len(), out.dim),
                });
            }
            out.ids.push(id);
            out.labels.push((!label.is_empty()).then(|| label.to_string()));
            out.data.extend(values);
        }
        Ok(out)
    }

    /// Compact form: magic, `u32` version, `u64` header length, JSON header
    /// (mode, dim, ids, labels, skipped), then little-endian `f64` rows.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let header = BinaryHeader {
            mode: self.mode,
            dim: self.dim,
            ids: self.ids.clone(),
            labels: self.labels.clone(),
            skipped: self.skipped.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(READ_MAGIC)?;
        out.write_all(&READ_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != READ_MAGIC {
            return Err(Error::Incompatible("not a read embedding file".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != READ_VERSION {
            return Err(Error::Incompatible(format!("read embedding version {version}, expected {READ_VERSION}")));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let mut json = vec![0u8; u64::from_le_bytes(b8) as usize];
        input.read_exact(&mut json)?;
        let h: BinaryHeader = serde_json::from_slice(&json)?;
        if h.labels.len() != h.ids.len() {
            return Err(Error::Incompatible("read embedding header is inconsistent".into()));
        }
        let mut raw = vec![0u8; h.ids.len() * h.dim * 8];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(ReadEmbeddings {
            mode: h.mode,
            dim: h.dim,
            ids: h.ids,
            labels: h.labels,
            data,
            skipped: h.skipped,
        })
    }
}

const READ_MAGIC: &[u8; 8] = b"MG2VREAD";
const READ_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BinaryHeader {
    mode: RepresentationMode,
    dim: usize,
    ids: Vec<String>,
    labels: Vec<Option<String>>,
    skipped: Vec<String>,
}

/// Embed every read; unembeddable reads are listed in `skipped`.
pub fn embed_reads(reads: &[crate::seqio::ReadRecord], embedder: &Embedder<'_>) -> Result<ReadEmbeddings> {
    let vectors: Vec<Result<Vec<f64>>> = reads.par_iter().map(|r| embedder.embed_read(&r.sequence)).collect();
    let mut out = ReadEmbeddings {
        mode: embedder.mode(),
        dim: embedder.dim(),
        ids: Vec::new(),
        labels: Vec::new(),
        data: Vec::with_capacity(reads.len() * embedder.dim()),
        skipped: Vec::new(),
    };
    for (r, v) in reads.iter().zip(vectors) {
        match v {
            Ok(v) => {
                out.ids.push(r.id.clone());
                out.labels.push(r.label.clone());
                out.data.extend(v);
            }
            Err(Error::Unembeddable(_)) => out.skipped.push(r.id.clone()),
            Err(e) => return Err(e),
        }
    }
    if !out.skipped.is_empty() {
        log::warn!("{} reads could not be embedded and were skipped", out.skipped.len());
    }
    Ok(out)
}
