//! Dense per-token vectors, used for structural, contextual and concatenated
//! k-mer embeddings.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kmer::{KmerVocabulary, TokenId};

const MAGIC: &[u8; 8] = b"MG2VEMB\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: usize,
    vocab_fingerprint: u64,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize, vocab_fingerprint: u64) -> Result<Self> {
        Self::from_vec(rows, dim, vocab_fingerprint, vec![0.0; rows * dim])
    }

    pub fn from_vec(rows: usize, dim: usize, vocab_fingerprint: u64, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("embedding dimension must be positive".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Domain(format!(
                "embedding payload has {} values for {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite embedding value in row {}", i / dim)));
        }
        Ok(EmbeddingTable {
            dim,
            rows,
            vocab_fingerprint,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn vocab_fingerprint(&self) -> u64 {
        self.vocab_fingerprint
    }

    pub fn row(&self, id: TokenId) -> &[f64] {
        let i = id as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn row_mut(&mut self, id: TokenId) -> &mut [f64] {
        let i = id as usize * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn cosine(&self, a: TokenId, b: TokenId) -> f64 {
        cosine(self.row(a), self.row(b))
    }

    pub fn check_vocab(&self, vocab: &KmerVocabulary) -> Result<()> {
        if self.vocab_fingerprint != vocab.fingerprint() || self.rows != vocab.len() {
            return Err(Error::Incompatible(format!(
                "embedding table ({} rows, vocab {:016x}) does not match vocabulary ({} tokens, {:016x})",
                self.rows,
                self.vocab_fingerprint,
                vocab.len(),
                vocab.fingerprint()
            )));
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&self.vocab_fingerprint.to_le_bytes())?;
        out.write_all(&(self.rows as u64).to_le_bytes())?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
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
        if &magic != MAGIC {
            return Err(Error::Incompatible("not an embedding table file".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(Error::Incompatible(format!(
                "embedding table version {version}, expected {VERSION}"
            )));
        }
        let mut b8 = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let fingerprint = next_u64(&mut input)?;
        let rows = next_u64(&mut input)? as usize;
        let dim = next_u64(&mut input)? as usize;
        let mut raw = vec![0u8; rows * dim * 8];
        input.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        EmbeddingTable::from_vec(rows, dim, fingerprint, data)
    }

    /// Human-readable export: `token<TAB>v1...vD`, one row per vocabulary entry.
    pub fn write_tsv<W: Write>(&self, mut out: W, vocab: &KmerVocabulary) -> Result<()> {
        for id in 0..self.rows as TokenId {
            out.write_all(vocab.id_to_token(id)?.as_bytes())?;
            for v in self.row(id) {
                write!(out, "\t{v:?}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
