//! Sequence input/output: FASTA and FASTQ readers, writers, the label sidecar
//! and the synthetic metagenome simulator.

mod fasta;
mod fastq;
mod labels;
pub mod simulate;

pub use fasta::{parse_fasta, write_fasta, FastaReader};
pub use fastq::{parse_fastq, write_fastq, FastqReader, FastqStats};
pub use labels::{attach_labels, read_labels, write_labels};
pub use simulate::{simulate_metagenome, SimulatedMetagenome, SyntheticSpec};

use crate::error::{Error, Result};

/// One sequencing read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadRecord {
    pub id: String,
    /// Uppercase bases; anything outside `ACGT` is stored as `N`.
    pub sequence: Vec<u8>,
    /// Phred scores, one per base.
    pub qualities: Option<Vec<u8>>,
    pub label: Option<String>,
}

impl ReadRecord {
    pub fn new(id: impl Into<String>, sequence: impl AsRef<[u8]>) -> Result<Self> {
        let id = id.into();
        let sequence = normalize_sequence(sequence.as_ref());
        if sequence.is_empty() {
            return Err(Error::Domain(format!("read {id} has an empty sequence")));
        }
        Ok(ReadRecord {
            id,
            sequence,
            qualities: None,
            label: None,
        })
    }

    pub fn with_qualities(mut self, qualities: Vec<u8>) -> Result<Self> {
        if qualities.len() != self.sequence.len() {
            return Err(Error::Domain(format!(
                "read {}: {} qualities for {} bases",
                self.id,
                qualities.len(),
                self.sequence.len()
            )));
        }
        self.qualities = Some(qualities);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn sequence_str(&self) -> &str {
        // normalize_sequence only emits ASCII
        std::str::from_utf8(&self.sequence).unwrap_or("")
    }

    pub fn mean_quality(&self) -> Option<f64> {
        let q = self.qualities.as_ref()?;
        if q.is_empty() {
            return None;
        }
        Some(q.iter().map(|&v| v as f64).sum::<f64>() / q.len() as f64)
    }

    pub(crate) fn all_ambiguous(&self) -> bool {
        self.sequence.iter().all(|&b| b == b'N')
    }
}

/// Uppercase and map every base outside `ACGT` to `N`.
pub fn normalize_sequence(raw: &[u8]) -> Vec<u8> {
    raw.iter()
        .filter(|b| !b.is_ascii_whitespace())
        .map(|b| match b.to_ascii_uppercase() {
            c @ (b'A' | b'C' | b'G' | b'T') => c,
            _ => b'N',
        })
        .collect()
}

/// Parse a FASTA or FASTQ file, picking the format from the first byte.
pub fn read_sequences(path: &std::path::Path, min_avg_q: f64) -> Result<Vec<ReadRecord>> {
    use std::io::{BufRead, BufReader};
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let first = reader
        .fill_buf()
        .map_err(|e| Error::io(path, e))?
        .first()
        .copied();
    match first {
        Some(b'@') => parse_fastq(reader, min_avg_q).collect(),
        _ => parse_fasta(reader).collect(),
    }
}
