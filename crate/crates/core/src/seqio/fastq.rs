use std::io::{BufRead, Write};

use super::{normalize_sequence, ReadRecord};
use crate::error::{Error, Result};

const PHRED_OFFSET: u8 = 33;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FastqStats {
    pub kept: usize,
    pub dropped_low_quality: usize,
    pub dropped_ambiguous: usize,
}

/// Streaming 4-line FASTQ reader (Phred+33) with a mean-quality filter.
///
/// A record is kept when the arithmetic mean of its Phred scores is strictly
/// greater than `min_avg_q`.
pub struct FastqReader<R> {
    reader: R,
    min_avg_q: f64,
    offset: u64,
    done: bool,
    stats: FastqStats,
}

pub fn parse_fastq<R: BufRead>(reader: R, min_avg_q: f64) -> FastqReader<R> {
    FastqReader {
        reader,
        min_avg_q,
        offset: 0,
        done: false,
        stats: FastqStats::default(),
    }
}

impl<R: BufRead> FastqReader<R> {
    pub fn stats(&self) -> FastqStats {
        self.stats
    }

    fn line(&mut self, buf: &mut Vec<u8>) -> Result<Option<u64>> {
        buf.clear();
        let start = self.offset;
        let n = self.reader.read_until(b'\n', buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.offset += n as u64;
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        Ok(Some(start))
    }

    fn truncated(&self, at: u64) -> Error {
        Error::Parse {
            offset: at,
            message: "truncated FASTQ record".into(),
        }
    }

    fn read_record(&mut self) -> Result<Option<ReadRecord>> {
        let mut header = Vec::new();
        let start = loop {
            match self.line(&mut header)? {
                None => return Ok(None),
                Some(_) if header.is_empty() => continue,
                Some(at) => break at,
            }
        };
        if header[0] != b'@' {
            return Err(Error::Parse {
                offset: start,
                message: "FASTQ record does not start with '@'".into(),
            });
        }
        let id = String::from_utf8_lossy(&header[1..])
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_string();

        let mut seq = Vec::new();
        let seq_at = self.line(&mut seq)?.ok_or_else(|| self.truncated(start))?;
        let mut plus = Vec::new();
        let plus_at = self.line(&mut plus)?.ok_or_else(|| self.truncated(start))?;
        if plus.first() != Some(&b'+') {
            return Err(Error::Parse {
                offset: plus_at,
                message: "expected '+' separator line".into(),
            });
        }
        let mut qual = Vec::new();
        let qual_at = self.line(&mut qual)?.ok_or_else(|| self.truncated(start))?;

        if seq.is_empty() {
            return Err(Error::Parse {
                offset: seq_at,
                message: format!("record '{id}' has an empty sequence"),
            });
        }
        if seq.len() != qual.len() {
            return Err(Error::Parse {
                offset: qual_at,
                message: format!(
                    "record '{id}': sequence length {} but quality length {}",
                    seq.len(),
                    qual.len()
                ),
            });
        }
        let mut phred = Vec::with_capacity(qual.len());
        for (i, &q) in qual.iter().enumerate() {
            if !(PHRED_OFFSET..=b'~').contains(&q) {
                return Err(Error::Parse {
                    offset: qual_at + i as u64,
                    message: format!("record '{id}': invalid quality byte 0x{q:02x}"),
                });
            }
            phred.push(q - PHRED_OFFSET);
        }
        Ok(Some(ReadRecord {
            id,
            sequence: normalize_sequence(&seq),
            qualities: Some(phred),
            label: None,
        }))
    }
}

impl<R: BufRead> Iterator for FastqReader<R> {
    type Item = Result<ReadRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.read_record() {
                Ok(Some(rec)) => {
                    let mean = rec.mean_quality().unwrap_or(0.0);
                    if mean <= self.min_avg_q {
                        self.stats.dropped_low_quality += 1;
                    } else if rec.all_ambiguous() {
                        self.stats.dropped_ambiguous += 1;
                    } else {
                        self.stats.kept += 1;
                        return Some(Ok(rec));
                    }
                }
                Ok(None) => self.done = true,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

/// Write records as FASTQ. Reads without qualities get a constant `default_q`.
pub fn write_fastq<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a ReadRecord>,
    default_q: u8,
) -> std::io::Result<()> {
    let mut qline = Vec::new();
    for r in records {
        qline.clear();
        match &r.qualities {
            Some(q) => qline.extend(q.iter().map(|&v| v.min(93) + PHRED_OFFSET)),
            None => qline.resize(r.sequence.len(), default_q.min(93) + PHRED_OFFSET),
        }
        out.write_all(b"@")?;
        out.write_all(r.id.as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(&r.sequence)?;
        out.write_all(b"\n+\n")?;
        out.write_all(&qline)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
