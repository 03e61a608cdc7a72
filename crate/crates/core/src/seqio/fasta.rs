use std::io::{BufRead, Write};

use super::ReadRecord;
use crate::error::{Error, Result};

/// Streaming FASTA reader. Holds at most one record in memory.
pub struct FastaReader<R> {
    reader: R,
    offset: u64,
    line: Vec<u8>,
    /// Header of the next record, already consumed from the stream.
    pending: Option<(String, u64)>,
    done: bool,
    dropped_ambiguous: usize,
}

pub fn parse_fasta<R: BufRead>(reader: R) -> FastaReader<R> {
    FastaReader {
        reader,
        offset: 0,
        line: Vec::new(),
        pending: None,
        done: false,
        dropped_ambiguous: 0,
    }
}

impl<R: BufRead> FastaReader<R> {
    /// Reads made only of `N` that were skipped.
    pub fn dropped_ambiguous(&self) -> usize {
        self.dropped_ambiguous
    }

    fn next_line(&mut self) -> Result<Option<u64>> {
        self.line.clear();
        let start = self.offset;
        let n = self.reader.read_until(b'\n', &mut self.line)?;
        if n == 0 {
            return Ok(None);
        }
        self.offset += n as u64;
        while matches!(self.line.last(), Some(b'\n' | b'\r')) {
            self.line.pop();
        }
        Ok(Some(start))
    }

    fn header_id(line: &[u8]) -> String {
        let text = String::from_utf8_lossy(&line[1..]);
        text.split_whitespace().next().unwrap_or("").to_string()
    }

    fn read_record(&mut self) -> Result<Option<ReadRecord>> {
        let (id, header_offset) = match self.pending.take() {
            Some(h) => h,
            None => loop {
                match self.next_line()? {
                    None => return Ok(None),
                    Some(_) if self.line.is_empty() => continue,
                    Some(at) if self.line[0] == b'>' => break (Self::header_id(&self.line), at),
                    Some(at) => {
                        return Err(Error::Parse {
                            offset: at,
                            message: "sequence data before the first '>' header".into(),
                        })
                    }
                }
            },
        };
        let mut body = Vec::new();
        loop {
            match self.next_line()? {
                None => break,
                Some(at) if self.line.first() == Some(&b'>') => {
                    self.pending = Some((Self::header_id(&self.line), at));
                    break;
                }
                Some(_) => body.extend_from_slice(&self.line),
            }
        }
        if body.iter().all(|b| b.is_ascii_whitespace()) {
            return Err(Error::Parse {
                offset: header_offset,
                message: format!("record '{id}' has an empty sequence"),
            });
        }
        ReadRecord::new(id, &body).map(Some)
    }
}

impl<R: BufRead> Iterator for FastaReader<R> {
    type Item = Result<ReadRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.read_record() {
                Ok(Some(rec)) if rec.all_ambiguous() => self.dropped_ambiguous += 1,
                Ok(Some(rec)) => return Some(Ok(rec)),
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

/// Write records as single-line FASTA.
pub fn write_fasta<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a ReadRecord>,
) -> std::io::Result<()> {
    for r in records {
        out.write_all(b">")?;
        out.write_all(r.id.as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(&r.sequence)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
