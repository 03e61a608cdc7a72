use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::ReadRecord;
use crate::error::{Error, Result};

/// Parse a `read_id<TAB>label` sidecar.
pub fn read_labels<R: BufRead>(reader: R) -> Result<HashMap<String, String>> {
    let mut labels = HashMap::new();
    let mut offset = 0u64;
    for line in reader.lines() {
        let line = line?;
        let len = line.len() as u64 + 1;
        let trimmed = line.trim_end_matches('\r');
        if !trimmed.is_empty() {
            let (id, label) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
                offset,
                message: "label line is not `read_id<TAB>label`".into(),
            })?;
            labels.insert(id.to_string(), label.to_string());
        }
        offset += len;
    }
    Ok(labels)
}

pub fn write_labels<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a ReadRecord>,
) -> std::io::Result<()> {
    for r in records {
        if let Some(label) = &r.label {
            writeln!(out, "{}\t{}", r.id, label)?;
        }
    }
    out.flush()
}

/// Copy labels from the sidecar onto records. Returns how many were unlabeled.
pub fn attach_labels(records: &mut [ReadRecord], labels: &HashMap<String, String>) -> usize {
    let mut missing = 0;
    for r in records {
        match labels.get(&r.id) {
            Some(l) => r.label = Some(l.clone()),
            None => missing += 1,
        }
    }
    missing
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip_and_attach() {
        let recs = vec![
            ReadRecord::new("r1", "ACGT").unwrap().with_label("host"),
            ReadRecord::new("r2", "ACGT").unwrap().with_label("sp1"),
        ];
        let mut buf = Vec::new();
        write_labels(&mut buf, &recs).unwrap();
        assert_eq!(buf, b"r1\thost\nr2\tsp1\n");
        let map = read_labels(&buf[..]).unwrap();
        let mut bare = vec![
            ReadRecord::new("r2", "A").unwrap(),
            ReadRecord::new("r9", "A").unwrap(),
        ];
        assert_eq!(attach_labels(&mut bare, &map), 1);
        assert_eq!(bare[0].label.as_deref(), Some("sp1"));
    }

    #[test]
    fn malformed_label_line() {
        assert!(read_labels(&b"r1 host\n"[..]).is_err());
    }
}
