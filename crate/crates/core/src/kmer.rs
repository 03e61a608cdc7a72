//! k-mer vocabulary shared by the graph, the embeddings and the transformer.
//!
//! k-mers over an alphabet of size `a` are encoded lexicographically in base
//! `a`, giving ids `0..a^k`. The special tokens PAD, MASK and UNK take the
//! three ids after that.

use std::fmt::Write as _;
use std::io::BufRead;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: &str = "[PAD]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";

const MANIFEST_MAGIC: &str = "#mg2vec-vocab v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerVocabulary {
    k: usize,
    alphabet: Vec<u8>,
    digit: [Option<u8>; 256],
    num_kmers: u32,
}

impl KmerVocabulary {
    pub fn new(k: usize, alphabet: &str) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let alphabet: Vec<u8> = alphabet.bytes().map(|b| b.to_ascii_uppercase()).collect();
        if alphabet.len() < 2 {
            return Err(Error::Config("alphabet needs at least two symbols".into()));
        }
        let mut digit = [None; 256];
        for (i, &b) in alphabet.iter().enumerate() {
            if digit[b as usize].is_some() {
                return Err(Error::Config(format!("duplicate alphabet symbol '{}'", b as char)));
            }
            digit[b as usize] = Some(i as u8);
        }
        let num_kmers = (alphabet.len() as u64)
            .checked_pow(k as u32)
            .filter(|&n| n + 3 <= u32::MAX as u64 / 2)
            .ok_or_else(|| Error::Config(format!("vocabulary for k={k} is too large")))?;
        Ok(KmerVocabulary {
            k,
            alphabet,
            digit,
            num_kmers: num_kmers as u32,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alphabet(&self) -> &[u8] {
        &self.alphabet
    }

    /// Number of k-mer tokens, excluding specials.
    pub fn num_kmers(&self) -> u32 {
        self.num_kmers
    }

    /// Total vocabulary size including the three specials.
    pub fn len(&self) -> usize {
        self.num_kmers as usize + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pad(&self) -> TokenId {
        self.num_kmers
    }

    pub fn mask(&self) -> TokenId {
        self.num_kmers + 1
    }

    pub fn unk(&self) -> TokenId {
        self.num_kmers + 2
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id >= self.num_kmers
    }

    /// Encode a k-mer or special-token string. Unknown strings map to UNK.
    pub fn token_to_id(&self, token: &str) -> TokenId {
        match token {
            PAD => return self.pad(),
            MASK => return self.mask(),
            UNK => return self.unk(),
            _ => {}
        }
        if token.len() != self.k {
            return self.unk();
        }
        self.encode(token.as_bytes()).unwrap_or(self.unk())
    }

    fn encode(&self, kmer: &[u8]) -> Option<TokenId> {
        let base = self.alphabet.len() as u32;
        kmer.iter().try_fold(0u32, |acc, &b| {
            self.digit[b.to_ascii_uppercase() as usize].map(|d| acc * base + d as u32)
        })
    }

    pub fn id_to_token(&self, id: TokenId) -> Result<String> {
        if id == self.pad() {
            return Ok(PAD.into());
        }
        if id == self.mask() {
            return Ok(MASK.into());
        }
        if id == self.unk() {
            return Ok(UNK.into());
        }
        if id > self.unk() {
            return Err(Error::Domain(format!("token id {id} is outside the vocabulary")));
        }
        let base = self.alphabet.len() as u32;
        let mut out = vec![0u8; self.k];
        let mut rest = id;
        for slot in out.iter_mut().rev() {
            *slot = self.alphabet[(rest % base) as usize];
            rest /= base;
        }
        Ok(String::from_utf8(out).expect("alphabet is ASCII"))
    }

    /// Ids of `seq[j..j+k]` for `j = 0, stride, 2*stride, ...`. Windows that
    /// contain a symbol outside the alphabet become UNK.
    pub fn tokenize(&self, seq: &[u8], stride: usize) -> Vec<TokenId> {
        let stride = stride.max(1);
        if seq.len() < self.k {
            return Vec::new();
        }
        let base = self.alphabet.len() as u64;
        let modulus = self.num_kmers as u64;
        let mut out = Vec::with_capacity((seq.len() - self.k) / stride + 1);
        // rolling code plus the position of the last invalid symbol seen
        let mut code = 0u64;
        let mut last_bad: Option<usize> = None;
        for (i, &b) in seq.iter().enumerate() {
            match self.digit[b.to_ascii_uppercase() as usize] {
                Some(d) => code = (code * base + d as u64) % modulus,
                None => {
                    code = 0;
                    last_bad = Some(i);
                }
            }
            if i + 1 >= self.k {
                let start = i + 1 - self.k;
                if start.is_multiple_of(stride) {
                    let clean = last_bad.is_none_or(|p| p < start);
                    out.push(if clean { code as TokenId } else { self.unk() });
                }
            }
        }
        out
    }

    /// Text manifest describing the vocabulary.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MANIFEST_MAGIC}").unwrap();
        writeln!(s, "k\t{}", self.k).unwrap();
        writeln!(s, "alphabet\t{}", String::from_utf8_lossy(&self.alphabet)).unwrap();
        writeln!(s, "specials\t{PAD},{MASK},{UNK}").unwrap();
        writeln!(s, "size\t{}", self.len()).unwrap();
        s
    }

    pub fn from_manifest<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let magic = lines.next().transpose()?.unwrap_or_default();
        if magic.trim() != MANIFEST_MAGIC {
            return Err(Error::Incompatible(format!("not a vocabulary manifest: '{magic}'")));
        }
        let (mut k, mut alphabet) = (None, None);
        for line in lines {
            let line = line?;
            match line.split_once('\t') {
                Some(("k", v)) => {
                    k = Some(v.parse::<usize>().map_err(|e| Error::Incompatible(format!("bad k: {e}")))?)
                }
                Some(("alphabet", v)) => alphabet = Some(v.to_string()),
                _ => {}
            }
        }
        match (k, alphabet) {
            (Some(k), Some(a)) => KmerVocabulary::new(k, &a),
            _ => Err(Error::Incompatible("vocabulary manifest lacks k or alphabet".into())),
        }
    }

    /// Stable 64-bit fingerprint of the manifest, stored in embedding files.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.manifest().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn acgt(k: usize) -> KmerVocabulary {
        KmerVocabulary::new(k, "ACGT").unwrap()
    }

    #[test]
    fn windows_with_stride_one() {
        let v = acgt(4);
        let ids = v.tokenize(b"ACGTA", 1);
        assert_eq!(ids, vec![v.token_to_id("ACGT"), v.token_to_id("CGTA")]);
    }

    #[test]
    fn short_read_has_no_tokens() {
        assert!(acgt(4).tokenize(b"ACG", 1).is_empty());
    }

    #[test]
    fn unknown_symbols_become_unk() {
        let v = acgt(2);
        assert_eq!(v.tokenize(b"ACNT", 1), vec![v.token_to_id("AC"), v.unk(), v.unk()]);
    }

    #[test]
    fn stride_skips_windows() {
        let v = acgt(2);
        assert_eq!(
            v.tokenize(b"ACGTAC", 2),
            vec![v.token_to_id("AC"), v.token_to_id("GT"), v.token_to_id("AC")]
        );
    }

    #[test]
    fn lexicographic_ids_and_specials() {
        let v = acgt(4);
        assert_eq!(v.len(), 259);
        assert_eq!(v.token_to_id("AAAA"), 0);
        assert_eq!(v.token_to_id("TTTT"), 255);
        assert_eq!(v.id_to_token(255).unwrap(), "TTTT");
        assert_eq!(v.id_to_token(256).unwrap(), PAD);
        assert_eq!(v.id_to_token(257).unwrap(), MASK);
        assert_eq!(v.id_to_token(258).unwrap(), UNK);
        assert!(v.id_to_token(259).is_err());
        assert_eq!(v.token_to_id("ACGN"), v.unk());
        assert_eq!(v.token_to_id("ACG"), v.unk());
    }

    #[test]
    fn six_symbol_alphabet_gives_1296_kmers() {
        let v = KmerVocabulary::new(4, "ACGTN-").unwrap();
        assert_eq!(v.num_kmers(), 1296);
        assert_eq!(v.len(), 1299);
        let ids = v.tokenize(b"ACNT-", 1);
        assert!(ids.iter().all(|&i| !v.is_special(i)));
    }

    #[test]
    fn manifest_roundtrip() {
        let v = KmerVocabulary::new(3, "ACGT").unwrap();
        let back = KmerVocabulary::from_manifest(v.manifest().as_bytes()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.fingerprint(), back.fingerprint());
        assert_ne!(v.fingerprint(), acgt(4).fingerprint());
    }

    proptest! {
        #[test]
        fn token_count_is_n_minus_k_plus_one(seq in "[ACGTN]{0,60}", k in 1usize..7) {
            let v = acgt(k);
            let n = seq.len();
            prop_assert_eq!(v.tokenize(seq.as_bytes(), 1).len(), (n + 1).saturating_sub(k));
        }

        #[test]
        fn ids_decode_to_unique_kmers(id in 0u32..4096) {
            let v = acgt(6);
            let tok = v.id_to_token(id).unwrap();
            prop_assert_eq!(tok.len(), 6);
            prop_assert_eq!(v.token_to_id(&tok), id);
        }

        #[test]
        fn rolling_tokenizer_matches_direct_encoding(seq in "[ACGTN]{4,40}") {
            let v = acgt(4);
            let ids = v.tokenize(seq.as_bytes(), 1);
            for (j, id) in ids.iter().enumerate() {
                prop_assert_eq!(*id, v.token_to_id(&seq[j..j + 4]));
            }
        }
    }
}
