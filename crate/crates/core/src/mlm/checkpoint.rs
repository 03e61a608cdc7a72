use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Params, TransformerConfig, TransformerModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MG2VCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    num_layers: usize,
    num_heads: usize,
    model_dim: usize,
    ff_dim: usize,
    dropout: f64,
    max_tokens: usize,
    bidirectional: bool,
    init_std: f64,
    seed: u64,
    vocab_size: usize,
    vocab_fingerprint: u64,
    tensors: Vec<(String, Vec<usize>)>,
}

impl Header {
    fn config(&self) -> TransformerConfig {
        TransformerConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            model_dim: self.model_dim,
            ff_dim: self.ff_dim,
            dropout: self.dropout,
            max_tokens: self.max_tokens,
            bidirectional: self.bidirectional,
            init_std: self.init_std,
            seed: self.seed,
        }
    }
}

/// Layout: magic, `u32` version, `u64` header length, JSON header with the
/// configuration and tensor names/shapes, then every tensor as little-endian
/// `f64` in header order.
pub fn save_checkpoint<W: Write>(model: &TransformerModel, mut out: W) -> Result<()> {
    let c = model.config();
    let tensors = model.params.named_tensors();
    let header = Header {
        num_layers: c.num_layers,
        num_heads: c.num_heads,
        model_dim: c.model_dim,
        ff_dim: c.ff_dim,
        dropout: c.dropout,
        max_tokens: c.max_tokens,
        bidirectional: c.bidirectional,
        init_std: c.init_std,
        seed: c.seed,
        vocab_size: model.vocab_size(),
        vocab_fingerprint: model.vocab_fingerprint(),
        tensors: tensors.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, _, values) in tensors {
        let mut buf = Vec::with_capacity(values.len() * 8);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a checkpoint. When `expected` is given, its architecture must match
/// the stored one exactly.
pub fn load_checkpoint<R: Read>(mut input: R, expected: Option<&TransformerConfig>) -> Result<TransformerModel> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Incompatible("not a model checkpoint".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Incompatible(format!("checkpoint version {version}, expected {VERSION}")));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let config = header.config();
    config
        .validate()
        .map_err(|e| Error::Incompatible(format!("checkpoint holds an invalid configuration: {e}")))?;
    if let Some(exp) = expected {
        if !exp.same_architecture(&config) {
            return Err(Error::Incompatible(format!(
                "checkpoint architecture (layers {}, heads {}, dim {}, ff {}, max_tokens {}, bidirectional {}) \
                 does not match the configured one (layers {}, heads {}, dim {}, ff {}, max_tokens {}, bidirectional {})",
                config.num_layers,
                config.num_heads,
                config.model_dim,
                config.ff_dim,
                config.max_tokens,
                config.bidirectional,
                exp.num_layers,
                exp.num_heads,
                exp.model_dim,
                exp.ff_dim,
                exp.max_tokens,
                exp.bidirectional
            )));
        }
    }
    let mut params = Params::zeros(header.vocab_size, &config);
    let slots = params.named_slices_mut();
    if slots.len() != header.tensors.len() {
        return Err(Error::Incompatible("checkpoint tensor list does not match the architecture".into()));
    }
    for ((name, slot), (stored, shape)) in slots.into_iter().zip(&header.tensors) {
        if &name != stored || shape.iter().product::<usize>() != slot.len() {
            return Err(Error::Incompatible(format!("checkpoint tensor {stored} {shape:?} does not fit {name}")));
        }
        let mut raw = vec![0u8; slot.len() * 8];
        input.read_exact(&mut raw)?;
        for (dst, c) in slot.iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(c.try_into().expect("chunk of 8"));
        }
    }
    if !params.all_finite() {
        return Err(Error::Incompatible("checkpoint contains non-finite parameters".into()));
    }
    Ok(TransformerModel::from_params(config, header.vocab_size, header.vocab_fingerprint, params))
}
