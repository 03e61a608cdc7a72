use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::TransformerConfig;
use crate::error::{Error, Result};
use crate::kmer::TokenId;
use crate::table::EmbeddingTable;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors. Gradients use the same type.
///
/// `embedding` doubles as the output projection: logits are
/// `final_hidden . embedding^T + out_bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embedding: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Array1<f64>,
    pub lnf_bias: Array1<f64>,
    pub out_bias: Array1<f64>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2)
    };
}

impl LayerParams {
    fn zeros(d: usize, ff: usize) -> Self {
        LayerParams {
            ln1_gain: Array1::zeros(d),
            ln1_bias: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_gain: Array1::zeros(d),
            ln2_bias: Array1::zeros(d),
            w1: Array2::zeros((d, ff)),
            b1: Array1::zeros(ff),
            w2: Array2::zeros((ff, d)),
            b2: Array1::zeros(d),
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        macro_rules! push {
            ($($f:ident),*) => {$(
                let t = &self.$f;
                out.push((
                    format!("{prefix}.{}", stringify!($f)),
                    t.shape().to_vec(),
                    t.as_slice().expect("standard layout"),
                ));
            )*};
        }
        layer_fields!(push);
    }

    fn slices_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        macro_rules! push {
            ($($f:ident),*) => {$(
                out.push((
                    format!("{prefix}.{}", stringify!($f)),
                    self.$f.as_slice_mut().expect("standard layout"),
                ));
            )*};
        }
        layer_fields!(push);
    }
}

impl Params {
    pub fn zeros(vocab_size: usize, config: &TransformerConfig) -> Self {
        let d = config.model_dim;
        Params {
            embedding: Array2::zeros((vocab_size, d)),
            layers: (0..config.num_layers).map(|_| LayerParams::zeros(d, config.ff_dim)).collect(),
            lnf_gain: Array1::zeros(d),
            lnf_bias: Array1::zeros(d),
            out_bias: Array1::zeros(vocab_size),
        }
    }

    /// `(name, shape, values)` for every tensor, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = vec![(
            "embedding".to_string(),
            self.embedding.shape().to_vec(),
            self.embedding.as_slice().expect("standard layout"),
        )];
        for (i, l) in self.layers.iter().enumerate() {
            l.tensors(&format!("layer{i}"), &mut out);
        }
        for (name, t) in [("lnf_gain", &self.lnf_gain), ("lnf_bias", &self.lnf_bias), ("out_bias", &self.out_bias)] {
            out.push((name.to_string(), t.shape().to_vec(), t.as_slice().expect("standard layout")));
        }
        out
    }

    /// Mutable views of every tensor, same order as [`Params::named_tensors`].
    pub fn named_slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        out.push(("embedding".to_string(), self.embedding.as_slice_mut().expect("standard layout")));
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.slices_mut(&format!("layer{i}"), &mut out);
        }
        out.push(("lnf_gain".into(), self.lnf_gain.as_slice_mut().expect("standard layout")));
        out.push(("lnf_bias".into(), self.lnf_bias.as_slice_mut().expect("standard layout")));
        out.push(("out_bias".into(), self.out_bias.as_slice_mut().expect("standard layout")));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        let src = other.named_tensors();
        for ((_, dst), (_, _, s)) in self.named_slices_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += scale * v;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.named_slices_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.axis_iter_mut(Axis(0)).zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| v * rs);
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, rstd })
}

/// Returns `dx` and accumulates into `dgain`/`dbias`.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    dgain: &mut Array1<f64>,
    dbias: &mut Array1<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let dxhat = dy * gain;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / d;
        let mean_gx = g.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        let r = cache.rstd[i];
        for (j, v) in dx.row_mut(i).iter_mut().enumerate() {
            *v = r * (g[j] - mean_g - xh[j] * mean_gx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

fn sinusoidal_positions(max_tokens: usize, d: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((max_tokens, d));
    for pos in 0..max_tokens {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
    drop2: Option<Array2<f64>>,
}

struct Cache {
    ids: Vec<TokenId>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    hidden: Array2<f64>,
}

/// Output of an inference pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Final-layer hidden states, one row per token.
    pub hidden: Array2<f64>,
    /// Unnormalised scores over the vocabulary, one row per token.
    pub logits: Array2<f64>,
    /// Attention probabilities per layer and head (`tokens x tokens`).
    pub attention: Vec<Vec<Array2<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    config: TransformerConfig,
    vocab_size: usize,
    vocab_fingerprint: u64,
    pub params: Params,
    positions: Array2<f64>,
}

impl TransformerModel {
    /// Randomly initialised model: weights `N(0, init_std)`, layer-norm gains 1.
    pub fn new(config: TransformerConfig, vocab_size: usize, vocab_fingerprint: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std)
            .map_err(|e| Error::Config(format!("transformer: init_std: {e}")))?;
        let mut params = Params::zeros(vocab_size, &config);
        for (name, t) in params.named_slices_mut() {
            let leaf = name.rsplit('.').next().unwrap_or(&name);
            if leaf.ends_with("gain") {
                t.iter_mut().for_each(|v| *v = 1.0);
            } else if leaf == "embedding" || leaf.starts_with('w') {
                t.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
            }
        }
        Ok(Self::from_params(config, vocab_size, vocab_fingerprint, params))
    }

    pub(crate) fn from_params(config: TransformerConfig, vocab_size: usize, vocab_fingerprint: u64, params: Params) -> Self {
        TransformerModel {
            positions: sinusoidal_positions(config.max_tokens, config.model_dim),
            config,
            vocab_size,
            vocab_fingerprint,
            params,
        }
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_fingerprint(&self) -> u64 {
        self.vocab_fingerprint
    }

    /// Overwrite the token embedding table with `table`.
    pub fn init_embedding_from(&mut self, table: &EmbeddingTable) -> Result<()> {
        if table.dim() != self.config.model_dim || table.rows() != self.vocab_size {
            return Err(Error::Config(format!(
                "global embeddings are {}x{} but the transformer embedding is {}x{}",
                table.rows(),
                table.dim(),
                self.vocab_size,
                self.config.model_dim
            )));
        }
        self.params
            .embedding
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(table.as_slice());
        Ok(())
    }

    /// The token embedding table (the contextual k-mer mapping after training).
    pub fn embedding_table(&self) -> Result<EmbeddingTable> {
        EmbeddingTable::from_vec(
            self.vocab_size,
            self.config.model_dim,
            self.vocab_fingerprint,
            self.params.embedding.as_slice().expect("standard layout").to_vec(),
        )
    }

    fn check_input(&self, ids: &[TokenId]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Domain("transformer input is empty".into()));
        }
        if ids.len() > self.config.max_tokens {
            return Err(Error::TooLong {
                len: ids.len(),
                max: self.config.max_tokens,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::Domain(format!("token id {bad} outside vocabulary of {}", self.vocab_size)));
        }
        Ok(())
    }

    /// Inference pass (dropout disabled).
    pub fn forward(&self, ids: &[TokenId]) -> Result<ForwardOutput> {
        self.check_input(ids)?;
        let cache = self.run(ids, None);
        let logits = self.logits_for(&cache.hidden, None);
        let attention = cache.layers.iter().map(|l| l.probs.clone()).collect();
        Ok(ForwardOutput {
            hidden: cache.hidden,
            logits,
            attention,
        })
    }

    /// Final hidden states only.
    pub fn hidden_states(&self, ids: &[TokenId]) -> Result<Array2<f64>> {
        self.check_input(ids)?;
        Ok(self.run(ids, None).hidden)
    }

    fn logits_for(&self, hidden: &Array2<f64>, rows: Option<&[usize]>) -> Array2<f64> {
        let h = match rows {
            Some(rows) => hidden.select(Axis(0), rows),
            None => hidden.clone(),
        };
        h.dot(&self.params.embedding.t()) + &self.params.out_bias
    }

    fn run(&self, ids: &[TokenId], mut rng: Option<&mut ChaCha8Rng>) -> Cache {
        let cfg = &self.config;
        let (n, d, heads, dh) = (ids.len(), cfg.model_dim, cfg.num_heads, cfg.head_dim());
        let scale_in = (d as f64).sqrt();
        let mut x = self.params.embedding.select(Axis(0), &ids.iter().map(|&i| i as usize).collect::<Vec<_>>());
        x.mapv_inplace(|v| v * scale_in);
        x += &self.positions.slice(s![..n, ..]);

        let att_scale = 1.0 / (dh as f64).sqrt();
        let train = rng.is_some() && cfg.dropout > 0.0;
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for lp in &self.params.layers {
            let (a, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
            let q = a.dot(&lp.wq) + &lp.bq;
            let k = a.dot(&lp.wk) + &lp.bk;
            let v = a.dot(&lp.wv) + &lp.bv;
            let mut o = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let r = h * dh..(h + 1) * dh;
                let mut sc = q.slice(s![.., r.clone()]).dot(&k.slice(s![.., r.clone()]).t());
                for (i, mut row) in sc.axis_iter_mut(Axis(0)).enumerate() {
                    if !cfg.bidirectional {
                        row.slice_mut(s![i + 1..]).fill(f64::NEG_INFINITY);
                    }
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    row.mapv_inplace(|s| {
                        let e = ((s - max) * att_scale).exp();
                        sum += e;
                        e
                    });
                    row.mapv_inplace(|e| e / sum);
                }
                o.slice_mut(s![.., r.clone()]).assign(&sc.dot(&v.slice(s![.., r])));
                probs.push(sc);
            }
            let mut attn = o.dot(&lp.wo) + &lp.bo;
            let drop1 = if train {
                let m = dropout_mask((n, d), cfg.dropout, rng.as_deref_mut().expect("train mode"));
                attn *= &m;
                Some(m)
            } else {
                None
            };
            x += &attn;

            let (b, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
            let u = b.dot(&lp.w1) + &lp.b1;
            let g = u.mapv(gelu);
            let mut f = g.dot(&lp.w2) + &lp.b2;
            let drop2 = if train {
                let m = dropout_mask((n, d), cfg.dropout, rng.as_deref_mut().expect("train mode"));
                f *= &m;
                Some(m)
            } else {
                None
            };
            x += &f;
            layers.push(LayerCache { ln1, a, q, k, v, probs, o, drop1, ln2, b, u, g, drop2 });
        }
        let (hidden, lnf) = layer_norm(&x, &self.params.lnf_gain, &self.params.lnf_bias);
        Cache {
            ids: ids.to_vec(),
            layers,
            lnf,
            hidden,
        }
    }

    /// Backpropagate `dlogits` (rows aligned with `rows`) through the whole
    /// network, accumulating `scale * gradient` into `grads`.
    fn backward(&self, cache: &Cache, rows: &[usize], dlogits: &Array2<f64>, grads: &mut Params, scale: f64) {
        let cfg = &self.config;
        let (n, d, dh) = (cache.ids.len(), cfg.model_dim, cfg.head_dim());
        let dlogits = dlogits * scale;
        let h_sel = cache.hidden.select(Axis(0), rows);
        // tied output projection
        grads.embedding += &dlogits.t().dot(&h_sel);
        grads.out_bias += &dlogits.sum_axis(Axis(0));
        let dh_sel = dlogits.dot(&self.params.embedding);
        let mut dhidden = Array2::zeros((n, d));
        for (i, &r) in rows.iter().enumerate() {
            let mut row = dhidden.row_mut(r);
            row += &dh_sel.row(i);
        }
        let mut dx = layer_norm_backward(&dhidden, &cache.lnf, &self.params.lnf_gain, &mut grads.lnf_gain, &mut grads.lnf_bias);

        let att_scale = 1.0 / (dh as f64).sqrt();
        for (li, (lp, lc)) in self.params.layers.iter().zip(&cache.layers).enumerate().rev() {
            let gl = &mut grads.layers[li];
            // feed-forward block
            let mut df = dx.clone();
            if let Some(m) = &lc.drop2 {
                df *= m;
            }
            gl.w2 += &lc.g.t().dot(&df);
            gl.b2 += &df.sum_axis(Axis(0));
            let dg = df.dot(&lp.w2.t());
            let mut du = dg;
            du.zip_mut_with(&lc.u, |g, &u| *g *= gelu_grad(u));
            gl.w1 += &lc.b.t().dot(&du);
            gl.b1 += &du.sum_axis(Axis(0));
            let db = du.dot(&lp.w1.t());
            dx += &layer_norm_backward(&db, &lc.ln2, &lp.ln2_gain, &mut gl.ln2_gain, &mut gl.ln2_bias);

            // attention block
            let mut dattn = dx.clone();
            if let Some(m) = &lc.drop1 {
                dattn *= m;
            }
            gl.wo += &lc.o.t().dot(&dattn);
            gl.bo += &dattn.sum_axis(Axis(0));
            let d_o = dattn.dot(&lp.wo.t());
            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for (h, p) in lc.probs.iter().enumerate() {
                let r = h * dh..(h + 1) * dh;
                let d_oh = d_o.slice(s![.., r.clone()]);
                let dp = d_oh.dot(&lc.v.slice(s![.., r.clone()]).t());
                dv.slice_mut(s![.., r.clone()]).assign(&p.t().dot(&d_oh));
                let mut ds = dp;
                for (mut dsr, pr) in ds.axis_iter_mut(Axis(0)).zip(p.axis_iter(Axis(0))) {
                    let dot: f64 = dsr.iter().zip(pr.iter()).map(|(a, b)| a * b).sum();
                    dsr.zip_mut_with(&pr, |g, &pv| *g = pv * (*g - dot) * att_scale);
                }
                dq.slice_mut(s![.., r.clone()]).assign(&ds.dot(&lc.k.slice(s![.., r.clone()])));
                dk.slice_mut(s![.., r.clone()]).assign(&ds.t().dot(&lc.q.slice(s![.., r])));
            }
            gl.wq += &lc.a.t().dot(&dq);
            gl.bq += &dq.sum_axis(Axis(0));
            gl.wk += &lc.a.t().dot(&dk);
            gl.bk += &dk.sum_axis(Axis(0));
            gl.wv += &lc.a.t().dot(&dv);
            gl.bv += &dv.sum_axis(Axis(0));
            let da = dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
            dx += &layer_norm_backward(&da, &lc.ln1, &lp.ln1_gain, &mut gl.ln1_gain, &mut gl.ln1_bias);
        }

        let scale_in = (d as f64).sqrt();
        for (i, &id) in cache.ids.iter().enumerate() {
            let mut row = grads.embedding.row_mut(id as usize);
            row.scaled_add(scale_in, &dx.row(i));
        }
    }

    /// Masked-token loss for one window and `scale * gradient` accumulated
    /// into `grads`. Passing an RNG enables dropout.
    pub fn accumulate_mlm_grads(
        &self,
        input: &[TokenId],
        targets: &[TokenId],
        positions: &[usize],
        rng: Option<&mut ChaCha8Rng>,
        grads: &mut Params,
        scale: f64,
    ) -> Result<f64> {
        self.check_input(input)?;
        check_targets(targets, positions, input.len())?;
        let cache = self.run(input, rng);
        let logits = self.logits_for(&cache.hidden, Some(positions));
        let local: Vec<usize> = (0..positions.len()).collect();
        let (loss, dlogits) = mlm_loss_grad(&logits, targets, &local)?;
        self.backward(&cache, positions, &dlogits, grads, scale);
        Ok(loss)
    }

    /// Masked-token loss and its gradient with respect to every parameter
    /// (inference mode).
    pub fn mlm_loss_and_grads(&self, input: &[TokenId], targets: &[TokenId], positions: &[usize]) -> Result<(f64, Params)> {
        let mut grads = Params::zeros(self.vocab_size, &self.config);
        let loss = self.accumulate_mlm_grads(input, targets, positions, None, &mut grads, 1.0)?;
        Ok((loss, grads))
    }

    /// Masked-token loss without gradients (inference mode).
    pub fn masked_loss(&self, input: &[TokenId], targets: &[TokenId], positions: &[usize]) -> Result<f64> {
        self.check_input(input)?;
        check_targets(targets, positions, input.len())?;
        let cache = self.run(input, None);
        let logits = self.logits_for(&cache.hidden, Some(positions));
        let local: Vec<usize> = (0..positions.len()).collect();
        mlm_loss(&logits, targets, &local)
    }
}

fn check_targets(targets: &[TokenId], positions: &[usize], len: usize) -> Result<()> {
    if positions.is_empty() {
        return Err(Error::Domain("masked loss needs at least one masked position".into()));
    }
    if targets.len() != positions.len() || positions.iter().any(|&p| p >= len) {
        return Err(Error::Domain("masked targets and positions are inconsistent".into()));
    }
    Ok(())
}

fn log_softmax_at(row: ndarray::ArrayView1<f64>, target: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row[target] - lse
}

/// Mean negative log-likelihood of `targets[t]` at logit row `positions[t]`.
pub fn mlm_loss(logits: &Array2<f64>, targets: &[TokenId], positions: &[usize]) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::Domain("masked loss needs at least one masked position".into()));
    }
    if targets.len() != positions.len() {
        return Err(Error::Domain("targets and positions differ in length".into()));
    }
    let mut total = 0.0;
    for (&p, &t) in positions.iter().zip(targets) {
        if p >= logits.nrows() || t as usize >= logits.ncols() {
            return Err(Error::Domain(format!("masked position {p} / target {t} out of range")));
        }
        total -= log_softmax_at(logits.row(p), t as usize);
    }
    Ok(total / positions.len() as f64)
}

/// [`mlm_loss`] plus its gradient with respect to the logits.
pub fn mlm_loss_grad(logits: &Array2<f64>, targets: &[TokenId], positions: &[usize]) -> Result<(f64, Array2<f64>)> {
    let loss = mlm_loss(logits, targets, positions)?;
    let inv_t = 1.0 / positions.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    for (&p, &t) in positions.iter().zip(targets) {
        let row = logits.row(p);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let mut g = grad.row_mut(p);
        for (j, v) in row.iter().enumerate() {
            g[j] += inv_t * (v - max).exp() / sum;
        }
        g[t as usize] -= inv_t;
    }
    Ok((loss, grad))
}
