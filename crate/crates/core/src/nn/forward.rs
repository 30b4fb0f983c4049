//! Plaintext forward pass and greedy generation.

use alloc::vec::Vec;

use super::matrix::Matrix;
use super::model::{LayerWeights, ModelConfig, ModelWeights};
use crate::error::{Error, Result};

/// Rows of the embedding table for `tokens`.
pub fn embed_lookup(tokens: &[usize], table: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(0, table.cols());
    for &t in tokens {
        if t >= table.rows() {
            return Err(Error::TokenOutOfRange { id: t, vocab: table.rows() });
        }
        out.push_row(table.row(t))?;
    }
    Ok(out)
}

/// `N x V` one-hot rows; `one_hot(x) * table` equals [`embed_lookup`].
pub fn one_hot(tokens: &[usize], vocab: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(tokens.len(), vocab);
    for (i, &t) in tokens.iter().enumerate() {
        if t >= vocab {
            return Err(Error::TokenOutOfRange { id: t, vocab });
        }
        m.set(i, t, 1.0);
    }
    Ok(m)
}

/// `E'[i] = E[i] + P[i]` with absolute positions.
pub fn add_positional(e: &Matrix, p: &Matrix) -> Result<Matrix> {
    if e.rows() > p.rows() {
        return Err(Error::LengthOverflow { len: e.rows(), max: p.rows() });
    }
    e.add(&p.row_block(0, e.rows())?)
}

/// `(x - E[x]) / (sqrt(Var[x]) + eps) * gamma + beta` on one vector.
pub fn layernorm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = libm::sqrt(var) + eps;
    x.iter().zip(gamma).zip(beta).map(|((v, g), b)| (v - mean) / denom * g + b).collect()
}

/// Row-wise [`layernorm`] with `1 x d` gain and offset.
pub fn layernorm_rows(x: &Matrix, gamma: &Matrix, beta: &Matrix, eps: f64) -> Matrix {
    let mut out = Matrix::zeros(0, x.cols());
    for i in 0..x.rows() {
        out.push_row(&layernorm(x.row(i), gamma.data(), beta.data(), eps)).expect("width");
    }
    out
}

/// Per-head `(Q, K, V)`, each `N x d_k`.
pub fn attention_projection(h: &Matrix, lw: &LayerWeights, cfg: &ModelConfig) -> Result<Vec<(Matrix, Matrix, Matrix)>> {
    let dk = cfg.head_dim();
    let (q, k, v) = (h.matmul(&lw.w_q)?, h.matmul(&lw.w_k)?, h.matmul(&lw.w_v)?);
    (0..cfg.n_heads)
        .map(|hd| {
            Ok((
                q.col_block(hd * dk, (hd + 1) * dk)?,
                k.col_block(hd * dk, (hd + 1) * dk)?,
                v.col_block(hd * dk, (hd + 1) * dk)?,
            ))
        })
        .collect()
}

/// Row-wise softmax; with `causal`, entries right of the diagonal are excluded.
pub fn softmax_rows(x: &Matrix, causal: bool) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let visible = if causal { (i + 1).min(x.cols()) } else { x.cols() };
        let row = &x.row(i)[..visible];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| libm::exp(v - m)).collect();
        let s: f64 = e.iter().sum();
        for (j, v) in e.iter().enumerate() {
            out.set(i, j, v / s);
        }
    }
    out
}

/// Multi-head attention block: per-head `A = softmax(Q K^T / sqrt(d_k))`,
/// then `LN(Concat(A V) W_d + b_d + h)`. Returns the attention maps and `x_att`.
pub fn self_attention(h: &Matrix, lw: &LayerWeights, cfg: &ModelConfig, causal: bool) -> Result<(Vec<Matrix>, Matrix)> {
    let scale = 1.0 / libm::sqrt(cfg.head_dim() as f64);
    let mut maps = Vec::with_capacity(cfg.n_heads);
    let mut outs = Vec::with_capacity(cfg.n_heads);
    for (q, k, v) in attention_projection(h, lw, cfg)? {
        let a = softmax_rows(&q.matmul(&k.transpose())?.scale(scale), causal);
        outs.push(a.matmul(&v)?);
        maps.push(a);
    }
    let refs: Vec<&Matrix> = outs.iter().collect();
    let pre = Matrix::hstack(&refs)?.matmul(&lw.w_d)?.add_row(&lw.b_d)?.add(h)?;
    Ok((maps, layernorm_rows(&pre, &lw.gamma1, &lw.beta1, cfg.ln_eps)))
}

/// `LN(Act(x W_I + b_I) W_O + b_O + x)`.
pub fn feed_forward(x_att: &Matrix, lw: &LayerWeights, cfg: &ModelConfig) -> Result<Matrix> {
    let inner = x_att.matmul(&lw.w_i)?.add_row(&lw.b_i)?.map(|v| cfg.activate(v));
    let pre = inner.matmul(&lw.w_o)?.add_row(&lw.b_o)?.add(x_att)?;
    Ok(layernorm_rows(&pre, &lw.gamma2, &lw.beta2, cfg.ln_eps))
}

/// Attention maps collected during a forward pass, indexed `[layer][head]`.
pub type AttentionTrace = Vec<Vec<Matrix>>;

/// Causal forward pass returning the final hidden states and every attention map.
pub fn transformer_forward_traced(e_prime: &Matrix, w: &ModelWeights) -> Result<(Matrix, AttentionTrace)> {
    let mut h = e_prime.clone();
    let mut trace = Vec::with_capacity(w.layers.len());
    for lw in &w.layers {
        let (maps, x_att) = self_attention(&h, lw, &w.config, true)?;
        h = feed_forward(&x_att, lw, &w.config)?;
        trace.push(maps);
    }
    Ok((h, trace))
}

pub fn transformer_forward(e_prime: &Matrix, w: &ModelWeights) -> Result<Matrix> {
    Ok(transformer_forward_traced(e_prime, w)?.0)
}

/// `logits = h_last W_cls`.
pub fn lm_head(h_last: &[f64], w_cls: &Matrix) -> Result<Vec<f64>> {
    Ok(Matrix::row_vector(h_last).matmul(w_cls)?.data().to_vec())
}

/// Argmax with ties going to the lowest index.
pub fn greedy_sample(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Anything that maps `E'` to final hidden states and shares the embedding
/// tables and classifier layout of [`ModelWeights`].
pub trait SequenceModel {
    fn config(&self) -> &ModelConfig;
    fn embedding(&self) -> &Matrix;
    fn positional(&self) -> &Matrix;
    fn classifier(&self) -> &Matrix;
    fn forward(&self, e_prime: &Matrix) -> Result<Matrix>;
}

impl SequenceModel for ModelWeights {
    fn config(&self) -> &ModelConfig {
        &self.config
    }
    fn embedding(&self) -> &Matrix {
        &self.embedding
    }
    fn positional(&self) -> &Matrix {
        &self.positional
    }
    fn classifier(&self) -> &Matrix {
        &self.w_cls
    }
    fn forward(&self, e_prime: &Matrix) -> Result<Matrix> {
        transformer_forward(e_prime, self)
    }
}

pub(crate) fn check_length(prefix: usize, steps: usize, max: usize) -> Result<()> {
    if prefix == 0 {
        return Err(Error::Config("prefix must contain at least one token".into()));
    }
    if prefix + steps > max {
        return Err(Error::LengthOverflow { len: prefix + steps, max });
    }
    Ok(())
}

/// Auto-regressive greedy generation that re-embeds and re-runs the whole
/// sequence every step.
pub fn generate_vanilla<M: SequenceModel + ?Sized>(prefix: &[usize], steps: usize, model: &M) -> Result<Vec<usize>> {
    check_length(prefix.len(), steps, model.config().max_len)?;
    let mut seq = prefix.to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let e = embed_lookup(&seq, model.embedding())?;
        let h = model.forward(&add_positional(&e, model.positional())?)?;
        let tok = greedy_sample(&lm_head(h.row(h.rows() - 1), model.classifier())?);
        seq.push(tok);
        out.push(tok);
    }
    Ok(out)
}
