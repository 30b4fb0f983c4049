//! Weight folding into merge modules and the merged forward pass.

use alloc::vec::Vec;

use super::attention::{slice_constant_attention, ConstantAttention};
use crate::error::{shape_err, Error, Result};
use crate::nn::{layernorm_rows, LayerWeights, Matrix, ModelConfig, ModelWeights, SequenceModel};

/// `x * gamma + beta` row-wise; no statistics are computed.
pub fn approx_layernorm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    x.iter().zip(gamma).zip(beta).map(|((v, g), b)| v * g + b).collect()
}

fn approx_layernorm_rows(x: &Matrix, gamma: &Matrix, beta: &Matrix) -> Result<Matrix> {
    x.scale_cols(gamma.data())?.add_row(beta)
}

/// One folded transformer block.
///
/// `u = sum_h C_h h M_u[h] + h R + b_mu`, then `LN(Act(u) W_O + b_O)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedLayer {
    /// Per head `W_V,h W_d,h diag(gamma1) W_I`, each `d x d_I`.
    pub m_u: Vec<Matrix>,
    /// Shared residual path `diag(gamma1) W_I`.
    pub r: Matrix,
    pub b_mu: Matrix,
    pub w_o: Matrix,
    pub b_o: Matrix,
    pub gamma2: Matrix,
    pub beta2: Matrix,
    /// Per head `N_max x N_max` constant attention.
    pub c: Vec<Matrix>,
    /// Per head `W_V,h W_d,h diag(gamma1)`, `gamma1` and `gamma1 * b_d + beta1`,
    /// which rebuild `x_att`; only read when the FFN residual is switched on.
    pub m_x: Vec<Matrix>,
    pub gamma1: Matrix,
    pub b_x: Matrix,
}

/// Folds `W_V`, `W_d`, the approximate layer norm and `W_I` of one block.
pub fn merge_layer(lw: &LayerWeights, c: &[Matrix], cfg: &ModelConfig) -> Result<MergedLayer> {
    if c.len() != cfg.n_heads {
        return Err(shape_err(alloc::format!("{} attention maps for {} heads", c.len(), cfg.n_heads)));
    }
    let dk = cfg.head_dim();
    let gamma = lw.gamma1.data();
    let mut m_u = Vec::with_capacity(cfg.n_heads);
    let mut m_x = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let wv = LayerWeights::head_cols(&lw.w_v, h, dk)?;
        let wd = lw.w_d.row_block(h * dk, (h + 1) * dk)?;
        let folded = wv.matmul(&wd)?.scale_cols(gamma)?;
        m_u.push(folded.matmul(&lw.w_i)?);
        m_x.push(folded);
    }
    let r = lw.w_i.scale_rows(gamma)?;
    let b_x = lw.b_d.hadamard(&lw.gamma1)?.add(&lw.beta1)?;
    let b_mu = b_x.matmul(&lw.w_i)?.add(&lw.b_i)?;
    Ok(MergedLayer {
        m_u,
        r,
        b_mu,
        w_o: lw.w_o.clone(),
        b_o: lw.b_o.clone(),
        gamma2: lw.gamma2.clone(),
        beta2: lw.beta2.clone(),
        c: c.to_vec(),
        m_x,
        gamma1: lw.gamma1.clone(),
        b_x,
    })
}

/// Single-head transcription: `((W_V W_d + I) col-scaled by gamma) W_I` and
/// `(gamma * b_d) W_I + beta W_I + b_I`.
pub fn single_head_transcription(lw: &LayerWeights) -> Result<(Matrix, Matrix)> {
    let d = lw.w_v.rows();
    let inner = lw.w_v.matmul(&lw.w_d)?.add(&Matrix::identity(d))?;
    let m = inner.scale_cols(lw.gamma1.data())?.matmul(&lw.w_i)?;
    let b = lw
        .b_d
        .hadamard(&lw.gamma1)?
        .matmul(&lw.w_i)?
        .add(&lw.beta1.matmul(&lw.w_i)?)?
        .add(&lw.b_i)?;
    Ok((m, b))
}

fn sliced(ml: &MergedLayer, n: usize) -> Result<Vec<Matrix>> {
    ml.c.iter().map(|c| slice_constant_attention(c, n)).collect()
}

/// Merged block on `n <= N_max` rows.
pub fn merged_forward(h: &Matrix, ml: &MergedLayer, cfg: &ModelConfig, ffn_residual: bool) -> Result<Matrix> {
    let cs = sliced(ml, h.rows())?;
    let mut u = h.matmul(&ml.r)?.add_row(&ml.b_mu)?;
    for (c, m) in cs.iter().zip(&ml.m_u) {
        u = u.add(&c.matmul(h)?.matmul(m)?)?;
    }
    let mut pre = u.map(|v| cfg.activate(v)).matmul(&ml.w_o)?.add_row(&ml.b_o)?;
    if ffn_residual {
        let mut x = h.scale_cols(ml.gamma1.data())?.add_row(&ml.b_x)?;
        for (c, m) in cs.iter().zip(&ml.m_x) {
            x = x.add(&c.matmul(h)?.matmul(m)?)?;
        }
        pre = pre.add(&x)?;
    }
    Ok(layernorm_rows(&pre, &ml.gamma2, &ml.beta2, cfg.ln_eps))
}

/// Reference semantics for one merged block written without any folding:
/// constant attention on `V`, the approximate layer norm, then the FFN
/// without its residual and the true layer norm.
pub fn composed_reference(h: &Matrix, lw: &LayerWeights, c: &[Matrix], cfg: &ModelConfig) -> Result<Matrix> {
    let dk = cfg.head_dim();
    let n = h.rows();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for (hd, c) in c.iter().enumerate() {
        let v = h.matmul(&LayerWeights::head_cols(&lw.w_v, hd, dk)?)?;
        heads.push(slice_constant_attention(c, n)?.matmul(&v)?);
    }
    let refs: Vec<&Matrix> = heads.iter().collect();
    let pre = Matrix::hstack(&refs)?.matmul(&lw.w_d)?.add_row(&lw.b_d)?.add(h)?;
    let x_att = approx_layernorm_rows(&pre, &lw.gamma1, &lw.beta1)?;
    let inner = x_att.matmul(&lw.w_i)?.add_row(&lw.b_i)?.map(|v| cfg.activate(v));
    let out = inner.matmul(&lw.w_o)?.add_row(&lw.b_o)?;
    Ok(layernorm_rows(&out, &lw.gamma2, &lw.beta2, cfg.ln_eps))
}

/// Evaluates `f(f(f(X, A1, 1), A2, 1), B, 2)` and `f(f(f(X, A1, 1), B, 2), A2, 1)`
/// with `f(X, A, 1) = A^T X` and `f(X, B, 2) = X B`; returns their max-abs gap.
pub fn check_commutativity(x: &Matrix, a1: &Matrix, a2: &Matrix, b: &Matrix) -> Result<f64> {
    let (m, n) = x.shape();
    if a1.shape() != (m, m) || a2.shape() != (m, m) || b.shape() != (n, n) {
        return Err(shape_err("commutativity check needs square A (m x m) and B (n x n)"));
    }
    let f1 = |x: &Matrix, a: &Matrix| a.transpose().matmul(x);
    let f2 = |x: &Matrix, b: &Matrix| x.matmul(b);
    let left = f2(&f1(&f1(x, a1)?, a2)?, b)?;
    let right = f1(&f2(&f1(x, a1)?, b)?, a2)?;
    left.max_abs_diff(&right)
}

/// The whole model with every block merged.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedModel {
    pub config: ModelConfig,
    pub embedding: Matrix,
    pub positional: Matrix,
    pub layers: Vec<MergedLayer>,
    pub w_cls: Matrix,
    pub ffn_residual: bool,
}

impl MergedModel {
    pub fn compile(w: &ModelWeights, c: &ConstantAttention) -> Result<Self> {
        w.validate()?;
        if c.n_layers() != w.config.n_layers || c.max_len != w.config.max_len {
            return Err(shape_err("constant attention does not match the model"));
        }
        let layers = w
            .layers
            .iter()
            .zip(&c.maps)
            .map(|(lw, cl)| merge_layer(lw, cl, &w.config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: w.config,
            embedding: w.embedding.clone(),
            positional: w.positional.clone(),
            layers,
            w_cls: w.w_cls.clone(),
            ffn_residual: false,
        })
    }
}

/// Stacked merged blocks; never evaluates a softmax or exponential.
pub fn merged_model_forward(e_prime: &Matrix, m: &MergedModel) -> Result<Matrix> {
    if e_prime.rows() > m.config.max_len {
        return Err(Error::LengthOverflow { len: e_prime.rows(), max: m.config.max_len });
    }
    let mut h = e_prime.clone();
    for ml in &m.layers {
        h = merged_forward(&h, ml, &m.config, m.ffn_residual)?;
    }
    Ok(h)
}

impl SequenceModel for MergedModel {
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
        merged_model_forward(e_prime, self)
    }
}
