//! Constructed models with known generation behaviour.

use alloc::vec::Vec;

use crate::error::Result;
use crate::merge::{calibrate_constant_attention, markov_corpus, ConstantAttention, MergedModel};
use crate::nn::{LayerWeights, Matrix, ModelConfig, ModelWeights};
use crate::nonlinear::ActivationKind;

/// Width, vocabulary and intermediate size of the echo fixture.
pub const ECHO_DIM: usize = 32;
const ECHO_THRESHOLD: f64 = 2.0;
const ECHO_GAIN: f64 = 4.0;

/// A model whose every block maps a token embedding to (a multiple of) the
/// embedding of a fixed successor token, so its output hidden state already
/// points at the next greedy token.
#[derive(Debug, Clone)]
pub struct EchoFixture {
    pub weights: ModelWeights,
    /// Per-block successor permutation.
    pub successor: Vec<usize>,
}

impl EchoFixture {
    /// Token generated after `t`: the successor applied once per block.
    pub fn next_token(&self, t: usize) -> usize {
        (0..self.weights.config.n_layers).fold(t, |t, _| self.successor[t])
    }

    /// Greedy continuation predicted from the construction alone.
    pub fn expected(&self, prefix: &[usize], steps: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(steps);
        let mut t = *prefix.last().expect("non-empty prefix");
        for _ in 0..steps {
            t = self.next_token(t);
            out.push(t);
        }
        out
    }

    pub fn constant_attention(&self, seed: u64) -> Result<ConstantAttention> {
        let c = &self.weights.config;
        calibrate_constant_attention(&self.weights, &markov_corpus(c.vocab_size, 4, c.max_len, seed))
    }

    pub fn merged(&self, seed: u64) -> Result<MergedModel> {
        MergedModel::compile(&self.weights, &self.constant_attention(seed)?)
    }
}

/// Zero-mean, unit-variance codes: `sqrt(d-1)` at position `t`, `-1/sqrt(d-1)` elsewhere.
pub fn echo_embedding(d: usize) -> Matrix {
    let a = libm::sqrt((d - 1) as f64);
    Matrix::from_fn(d, d, |t, j| if t == j { a } else { -1.0 / a })
}

/// Echo fixture: `V = d = d_I = 32`, two blocks and two heads, `N_max = 64`,
/// zero positional table and `eps = 0`.
///
/// Value paths are zero, so attention contributes nothing; `W_I = I` with
/// bias `-2` keeps only the coordinate of the current token, and `W_O` maps it
/// to a multiple of the successor's code. The classifier is the transposed
/// embedding table. Query and key weights are random.
pub fn echo_fixture(seed: u64) -> Result<EchoFixture> {
    let d = ECHO_DIM;
    let cfg = ModelConfig {
        vocab_size: d,
        model_dim: d,
        intermediate_dim: d,
        n_layers: 2,
        n_heads: 2,
        max_len: 64,
        activation: ActivationKind::Relu,
        ln_eps: 0.0,
    };
    let random = ModelWeights::random(cfg, seed)?;
    let emb = echo_embedding(d);
    let successor: Vec<usize> = (0..d).map(|t| (5 * t + 3) % d).collect();
    let peak = libm::sqrt((d - 1) as f64) - ECHO_THRESHOLD;
    let mut w_o = Matrix::zeros(d, d);
    for (t, &next) in successor.iter().enumerate() {
        for j in 0..d {
            w_o.set(t, j, ECHO_GAIN / peak * emb.get(next, j));
        }
    }
    let layers = random
        .layers
        .iter()
        .map(|r| {
            let mut l = LayerWeights::zeroed(&cfg);
            l.w_q = r.w_q.clone();
            l.w_k = r.w_k.clone();
            l.w_i = Matrix::identity(d);
            l.b_i = Matrix::filled(1, d, -ECHO_THRESHOLD);
            l.w_o = w_o.clone();
            l
        })
        .collect();
    let weights = ModelWeights {
        config: cfg,
        embedding: emb.clone(),
        positional: Matrix::zeros(cfg.max_len, d),
        layers,
        w_cls: emb.transpose(),
    };
    weights.validate()?;
    Ok(EchoFixture { weights, successor })
}

/// Random model whose final block always outputs `strength * e_0` and whose
/// classifier reads coordinate 0 into `token`'s logit, so greedy decoding
/// always emits `token`.
pub fn rigged_model(cfg: ModelConfig, seed: u64, token: usize, strength: f64) -> Result<ModelWeights> {
    let mut w = ModelWeights::random(cfg, seed)?;
    let d = cfg.model_dim;
    if let Some(last) = w.layers.last_mut() {
        last.gamma2 = Matrix::zeros(1, d);
        last.beta2 = Matrix::from_fn(1, d, |_, j| if j == 0 { strength } else { 0.0 });
    }
    w.w_cls = Matrix::zeros(d, cfg.vocab_size);
    w.w_cls.set(0, token, 1.0);
    w.validate()?;
    Ok(w)
}
