//! Model configuration and parameters.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::matrix::Matrix;
use crate::error::{shape_err, Error, Result};
use crate::nonlinear::ActivationKind;

/// Coefficients of the quadratic activation, `a x^2 + b x + c`.
pub const QUAD_COEFFS: [f64; 3] = [0.125, 0.5, 0.25];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub intermediate_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_len: usize,
    pub activation: ActivationKind,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            model_dim: 32,
            intermediate_dim: 64,
            n_layers: 2,
            n_heads: 2,
            max_len: 64,
            activation: ActivationKind::Relu,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.vocab_size == 0 || self.model_dim == 0 || self.n_heads == 0 {
            return bad("vocabulary, width and head count must be positive");
        }
        if !self.model_dim.is_multiple_of(self.n_heads) {
            return bad("model_dim must be divisible by n_heads");
        }
        if self.intermediate_dim < self.model_dim {
            return bad("intermediate_dim must be at least model_dim");
        }
        if self.max_len < 2 {
            return bad("max_len must be at least 2");
        }
        if !(self.ln_eps >= 0.0 && self.ln_eps.is_finite()) {
            return bad("ln_eps must be finite and non-negative");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.n_heads
    }

    pub fn activate(&self, x: f64) -> f64 {
        self.activation.eval(x, QUAD_COEFFS)
    }
}

/// Parameters of one transformer block. Vectors are stored as `1 x n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_d: Matrix,
    pub b_d: Matrix,
    pub gamma1: Matrix,
    pub beta1: Matrix,
    pub w_i: Matrix,
    pub b_i: Matrix,
    pub w_o: Matrix,
    pub b_o: Matrix,
    pub gamma2: Matrix,
    pub beta2: Matrix,
}

impl LayerWeights {
    /// Zero projections, unit gains.
    pub fn zeroed(cfg: &ModelConfig) -> Self {
        let (d, di) = (cfg.model_dim, cfg.intermediate_dim);
        Self {
            w_q: Matrix::zeros(d, d),
            w_k: Matrix::zeros(d, d),
            w_v: Matrix::zeros(d, d),
            w_d: Matrix::zeros(d, d),
            b_d: Matrix::zeros(1, d),
            gamma1: Matrix::filled(1, d, 1.0),
            beta1: Matrix::zeros(1, d),
            w_i: Matrix::zeros(d, di),
            b_i: Matrix::zeros(1, di),
            w_o: Matrix::zeros(di, d),
            b_o: Matrix::zeros(1, d),
            gamma2: Matrix::filled(1, d, 1.0),
            beta2: Matrix::zeros(1, d),
        }
    }

    pub const NAMES: [&'static str; 13] =
        ["w_q", "w_k", "w_v", "w_d", "b_d", "gamma1", "beta1", "w_i", "b_i", "w_o", "b_o", "gamma2", "beta2"];

    pub fn tensors(&self) -> [&Matrix; 13] {
        [
            &self.w_q, &self.w_k, &self.w_v, &self.w_d, &self.b_d, &self.gamma1, &self.beta1, &self.w_i, &self.b_i,
            &self.w_o, &self.b_o, &self.gamma2, &self.beta2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Matrix; 13] {
        [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_d,
            &mut self.b_d,
            &mut self.gamma1,
            &mut self.beta1,
            &mut self.w_i,
            &mut self.b_i,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.gamma2,
            &mut self.beta2,
        ]
    }

    fn expected_shapes(cfg: &ModelConfig) -> [(usize, usize); 13] {
        let (d, di) = (cfg.model_dim, cfg.intermediate_dim);
        [(d, d), (d, d), (d, d), (d, d), (1, d), (1, d), (1, d), (d, di), (1, di), (di, d), (1, d), (1, d), (1, d)]
    }

    /// Columns of `w` belonging to head `h`.
    pub fn head_cols(w: &Matrix, h: usize, head_dim: usize) -> Result<Matrix> {
        w.col_block(h * head_dim, (h + 1) * head_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub embedding: Matrix,
    pub positional: Matrix,
    pub layers: Vec<LayerWeights>,
    pub w_cls: Matrix,
}

impl ModelWeights {
    /// Gaussian weights with standard deviation 0.08; unit gains, zero offsets and biases.
    pub fn random(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.08).expect("valid std");
        let mut gauss = |r: usize, c: usize| {
            let data: Vec<f64> = (0..r * c).map(|_| normal.sample(&mut rng)).collect();
            Matrix::new(r, c, data).expect("sized")
        };
        let (v, d, di) = (cfg.vocab_size, cfg.model_dim, cfg.intermediate_dim);
        let embedding = gauss(v, d);
        let positional = gauss(cfg.max_len, d);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for _ in 0..cfg.n_layers {
            let mut l = LayerWeights::zeroed(&cfg);
            l.w_q = gauss(d, d);
            l.w_k = gauss(d, d);
            l.w_v = gauss(d, d);
            l.w_d = gauss(d, d);
            l.w_i = gauss(d, di);
            l.w_o = gauss(di, d);
            layers.push(l);
        }
        let w_cls = gauss(d, v);
        Ok(Self { config: cfg, embedding, positional, layers, w_cls })
    }

    /// Checks every tensor against the configuration.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let check = |name: &str, m: &Matrix, shape: (usize, usize)| -> Result<()> {
            if m.shape() != shape {
                return Err(shape_err(alloc::format!("{name}: {:?}, expected {shape:?}", m.shape())));
            }
            if !m.is_finite() {
                return Err(Error::Degenerate(alloc::format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        check("embedding", &self.embedding, (c.vocab_size, c.model_dim))?;
        check("positional", &self.positional, (c.max_len, c.model_dim))?;
        check("w_cls", &self.w_cls, (c.model_dim, c.vocab_size))?;
        if self.layers.len() != c.n_layers {
            return Err(shape_err(alloc::format!("{} layers, expected {}", self.layers.len(), c.n_layers)));
        }
        let shapes = LayerWeights::expected_shapes(c);
        for l in &self.layers {
            for ((name, m), s) in LayerWeights::NAMES.iter().zip(l.tensors()).zip(shapes) {
                check(name, m, s)?;
            }
        }
        Ok(())
    }

    /// All tensors with stable names, in file order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = alloc::vec![
            (String::from("embedding"), &self.embedding),
            (String::from("positional"), &self.positional),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (name, m) in LayerWeights::NAMES.iter().zip(l.tensors()) {
                out.push((alloc::format!("layer{i}.{name}"), m));
            }
        }
        out.push((String::from("w_cls"), &self.w_cls));
        out
    }

    /// Rebuilds weights from named tensors; unknown names are ignored.
    pub fn from_named<'a>(config: ModelConfig, mut lookup: impl FnMut(&str) -> Option<&'a Matrix>) -> Result<Self> {
        let mut get = |name: &str| lookup(name).cloned().ok_or_else(|| shape_err(alloc::format!("missing tensor {name}")));
        let embedding = get("embedding")?;
        let positional = get("positional")?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let mut l = LayerWeights::zeroed(&config);
            for (name, slot) in LayerWeights::NAMES.iter().zip(l.tensors_mut()) {
                *slot = get(&alloc::format!("layer{i}.{name}"))?;
            }
            layers.push(l);
        }
        let w_cls = get("w_cls")?;
        let w = Self { config, embedding, positional, layers, w_cls };
        w.validate()?;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_init_is_seeded_and_valid() {
        let a = ModelWeights::random(ModelConfig::default(), 5).unwrap();
        let b = ModelWeights::random(ModelConfig::default(), 5).unwrap();
        let c = ModelWeights::random(ModelConfig::default(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
        let n = a.embedding.data().len() as f64;
        let var = a.embedding.data().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((libm::sqrt(var) - 0.08).abs() < 0.005);
    }

    #[test]
    fn config_checks() {
        let bad = ModelConfig { model_dim: 30, n_heads: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { intermediate_dim: 8, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { max_len: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn named_round_trip() {
        let cfg = ModelConfig { vocab_size: 10, model_dim: 4, intermediate_dim: 8, max_len: 6, ..Default::default() };
        let a = ModelWeights::random(cfg, 1).unwrap();
        let named = a.named_tensors();
        let b = ModelWeights::from_named(cfg, |n| named.iter().find(|(k, _)| k == n).map(|(_, m)| *m)).unwrap();
        assert_eq!(a, b);
    }
}
