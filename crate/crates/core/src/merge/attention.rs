//! Constant attention: calibration by averaging, slicing to shorter lengths,
//! and the synthetic calibration corpus.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::{add_positional, embed_lookup, transformer_forward_traced, Matrix, ModelWeights};

/// Calibrated `N_max x N_max` attention matrices indexed `[layer][head]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantAttention {
    pub max_len: usize,
    pub maps: Vec<Vec<Matrix>>,
}

impl ConstantAttention {
    pub fn n_layers(&self) -> usize {
        self.maps.len()
    }

    pub fn n_heads(&self) -> usize {
        self.maps.first().map_or(0, Vec::len)
    }

    /// Largest violation of causality or row-stochasticity over all maps.
    pub fn max_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in self.maps.iter().flatten() {
            for i in 0..c.rows() {
                let row = c.row(i);
                worst = worst.max((row[..=i].iter().sum::<f64>() - 1.0).abs());
                for &v in &row[i + 1..] {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }
}

fn normalize_rows(c: &Matrix) -> Matrix {
    let mut out = c.clone();
    for i in 0..c.rows() {
        let s: f64 = c.row(i).iter().sum();
        if s > 0.0 {
            for j in 0..c.cols() {
                out.set(i, j, c.get(i, j) / s);
            }
        }
    }
    out
}

/// Truncates or right-pads with `pad` to exactly `len` tokens.
pub fn pad_to(seq: &[usize], len: usize, pad: usize) -> Vec<usize> {
    let mut s: Vec<usize> = seq.iter().copied().take(len).collect();
    s.resize(len, pad);
    s
}

/// Averages the post-softmax attention of every calibration sequence
/// (padded with token 0 or truncated to `N_max`) and re-normalises each row.
pub fn calibrate_constant_attention(model: &ModelWeights, calib: &[Vec<usize>]) -> Result<ConstantAttention> {
    if calib.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let n = model.config.max_len;
    let mut sums: Option<Vec<Vec<Matrix>>> = None;
    for seq in calib {
        let toks = pad_to(seq, n, 0);
        let e = add_positional(&embed_lookup(&toks, &model.embedding)?, &model.positional)?;
        let (_, trace) = transformer_forward_traced(&e, model)?;
        sums = Some(match sums {
            None => trace,
            Some(acc) => acc
                .iter()
                .zip(&trace)
                .map(|(a, t)| a.iter().zip(t).map(|(x, y)| x.add(y)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
        });
    }
    let k = 1.0 / calib.len() as f64;
    let maps = sums
        .expect("non-empty")
        .iter()
        .map(|layer| layer.iter().map(|c| normalize_rows(&c.scale(k))).collect())
        .collect();
    Ok(ConstantAttention { max_len: n, maps })
}

/// Leading `len x len` block with rows re-normalised to sum to one.
pub fn slice_constant_attention(c: &Matrix, len: usize) -> Result<Matrix> {
    if len > c.rows() {
        return Err(Error::LengthOverflow { len, max: c.rows() });
    }
    Ok(normalize_rows(&c.block((0, len), (0, len))?))
}

/// Seeded order-1 Markov corpus: each token has four successors with random
/// weights.
pub fn markov_corpus(vocab: usize, count: usize, len: usize, seed: u64) -> Vec<Vec<usize>> {
    const BRANCH: usize = 4;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let table: Vec<[(usize, f64); BRANCH]> = (0..vocab)
        .map(|_| core::array::from_fn(|_| (rng.random_range(0..vocab), rng.random_range(0.05..1.0))))
        .collect();
    (0..count)
        .map(|_| {
            let mut t = rng.random_range(0..vocab);
            let mut seq = Vec::with_capacity(len);
            for _ in 0..len {
                seq.push(t);
                let row = &table[t];
                let total: f64 = row.iter().map(|p| p.1).sum();
                let mut u = rng.random_range(0.0..total);
                t = row[BRANCH - 1].0;
                for &(next, w) in row {
                    if u < w {
                        t = next;
                        break;
                    }
                    u -= w;
                }
            }
            seq
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;

    fn model() -> ModelWeights {
        let cfg = ModelConfig { vocab_size: 16, model_dim: 8, intermediate_dim: 8, max_len: 6, ..Default::default() };
        ModelWeights::random(cfg, 3).unwrap()
    }

    fn trace_of(m: &ModelWeights, seq: &[usize]) -> Vec<Vec<Matrix>> {
        let e = add_positional(&embed_lookup(seq, &m.embedding).unwrap(), &m.positional).unwrap();
        transformer_forward_traced(&e, m).unwrap().1
    }

    #[test]
    fn single_sample_is_its_attention() {
        let m = model();
        let seq = alloc::vec![1, 5, 2, 2, 9, 0];
        let c = calibrate_constant_attention(&m, core::slice::from_ref(&seq)).unwrap();
        let t = trace_of(&m, &seq);
        for (a, b) in c.maps.iter().flatten().zip(t.iter().flatten()) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-15);
        }
        let c3 = calibrate_constant_attention(&m, &[seq.clone(), seq.clone(), seq]).unwrap();
        for (a, b) in c.maps.iter().flatten().zip(c3.maps.iter().flatten()) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-15);
        }
    }

    #[test]
    fn two_sample_average() {
        let m = model();
        let (s1, s2) = (alloc::vec![1, 2, 3, 4, 5, 6], alloc::vec![7, 7, 0, 3, 3, 1]);
        let c = calibrate_constant_attention(&m, &[s1.clone(), s2.clone()]).unwrap();
        let (t1, t2) = (trace_of(&m, &s1), trace_of(&m, &s2));
        for l in 0..2 {
            for h in 0..2 {
                for i in 0..6 {
                    for j in 0..6 {
                        let want = 0.5 * (t1[l][h].get(i, j) + t2[l][h].get(i, j));
                        assert!((c.maps[l][h].get(i, j) - want).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(c.max_violation() < 1e-9);
    }

    #[test]
    fn empty_calibration_rejected() {
        assert_eq!(calibrate_constant_attention(&model(), &[]), Err(Error::EmptyCalibration));
    }

    #[test]
    fn short_sequences_are_padded() {
        let m = model();
        let a = calibrate_constant_attention(&m, &[alloc::vec![3, 1]]).unwrap();
        let b = calibrate_constant_attention(&m, &[alloc::vec![3, 1, 0, 0, 0, 0, 4, 4]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slicing() {
        let m = model();
        let c = calibrate_constant_attention(&m, &markov_corpus(16, 5, 6, 1)).unwrap();
        let full = &c.maps[0][0];
        assert!(slice_constant_attention(full, 6).unwrap().max_abs_diff(full).unwrap() < 1e-15);
        assert_eq!(slice_constant_attention(full, 1).unwrap(), Matrix::identity(1));
        for n in 1..=6 {
            let s = slice_constant_attention(full, n).unwrap();
            for i in 0..n {
                assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(s.row(i)[i + 1..].iter().all(|&v| v == 0.0));
            }
        }
        assert!(slice_constant_attention(full, 7).is_err());
    }

    #[test]
    fn corpus_is_seeded() {
        let a = markov_corpus(20, 3, 10, 5);
        assert_eq!(a, markov_corpus(20, 3, 10, 5));
        assert_ne!(a, markov_corpus(20, 3, 10, 6));
        assert!(a.iter().flatten().all(|&t| t < 20));
    }
}
