//! Embedding resending: generation that feeds each output hidden state back
//! as the next input embedding, plus the augmentation and loss evaluators
//! used to train for it.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{add_positional, check_length, embed_lookup, greedy_sample, lm_head, Matrix, SequenceModel};

/// Input embeddings of an ER run: the prefix rows followed by one resent
/// hidden state per generated step.
#[derive(Debug, Clone, PartialEq)]
pub struct ERState {
    embeddings: Matrix,
    prefix_len: usize,
    max_len: usize,
}

impl ERState {
    /// Looks up the prefix once.
    pub fn new<M: SequenceModel + ?Sized>(prefix: &[usize], model: &M) -> Result<Self> {
        let max_len = model.config().max_len;
        check_length(prefix.len(), 0, max_len)?;
        Ok(Self { embeddings: embed_lookup(prefix, model.embedding())?, prefix_len: prefix.len(), max_len })
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    /// Number of hidden states resent so far.
    pub fn steps(&self) -> usize {
        self.len() - self.prefix_len
    }

    /// Appends `h_new` as the next position's token embedding.
    pub fn resend_embedding(&mut self, h_new: &[f64]) -> Result<()> {
        if self.len() >= self.max_len {
            return Err(Error::LengthOverflow { len: self.len() + 1, max: self.max_len });
        }
        self.embeddings.push_row(h_new)
    }
}

/// ER generation with optional additive noise on input rows (`noise` row `i`
/// is added to input position `i`). Returns one last-position hidden state per step.
fn run_er<M: SequenceModel + ?Sized>(prefix: &[usize], steps: usize, model: &M, noise: Option<&Matrix>) -> Result<Matrix> {
    check_length(prefix.len(), steps, model.config().max_len)?;
    let mut state = ERState::new(prefix, model)?;
    let mut hidden = Matrix::zeros(0, model.config().model_dim);
    for _ in 0..steps {
        let mut e = add_positional(state.embeddings(), model.positional())?;
        if let Some(z) = noise {
            e = e.add(&z.row_block(0, e.rows())?)?;
        }
        let h = model.forward(&e)?;
        let last = h.row(h.rows() - 1).to_vec();
        hidden.push_row(&last)?;
        if state.len() < state.max_len {
            state.resend_embedding(&last)?;
        }
    }
    Ok(hidden)
}

/// Embeds the prefix once, then repeatedly runs the model and resends the
/// last hidden state. The classifier is never touched; sampling is left to
/// [`batch_sample`].
pub fn generate_er<M: SequenceModel + ?Sized>(prefix: &[usize], steps: usize, model: &M) -> Result<Matrix> {
    run_er(prefix, steps, model, None)
}

/// One batched classifier product over all steps, greedy per row, output cut
/// before the first `eos`.
pub fn batch_sample(hidden: &Matrix, w_cls: &Matrix, eos: Option<usize>) -> Result<Vec<usize>> {
    let logits = hidden.matmul(w_cls)?;
    let mut out = Vec::with_capacity(hidden.rows());
    for i in 0..logits.rows() {
        let t = greedy_sample(logits.row(i));
        if Some(t) == eos {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Mask probability and noise half-width of the embedding augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub p: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { p: 0.6, eps: 0.75, seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(alloc::format!("augmentation p={} eps={}", self.p, self.eps)));
        }
        Ok(())
    }
}

/// `e~ = m (e + n)` per element with `m ~ Bernoulli(1 - p)` and `n ~ U(-eps, eps)`.
pub fn augment_embedding<R: Rng + ?Sized>(e: &Matrix, cfg: &AugmentConfig, rng: &mut R) -> Result<Matrix> {
    cfg.validate()?;
    let mut out = e.clone();
    for v in out.data_mut() {
        let keep = !rng.random_bool(cfg.p);
        let n = if cfg.eps > 0.0 { rng.random_range(-cfg.eps..cfg.eps) } else { 0.0 };
        *v = if keep { *v + n } else { 0.0 };
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Mean of `1 - cos(h_i, e_i)` over row pairs.
pub fn cosine_alignment_loss(h: &Matrix, e_next: &Matrix) -> Result<f64> {
    if h.shape() != e_next.shape() || h.rows() == 0 {
        return Err(crate::error::shape_err(alloc::format!("{:?} vs {:?}", h.shape(), e_next.shape())));
    }
    let mut total = 0.0;
    for i in 0..h.rows() {
        let (a, b) = (h.row(i), e_next.row(i));
        let (na, nb) = (norm(a), norm(b));
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Degenerate(alloc::format!("zero-norm row {i}")));
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        total += 1.0 - (dot / (na * nb)).clamp(-1.0, 1.0);
    }
    Ok(total / h.rows() as f64)
}

fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(logits.iter().map(|v| libm::exp(v - m)).sum::<f64>());
    logits[target] - lse
}

/// Next-token cross-entropy through the model on augmented token embeddings,
/// averaged over every predicted position of every sequence.
pub fn ce_loss_noised<M: SequenceModel + ?Sized>(model: &M, sequences: &[Vec<usize>], cfg: &AugmentConfig) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in sequences {
        if seq.len() < 2 {
            continue;
        }
        let inputs = &seq[..seq.len() - 1];
        let e = augment_embedding(&embed_lookup(inputs, model.embedding())?, cfg, &mut rng)?;
        let h = model.forward(&add_positional(&e, model.positional())?)?;
        let logits = h.matmul(model.classifier())?;
        for (t, &target) in seq[1..].iter().enumerate() {
            total -= log_softmax_at(logits.row(t), target);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("no sequence has a next-token target".into()));
    }
    Ok(total / count as f64)
}

/// Default weight of the alignment term.
pub const DEFAULT_LAMBDA: f64 = 0.75;

/// `lambda * l_c + (1 - lambda) * l_ce`.
pub fn combined_loss(l_c: f64, l_ce: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(alloc::format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(lambda * l_c + (1.0 - lambda) * l_ce)
}

/// Generation strategies compared by the noise sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Vanilla,
    Er,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Vanilla => "vanilla",
            SweepMode::Er => "er",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: String,
    pub target_mse: f64,
    pub measured_mse: f64,
    pub agreement_rate: f64,
    pub seq_len: usize,
    pub seed: u64,
}

/// Zero-mean Gaussian noise on the first `rows` rows, rescaled so its mean
/// square is exactly `mse`.
pub fn scaled_noise<R: Rng + ?Sized>(rows: usize, cols: usize, mse: f64, rng: &mut R) -> Matrix {
    let mut z: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    let mean = z.iter().sum::<f64>() / z.len().max(1) as f64;
    z.iter_mut().for_each(|v| *v -= mean);
    let ms = z.iter().map(|v| v * v).sum::<f64>() / z.len().max(1) as f64;
    let k = if ms > 0.0 { libm::sqrt(mse / ms) } else { 0.0 };
    Matrix::new(rows, cols, z.into_iter().map(|v| v * k).collect()).expect("sized")
}

fn run_vanilla_noised<M: SequenceModel + ?Sized>(prefix: &[usize], steps: usize, model: &M, noise: &Matrix) -> Result<Vec<usize>> {
    check_length(prefix.len(), steps, model.config().max_len)?;
    let mut seq = prefix.to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let e = add_positional(&embed_lookup(&seq, model.embedding())?, model.positional())?;
        let h = model.forward(&e.add(&noise.row_block(0, e.rows())?)?)?;
        let t = greedy_sample(&lm_head(h.row(h.rows() - 1), model.classifier())?);
        seq.push(t);
        out.push(t);
    }
    Ok(out)
}

fn agreement(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// For each target MSE, perturbs every input row of both generation modes
/// with the same scaled noise and reports token agreement against the
/// noiseless run of that mode.
pub fn noise_robustness_sweep<M: SequenceModel + ?Sized>(
    model: &M,
    mse_levels: &[f64],
    prefixes: &[Vec<usize>],
    steps: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let d = model.config().model_dim;
    let mut rows = Vec::new();
    for mode in [SweepMode::Vanilla, SweepMode::Er] {
        for (li, &mse) in mse_levels.iter().enumerate() {
            if !(mse >= 0.0 && mse.is_finite()) {
                return Err(Error::Config(alloc::format!("target MSE {mse}")));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ ((li as u64) << 32));
            let (mut agree, mut sq, mut n_el) = (0.0, 0.0, 0usize);
            let mut seq_len = 0;
            for p in prefixes {
                let used = p.len() + steps.saturating_sub(1);
                seq_len = p.len() + steps;
                let mut z = scaled_noise(used, d, mse, &mut rng);
                sq += z.data().iter().map(|v| v * v).sum::<f64>();
                n_el += z.data().len();
                z = Matrix::vstack(&[&z, &Matrix::zeros(model.config().max_len - used, d)])?;
                let zero = Matrix::zeros(model.config().max_len, d);
                let (clean, noisy) = match mode {
                    SweepMode::Vanilla => {
                        (run_vanilla_noised(p, steps, model, &zero)?, run_vanilla_noised(p, steps, model, &z)?)
                    }
                    SweepMode::Er => {
                        let c = batch_sample(&run_er(p, steps, model, None)?, model.classifier(), None)?;
                        let n = batch_sample(&run_er(p, steps, model, Some(&z))?, model.classifier(), None)?;
                        (c, n)
                    }
                };
                agree += agreement(&clean, &noisy);
            }
            rows.push(SweepRow {
                mode: String::from(mode.name()),
                target_mse: mse,
                measured_mse: if n_el == 0 { 0.0 } else { sq / n_el as f64 },
                agreement_rate: agree / prefixes.len().max(1) as f64,
                seq_len,
                seed,
            });
        }
    }
    Ok(rows)
}
