use alloc::boxed::Box;
use alloc::vec::Vec;

use super::forward::{mpc_embed, SharedLayers, SharedMergedLayer, SharedVanillaLayer};
use crate::error::{Error, Result};
use crate::merge::MergedModel;
use crate::mpc::{Category, Clock, CommLedger, Counters, MaskedTensor, Mpc, Party, SharedTensor};
use crate::nn::{check_length, one_hot, Matrix, ModelConfig, ModelWeights, QUAD_COEFFS};
use crate::nonlinear::NonlinearConfig;
use crate::ring::{FixedConfig, FixedTensor};

/// Which of the two techniques (embedding resending, merge modules) is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Vanilla,
    OnlyER,
    OnlyMM,
    ErMm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Vanilla, Variant::OnlyER, Variant::OnlyMM, Variant::ErMm];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "Vanilla",
            Variant::OnlyER => "OnlyER",
            Variant::OnlyMM => "OnlyMM",
            Variant::ErMm => "ER_MM",
        }
    }

    /// Case-insensitive; accepts `ER_MM`, `ER+MM` and `ermm`.
    pub fn parse(s: &str) -> Option<Variant> {
        let key: alloc::string::String =
            s.chars().filter(|c| c.is_ascii_alphanumeric()).map(|c| c.to_ascii_lowercase()).collect();
        match key.as_str() {
            "vanilla" => Some(Variant::Vanilla),
            "onlyer" | "er" => Some(Variant::OnlyER),
            "onlymm" | "mm" => Some(Variant::OnlyMM),
            "ermm" => Some(Variant::ErMm),
            _ => None,
        }
    }

    pub fn resends(self) -> bool {
        matches!(self, Variant::OnlyER | Variant::ErMm)
    }

    pub fn merged(self) -> bool {
        matches!(self, Variant::OnlyMM | Variant::ErMm)
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Plaintext model handed to the server at setup.
#[derive(Debug, Clone, Copy)]
pub enum SessionModel<'a> {
    Vanilla(&'a ModelWeights),
    Merged(&'a MergedModel),
}

impl<'a> From<&'a ModelWeights> for SessionModel<'a> {
    fn from(w: &'a ModelWeights) -> Self {
        SessionModel::Vanilla(w)
    }
}

impl<'a> From<&'a MergedModel> for SessionModel<'a> {
    fn from(m: &'a MergedModel) -> Self {
        SessionModel::Merged(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOptions {
    pub seed: u64,
    pub fixed: FixedConfig,
    /// The activation and its coefficients are taken from the model config.
    pub nonlinear: NonlinearConfig,
    /// ER_MM only: process one new row per step against the per-layer cache
    /// instead of re-running every block over the whole sequence.
    pub incremental: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self { seed: 0, fixed: FixedConfig::default(), nonlinear: NonlinearConfig::default(), incremental: true }
    }
}

/// Result of one encrypted generation.
#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub tokens: Vec<usize>,
    /// Cumulative session ledger after the run, setup included.
    pub ledger: CommLedger,
    /// Online traffic of each forward step; deferred sampling is not included.
    pub per_step: Vec<Counters>,
    /// Online traffic of the batched sampling pass (zero for per-step samplers).
    pub deferred_sampling: Counters,
    /// Last-position hidden state of every step, reconstructed off the
    /// ledger for inspection.
    pub hidden: Matrix,
}

/// Both parties' view of one model plus the protocol state.
pub struct EncryptedSession {
    mpc: Mpc,
    variant: Variant,
    config: ModelConfig,
    nl: NonlinearConfig,
    incremental: bool,
    embedding: SharedTensor,
    positional: SharedTensor,
    w_cls: MaskedTensor,
    layers: SharedLayers,
}

impl EncryptedSession {
    pub fn new<'a>(variant: Variant, model: impl Into<SessionModel<'a>>, opts: SessionOptions) -> Result<Self> {
        Self::build(variant, model.into(), opts, Mpc::new(opts.seed, opts.fixed))
    }

    pub fn with_clock<'a>(
        variant: Variant,
        model: impl Into<SessionModel<'a>>,
        opts: SessionOptions,
        clock: Box<dyn Clock>,
    ) -> Result<Self> {
        Self::build(variant, model.into(), opts, Mpc::with_clock(opts.seed, opts.fixed, clock))
    }

    /// The server shares every weight once and masks the ones that enter
    /// products; all of it is charged to [`Category::Other`].
    fn build(variant: Variant, model: SessionModel<'_>, opts: SessionOptions, mut mpc: Mpc) -> Result<Self> {
        let config = match (variant.merged(), model) {
            (false, SessionModel::Vanilla(w)) => {
                w.validate()?;
                w.config
            }
            (true, SessionModel::Merged(m)) => m.config,
            _ => {
                return Err(Error::Config(alloc::format!(
                    "variant {variant} needs a {} model",
                    if variant.merged() { "merged" } else { "plain" }
                )))
            }
        };
        let mut nl = opts.nonlinear;
        nl.validate()?;
        nl.activation = config.activation;
        nl.quad = QUAD_COEFFS;
        let fixed = opts.fixed;
        let mut share = |m: &Matrix| -> Result<SharedTensor> { Ok(mpc.share_input(&m.to_fixed(fixed)?, Party::Server)) };
        let (embedding, positional, w_cls) = match model {
            SessionModel::Vanilla(w) => (share(&w.embedding)?, share(&w.positional)?, share(&w.w_cls)?),
            SessionModel::Merged(m) => (share(&m.embedding)?, share(&m.positional)?, share(&m.w_cls)?),
        };
        let w_cls = mpc.prepare(&w_cls);
        let layers = match model {
            SessionModel::Vanilla(w) => SharedLayers::Vanilla(
                w.layers.iter().map(|lw| SharedVanillaLayer::setup(&mut mpc, lw)).collect::<Result<_>>()?,
            ),
            SessionModel::Merged(m) => SharedLayers::Merged(
                m.layers
                    .iter()
                    .map(|ml| SharedMergedLayer::setup(&mut mpc, ml, m.ffn_residual))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self { mpc, variant, config, nl, incremental: opts.incremental, embedding, positional, w_cls, layers })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mpc(&self) -> &Mpc {
        &self.mpc
    }

    pub fn mpc_mut(&mut self) -> &mut Mpc {
        &mut self.mpc
    }

    pub fn snapshot(&mut self) -> CommLedger {
        self.mpc.snapshot()
    }

    /// Client-side one-hot sharing of `tokens`, charged to [`Category::Other`].
    fn share_tokens(&mut self, tokens: &[usize]) -> Result<SharedTensor> {
        let oh = one_hot(tokens, self.config.vocab_size)?.to_fixed(self.mpc.config())?;
        Ok(self.mpc.in_category(Category::Other, |mpc| mpc.share_input(&oh, Party::Client)))
    }

    fn with_positions(&self, e: &SharedTensor, start: usize) -> Result<SharedTensor> {
        e.add(&self.positional.rows(start, start + e.dims2()?.0)?)
    }

    /// Runs every block over the full input `E'` (no cache).
    pub fn run_encrypted_forward(&mut self, e_prime: &SharedTensor) -> Result<SharedTensor> {
        let (n, d) = e_prime.dims2()?;
        if d != self.config.model_dim {
            return Err(crate::error::shape_err(alloc::format!("input width {d}, model width {}", self.config.model_dim)));
        }
        if n == 0 || n > self.config.max_len {
            return Err(Error::LengthOverflow { len: n, max: self.config.max_len });
        }
        self.layers.forward_full(&mut self.mpc, e_prime, &self.config, &self.nl)
    }

    /// Opens `hidden W_cls` to the client, who picks the argmax of each row.
    fn sample(&mut self, hidden: &SharedTensor) -> Result<Vec<usize>> {
        let w_cls = &self.w_cls;
        let logits = self.mpc.in_category(Category::Sampling, |mpc| -> Result<FixedTensor> {
            let l = mpc.matmul_op(hidden.into(), w_cls.into())?;
            Ok(mpc.open_to(&l, Party::Client))
        })?;
        let (rows, v) = logits.dims2()?;
        let vals = logits.to_f64();
        Ok((0..rows).map(|i| crate::nn::greedy_sample(&vals[i * v..(i + 1) * v])).collect())
    }

    fn online_total(&mut self) -> Counters {
        self.mpc.snapshot().total()
    }

    /// Generates `steps` tokens after `prefix` with the session's variant.
    pub fn run_encrypted_generation(&mut self, prefix: &[usize], steps: usize) -> Result<GenerationOutput> {
        check_length(prefix.len(), steps, self.config.max_len)?;
        let mut tokens = Vec::with_capacity(steps);
        let mut per_step = Vec::with_capacity(steps);
        let mut hidden_rows: Vec<SharedTensor> = Vec::with_capacity(steps);
        let mut one_hots = self.share_tokens(prefix)?;
        let mut deferred_sampling = Counters::default();

        if self.variant.resends() {
            let table = &self.embedding;
            let e = self.mpc.in_category(Category::Embed, |mpc| mpc_embed(mpc, &one_hots, table))?;
            let mut inputs = self.with_positions(&e, 0)?;
            let incremental = self.variant == Variant::ErMm && self.incremental;
            let mut cache = self.layers.empty_cache();
            for step in 0..steps {
                let before = self.online_total();
                let n = inputs.dims2()?.0;
                let h = if incremental {
                    let start = if step == 0 { 0 } else { n - 1 };
                    let new_rows = inputs.rows(start, n)?;
                    self.layers.forward_cached(&mut self.mpc, &new_rows, &mut cache, &self.config, &self.nl)?
                } else {
                    self.run_encrypted_forward(&inputs)?
                };
                let last = h.rows(h.dims2()?.0 - 1, h.dims2()?.0)?;
                if step + 1 < steps {
                    let next = self.with_positions(&last, n)?;
                    inputs = SharedTensor::vstack(&[&inputs, &next])?;
                }
                hidden_rows.push(last);
                per_step.push(self.online_total().since(&before));
            }
            if steps > 0 {
                let before = self.online_total();
                let refs: Vec<&SharedTensor> = hidden_rows.iter().collect();
                tokens = self.sample(&SharedTensor::vstack(&refs)?)?;
                deferred_sampling = self.online_total().since(&before);
            }
        } else {
            for step in 0..steps {
                let before = self.online_total();
                let table = &self.embedding;
                let e = self.mpc.in_category(Category::Embed, |mpc| mpc_embed(mpc, &one_hots, table))?;
                let h = self.run_encrypted_forward(&self.with_positions(&e, 0)?)?;
                let n = h.dims2()?.0;
                let last = h.rows(n - 1, n)?;
                let t = self.sample(&last)?[0];
                tokens.push(t);
                hidden_rows.push(last);
                if step + 1 < steps {
                    let new = self.share_tokens(&[t])?;
                    one_hots = SharedTensor::vstack(&[&one_hots, &new])?;
                }
                per_step.push(self.online_total().since(&before));
            }
        }
        let hidden = if hidden_rows.is_empty() {
            Matrix::zeros(0, self.config.model_dim)
        } else {
            let refs: Vec<&SharedTensor> = hidden_rows.iter().collect();
            Matrix::from_fixed(&crate::mpc::reconstruct(&SharedTensor::vstack(&refs)?)?)?
        };
        Ok(GenerationOutput { tokens, ledger: self.mpc.snapshot(), per_step, deferred_sampling, hidden })
    }
}
