//! Shared weights and the private block computations.

use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::merge::MergedLayer;
use crate::mpc::{mul_public_scalar, Category, MaskedTensor, Mpc, Operand, Party, ProductKind, SharedTensor};
use crate::nn::{LayerWeights, Matrix, ModelConfig};
use crate::nonlinear::{mpc_activation, mpc_layernorm, mpc_softmax, NonlinearConfig};

/// Private embedding lookup `onehot(tokens) E_table`, charged to
/// [`Category::Embed`]. Both operands are opened masked, so the traffic is
/// `16 (N V + V d)` bytes whichever tokens were queried.
pub fn mpc_embed(mpc: &mut Mpc, one_hot: &SharedTensor, table: &SharedTensor) -> Result<SharedTensor> {
    let (_, v) = one_hot.dims2()?;
    let (tv, _) = table.dims2()?;
    if v != tv {
        return Err(shape_err(alloc::format!("one-hot width {v} vs table of {tv} rows")));
    }
    mpc.in_category(Category::Embed, |mpc| mpc.matmul(one_hot, table))
}

fn share_server(mpc: &mut Mpc, m: &Matrix) -> Result<SharedTensor> {
    let t = m.to_fixed(mpc.config())?;
    Ok(mpc.share_input(&t, Party::Server))
}

fn share_masked(mpc: &mut Mpc, m: &Matrix) -> Result<MaskedTensor> {
    let s = share_server(mpc, m)?;
    Ok(mpc.prepare(&s))
}

fn add_bias(x: &SharedTensor, b: &SharedTensor) -> Result<SharedTensor> {
    x.add(&b.broadcast_rows(x.dims2()?.0)?)
}

fn product(mpc: &mut Mpc, x: Operand<'_>, y: Operand<'_>) -> Result<SharedTensor> {
    mpc.product(ProductKind::MatMul, x, y)
}

pub(crate) struct SharedVanillaLayer {
    w_q: MaskedTensor,
    w_k: MaskedTensor,
    w_v: MaskedTensor,
    w_d: MaskedTensor,
    b_d: SharedTensor,
    gamma1: MaskedTensor,
    beta1: SharedTensor,
    w_i: MaskedTensor,
    b_i: SharedTensor,
    w_o: MaskedTensor,
    b_o: SharedTensor,
    gamma2: MaskedTensor,
    beta2: SharedTensor,
}

impl SharedVanillaLayer {
    pub(crate) fn setup(mpc: &mut Mpc, lw: &LayerWeights) -> Result<Self> {
        Ok(Self {
            w_q: share_masked(mpc, &lw.w_q)?,
            w_k: share_masked(mpc, &lw.w_k)?,
            w_v: share_masked(mpc, &lw.w_v)?,
            w_d: share_masked(mpc, &lw.w_d)?,
            b_d: share_server(mpc, &lw.b_d)?,
            gamma1: share_masked(mpc, &lw.gamma1)?,
            beta1: share_server(mpc, &lw.beta1)?,
            w_i: share_masked(mpc, &lw.w_i)?,
            b_i: share_server(mpc, &lw.b_i)?,
            w_o: share_masked(mpc, &lw.w_o)?,
            b_o: share_server(mpc, &lw.b_o)?,
            gamma2: share_masked(mpc, &lw.gamma2)?,
            beta2: share_server(mpc, &lw.beta2)?,
        })
    }

    /// Causal softmax attention block followed by the feed-forward block.
    fn forward(&self, mpc: &mut Mpc, h: &SharedTensor, cfg: &ModelConfig, nl: &NonlinearConfig) -> Result<SharedTensor> {
        let dk = cfg.head_dim();
        let hm = mpc.prepare(h);
        let q = product(mpc, (&hm).into(), (&self.w_q).into())?;
        let k = product(mpc, (&hm).into(), (&self.w_k).into())?;
        let v = product(mpc, (&hm).into(), (&self.w_v).into())?;
        let scale = 1.0 / libm::sqrt(dk as f64);
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let (a, b) = (hd * dk, (hd + 1) * dk);
            let scores = mpc.matmul(&q.cols(a, b)?, &k.cols(a, b)?.transpose()?)?;
            let attn = mpc_softmax(mpc, &mul_public_scalar(&scores, scale)?, true, nl)?;
            heads.push(mpc.matmul(&attn, &v.cols(a, b)?)?);
        }
        let refs: Vec<&SharedTensor> = heads.iter().collect();
        let concat = SharedTensor::hstack(&refs)?;
        let pre = add_bias(&product(mpc, (&concat).into(), (&self.w_d).into())?, &self.b_d)?.add(h)?;
        let x = mpc_layernorm(mpc, &pre, &self.gamma1, &self.beta1, cfg.ln_eps, nl)?;
        let inner = add_bias(&product(mpc, (&x).into(), (&self.w_i).into())?, &self.b_i)?;
        let act = mpc_activation(mpc, &inner, nl)?;
        let out = add_bias(&product(mpc, (&act).into(), (&self.w_o).into())?, &self.b_o)?.add(&x)?;
        mpc_layernorm(mpc, &out, &self.gamma2, &self.beta2, cfg.ln_eps, nl)
    }
}

struct SharedResidual {
    m_x: Vec<MaskedTensor>,
    gamma1: MaskedTensor,
    b_x: SharedTensor,
}

pub(crate) struct SharedMergedLayer {
    c: Vec<MaskedTensor>,
    m_u: Vec<MaskedTensor>,
    r: MaskedTensor,
    b_mu: SharedTensor,
    w_o: MaskedTensor,
    b_o: SharedTensor,
    gamma2: MaskedTensor,
    beta2: SharedTensor,
    residual: Option<SharedResidual>,
}

fn is_causal(c: &Matrix) -> bool {
    (0..c.rows()).all(|i| c.row(i)[i + 1..].iter().all(|&v| v == 0.0))
}

impl SharedMergedLayer {
    pub(crate) fn setup(mpc: &mut Mpc, ml: &MergedLayer, ffn_residual: bool) -> Result<Self> {
        if let Some(h) = ml.c.iter().position(|c| !is_causal(c)) {
            return Err(Error::Config(alloc::format!("constant attention of head {h} is not lower-triangular")));
        }
        let residual = if ffn_residual {
            Some(SharedResidual {
                m_x: ml.m_x.iter().map(|m| share_masked(mpc, m)).collect::<Result<_>>()?,
                gamma1: share_masked(mpc, &ml.gamma1)?,
                b_x: share_server(mpc, &ml.b_x)?,
            })
        } else {
            None
        };
        Ok(Self {
            c: ml.c.iter().map(|c| share_masked(mpc, c)).collect::<Result<_>>()?,
            m_u: ml.m_u.iter().map(|m| share_masked(mpc, m)).collect::<Result<_>>()?,
            r: share_masked(mpc, &ml.r)?,
            b_mu: share_server(mpc, &ml.b_mu)?,
            w_o: share_masked(mpc, &ml.w_o)?,
            b_o: share_server(mpc, &ml.b_o)?,
            gamma2: share_masked(mpc, &ml.gamma2)?,
            beta2: share_server(mpc, &ml.beta2)?,
            residual,
        })
    }

    /// Outputs for rows `start..n` where `cache` holds the masked inputs of
    /// rows `0..n` and `new` is its tail from `start`.
    ///
    /// The constant-attention slice and the cache are both masked, so the
    /// mixing product costs nothing online; the remaining products are linear
    /// in the number of new rows.
    fn forward_rows(
        &self,
        mpc: &mut Mpc,
        cache: &MaskedTensor,
        new: &MaskedTensor,
        start: usize,
        cfg: &ModelConfig,
        nl: &NonlinearConfig,
    ) -> Result<SharedTensor> {
        let n = cache.dims2()?.0;
        let rows = n - start;
        let mut u = add_bias(&product(mpc, new.into(), (&self.r).into())?, &self.b_mu)?;
        let mut mixed = Vec::with_capacity(self.c.len());
        for (c, m) in self.c.iter().zip(&self.m_u) {
            let ch = product(mpc, (&c.block((start, n), (0, n))?).into(), cache.into())?;
            u = u.add(&product(mpc, (&ch).into(), m.into())?)?;
            mixed.push(ch);
        }
        let act = mpc_activation(mpc, &u, nl)?;
        let mut pre = add_bias(&product(mpc, (&act).into(), (&self.w_o).into())?, &self.b_o)?;
        if let Some(res) = &self.residual {
            let g = res.gamma1.broadcast_rows(rows)?;
            let mut x = add_bias(&mpc.product(ProductKind::Hadamard, new.into(), (&g).into())?, &res.b_x)?;
            for (ch, m) in mixed.iter().zip(&res.m_x) {
                x = x.add(&product(mpc, ch.into(), m.into())?)?;
            }
            pre = pre.add(&x)?;
        }
        mpc_layernorm(mpc, &pre, &self.gamma2, &self.beta2, cfg.ln_eps, nl)
    }
}

pub(crate) enum SharedLayers {
    Vanilla(Vec<SharedVanillaLayer>),
    Merged(Vec<SharedMergedLayer>),
}

/// Masked inputs of every merged block for all positions processed so far.
pub(crate) type LayerCache = Vec<Option<MaskedTensor>>;

impl SharedLayers {
    pub(crate) fn empty_cache(&self) -> LayerCache {
        match self {
            SharedLayers::Vanilla(_) => Vec::new(),
            SharedLayers::Merged(ls) => ls.iter().map(|_| None).collect(),
        }
    }

    pub(crate) fn forward_full(
        &self,
        mpc: &mut Mpc,
        e_prime: &SharedTensor,
        cfg: &ModelConfig,
        nl: &NonlinearConfig,
    ) -> Result<SharedTensor> {
        mpc.in_category(Category::Linear, |mpc| {
            let mut h = e_prime.clone();
            match self {
                SharedLayers::Vanilla(ls) => {
                    for l in ls {
                        h = l.forward(mpc, &h, cfg, nl)?;
                    }
                }
                SharedLayers::Merged(ls) => {
                    for l in ls {
                        let hm = mpc.prepare(&h);
                        h = l.forward_rows(mpc, &hm, &hm, 0, cfg, nl)?;
                    }
                }
            }
            Ok(h)
        })
    }

    /// Pushes `new_rows` through every merged block, extending each block's
    /// input cache; returns the outputs for the new rows only.
    pub(crate) fn forward_cached(
        &self,
        mpc: &mut Mpc,
        new_rows: &SharedTensor,
        cache: &mut LayerCache,
        cfg: &ModelConfig,
        nl: &NonlinearConfig,
    ) -> Result<SharedTensor> {
        let SharedLayers::Merged(ls) = self else {
            return Err(Error::Config("incremental execution needs merge modules".into()));
        };
        mpc.in_category(Category::Linear, |mpc| {
            let mut h = new_rows.clone();
            for (l, slot) in ls.iter().zip(cache.iter_mut()) {
                let hm = mpc.prepare(&h);
                let start = match slot {
                    Some(c) => {
                        let start = c.dims2()?.0;
                        c.append_rows(&hm)?;
                        start
                    }
                    None => {
                        *slot = Some(hm.clone());
                        0
                    }
                };
                let all = slot.as_ref().expect("filled above");
                if all.dims2()?.0 > cfg.max_len {
                    return Err(Error::LengthOverflow { len: all.dims2()?.0, max: cfg.max_len });
                }
                h = l.forward_rows(mpc, all, &hm, start, cfg, nl)?;
            }
            Ok(h)
        })
    }
}
