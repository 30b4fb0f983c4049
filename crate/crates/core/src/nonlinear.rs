//! Private approximations of exp, reciprocal, softmax, activations and layer norm.
//!
//! Every kernel runs on an [`Mpc`] context. `mpc_exp` and `mpc_reciprocal`
//! charge the caller's current category; softmax charges
//! [`Category::Softmax`], activations and layer norm charge
//! [`Category::Linear`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mpc::{add_public_scalar, mul_public_raw, mul_public_scalar, Category, MaskedTensor, Mpc, ProductKind, SharedTensor};
use crate::ring::{FixedTensor, Ring};

/// Nonlinearity applied inside the feed-forward block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationKind {
    /// Exact ReLU from a dealer-assisted sign gadget.
    #[default]
    Relu,
    /// `a x^2 + b x + c`.
    Quad,
}

impl ActivationKind {
    /// Plaintext evaluation with the given quadratic coefficients.
    pub fn eval(self, x: f64, quad: [f64; 3]) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Quad => quad[0] * x * x + quad[1] * x + quad[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearConfig {
    /// `k` in `(1 + x / 2^k)^(2^k)`.
    pub exp_iterations: u32,
    pub recip_newton_iterations: u32,
    /// Initial guess `scale * exp(shift - x) + offset`.
    pub recip_init_scale: f64,
    pub recip_init_shift: f64,
    pub recip_init_offset: f64,
    /// Starting point and step count of the inverse square root iteration.
    pub isqrt_init: f64,
    pub isqrt_iterations: u32,
    /// Public constant subtracted from logits before exponentiation.
    pub softmax_shift: f64,
    pub activation: ActivationKind,
    pub quad: [f64; 3],
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            exp_iterations: 8,
            recip_newton_iterations: 10,
            recip_init_scale: 3.0,
            recip_init_shift: 0.5,
            recip_init_offset: 0.003,
            isqrt_init: 0.3,
            isqrt_iterations: 20,
            softmax_shift: 0.0,
            activation: ActivationKind::Relu,
            quad: [0.125, 0.5, 0.25],
        }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exp_iterations == 0 || self.recip_newton_iterations == 0 || self.isqrt_iterations == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        if self.exp_iterations > 30 {
            return Err(Error::Config("exp_iterations above 30".into()));
        }
        Ok(())
    }

    /// Online rounds of one `mpc_exp` call.
    pub fn exp_rounds(&self) -> u64 {
        self.exp_iterations as u64
    }

    /// Online rounds of one `mpc_reciprocal` call.
    pub fn reciprocal_rounds(&self) -> u64 {
        self.exp_rounds() + 2 * self.recip_newton_iterations as u64
    }

    pub fn softmax_rounds(&self) -> u64 {
        self.exp_rounds() + self.reciprocal_rounds() + 1
    }
}

/// `exp(x) ~ (1 + x / 2^k)^(2^k)`: a local shift, then `k` squarings.
pub fn mpc_exp(mpc: &mut Mpc, x: &SharedTensor, cfg: &NonlinearConfig) -> Result<SharedTensor> {
    cfg.validate()?;
    let mut y = add_public_scalar(&x.truncate(cfg.exp_iterations), 1.0)?;
    for _ in 0..cfg.exp_iterations {
        y = mpc.square(&y)?;
    }
    Ok(y)
}

/// Newton iteration `y <- y (2 - x y)` from `y0 = 3 exp(0.5 - x) + 0.003`.
///
/// Inputs must be positive; the accuracy contract covers `[0.05, 256]`.
pub fn mpc_reciprocal(mpc: &mut Mpc, x: &SharedTensor, cfg: &NonlinearConfig) -> Result<SharedTensor> {
    let arg = add_public_scalar(&x.neg(), cfg.recip_init_shift)?;
    let e = mpc_exp(mpc, &arg, cfg)?;
    let mut y = add_public_scalar(&mul_public_scalar(&e, cfg.recip_init_scale)?, cfg.recip_init_offset)?;
    for _ in 0..cfg.recip_newton_iterations {
        let xy = mpc.mul(x, &y)?;
        let two_minus = add_public_scalar(&xy.neg(), 2.0)?;
        y = mpc.mul(&y, &two_minus)?;
    }
    Ok(y)
}

/// Raw 0/1 causal mask for an `rows x cols` score block whose last row is
/// the last visible key.
fn causal_mask(rows: usize, cols: usize, x: &SharedTensor) -> FixedTensor {
    let offset = cols - rows;
    let data: Vec<Ring> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| Ring((j <= i + offset) as u64)))
        .collect();
    x.part(crate::mpc::Party::Client).with_data(data)
}

/// Row-wise softmax without a private max: `exp(x - shift)`, an optional
/// causal mask, then multiplication by the reciprocal row sum.
pub fn mpc_softmax(mpc: &mut Mpc, x: &SharedTensor, causal: bool, cfg: &NonlinearConfig) -> Result<SharedTensor> {
    let (rows, cols) = x.dims2()?;
    if cols > 512 {
        return Err(Error::Config(alloc::format!("softmax width {cols} exceeds 512")));
    }
    if causal && rows > cols {
        return Err(crate::error::shape_err("causal softmax needs rows <= cols"));
    }
    mpc.in_category(Category::Softmax, |mpc| {
        let mut e = mpc_exp(mpc, &add_public_scalar(x, -cfg.softmax_shift)?, cfg)?;
        if causal {
            e = mul_public_raw(&e, &causal_mask(rows, cols, x))?;
        }
        let s = e.row_sums()?;
        let r = mpc_reciprocal(mpc, &s, cfg)?;
        mpc.mul(&e, &r.broadcast_cols(cols)?)
    })
}

/// Sign-assisted ReLU or the configured quadratic, charged to Linear.
pub fn mpc_activation(mpc: &mut Mpc, x: &SharedTensor, cfg: &NonlinearConfig) -> Result<SharedTensor> {
    mpc.in_category(Category::Linear, |mpc| match cfg.activation {
        ActivationKind::Relu => {
            let bits = mpc.sign_bits(x)?;
            mpc.mul_raw(x, &bits)
        }
        ActivationKind::Quad => {
            let [a, b, c] = cfg.quad;
            let sq = mpc.square(x)?;
            let lin = mul_public_scalar(&sq, a)?.add(&mul_public_scalar(x, b)?)?;
            add_public_scalar(&lin, c)
        }
    })
}

/// `y <- y (3 - v y^2) / 2`, converging to `1 / sqrt(v)`.
pub fn mpc_inv_sqrt(mpc: &mut Mpc, v: &SharedTensor, cfg: &NonlinearConfig) -> Result<SharedTensor> {
    let init = FixedTensor::from_f64(v.shape(), &alloc::vec![cfg.isqrt_init; v.len()], v.config())?;
    let mut y = SharedTensor::from_public(&init);
    for _ in 0..cfg.isqrt_iterations {
        let y2 = mpc.square(&y)?;
        let vy2 = mpc.mul(v, &y2)?;
        let t = add_public_scalar(&vy2.neg(), 3.0)?;
        y = mpc.mul(&y, &t)?.truncate(1);
    }
    Ok(y)
}

/// Row-wise layer norm `(x - mean) / (sqrt(var) + eps) * gamma + beta`.
///
/// `gamma` and `beta` are `1 x d`; the mean is local, the variance needs one
/// squaring, `sqrt(var)` comes from `var * inv_sqrt(var)` and the division from
/// [`mpc_reciprocal`].
pub fn mpc_layernorm(
    mpc: &mut Mpc,
    x: &SharedTensor,
    gamma: &MaskedTensor,
    beta: &SharedTensor,
    eps: f64,
    cfg: &NonlinearConfig,
) -> Result<SharedTensor> {
    let (rows, d) = x.dims2()?;
    mpc.in_category(Category::Linear, |mpc| {
        let inv_d = 1.0 / d as f64;
        let mean = mul_public_scalar(&x.row_sums()?, inv_d)?;
        let centered = x.sub(&mean.broadcast_cols(d)?)?;
        let var = mul_public_scalar(&mpc.square(&centered)?.row_sums()?, inv_d)?;
        let y = mpc_inv_sqrt(mpc, &var, cfg)?;
        let sd = mpc.mul(&var, &y)?;
        let inv = mpc_reciprocal(mpc, &add_public_scalar(&sd, eps)?, cfg)?;
        let normed = mpc.mul(&centered, &inv.broadcast_cols(d)?)?;
        let g = gamma.broadcast_rows(rows)?;
        let scaled = mpc.product(ProductKind::Hadamard, (&normed).into(), (&g).into())?;
        scaled.add(&beta.broadcast_rows(rows)?)
    })
}
