//! Additive two-party shares and the operations that need no communication.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::ring::{encode, FixedConfig, FixedTensor, Ring};

/// The two protocol participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    /// Owns the inference data.
    Client = 0,
    /// Owns the model.
    Server = 1,
}

impl Party {
    pub const BOTH: [Party; 2] = [Party::Client, Party::Server];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn other(self) -> Party {
        match self {
            Party::Client => Party::Server,
            Party::Server => Party::Client,
        }
    }
}

/// One party's additive share of a tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    pub party: Party,
    pub tensor: FixedTensor,
}

/// Both additive shares of one secret tensor.
///
/// Holding both halves in one value is what lets the simulator run the two
/// parties in lockstep; protocol code only ever combines them through the
/// [`Channel`](super::Channel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedTensor {
    parts: [FixedTensor; 2],
}

impl SharedTensor {
    pub fn from_shares(a: Share, b: Share) -> Result<Self> {
        if a.party == b.party {
            return Err(Error::Protocol("both shares carry the same party tag".into()));
        }
        if a.tensor.shape() != b.tensor.shape() || a.tensor.config() != b.tensor.config() {
            return Err(shape_err(alloc::format!(
                "share shapes {:?} and {:?} differ",
                a.tensor.shape(),
                b.tensor.shape()
            )));
        }
        let (client, server) = if a.party == Party::Client { (a, b) } else { (b, a) };
        Ok(Self { parts: [client.tensor, server.tensor] })
    }

    pub(crate) fn from_parts(client: FixedTensor, server: FixedTensor) -> Self {
        debug_assert_eq!(client.shape(), server.shape());
        Self { parts: [client, server] }
    }

    /// Shares of the public zero tensor.
    pub fn zeros(shape: &[usize], cfg: FixedConfig) -> Self {
        Self::from_parts(FixedTensor::zeros(shape, cfg), FixedTensor::zeros(shape, cfg))
    }

    /// Trivial sharing of a public value: the server holds it, the client holds zero.
    pub fn from_public(x: &FixedTensor) -> Self {
        Self::from_parts(FixedTensor::zeros(x.shape(), x.config()), x.clone())
    }

    pub fn share(&self, party: Party) -> Share {
        Share { party, tensor: self.parts[party.index()].clone() }
    }

    #[inline]
    pub fn part(&self, party: Party) -> &FixedTensor {
        &self.parts[party.index()]
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        self.parts[0].shape()
    }

    #[inline]
    pub fn config(&self) -> FixedConfig {
        self.parts[0].config()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.parts[0].len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.parts[0].is_empty()
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        self.parts[0].dims2()
    }

    fn try_map(&self, f: impl Fn(&FixedTensor) -> Result<FixedTensor>) -> Result<Self> {
        Ok(Self::from_parts(f(&self.parts[0])?, f(&self.parts[1])?))
    }

    pub(crate) fn map_by_party(&self, f: impl Fn(Party, &FixedTensor) -> FixedTensor) -> Self {
        Self::from_parts(f(Party::Client, &self.parts[0]), f(Party::Server, &self.parts[1]))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        add_shared(self, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self::from_parts(self.parts[0].sub(&other.parts[0])?, self.parts[1].sub(&other.parts[1])?))
    }

    pub fn neg(&self) -> Self {
        self.map_by_party(|_, t| t.neg())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        self.try_map(|t| t.clone().reshape(shape))
    }

    pub fn transpose(&self) -> Result<Self> {
        self.try_map(FixedTensor::transpose)
    }

    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        self.try_map(|t| t.rows(start, end))
    }

    pub fn cols(&self, start: usize, end: usize) -> Result<Self> {
        self.try_map(|t| t.cols(start, end))
    }

    pub fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> Result<Self> {
        self.try_map(|t| t.block(rows, cols))
    }

    pub fn broadcast_rows(&self, rows: usize) -> Result<Self> {
        self.try_map(|t| t.broadcast_rows(rows))
    }

    pub fn broadcast_cols(&self, cols: usize) -> Result<Self> {
        self.try_map(|t| t.broadcast_cols(cols))
    }

    pub fn row_sums(&self) -> Result<Self> {
        self.try_map(FixedTensor::row_sums)
    }

    pub fn vstack(parts: &[&Self]) -> Result<Self> {
        let c: Vec<&FixedTensor> = parts.iter().map(|s| &s.parts[0]).collect();
        let s: Vec<&FixedTensor> = parts.iter().map(|s| &s.parts[1]).collect();
        Ok(Self::from_parts(FixedTensor::vstack(&c)?, FixedTensor::vstack(&s)?))
    }

    pub fn hstack(parts: &[&Self]) -> Result<Self> {
        let c: Vec<&FixedTensor> = parts.iter().map(|s| &s.parts[0]).collect();
        let s: Vec<&FixedTensor> = parts.iter().map(|s| &s.parts[1]).collect();
        Ok(Self::from_parts(FixedTensor::hstack(&c)?, FixedTensor::hstack(&s)?))
    }

    /// Local probabilistic truncation by `bits`.
    ///
    /// The client shifts its share; the server shifts the negation of its share
    /// and negates back. The result is off by at most one unit except with
    /// probability about `|x| / 2^63`.
    pub fn truncate(&self, bits: u32) -> Self {
        self.map_by_party(|p, t| match p {
            Party::Client => t.shr_arith(bits),
            Party::Server => t.map(|v| -((-v).shr_arith(bits))),
        })
    }

    /// Multiplies both shares by a public integer (no rescale).
    pub fn scale_int(&self, k: i64) -> Self {
        let k = Ring::from_signed(k);
        self.map_by_party(|_, t| t.map(|v| v * k))
    }
}

/// Splits `x` into a uniform client share and `x - r` for the server.
pub fn share<R: Rng + ?Sized>(x: &FixedTensor, rng: &mut R) -> SharedTensor {
    let r: Vec<Ring> = (0..x.len()).map(|_| Ring(rng.random())).collect();
    let r = x.with_data(r);
    share_with(x, &r).expect("randomness shaped like x")
}

/// Sharing with caller-supplied client share `r`.
pub fn share_with(x: &FixedTensor, r: &FixedTensor) -> Result<SharedTensor> {
    let server = x.sub(r)?;
    Ok(SharedTensor::from_parts(r.clone(), server))
}

/// Elementwise ring sum of both shares.
pub fn reconstruct(s: &SharedTensor) -> Result<FixedTensor> {
    s.parts[0].add(&s.parts[1])
}

/// Private addition: each party adds its own shares.
pub fn add_shared(x: &SharedTensor, y: &SharedTensor) -> Result<SharedTensor> {
    Ok(SharedTensor::from_parts(x.parts[0].add(&y.parts[0])?, x.parts[1].add(&y.parts[1])?))
}

/// Expands a public tensor to `shape`: equal shapes pass through, a single
/// element is repeated everywhere and a `1 x c` row is repeated per row.
pub(crate) fn broadcast_public(k: &FixedTensor, shape: &[usize]) -> Result<FixedTensor> {
    if k.shape() == shape {
        return Ok(k.clone());
    }
    let n: usize = shape.iter().product();
    if k.len() == 1 {
        return FixedTensor::new(shape.to_vec(), alloc::vec![k.data()[0]; n], k.config());
    }
    if let ([1, c], [_, sc]) = (k.shape(), shape) {
        if c == sc {
            let rows = shape[0];
            return k.broadcast_rows(rows);
        }
    }
    Err(shape_err(alloc::format!("cannot broadcast {:?} to {:?}", k.shape(), shape)))
}

/// Adds a public tensor; only the server touches its share.
pub fn add_public(x: &SharedTensor, k: &FixedTensor) -> Result<SharedTensor> {
    let k = broadcast_public(k, x.shape())?;
    Ok(SharedTensor::from_parts(x.parts[0].clone(), x.parts[1].add(&k)?))
}

/// Multiplies by a public fixed-point tensor; both parties scale their share
/// and truncate locally.
pub fn mul_public(x: &SharedTensor, k: &FixedTensor) -> Result<SharedTensor> {
    Ok(mul_public_raw(x, k)?.truncate(x.config().frac_bits()))
}

/// Multiplies by a public tensor of raw ring integers without rescaling.
pub fn mul_public_raw(x: &SharedTensor, k: &FixedTensor) -> Result<SharedTensor> {
    let k = broadcast_public(k, x.shape())?;
    Ok(SharedTensor::from_parts(x.parts[0].hadamard_raw(&k)?, x.parts[1].hadamard_raw(&k)?))
}

/// Multiplies by a public real scalar.
pub fn mul_public_scalar(x: &SharedTensor, k: f64) -> Result<SharedTensor> {
    let cfg = x.config();
    mul_public(x, &FixedTensor::scalar(k, cfg)?)
}

/// Adds a public real scalar to every element.
pub fn add_public_scalar(x: &SharedTensor, k: f64) -> Result<SharedTensor> {
    let cfg = x.config();
    let e = encode(k, cfg)?;
    Ok(x.map_by_party(|p, t| match p {
        Party::Client => t.clone(),
        Party::Server => t.map(|v| v + e),
    }))
}
