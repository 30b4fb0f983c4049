//! Trusted dealer: offline correlated randomness.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::channel::BYTES_PER_ELEMENT;
use super::ledger::{Category, CommLedger};
use super::share::{reconstruct, share, SharedTensor};
use crate::error::{shape_err, Result};
use crate::ring::{FixedConfig, FixedTensor, Ring};

/// How the two masked operands of a Beaver product are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductKind {
    Hadamard,
    MatMul,
}

impl ProductKind {
    pub(crate) fn apply(self, a: &FixedTensor, b: &FixedTensor) -> Result<FixedTensor> {
        match self {
            ProductKind::Hadamard => a.hadamard_raw(b),
            ProductKind::MatMul => a.matmul_raw(b),
        }
    }
}

/// Shares of `(a, b, c)` with `c` the raw ring product of `a` and `b`.
#[derive(Debug, Clone)]
pub struct Triple {
    pub(crate) id: u64,
    pub(crate) kind: ProductKind,
    pub(crate) a: SharedTensor,
    pub(crate) b: SharedTensor,
    pub(crate) c: SharedTensor,
}

impl Triple {
    pub fn id(&self) -> u64 {
        self.id
    }
    pub fn kind(&self) -> ProductKind {
        self.kind
    }
    pub fn a(&self) -> &SharedTensor {
        &self.a
    }
    pub fn b(&self) -> &SharedTensor {
        &self.b
    }
    pub fn c(&self) -> &SharedTensor {
        &self.c
    }

    /// Dealer-side postcondition: `reconstruct(c) == a * b` in the ring.
    pub fn is_consistent(&self) -> bool {
        let (Ok(a), Ok(b), Ok(c)) = (reconstruct(&self.a), reconstruct(&self.b), reconstruct(&self.c)) else {
            return false;
        };
        self.kind.apply(&a, &b).map(|ab| ab == c).unwrap_or(false)
    }
}

/// Elementwise triple.
///
/// `c` holds the raw ring product `a * b` (scale `2f`); the product of two
/// uniform masks has no meaningful fixed-point reading, so rescaling happens
/// once on the protocol output instead.
#[derive(Debug, Clone)]
pub struct BeaverTriple(pub(crate) Triple);

/// Matrix triple `C = A * B` for one `m x k` by `k x n` product.
#[derive(Debug, Clone)]
pub struct MatrixTriple(pub(crate) Triple);

impl core::ops::Deref for BeaverTriple {
    type Target = Triple;
    fn deref(&self) -> &Triple {
        &self.0
    }
}

impl core::ops::Deref for MatrixTriple {
    type Target = Triple;
    fn deref(&self) -> &Triple {
        &self.0
    }
}

/// Mask requested for one operand of a product.
pub(crate) enum MaskSpec<'a> {
    /// A new uniform mask of the given shape.
    Fresh(&'a [usize]),
    /// A mask whose masked difference is already public.
    Fixed(&'a SharedTensor),
}

/// Seeded trusted dealer. Everything it hands out is charged to its own
/// offline ledger, never to the online channel.
pub struct Dealer {
    rng: ChaCha20Rng,
    cfg: FixedConfig,
    offline: CommLedger,
    next_id: u64,
}

impl Dealer {
    pub fn new(seed: u64, cfg: FixedConfig) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), cfg, offline: CommLedger::new(), next_id: 0 }
    }

    pub fn config(&self) -> FixedConfig {
        self.cfg
    }

    pub fn offline_ledger(&self) -> &CommLedger {
        &self.offline
    }

    fn id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn random(&mut self, shape: &[usize]) -> FixedTensor {
        let n: usize = shape.iter().product();
        let data: Vec<Ring> = (0..n).map(|_| Ring(self.rng.random())).collect();
        FixedTensor::from_parts(shape.to_vec(), data, self.cfg)
    }

    /// Shares a dealer-known value to both parties.
    fn deal(&mut self, x: &FixedTensor) -> SharedTensor {
        self.offline.charge(Category::Other, 2 * BYTES_PER_ELEMENT * x.len() as u64, 1);
        share(x, &mut self.rng)
    }

    /// A fresh uniformly random shared mask.
    pub fn fresh_mask(&mut self, shape: &[usize]) -> SharedTensor {
        let m = self.random(shape);
        self.deal(&m)
    }

    fn resolve(&mut self, spec: MaskSpec<'_>) -> Result<(FixedTensor, SharedTensor)> {
        match spec {
            MaskSpec::Fresh(shape) => {
                let m = self.random(shape);
                let s = self.deal(&m);
                Ok((m, s))
            }
            MaskSpec::Fixed(s) => Ok((reconstruct(s)?, s.clone())),
        }
    }

    pub(crate) fn triple_for(&mut self, kind: ProductKind, x: MaskSpec<'_>, y: MaskSpec<'_>) -> Result<Triple> {
        let (a_plain, a) = self.resolve(x)?;
        let (b_plain, b) = self.resolve(y)?;
        let c_plain = kind.apply(&a_plain, &b_plain)?;
        let c = self.deal(&c_plain);
        Ok(Triple { id: self.id(), kind, a, b, c })
    }

    /// Elementwise triple of the given shape.
    pub fn triple(&mut self, shape: &[usize]) -> BeaverTriple {
        BeaverTriple(
            self.triple_for(ProductKind::Hadamard, MaskSpec::Fresh(shape), MaskSpec::Fresh(shape))
                .expect("equal shapes"),
        )
    }

    /// `n` independent single-element triples.
    pub fn gen_triples(&mut self, n: usize) -> Vec<BeaverTriple> {
        (0..n).map(|_| self.triple(&[1, 1])).collect()
    }

    pub fn gen_matrix_triple(&mut self, m: usize, k: usize, n: usize) -> MatrixTriple {
        MatrixTriple(
            self.triple_for(ProductKind::MatMul, MaskSpec::Fresh(&[m, k]), MaskSpec::Fresh(&[k, n]))
                .expect("compatible shapes"),
        )
    }

    /// Idealised sign gadget: fresh shares of `[x > 0]` as raw ring integers
    /// (0 or 1, not fixed-point scaled).
    ///
    /// The comparison itself is not implemented as a protocol; the caller
    /// charges it as one masked opening round.
    pub(crate) fn sign_bits(&mut self, x: &SharedTensor) -> Result<SharedTensor> {
        let plain = reconstruct(x)?;
        let bits = plain.map(|v| Ring((v.signed() > 0) as u64));
        Ok(self.deal(&bits))
    }

    pub(crate) fn check_shape(expected: &[usize], got: &[usize]) -> Result<()> {
        if expected != got {
            return Err(shape_err(alloc::format!("triple shape {expected:?} vs operand {got:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_triples_are_consistent() {
        let mut d = Dealer::new(1, FixedConfig::default());
        let ts = d.gen_triples(1000);
        assert!(ts.iter().all(|t| t.is_consistent()));
        let mt = d.gen_matrix_triple(3, 4, 5);
        assert!(mt.is_consistent());
        assert_eq!(mt.c().shape(), &[3, 5]);
    }

    #[test]
    fn equal_seeds_give_identical_triples() {
        let mut a = Dealer::new(77, FixedConfig::default());
        let mut b = Dealer::new(77, FixedConfig::default());
        for _ in 0..10 {
            let (x, y) = (a.triple(&[2, 2]), b.triple(&[2, 2]));
            assert_eq!(x.a(), y.a());
            assert_eq!(x.c(), y.c());
        }
    }

    #[test]
    fn offline_traffic_is_ledgered_separately() {
        let mut d = Dealer::new(1, FixedConfig::default());
        d.triple(&[4]);
        // a, b, c each dealt to two parties at 8 bytes per element.
        assert_eq!(d.offline_ledger().total().bytes, 3 * 2 * 8 * 4);
    }

    #[test]
    fn ids_are_unique() {
        let mut d = Dealer::new(1, FixedConfig::default());
        let ids: Vec<u64> = d.gen_triples(5).iter().map(|t| t.id()).collect();
        assert_eq!(ids, alloc::vec![0, 1, 2, 3, 4]);
    }
}
