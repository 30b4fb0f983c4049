//! Online protocols: openings and Beaver products.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::channel::Channel;
use super::dealer::{BeaverTriple, Dealer, MaskSpec, MatrixTriple, ProductKind, Triple};
use super::ledger::{Category, Clock, CommLedger};
use super::share::{share, Party, SharedTensor};
use crate::error::{shape_err, Result};
use crate::ring::{FixedConfig, FixedTensor};

/// Reveals `x` to `to`: the other party sends its share (one direction, one round).
pub fn open(x: &SharedTensor, ch: &mut Channel, to: Party) -> FixedTensor {
    let sender = to.other();
    let received = ch.transfer(sender, x.part(sender).data().to_vec());
    let theirs = x.part(sender).with_data(received);
    x.part(to).add(&theirs).expect("same shape")
}

/// Reveals `x` to both parties in one simultaneous round.
pub fn open_both(x: &SharedTensor, ch: &mut Channel) -> FixedTensor {
    let (to_client, _to_server) =
        ch.exchange(x.part(Party::Client).data().to_vec(), x.part(Party::Server).data().to_vec());
    let server_share = x.part(Party::Server).with_data(to_client);
    x.part(Party::Client).add(&server_share).expect("same shape")
}

/// Opens several tensors to both parties in a single round.
fn open_many(xs: &[&SharedTensor], ch: &mut Channel) -> Vec<FixedTensor> {
    let mut from_client = Vec::new();
    let mut from_server = Vec::new();
    for x in xs {
        from_client.extend_from_slice(x.part(Party::Client).data());
        from_server.extend_from_slice(x.part(Party::Server).data());
    }
    let (to_client, to_server) = ch.exchange(from_client, from_server);
    debug_assert_eq!(to_client.len(), to_server.len());
    let mut out = Vec::with_capacity(xs.len());
    let mut off = 0;
    for x in xs {
        let n = x.len();
        let theirs = x.part(Party::Server).with_data(to_client[off..off + n].to_vec());
        out.push(x.part(Party::Client).add(&theirs).expect("same shape"));
        off += n;
    }
    out
}

/// A shared tensor whose masked difference `value - mask` is public.
///
/// Once prepared, the tensor can enter any number of products without being
/// opened again: the dealer correlates each product's triple with `mask`.
#[derive(Debug, Clone)]
pub struct MaskedTensor {
    value: SharedTensor,
    mask: SharedTensor,
    delta: FixedTensor,
}

impl MaskedTensor {
    pub fn value(&self) -> &SharedTensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        self.value.dims2()
    }

    fn map(&self, f: impl Fn(&SharedTensor) -> Result<SharedTensor>, g: impl Fn(&FixedTensor) -> Result<FixedTensor>) -> Result<Self> {
        Ok(Self { value: f(&self.value)?, mask: f(&self.mask)?, delta: g(&self.delta)? })
    }

    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        self.map(|s| s.rows(start, end), |t| t.rows(start, end))
    }

    pub fn cols(&self, start: usize, end: usize) -> Result<Self> {
        self.map(|s| s.cols(start, end), |t| t.cols(start, end))
    }

    pub fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> Result<Self> {
        self.map(|s| s.block(rows, cols), |t| t.block(rows, cols))
    }

    pub fn transpose(&self) -> Result<Self> {
        self.map(SharedTensor::transpose, FixedTensor::transpose)
    }

    /// Repeats a `1 x c` row; the repeated mask is reused, not refreshed.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Self> {
        self.map(|s| s.broadcast_rows(rows), |t| t.broadcast_rows(rows))
    }

    pub fn vstack(parts: &[&Self]) -> Result<Self> {
        let v: Vec<&SharedTensor> = parts.iter().map(|p| &p.value).collect();
        let m: Vec<&SharedTensor> = parts.iter().map(|p| &p.mask).collect();
        let d: Vec<&FixedTensor> = parts.iter().map(|p| &p.delta).collect();
        Ok(Self { value: SharedTensor::vstack(&v)?, mask: SharedTensor::vstack(&m)?, delta: FixedTensor::vstack(&d)? })
    }

    /// Appends rows in place (used by incremental caches).
    pub fn append_rows(&mut self, more: &Self) -> Result<()> {
        *self = Self::vstack(&[self, more])?;
        Ok(())
    }
}

/// One side of a Beaver product.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    /// Not yet masked: a new mask is drawn and `x - a` opened.
    Fresh(&'a SharedTensor),
    /// Already masked; costs nothing online.
    Masked(&'a MaskedTensor),
}

impl<'a> From<&'a SharedTensor> for Operand<'a> {
    fn from(x: &'a SharedTensor) -> Self {
        Operand::Fresh(x)
    }
}

impl<'a> From<&'a MaskedTensor> for Operand<'a> {
    fn from(x: &'a MaskedTensor) -> Self {
        Operand::Masked(x)
    }
}

impl Operand<'_> {
    fn shape(&self) -> &[usize] {
        match self {
            Operand::Fresh(x) => x.shape(),
            Operand::Masked(m) => m.shape(),
        }
    }

    fn spec(&self) -> MaskSpec<'_> {
        match self {
            Operand::Fresh(x) => MaskSpec::Fresh(x.shape()),
            Operand::Masked(m) => MaskSpec::Fixed(&m.mask),
        }
    }
}

/// Local Beaver recombination `z = c + e*b + a*d (+ e*d on the server)`,
/// left at scale `2f`.
fn recombine(t: &Triple, e: &FixedTensor, d: &FixedTensor) -> Result<SharedTensor> {
    let k = t.kind;
    let ed = k.apply(e, d)?;
    let part = |p: Party| -> Result<FixedTensor> {
        let mut z = t.c.part(p).add(&k.apply(e, t.b.part(p))?)?.add(&k.apply(t.a.part(p), d)?)?;
        if p == Party::Server {
            z = z.add(&ed)?;
        }
        Ok(z)
    };
    Ok(SharedTensor::from_parts(part(Party::Client)?, part(Party::Server)?))
}

fn check_operands(kind: ProductKind, x: &[usize], y: &[usize]) -> Result<()> {
    let ok = match kind {
        ProductKind::Hadamard => x == y,
        ProductKind::MatMul => x.len() == 2 && y.len() == 2 && x[1] == y[0],
    };
    if ok {
        Ok(())
    } else {
        Err(shape_err(alloc::format!("operands {x:?} and {y:?} incompatible for {kind:?}")))
    }
}

fn triple_product(x: &SharedTensor, y: &SharedTensor, t: &Triple, ch: &mut Channel) -> Result<SharedTensor> {
    check_operands(t.kind, x.shape(), y.shape())?;
    Dealer::check_shape(t.a.shape(), x.shape())?;
    Dealer::check_shape(t.b.shape(), y.shape())?;
    ch.consume_triple(t.id)?;
    let e = x.sub(&t.a)?;
    let d = y.sub(&t.b)?;
    let opened = open_many(&[&e, &d], ch);
    recombine(t, &opened[0], &opened[1])
}

/// Elementwise product left at scale `2f` (no truncation).
pub fn beaver_mul_raw(x: &SharedTensor, y: &SharedTensor, t: &BeaverTriple, ch: &mut Channel) -> Result<SharedTensor> {
    triple_product(x, y, t, ch)
}

/// Elementwise fixed-point product: one round, `32` bytes per element.
pub fn beaver_mul(x: &SharedTensor, y: &SharedTensor, t: &BeaverTriple, ch: &mut Channel) -> Result<SharedTensor> {
    let f = x.config().frac_bits();
    Ok(beaver_mul_raw(x, y, t, ch)?.truncate(f))
}

/// Fixed-point matrix product: one round, `16 (mk + kn)` bytes.
pub fn matmul_shared(x: &SharedTensor, y: &SharedTensor, t: &MatrixTriple, ch: &mut Channel) -> Result<SharedTensor> {
    let f = x.config().frac_bits();
    Ok(triple_product(x, y, t, ch)?.truncate(f))
}

/// Both parties, their channel and the dealer, driven in lockstep.
pub struct Mpc {
    cfg: FixedConfig,
    ch: Channel,
    dealer: Dealer,
    rng: ChaCha20Rng,
}

impl Mpc {
    pub fn new(seed: u64, cfg: FixedConfig) -> Self {
        Self::with_channel(seed, cfg, Channel::new())
    }

    pub fn with_clock(seed: u64, cfg: FixedConfig, clock: Box<dyn Clock>) -> Self {
        Self::with_channel(seed, cfg, Channel::with_clock(clock))
    }

    fn with_channel(seed: u64, cfg: FixedConfig, ch: Channel) -> Self {
        Self {
            cfg,
            ch,
            dealer: Dealer::new(seed ^ 0x6465_616c_6572, cfg),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> FixedConfig {
        self.cfg
    }

    pub fn channel(&self) -> &Channel {
        &self.ch
    }

    pub fn channel_mut(&mut self) -> &mut Channel {
        &mut self.ch
    }

    pub fn dealer(&self) -> &Dealer {
        &self.dealer
    }

    pub fn ledger(&self) -> &CommLedger {
        self.ch.ledger()
    }

    pub fn snapshot(&mut self) -> CommLedger {
        self.ch.snapshot()
    }

    /// Runs `f` with `cat` on top of the channel's tag stack.
    pub fn in_category<T>(&mut self, cat: Category, f: impl FnOnce(&mut Self) -> T) -> T {
        self.ch.push_category(cat);
        let out = f(self);
        self.ch.pop_category();
        out
    }

    /// `owner` secret-shares its private input, sending the other party its share.
    pub fn share_input(&mut self, x: &FixedTensor, owner: Party) -> SharedTensor {
        let s = share(x, &mut self.rng);
        let recipient = owner.other();
        let got = self.ch.transfer(owner, s.part(recipient).data().to_vec());
        debug_assert_eq!(got.len(), x.len());
        s
    }

    pub fn open_to(&mut self, x: &SharedTensor, to: Party) -> FixedTensor {
        open(x, &mut self.ch, to)
    }

    pub fn open_both(&mut self, x: &SharedTensor) -> FixedTensor {
        open_both(x, &mut self.ch)
    }

    /// Masks `x` once so later products with it are free online.
    pub fn prepare(&mut self, x: &SharedTensor) -> MaskedTensor {
        let mask = self.dealer.fresh_mask(x.shape());
        let diff = x.sub(&mask).expect("mask shaped like x");
        let delta = open_both(&diff, &mut self.ch);
        MaskedTensor { value: x.clone(), mask, delta }
    }

    /// General Beaver product at scale `2f`. Fresh operands are opened in a
    /// single shared round; if both are masked no message is sent.
    pub fn product_raw(&mut self, kind: ProductKind, x: Operand<'_>, y: Operand<'_>) -> Result<SharedTensor> {
        check_operands(kind, x.shape(), y.shape())?;
        let t = self.dealer.triple_for(kind, x.spec(), y.spec())?;
        self.ch.consume_triple(t.id)?;
        let mut pending: Vec<SharedTensor> = Vec::new();
        if let Operand::Fresh(v) = x {
            pending.push(v.sub(&t.a)?);
        }
        if let Operand::Fresh(v) = y {
            pending.push(v.sub(&t.b)?);
        }
        let mut opened = if pending.is_empty() {
            Vec::new()
        } else {
            let refs: Vec<&SharedTensor> = pending.iter().collect();
            open_many(&refs, &mut self.ch)
        }
        .into_iter();
        let e = match x {
            Operand::Fresh(_) => opened.next().expect("opened"),
            Operand::Masked(m) => m.delta.clone(),
        };
        let d = match y {
            Operand::Fresh(_) => opened.next().expect("opened"),
            Operand::Masked(m) => m.delta.clone(),
        };
        recombine(&t, &e, &d)
    }

    pub fn product(&mut self, kind: ProductKind, x: Operand<'_>, y: Operand<'_>) -> Result<SharedTensor> {
        Ok(self.product_raw(kind, x, y)?.truncate(self.cfg.frac_bits()))
    }

    pub fn mul(&mut self, x: &SharedTensor, y: &SharedTensor) -> Result<SharedTensor> {
        self.product(ProductKind::Hadamard, x.into(), y.into())
    }

    /// Elementwise product without rescaling; used when one side holds raw integers.
    pub fn mul_raw(&mut self, x: &SharedTensor, y: &SharedTensor) -> Result<SharedTensor> {
        self.product_raw(ProductKind::Hadamard, x.into(), y.into())
    }

    /// `x * x` with a single opening.
    pub fn square(&mut self, x: &SharedTensor) -> Result<SharedTensor> {
        let m = self.dealer.fresh_mask(x.shape());
        let e = open_both(&x.sub(&m)?, &mut self.ch);
        let masked = MaskedTensor { value: x.clone(), mask: m, delta: e };
        self.product(ProductKind::Hadamard, (&masked).into(), (&masked).into())
    }

    pub fn matmul(&mut self, x: &SharedTensor, y: &SharedTensor) -> Result<SharedTensor> {
        self.product(ProductKind::MatMul, x.into(), y.into())
    }

    pub fn matmul_op(&mut self, x: Operand<'_>, y: Operand<'_>) -> Result<SharedTensor> {
        self.product(ProductKind::MatMul, x, y)
    }

    /// `[x > 0]` as shared raw ring integers from the dealer's comparison gadget,
    /// charged as one masked opening round.
    pub fn sign_bits(&mut self, x: &SharedTensor) -> Result<SharedTensor> {
        self.ch.charge_gadget(x.len());
        self.dealer.sign_bits(x)
    }

    /// Elementwise triples for direct use with [`beaver_mul`].
    pub fn triple(&mut self, shape: &[usize]) -> BeaverTriple {
        self.dealer.triple(shape)
    }

    pub fn matrix_triple(&mut self, m: usize, k: usize, n: usize) -> MatrixTriple {
        self.dealer.gen_matrix_triple(m, k, n)
    }

    /// Shares a public constant trivially (no communication).
    pub fn public(&self, x: &FixedTensor) -> SharedTensor {
        SharedTensor::from_public(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::share::reconstruct;
    use crate::ring::{decode, encode};
    use rand::Rng;

    fn cfg() -> FixedConfig {
        FixedConfig::default()
    }

    fn rand_tensor(rng: &mut ChaCha20Rng, shape: &[usize], lo: f64, hi: f64) -> FixedTensor {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        FixedTensor::from_f64(shape, &v, cfg()).unwrap()
    }

    #[test]
    fn beaver_three_times_four() {
        let mut mpc = Mpc::new(1, cfg());
        let x = mpc.share_input(&FixedTensor::scalar(3.0, cfg()).unwrap(), Party::Client);
        let y = mpc.share_input(&FixedTensor::scalar(4.0, cfg()).unwrap(), Party::Server);
        let t = mpc.triple(&[1, 1]);
        let before = mpc.snapshot();
        let z = beaver_mul(&x, &y, &t, mpc.channel_mut()).unwrap();
        let d = mpc.snapshot().since(&before).total();
        assert!((reconstruct(&z).unwrap().to_f64()[0] - 12.0).abs() <= 4.0 * cfg().ulp());
        assert_eq!((d.bytes, d.rounds), (32, 1));
    }

    #[test]
    fn beaver_by_zero() {
        let mut mpc = Mpc::new(2, cfg());
        let x = mpc.share_input(&FixedTensor::scalar(-37.5, cfg()).unwrap(), Party::Client);
        let y = mpc.share_input(&FixedTensor::scalar(0.0, cfg()).unwrap(), Party::Client);
        let t = mpc.triple(&[1, 1]);
        let z = beaver_mul(&x, &y, &t, mpc.channel_mut()).unwrap();
        assert!(reconstruct(&z).unwrap().to_f64()[0].abs() <= cfg().ulp());
    }

    #[test]
    fn reused_triple_is_rejected() {
        let mut mpc = Mpc::new(3, cfg());
        let x = SharedTensor::from_public(&FixedTensor::scalar(1.0, cfg()).unwrap());
        let t = mpc.triple(&[1, 1]);
        beaver_mul(&x, &x, &t, mpc.channel_mut()).unwrap();
        assert_eq!(beaver_mul(&x, &x, &t, mpc.channel_mut()), Err(crate::Error::TripleReuse(t.id())));
    }

    #[test]
    fn triple_shape_mismatch() {
        let mut mpc = Mpc::new(3, cfg());
        let x = SharedTensor::zeros(&[2, 2], cfg());
        let t = mpc.triple(&[1, 4]);
        assert!(matches!(beaver_mul(&x, &x, &t, mpc.channel_mut()), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn matmul_against_plaintext() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut mpc = Mpc::new(4, cfg());
        for _ in 0..20 {
            let a = rand_tensor(&mut rng, &[4, 4], -4.0, 4.0);
            let b = rand_tensor(&mut rng, &[4, 4], -4.0, 4.0);
            let (sa, sb) = (mpc.share_input(&a, Party::Client), mpc.share_input(&b, Party::Server));
            let t = mpc.matrix_triple(4, 4, 4);
            let before = mpc.snapshot();
            let z = matmul_shared(&sa, &sb, &t, mpc.channel_mut()).unwrap();
            assert_eq!(mpc.snapshot().since(&before).total().bytes, 16 * (16 + 16));
            // Plaintext oracle in floating point on the encoded inputs.
            let (av, bv) = (a.to_f64(), b.to_f64());
            let zv = reconstruct(&z).unwrap().to_f64();
            for i in 0..4 {
                for j in 0..4 {
                    let want: f64 = (0..4).map(|k| av[i * 4 + k] * bv[k * 4 + j]).sum();
                    assert!((zv[i * 4 + j] - want).abs() <= 4.0 * libm::ldexp(1.0, -14));
                }
            }
        }
    }

    #[test]
    fn identity_matmul() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut mpc = Mpc::new(5, cfg());
        let x = rand_tensor(&mut rng, &[3, 3], -10.0, 10.0);
        let eye = FixedTensor::from_f64(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.], cfg()).unwrap();
        let (se, sx) = (mpc.share_input(&eye, Party::Server), mpc.share_input(&x, Party::Client));
        let z = mpc.matmul(&se, &sx).unwrap();
        for (a, b) in reconstruct(&z).unwrap().to_f64().iter().zip(x.to_f64()) {
            assert!((a - b).abs() <= cfg().ulp());
        }
    }

    #[test]
    fn open_is_one_directional() {
        let mut mpc = Mpc::new(6, cfg());
        mpc.channel_mut().record_transcripts();
        let x = FixedTensor::from_f64(&[1, 3], &[1.0, -2.0, 3.5], cfg()).unwrap();
        let s = mpc.share_input(&x, Party::Server);
        let n_client = mpc.channel().transcript(Party::Client).len();
        let n_server = mpc.channel().transcript(Party::Server).len();
        let before = mpc.snapshot();
        assert_eq!(mpc.open_to(&s, Party::Client), x);
        let d = mpc.snapshot().since(&before).total();
        assert_eq!((d.bytes, d.rounds), (24, 1));
        assert_eq!(mpc.channel().transcript(Party::Client).len(), n_client + 1);
        assert_eq!(mpc.channel().transcript(Party::Server).len(), n_server);
    }

    #[test]
    fn masked_products_cost_nothing_online() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut mpc = Mpc::new(7, cfg());
        let a = rand_tensor(&mut rng, &[3, 5], -2.0, 2.0);
        let b = rand_tensor(&mut rng, &[5, 2], -2.0, 2.0);
        let (sa, sb) = (mpc.share_input(&a, Party::Client), mpc.share_input(&b, Party::Server));
        let (ma, mb) = (mpc.prepare(&sa), mpc.prepare(&sb));
        let before = mpc.snapshot();
        let z1 = mpc.matmul_op((&ma).into(), (&mb).into()).unwrap();
        let z2 = mpc.matmul_op((&ma).into(), (&mb).into()).unwrap();
        assert_eq!(mpc.snapshot().since(&before).total().bytes, 0);
        let fresh = mpc.matmul_op((&sa).into(), (&mb).into()).unwrap();
        assert_eq!(mpc.snapshot().since(&before).total().bytes, 16 * 15);
        let want = a.matmul_fixed(&b).unwrap().to_f64();
        for z in [z1, z2, fresh] {
            for (g, w) in reconstruct(&z).unwrap().to_f64().iter().zip(&want) {
                assert!((g - w).abs() <= 5.0 * libm::ldexp(1.0, -14));
            }
        }
    }

    #[test]
    fn masked_slices_stay_consistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let mut mpc = Mpc::new(8, cfg());
        let a = rand_tensor(&mut rng, &[4, 4], -2.0, 2.0);
        let sa = mpc.share_input(&a, Party::Client);
        let mut ma = mpc.prepare(&sa).rows(0, 2).unwrap();
        let tail = mpc.prepare(&sa.rows(2, 4).unwrap());
        ma.append_rows(&tail).unwrap();
        let blk = ma.block((1, 3), (0, 4)).unwrap();
        let eye = mpc.prepare(&SharedTensor::from_public(
            &FixedTensor::from_f64(&[4, 1], &[1.0, 0.0, 0.0, 0.0], cfg()).unwrap(),
        ));
        let z = mpc.matmul_op((&blk).into(), (&eye).into()).unwrap();
        let got = reconstruct(&z).unwrap().to_f64();
        let av = a.to_f64();
        assert!((got[0] - av[4]).abs() <= cfg().ulp());
        assert!((got[1] - av[8]).abs() <= cfg().ulp());
    }

    #[test]
    fn square_matches() {
        let mut mpc = Mpc::new(9, cfg());
        let x = mpc.share_input(&FixedTensor::scalar(-1.5, cfg()).unwrap(), Party::Client);
        let before = mpc.snapshot();
        let z = mpc.square(&x).unwrap();
        let d = mpc.snapshot().since(&before).total();
        assert_eq!((d.bytes, d.rounds), (16, 1));
        assert!((decode(reconstruct(&z).unwrap().data()[0], cfg()) - 2.25).abs() <= cfg().ulp());
    }

    #[test]
    fn sign_bits_are_raw_integers() {
        let mut mpc = Mpc::new(10, cfg());
        let x = mpc.share_input(&FixedTensor::from_f64(&[1, 3], &[-5.0, 0.0, 5.0], cfg()).unwrap(), Party::Client);
        let b = mpc.sign_bits(&x).unwrap();
        let r = reconstruct(&b).unwrap();
        assert_eq!(r.data().iter().map(|v| v.0).collect::<Vec<_>>(), alloc::vec![0, 0, 1]);
        let relu = mpc.mul_raw(&x, &b).unwrap();
        assert_eq!(reconstruct(&relu).unwrap().data()[2], encode(5.0, cfg()).unwrap());
    }
}
