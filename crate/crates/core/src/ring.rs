//! Fixed-point arithmetic over Z/2^64.
//!
//! Reals are embedded as `round(x * 2^f)` in two's complement. Addition is
//! exact ring addition; a product carries `2f` fractional bits and is brought
//! back to `f` bits with an arithmetic right shift.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::{shape_err, Error, Result};

/// An element of the ring of integers modulo 2^64.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct Ring(pub u64);

impl Ring {
    pub const ZERO: Ring = Ring(0);

    /// Two's-complement reading of the element.
    #[inline]
    pub fn signed(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn from_signed(v: i64) -> Ring {
        Ring(v as u64)
    }

    /// Arithmetic right shift of the signed reading.
    #[inline]
    pub fn shr_arith(self, bits: u32) -> Ring {
        Ring::from_signed(self.signed() >> bits)
    }
}

impl fmt::Debug for Ring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ring({})", self.0)
    }
}

impl Add for Ring {
    type Output = Ring;
    #[inline]
    fn add(self, rhs: Ring) -> Ring {
        Ring(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for Ring {
    type Output = Ring;
    #[inline]
    fn sub(self, rhs: Ring) -> Ring {
        Ring(self.0.wrapping_sub(rhs.0))
    }
}

impl Neg for Ring {
    type Output = Ring;
    #[inline]
    fn neg(self) -> Ring {
        Ring(self.0.wrapping_neg())
    }
}

/// Raw ring product (no fixed-point rescale).
impl Mul for Ring {
    type Output = Ring;
    #[inline]
    fn mul(self, rhs: Ring) -> Ring {
        Ring(self.0.wrapping_mul(rhs.0))
    }
}

impl AddAssign for Ring {
    #[inline]
    fn add_assign(&mut self, rhs: Ring) {
        *self = *self + rhs;
    }
}

impl SubAssign for Ring {
    #[inline]
    fn sub_assign(&mut self, rhs: Ring) {
        *self = *self - rhs;
    }
}

/// Number of fractional bits used by the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedConfig {
    frac_bits: u32,
}

impl FixedConfig {
    pub const DEFAULT_FRAC_BITS: u32 = 16;

    pub fn new(frac_bits: u32) -> Result<Self> {
        if !(1..=32).contains(&frac_bits) {
            return Err(Error::Config(alloc::format!(
                "frac_bits must lie in 1..=32, got {frac_bits}"
            )));
        }
        Ok(Self { frac_bits })
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Weight of one unit in the last place.
    #[inline]
    pub fn ulp(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Exclusive bound on |x| accepted by [`encode`].
    #[inline]
    pub fn max_magnitude(&self) -> f64 {
        libm::ldexp(1.0, 63 - self.frac_bits as i32)
    }
}

impl Default for FixedConfig {
    fn default() -> Self {
        Self { frac_bits: Self::DEFAULT_FRAC_BITS }
    }
}

/// Encodes a real as `round(x * 2^f)` (half away from zero) modulo 2^64.
pub fn encode(x: f64, cfg: FixedConfig) -> Result<Ring> {
    if !x.is_finite() || libm::fabs(x) >= cfg.max_magnitude() {
        return Err(Error::EncodingRange { value: x, frac_bits: cfg.frac_bits });
    }
    Ok(Ring::from_signed(libm::round(x * cfg.scale()) as i64))
}

pub fn decode(r: Ring, cfg: FixedConfig) -> f64 {
    r.signed() as f64 / cfg.scale()
}

#[inline]
pub fn ring_add(a: Ring, b: Ring) -> Ring {
    a + b
}

#[inline]
pub fn ring_sub(a: Ring, b: Ring) -> Ring {
    a - b
}

#[inline]
pub fn ring_neg(a: Ring) -> Ring {
    -a
}

/// Fixed-point product: full-width signed product shifted right by `f`.
pub fn mul_trunc(a: Ring, b: Ring, cfg: FixedConfig) -> Ring {
    let wide = a.signed() as i128 * b.signed() as i128;
    Ring::from_signed((wide >> cfg.frac_bits) as i64)
}

/// Dense row-major tensor of ring elements in fixed-point encoding.
#[derive(Clone, PartialEq, Eq)]
pub struct FixedTensor {
    shape: Vec<usize>,
    data: Vec<Ring>,
    cfg: FixedConfig,
}

impl fmt::Debug for FixedTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FixedTensor")
            .field("shape", &self.shape)
            .field("frac_bits", &self.cfg.frac_bits)
            .finish_non_exhaustive()
    }
}

impl FixedTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Ring>, cfg: FixedConfig) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(alloc::format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data, cfg })
    }

    pub fn zeros(shape: &[usize], cfg: FixedConfig) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![Ring::ZERO; n], cfg }
    }

    pub fn from_f64(shape: &[usize], values: &[f64], cfg: FixedConfig) -> Result<Self> {
        let data = values.iter().map(|&v| encode(v, cfg)).collect::<Result<Vec<_>>>()?;
        Self::new(shape.to_vec(), data, cfg)
    }

    /// A `1 x 1` tensor holding one encoded scalar.
    pub fn scalar(x: f64, cfg: FixedConfig) -> Result<Self> {
        Self::from_f64(&[1, 1], &[x], cfg)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&r| decode(r, self.cfg)).collect()
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[Ring] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Ring] {
        &mut self.data
    }

    #[inline]
    pub fn config(&self) -> FixedConfig {
        self.cfg
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a two-dimensional tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(shape_err(alloc::format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err(alloc::format!(
                "cannot reshape {:?} into {:?}",
                self.shape,
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub(crate) fn with_data(&self, data: Vec<Ring>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { shape: self.shape.clone(), data, cfg: self.cfg }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<Ring>, cfg: FixedConfig) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data, cfg }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(alloc::format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn neg(&self) -> Self {
        self.map(|a| -a)
    }

    /// Elementwise raw ring product (scale `2f`).
    pub fn hadamard_raw(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    /// Elementwise fixed-point product, truncated per element.
    pub fn hadamard_fixed(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let cfg = self.cfg;
        Ok(self.zip_map(other, |a, b| mul_trunc(a, b, cfg)))
    }

    /// Raw ring matrix product (scale `2f`, wrapping).
    pub fn matmul_raw(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(shape_err(alloc::format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![Ring::ZERO; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a.0 == 0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { shape: vec![m, n], data: out, cfg: self.cfg })
    }

    /// Plaintext fixed-point matrix product: exact wide accumulation, then one
    /// arithmetic shift per output element.
    pub fn matmul_fixed(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(shape_err(alloc::format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let f = self.cfg.frac_bits;
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let acc: i128 = (0..k)
                    .map(|p| self.data[i * k + p].signed() as i128 * other.data[p * n + j].signed() as i128)
                    .sum();
                out.push(Ring::from_signed((acc >> f) as i64));
            }
        }
        Ok(Self { shape: vec![m, n], data: out, cfg: self.cfg })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![Ring::ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self { shape: vec![c, r], data: out, cfg: self.cfg })
    }

    /// Rows `start..end` of a matrix.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if start > end || end > r {
            return Err(shape_err(alloc::format!("row range {start}..{end} of {r}")));
        }
        Ok(Self {
            shape: vec![end - start, c],
            data: self.data[start * c..end * c].to_vec(),
            cfg: self.cfg,
        })
    }

    /// Columns `start..end` of a matrix.
    pub fn cols(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if start > end || end > c {
            return Err(shape_err(alloc::format!("column range {start}..{end} of {c}")));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&self.data[i * c + start..i * c + end]);
        }
        Ok(Self { shape: vec![r, w], data: out, cfg: self.cfg })
    }

    /// The `rows x cols` leading block.
    pub fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> Result<Self> {
        self.rows(rows.0, rows.1)?.cols(cols.0, cols.1)
    }

    /// Stacks matrices vertically.
    pub fn vstack(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| shape_err("vstack of nothing"))?;
        let (_, c) = first.dims2()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let (r, pc) = p.dims2()?;
            if pc != c {
                return Err(shape_err(alloc::format!("vstack width {pc} vs {c}")));
            }
            rows += r;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { shape: vec![rows, c], data, cfg: first.cfg })
    }

    /// Concatenates matrices horizontally.
    pub fn hstack(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| shape_err("hstack of nothing"))?;
        let (r, _) = first.dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pr != r {
                return Err(shape_err(alloc::format!("hstack height {pr} vs {r}")));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&p.data[i * w..(i + 1) * w]);
            }
        }
        Ok(Self { shape: vec![r, total], data, cfg: first.cfg })
    }

    /// Repeats a `1 x c` row `rows` times.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if r != 1 {
            return Err(shape_err(alloc::format!("broadcast_rows needs one row, got {r}")));
        }
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(&self.data);
        }
        Ok(Self { shape: vec![rows, c], data, cfg: self.cfg })
    }

    /// Repeats each entry of an `r x 1` column across `cols` columns.
    pub fn broadcast_cols(&self, cols: usize) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if c != 1 {
            return Err(shape_err(alloc::format!("broadcast_cols needs one column, got {c}")));
        }
        let mut data = Vec::with_capacity(r * cols);
        for &v in &self.data {
            data.extend(core::iter::repeat_n(v, cols));
        }
        Ok(Self { shape: vec![r, cols], data, cfg: self.cfg })
    }

    /// Sum of each row as an `r x 1` column.
    pub fn row_sums(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let data = (0..r)
            .map(|i| self.data[i * c..(i + 1) * c].iter().fold(Ring::ZERO, |acc, &v| acc + v))
            .collect();
        Ok(Self { shape: vec![r, 1], data, cfg: self.cfg })
    }

    /// Per-element arithmetic shift of the signed reading.
    pub fn shr_arith(&self, bits: u32) -> Self {
        self.map(|a| a.shr_arith(bits))
    }

    pub(crate) fn map(&self, f: impl Fn(Ring) -> Ring) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&a| f(a)).collect(), cfg: self.cfg }
    }

    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(Ring, Ring) -> Ring) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            cfg: self.cfg,
        }
    }
}
