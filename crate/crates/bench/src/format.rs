//! `MRGW` weight files: plain models, constant-attention calibrations and
//! merged models share one little-endian container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MRGW"
//!      4     2  version (u16) = 1
//!      6     1  kind: 0 model, 1 constant attention, 2 merged model
//!      7     1  flags: bit 0 = merged FFN residual
//!      8    24  vocab, d, d_I, n_layers, n_heads, max_len (u32 each)
//!     32     1  activation: 0 ReLU, 1 quadratic
//!     33     7  reserved, zero
//!     40     8  layer-norm epsilon (f64)
//!     48     8  seed the contents were derived from (u64)
//!     56     4  tensor count (u32)
//!     60     -  tensors, in order: name length (u16), UTF-8 name,
//!               rows (u32), cols (u32), rows * cols f64 in row-major order
//! ```
//!
//! Writing is deterministic: the same contents always give the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use merge_core::merge::{ConstantAttention, MergedLayer, MergedModel};
use merge_core::nn::{Matrix, ModelConfig, ModelWeights};
use merge_core::nonlinear::ActivationKind;

use crate::error::{BenchError, Result};

pub const MAGIC: [u8; 4] = *b"MRGW";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 60;
const FLAG_FFN_RESIDUAL: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Model = 0,
    Attention = 1,
    Merged = 2,
}

impl FileKind {
    fn from_u8(b: u8) -> Result<Self> {
        match b {
            0 => Ok(FileKind::Model),
            1 => Ok(FileKind::Attention),
            2 => Ok(FileKind::Merged),
            _ => Err(BenchError::Format(format!("unknown kind {b}"))),
        }
    }
}

/// Decoded file contents with tensors kept in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub kind: FileKind,
    pub flags: u8,
    pub config: ModelConfig,
    pub seed: u64,
    pub tensors: Vec<(String, Matrix)>,
}

fn layer_name(i: usize, field: &str) -> String {
    format!("layer{i}.{field}")
}

fn head_name(i: usize, field: &str, h: usize) -> String {
    format!("layer{i}.{field}.{h}")
}

impl WeightFile {
    pub fn from_model(w: &ModelWeights, seed: u64) -> Self {
        let tensors = w.named_tensors().into_iter().map(|(n, m)| (n, m.clone())).collect();
        Self { kind: FileKind::Model, flags: 0, config: w.config, seed, tensors }
    }

    pub fn from_attention(c: &ConstantAttention, config: ModelConfig, seed: u64) -> Self {
        let mut tensors = Vec::new();
        for (i, layer) in c.maps.iter().enumerate() {
            for (h, m) in layer.iter().enumerate() {
                tensors.push((head_name(i, "c", h), m.clone()));
            }
        }
        Self { kind: FileKind::Attention, flags: 0, config, seed, tensors }
    }

    pub fn from_merged(m: &MergedModel, seed: u64) -> Self {
        let mut tensors = vec![
            ("embedding".to_string(), m.embedding.clone()),
            ("positional".to_string(), m.positional.clone()),
        ];
        for (i, l) in m.layers.iter().enumerate() {
            for (field, list) in [("m_u", &l.m_u), ("c", &l.c), ("m_x", &l.m_x)] {
                for (h, t) in list.iter().enumerate() {
                    tensors.push((head_name(i, field, h), t.clone()));
                }
            }
            for (field, t) in [
                ("r", &l.r),
                ("b_mu", &l.b_mu),
                ("w_o", &l.w_o),
                ("b_o", &l.b_o),
                ("gamma2", &l.gamma2),
                ("beta2", &l.beta2),
                ("gamma1", &l.gamma1),
                ("b_x", &l.b_x),
            ] {
                tensors.push((layer_name(i, field), t.clone()));
            }
        }
        tensors.push(("w_cls".to_string(), m.w_cls.clone()));
        let flags = if m.ffn_residual { FLAG_FFN_RESIDUAL } else { 0 };
        Self { kind: FileKind::Merged, flags, config: m.config, seed, tensors }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(HEADER_LEN + self.tensors.iter().map(|(_, m)| 8 * m.data().len() + 32).sum::<usize>());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(self.flags);
        for v in [c.vocab_size, c.model_dim, c.intermediate_dim, c.n_layers, c.n_heads, c.max_len] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(match c.activation {
            ActivationKind::Relu => 0,
            ActivationKind::Quad => 1,
        });
        out.extend_from_slice(&[0; 7]);
        out.extend_from_slice(&c.ln_eps.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(BenchError::Format("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(BenchError::Format(format!("unsupported version {version}")));
        }
        let kind = FileKind::from_u8(r.u8()?)?;
        let flags = r.u8()?;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let activation = match r.u8()? {
            0 => ActivationKind::Relu,
            1 => ActivationKind::Quad,
            a => return Err(BenchError::Format(format!("unknown activation {a}"))),
        };
        r.take(7)?;
        let ln_eps = r.f64()?;
        let seed = r.u64()?;
        let config = ModelConfig {
            vocab_size: dims[0],
            model_dim: dims[1],
            intermediate_dim: dims[2],
            n_layers: dims[3],
            n_heads: dims[4],
            max_len: dims[5],
            activation,
            ln_eps,
        };
        config.validate()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| BenchError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            let n = rows.checked_mul(cols).filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()));
            let n = n.ok_or_else(|| BenchError::Format(format!("tensor {name} runs past the end of the file")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            tensors.push((name, Matrix::new(rows, cols, data)?));
        }
        if r.remaining() != 0 {
            return Err(BenchError::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { kind, flags, config, seed, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(BenchError::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(BenchError::io(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }

    fn expect(&self, kind: FileKind) -> Result<()> {
        if self.kind == kind {
            return Ok(());
        }
        if self.kind == FileKind::Merged && kind == FileKind::Model {
            return Err(merge_core::Error::AlreadyMerged.into());
        }
        Err(BenchError::Format(format!("expected a {kind:?} file, found {:?}", self.kind)))
    }

    fn lookup(&self) -> BTreeMap<&str, &Matrix> {
        self.tensors.iter().map(|(n, m)| (n.as_str(), m)).collect()
    }

    pub fn into_model(self) -> Result<ModelWeights> {
        self.expect(FileKind::Model)?;
        let map = self.lookup();
        Ok(ModelWeights::from_named(self.config, |n| map.get(n).copied())?)
    }

    pub fn into_attention(self) -> Result<ConstantAttention> {
        self.expect(FileKind::Attention)?;
        let map = self.lookup();
        let c = &self.config;
        let mut maps = Vec::with_capacity(c.n_layers);
        for i in 0..c.n_layers {
            let layer = (0..c.n_heads)
                .map(|h| get(&map, &head_name(i, "c", h), (c.max_len, c.max_len)))
                .collect::<Result<Vec<_>>>()?;
            maps.push(layer);
        }
        Ok(ConstantAttention { max_len: c.max_len, maps })
    }

    pub fn into_merged(self) -> Result<MergedModel> {
        self.expect(FileKind::Merged)?;
        let map = self.lookup();
        let c = self.config;
        let (d, di, n) = (c.model_dim, c.intermediate_dim, c.max_len);
        let heads = |i: usize, field: &str, shape: (usize, usize)| -> Result<Vec<Matrix>> {
            (0..c.n_heads).map(|h| get(&map, &head_name(i, field, h), shape)).collect()
        };
        let mut layers = Vec::with_capacity(c.n_layers);
        for i in 0..c.n_layers {
            let one = |field: &str, shape| get(&map, &layer_name(i, field), shape);
            layers.push(MergedLayer {
                m_u: heads(i, "m_u", (d, di))?,
                r: one("r", (d, di))?,
                b_mu: one("b_mu", (1, di))?,
                w_o: one("w_o", (di, d))?,
                b_o: one("b_o", (1, d))?,
                gamma2: one("gamma2", (1, d))?,
                beta2: one("beta2", (1, d))?,
                c: heads(i, "c", (n, n))?,
                m_x: heads(i, "m_x", (d, d))?,
                gamma1: one("gamma1", (1, d))?,
                b_x: one("b_x", (1, d))?,
            });
        }
        Ok(MergedModel {
            config: c,
            embedding: get(&map, "embedding", (c.vocab_size, d))?,
            positional: get(&map, "positional", (n, d))?,
            layers,
            w_cls: get(&map, "w_cls", (d, c.vocab_size))?,
            ffn_residual: self.flags & FLAG_FFN_RESIDUAL != 0,
        })
    }
}

fn get(map: &BTreeMap<&str, &Matrix>, name: &str, shape: (usize, usize)) -> Result<Matrix> {
    let m = map.get(name).ok_or_else(|| BenchError::Format(format!("missing tensor {name}")))?;
    if m.shape() != shape {
        return Err(merge_core::Error::Shape(format!("{name} is {:?}, expected {shape:?}", m.shape())).into());
    }
    Ok((*m).clone())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(BenchError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}
