//! The `CRLKIT01` binary container.
//!
//! Layout: the 8-byte magic `CRLKIT01`, a little-endian `u32` kind tag, the
//! kind-specific payload, then a little-endian CRC-32 of everything between the
//! magic and the checksum. Integers are `u32` LE, reals `f64` LE, matrices
//! row-major.
//!
//! A shallow CorrNet payload is `k, d1, d2, f_id, g_id, loss_id` followed by
//! the blocks `W, V, b, W', V', b'`. Activation ids: identity 0, sigmoid 1,
//! tanh 2. Loss ids: squared 0, cross-entropy 1.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CorrNetParams, Layer, ReconLoss};
use crate::numerics::{Activation, DenseMatrix, DenseVector};

pub const MAGIC: &[u8; 8] = b"CRLKIT01";

/// What a container holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    CorrNet = 1,
    DeepCorrNet = 2,
    Cca = 3,
}

impl ContainerKind {
    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(Self::CorrNet),
            2 => Ok(Self::DeepCorrNet),
            3 => Ok(Self::Cca),
            _ => Err(Error::Format(format!("unknown container kind {tag}"))),
        }
    }
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(kind: ContainerKind) -> Self {
        let mut buf = Vec::with_capacity(1 << 16);
        buf.extend_from_slice(MAGIC);
        let mut w = Self { buf };
        w.u32(kind as u32);
        w
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn usize(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub(crate) fn layer(&mut self, l: &Layer) {
        self.usize(l.output_dim());
        self.usize(l.input_dim());
        self.u32(l.act.id());
        self.f64s(l.weight.as_slice());
        self.f64s(l.bias.as_slice());
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf[MAGIC.len()..]);
        self.u32(crc);
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Verifies magic, checksum and kind; positions the cursor at the payload.
    pub(crate) fn open(bytes: &'a [u8], expected: ContainerKind) -> Result<Self> {
        let kind = peek_kind(bytes)?;
        if kind != expected {
            return Err(Error::Format(format!(
                "container holds {kind:?}, expected {expected:?}"
            )));
        }
        let body_end = bytes.len() - 4;
        Ok(Self {
            data: &bytes[..body_end],
            pos: MAGIC.len() + 4,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "container payload ends at byte {}",
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Format("block too large".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix> {
        DenseMatrix::from_vec(rows, cols, self.f64s(rows * cols)?)
    }

    pub(crate) fn vector(&mut self, n: usize) -> Result<DenseVector> {
        DenseVector::from_vec(self.f64s(n)?)
    }

    pub(crate) fn activation(&mut self) -> Result<Activation> {
        let id = self.u32()?;
        Activation::from_id(id).ok_or_else(|| Error::Format(format!("unknown activation id {id}")))
    }

    pub(crate) fn layer(&mut self) -> Result<Layer> {
        let out = self.usize()?;
        let inp = self.usize()?;
        let act = self.activation()?;
        let weight = self.matrix(out, inp)?;
        let bias = self.vector(out)?;
        Layer::new(weight, bias, act)
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Checks magic and CRC and returns the container kind.
pub fn peek_kind(bytes: &[u8]) -> Result<ContainerKind> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated("container shorter than its magic".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..MAGIC.len()]).into_owned(),
        });
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Truncated("container has no payload".into()));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[MAGIC.len()..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    ContainerKind::from_tag(u32::from_le_bytes(
        bytes[8..12].try_into().expect("4 bytes"),
    ))
}

pub(crate) fn write_corrnet_body(w: &mut Writer, p: &CorrNetParams) {
    w.usize(p.hidden_dim());
    w.usize(p.x_dim());
    w.usize(p.y_dim());
    w.u32(p.hidden_act.id());
    w.u32(p.output_act.id());
    w.u32(p.recon_loss.id());
    for b in p.blocks() {
        w.f64s(b);
    }
}

pub(crate) fn read_corrnet_body(r: &mut Reader<'_>) -> Result<CorrNetParams> {
    let k = r.usize()?;
    let d1 = r.usize()?;
    let d2 = r.usize()?;
    let hidden_act = r.activation()?;
    let output_act = r.activation()?;
    let loss_id = r.u32()?;
    let recon_loss = ReconLoss::from_id(loss_id)
        .ok_or_else(|| Error::Format(format!("unknown loss id {loss_id}")))?;
    if k == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::Format(format!(
            "zero dimension in header (k={k}, d1={d1}, d2={d2})"
        )));
    }
    let p = CorrNetParams {
        enc_x: r.matrix(k, d1)?,
        enc_y: r.matrix(k, d2)?,
        enc_bias: r.vector(k)?,
        dec_x: r.matrix(d1, k)?,
        dec_y: r.matrix(d2, k)?,
        dec_bias: r.vector(d1 + d2)?,
        hidden_act,
        output_act,
        recon_loss,
    };
    p.validate()?;
    Ok(p)
}

pub fn corrnet_to_bytes(p: &CorrNetParams) -> Vec<u8> {
    let mut w = Writer::new(ContainerKind::CorrNet);
    write_corrnet_body(&mut w, p);
    w.finish()
}

pub fn corrnet_from_bytes(bytes: &[u8]) -> Result<CorrNetParams> {
    let mut r = Reader::open(bytes, ContainerKind::CorrNet)?;
    let p = read_corrnet_body(&mut r)?;
    r.finish()?;
    Ok(p)
}

pub fn save_corrnet(p: &CorrNetParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, corrnet_to_bytes(p))?;
    Ok(())
}

pub fn load_corrnet(path: impl AsRef<Path>) -> Result<CorrNetParams> {
    corrnet_from_bytes(&fs::read(path)?)
}
