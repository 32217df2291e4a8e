//! Little-endian binary formats with a trailing CRC32.
//!
//! Series (`TTS1`):
//!
//! ```text
//! magic[4] version:u32 field:u8 order:u8 dims:u32[order] T:u64
//! payload: T * prod(dims) scalars as f64 (complex: re, im)
//! has_timestamps:u8 [timestamps: f64[T]]
//! crc32:u32 over every preceding byte
//! ```
//!
//! Checkpoints (`TPA1`) share the header up to `T` and then carry the
//! hyperparameters, optional window config, AR parameters, factors, cores
//! and retained history.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use super::{AnyTts, TtsRecord};
use crate::aaw::AawConfig;
use crate::engine::{CoreUpdateMode, Hyperparams, PredictorState};
use crate::error::{Result, TopaError};
use crate::matrix::DenseMatrix;
use crate::regression::{ArParams, ArSpec};
use crate::scalar::{Field, Scalar};
use crate::tensor::{DenseTensor, MAX_ORDER};

pub const TTS_MAGIC: [u8; 4] = *b"TTS1";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TPA1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| TopaError::Format(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn scalars<S: Scalar>(&mut self, xs: &[S]) {
        self.buf.reserve(xs.len() * 8 * S::FIELD.words());
        for &x in xs {
            self.f64(x.re());
            if S::FIELD == Field::Complex {
                self.f64(x.im());
            }
        }
    }

    fn header(&mut self, magic: [u8; 4], field: Field, dims: &[usize], t: usize) -> Result<()> {
        self.buf.extend_from_slice(&magic);
        self.u32(FORMAT_VERSION as usize)?;
        self.u8(field.tag());
        self.u8(dims.len() as u8);
        for &d in dims {
            self.u32(d)?;
        }
        self.u64(t);
        Ok(())
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(TopaError::Format(format!(
                "truncated input: need {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| TopaError::Format(format!("count {v} overflows")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Reads `n` scalars after checking that enough bytes remain.
    fn scalars<S: Scalar>(&mut self, n: usize) -> Result<Vec<S>> {
        let bytes = n
            .checked_mul(8 * S::FIELD.words())
            .ok_or_else(|| TopaError::Format("payload size overflows".into()))?;
        let raw = self.take(bytes)?;
        let words = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        Ok(match S::FIELD {
            Field::Real => words.map(|re| S::from_parts(re, 0.0)).collect(),
            Field::Complex => {
                let v: Vec<f64> = words.collect();
                v.chunks_exact(2).map(|c| S::from_parts(c[0], c[1])).collect()
            }
        })
    }

    fn dims(&mut self, order: usize) -> Result<(Vec<usize>, usize)> {
        let dims = (0..order).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(TopaError::Format(format!("zero dimension in {dims:?}")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TopaError::Format(format!("dimension overflow in {dims:?}")))?;
        Ok((dims, n))
    }

    fn tensors<S: Scalar>(&mut self, count: usize, dims: &[usize], size: usize) -> Result<Vec<DenseTensor<S>>> {
        let total = count
            .checked_mul(size)
            .and_then(|n| n.checked_mul(8 * S::FIELD.words()))
            .ok_or_else(|| TopaError::Format("payload size overflows".into()))?;
        if total > self.remaining() {
            return Err(TopaError::Format(format!(
                "truncated input: payload needs {total} bytes, {} left",
                self.remaining()
            )));
        }
        (0..count)
            .map(|_| DenseTensor::new(dims.to_vec(), self.scalars(size)?))
            .collect()
    }

    fn matrix<S: Scalar>(&mut self, rows: usize, cols: usize) -> Result<DenseMatrix<S>> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| TopaError::Format("matrix size overflows".into()))?;
        DenseMatrix::new(rows, cols, self.scalars(n)?)
    }
}

struct Header {
    field: Field,
    dims: Vec<usize>,
    size: usize,
    t: usize,
}

fn read_header(r: &mut Reader<'_>, magic: [u8; 4]) -> Result<Header> {
    let got = r.take(4)?;
    if got != magic {
        return Err(TopaError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(TopaError::Format(format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    let field = Field::from_tag(tag).ok_or_else(|| TopaError::Format(format!("unknown field tag {tag}")))?;
    let order = r.u8()? as usize;
    if order == 0 || order > MAX_ORDER {
        return Err(TopaError::Format(format!("unsupported order {order}")));
    }
    let (dims, size) = r.dims(order)?;
    let t = r.u64()?;
    Ok(Header { field, dims, size, t })
}

/// Checks that exactly the CRC trailer remains and that it matches.
fn verify_crc(r: &mut Reader<'_>) -> Result<()> {
    let body_end = r.pos;
    let stored = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if r.remaining() != 0 {
        return Err(TopaError::Format(format!("{} trailing bytes", r.remaining())));
    }
    let computed = crc32fast::hash(&r.buf[..body_end]);
    if stored != computed {
        return Err(TopaError::Checksum { stored, computed });
    }
    Ok(())
}

pub fn encode_tts<S: Scalar>(rec: &TtsRecord<S>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.header(TTS_MAGIC, S::FIELD, rec.dims(), rec.len())?;
    for x in rec.tensors() {
        w.scalars(x.data());
    }
    match rec.timestamps() {
        Some(ts) => {
            w.u8(1);
            ts.iter().for_each(|&t| w.f64(t));
        }
        None => w.u8(0),
    }
    Ok(w.finish())
}

fn decode_tts_body<S: Scalar>(r: &mut Reader<'_>, h: &Header) -> Result<TtsRecord<S>> {
    let tensors = r.tensors::<S>(h.t, &h.dims, h.size)?;
    let timestamps = match r.u8()? {
        0 => None,
        1 => Some((0..h.t).map(|_| r.f64()).collect::<Result<Vec<_>>>()?),
        other => return Err(TopaError::Format(format!("bad timestamp flag {other}"))),
    };
    verify_crc(r)?;
    TtsRecord::new(h.dims.clone(), tensors, timestamps)
}

pub fn decode_tts(bytes: &[u8]) -> Result<AnyTts> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let h = read_header(&mut r, TTS_MAGIC)?;
    Ok(match h.field {
        Field::Real => AnyTts::Real(decode_tts_body(&mut r, &h)?),
        Field::Complex => AnyTts::Complex(decode_tts_body(&mut r, &h)?),
    })
}

pub fn write_tts<S: Scalar>(path: impl AsRef<Path>, rec: &TtsRecord<S>) -> Result<()> {
    fs::write(path, encode_tts(rec)?)?;
    Ok(())
}

pub fn read_tts(path: impl AsRef<Path>) -> Result<AnyTts> {
    decode_tts(&fs::read(path)?)
}

/// Reads a record and insists on the field `S`.
pub fn read_tts_as<S: Scalar>(path: impl AsRef<Path>) -> Result<TtsRecord<S>> {
    let bytes = fs::read(path)?;
    let mut r = Reader { buf: &bytes, pos: 0 };
    let h = read_header(&mut r, TTS_MAGIC)?;
    if h.field != S::FIELD {
        return Err(TopaError::Format(format!(
            "file holds {:?} data, expected {:?}",
            h.field,
            S::FIELD
        )));
    }
    decode_tts_body(&mut r, &h)
}

/// Everything needed to resume a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<S> {
    pub hyper: Hyperparams,
    pub aaw: Option<AawConfig>,
    pub state: PredictorState<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyCheckpoint {
    Real(Checkpoint<f64>),
    Complex(Checkpoint<Complex64>),
}

pub fn encode_checkpoint<S: Scalar>(ck: &Checkpoint<S>) -> Result<Vec<u8>> {
    let st = &ck.state;
    let h = &ck.hyper;
    st.check_invariants(h)?;
    let mut w = Writer::default();
    w.header(CHECKPOINT_MAGIC, S::FIELD, st.data_dims(), st.t)?;
    for &r in &h.ranks {
        w.u32(r)?;
    }
    w.u32(h.spec.p)?;
    w.u32(h.spec.d)?;
    w.f64(h.varphi);
    w.f64(h.lambda);
    w.f64(h.eps);
    w.u64(h.max_iter_stage1);
    w.u64(h.iters_online);
    w.u8(h.core_update_mode.tag());
    match &ck.aaw {
        Some(c) => {
            w.u8(1);
            w.u64(c.tau);
            w.f64(c.alpha_damp);
            w.f64(c.beta);
        }
        None => w.u8(0),
    }
    w.u64(st.active_start);
    w.u64(st.len());
    w.f64(st.objective);
    w.scalars(&st.params.alpha);
    for u in &st.us {
        w.scalars(u.data());
    }
    for g in &st.cores {
        w.scalars(g.data());
    }
    for x in &st.history {
        w.scalars(x.data());
    }
    Ok(w.finish())
}

fn decode_checkpoint_body<S: Scalar>(r: &mut Reader<'_>, hd: &Header) -> Result<Checkpoint<S>> {
    let (ranks, core_size) = r.dims(hd.dims.len())?;
    let spec = ArSpec {
        p: r.u32()?,
        d: r.u32()?,
    };
    let varphi = r.f64()?;
    let lambda = r.f64()?;
    let eps = r.f64()?;
    let max_iter_stage1 = r.u64()?;
    let iters_online = r.u64()?;
    let tag = r.u8()?;
    let core_update_mode =
        CoreUpdateMode::from_tag(tag).ok_or_else(|| TopaError::Format(format!("unknown update mode {tag}")))?;
    let hyper = Hyperparams {
        ranks: ranks.clone(),
        spec,
        varphi,
        lambda,
        eps,
        max_iter_stage1,
        iters_online,
        core_update_mode,
    };
    let aaw = match r.u8()? {
        0 => None,
        1 => Some(AawConfig {
            tau: r.u64()?,
            alpha_damp: r.f64()?,
            beta: r.f64()?,
        }),
        other => return Err(TopaError::Format(format!("bad window flag {other}"))),
    };
    let active_start = r.u64()?;
    let n = r.u64()?;
    let objective = r.f64()?;
    let alpha = r.scalars::<S>(spec.p)?;
    let us = hd
        .dims
        .iter()
        .zip(&ranks)
        .map(|(&i, &k)| r.matrix::<S>(i, k))
        .collect::<Result<Vec<_>>>()?;
    let cores = r.tensors::<S>(n, &ranks, core_size)?;
    let history = r.tensors::<S>(n, &hd.dims, hd.size)?;
    verify_crc(r)?;
    let state = PredictorState {
        us,
        cores,
        params: ArParams { alpha },
        history,
        active_start,
        t: hd.t,
        objective,
        initial_objective: objective,
        trace: Vec::new(),
    };
    state
        .check_invariants(&hyper)
        .map_err(|e| TopaError::Format(format!("inconsistent checkpoint: {e}")))?;
    if n > hd.t {
        return Err(TopaError::Format(format!("{n} retained entries exceed T = {}", hd.t)));
    }
    Ok(Checkpoint { hyper, aaw, state })
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<AnyCheckpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let h = read_header(&mut r, CHECKPOINT_MAGIC)?;
    Ok(match h.field {
        Field::Real => AnyCheckpoint::Real(decode_checkpoint_body(&mut r, &h)?),
        Field::Complex => AnyCheckpoint::Complex(decode_checkpoint_body(&mut r, &h)?),
    })
}

pub fn write_checkpoint<S: Scalar>(path: impl AsRef<Path>, ck: &Checkpoint<S>) -> Result<()> {
    fs::write(path, encode_checkpoint(ck)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<AnyCheckpoint> {
    decode_checkpoint(&fs::read(path)?)
}
