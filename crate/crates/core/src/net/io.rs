//! Binary model container.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! "ARCA" | version u32
//! config: v d filters kernel lstm_units attn_dim classes epochs batch seed (u64 each),
//!         dropout_p lr (f64 each)
//! scenarios: count u32, ids u32 ...
//! tensors: count u32, then per tensor:
//!          name_len u32, name bytes, rank u32, dims u64 ..., values f64 ... (row-major)
//! ```

use std::io::{Read, Write};

use super::config::NetConfig;
use super::model::{init_params, ModelParams, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::types::ScenarioSet;

pub const MAGIC: &[u8; 4] = b"ARCA";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(mut w: W, params: &ModelParams, scenarios: &ScenarioSet) -> Result<()> {
    let c = &params.cfg;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for n in [c.v, c.d, c.filters, c.kernel, c.lstm_units, c.attn_dim, c.classes, c.epochs, c.batch] {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&c.seed.to_le_bytes())?;
    w.write_all(&c.dropout_p.to_le_bytes())?;
    w.write_all(&c.lr.to_le_bytes())?;
    w.write_all(&(scenarios.len() as u32).to_le_bytes())?;
    for id in scenarios.ids() {
        w.write_all(&id.to_le_bytes())?;
    }
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for d in &t.dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for x in t.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Load("model file is truncated".into()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Load("count overflows".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_model<R: Read>(r: R) -> Result<(ModelParams, ScenarioSet)> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Load("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Load(format!("unsupported model format version {version}")));
    }
    let cfg = NetConfig {
        v: r.usize()?,
        d: r.usize()?,
        filters: r.usize()?,
        kernel: r.usize()?,
        lstm_units: r.usize()?,
        attn_dim: r.usize()?,
        classes: r.usize()?,
        epochs: r.usize()?,
        batch: r.usize()?,
        seed: r.u64()?,
        dropout_p: r.f64()?,
        lr: r.f64()?,
    };
    cfg.validate().map_err(|e| Error::Load(format!("stored config invalid: {e}")))?;
    let n_ids = r.u32()? as usize;
    let ids = (0..n_ids).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let scenarios = ScenarioSet::new(ids).map_err(|e| Error::Load(e.to_string()))?;
    if scenarios.len() != cfg.classes || scenarios.len() != n_ids {
        return Err(Error::Load("scenario list does not match class count".into()));
    }

    // allocation is bounded by the stored config, not by untrusted dims
    let mut params = init_params(&NetConfig { seed: 0, ..cfg.clone() })?;
    params.cfg = cfg;
    let expected: Vec<(Vec<usize>, usize)> = params.tensors().iter().map(|t| (t.dims.clone(), t.data.len())).collect();
    let count = r.u32()? as usize;
    if count != TENSOR_NAMES.len() {
        return Err(Error::Load(format!("expected {} tensors, found {count}", TENSOR_NAMES.len())));
    }
    let mut slots = params.tensors_mut();
    for (i, (name, slot)) in slots.iter_mut().enumerate() {
        let name_len = r.u32()? as usize;
        if name_len > 256 {
            return Err(Error::Load("tensor name too long".into()));
        }
        let mut raw = vec![0u8; name_len];
        r.inner
            .read_exact(&mut raw)
            .map_err(|_| Error::Load("model file is truncated".into()))?;
        if raw != name.as_bytes() {
            return Err(Error::Load(format!(
                "expected tensor {name:?}, found {:?}",
                String::from_utf8_lossy(&raw)
            )));
        }
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if dims != expected[i].0 {
            return Err(Error::Load(format!("tensor {name} has dims {dims:?}, expected {:?}", expected[i].0)));
        }
        for x in slot.iter_mut() {
            *x = r.f64()?;
        }
    }
    drop(slots);
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::Load("trailing bytes after last tensor".into()));
    }
    Ok((params, scenarios))
}
