use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{ParamId, ParameterStore};
use super::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GLUECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Serialize parameters and Adam state. Floats are stored as raw
/// little-endian bits so a round trip is exact.
pub fn write_store<W: Write>(w: &mut W, store: &ParameterStore) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let count = store.len() * 3 + 1;
    w.write_all(&(count as u32).to_le_bytes())?;
    for id in store.ids() {
        put_tensor(w, store.name(id), store.value(id))?;
    }
    for id in store.ids() {
        let (m, v) = store.moments(id);
        put_tensor(w, &format!("adam/m/{}", store.name(id)), m)?;
        put_tensor(w, &format!("adam/v/{}", store.name(id)), v)?;
    }
    put_tensor(w, "adam/step", &Tensor::scalar(store.step_count() as f64))?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor)> {
    let name_len = get_u32(r)? as usize;
    if name_len > 4096 {
        return Err(Error::Checkpoint(format!("name length {name_len}")));
    }
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let ndim = get_u32(r)? as usize;
    if ndim > 8 {
        return Err(Error::Checkpoint(format!("{name}: {ndim} dimensions")));
    }
    let shape = (0..ndim).map(|_| get_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(f64::from_bits(get_u64(r)?));
    }
    Ok((name, Tensor::new(shape, data)?))
}

/// Load a checkpoint into `store`, whose layout must match.
pub fn read_store<R: Read>(r: &mut R, store: &mut ParameterStore) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut entries = std::collections::HashMap::with_capacity(count);
    for _ in 0..count {
        let (name, t) = get_tensor(r)?;
        entries.insert(name, t);
    }
    let take = |entries: &mut std::collections::HashMap<String, Tensor>,
                name: &str,
                like: &Tensor|
     -> Result<Tensor> {
        let t = entries
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))?;
        if t.shape() != like.shape() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?}, expected {:?}",
                t.shape(),
                like.shape()
            )));
        }
        Ok(t)
    };
    let ids: Vec<ParamId> = store.ids().collect();
    let mut values = Vec::with_capacity(ids.len());
    let mut ms = Vec::with_capacity(ids.len());
    let mut vs = Vec::with_capacity(ids.len());
    for &id in &ids {
        let name = store.name(id).to_string();
        let like = store.value(id);
        values.push(take(&mut entries, &name, like)?);
        ms.push(take(&mut entries, &format!("adam/m/{name}"), like)?);
        vs.push(take(&mut entries, &format!("adam/v/{name}"), like)?);
    }
    let step = take(&mut entries, "adam/step", &Tensor::scalar(0.0))?.item() as u64;
    if let Some(extra) = entries.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected entry {extra}")));
    }
    store.restore_state(values, ms, vs, step);
    Ok(())
}

pub fn save_store(path: &Path, store: &ParameterStore) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_store(&mut w, store)?;
    w.flush()?;
    Ok(())
}

pub fn load_store(path: &Path, store: &mut ParameterStore) -> Result<()> {
    read_store(&mut BufReader::new(File::open(path)?), store)
}
