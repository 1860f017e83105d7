//! `ISFM` checkpoints: magic, version, JSON spec, named parameter blobs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::Model;
use super::params::ParamSet;
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ISFM";
pub const FORMAT_VERSION: u32 = 1;

fn u32_of(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format(format!("truncated {what}")))?;
    Ok(u32::from_le_bytes(b))
}

fn u64_of(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format(format!("truncated {what}")))?;
    Ok(u64::from_le_bytes(b))
}

fn bytes_of(r: &mut impl Read, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|_| Error::Format(format!("truncated {what}")))?;
    Ok(buf)
}

impl Model {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let spec = serde_json::to_vec(&self.spec)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(spec.len() as u32).to_le_bytes())?;
        w.write_all(&spec)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in self.params.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.ndim() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let spec = read_spec(r)?;
        let count = u32_of(r, "parameter count")? as usize;
        let mut params = ParamSet::default();
        for _ in 0..count {
            let len = u32_of(r, "name length")? as usize;
            if len > 1 << 16 {
                return Err(Error::Format(format!("parameter name length {len}")));
            }
            let name = String::from_utf8(bytes_of(r, len, "name")?)
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let ndim = u32_of(r, "rank")? as usize;
            if ndim > 8 {
                return Err(Error::Format(format!("parameter `{name}` has rank {ndim}")));
            }
            let shape = (0..ndim).map(|_| u64_of(r, "dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            if n > 1 << 28 {
                return Err(Error::Format(format!("parameter `{name}` is implausibly large")));
            }
            let raw = bytes_of(r, n * 8, "parameter data")?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.push(name, Tensor::new(shape, data)?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after parameters".into()));
        }
        Model::from_parts(spec, params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Reads the magic, version and JSON spec of a checkpoint.
pub fn read_spec(r: &mut impl Read) -> Result<ModelSpec> {
    let magic = bytes_of(r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format("not an ISFM checkpoint".into()));
    }
    let version = u32_of(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = u32_of(r, "spec length")? as usize;
    let json = bytes_of(r, len, "spec")?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("invalid model spec: {e}")))
}
