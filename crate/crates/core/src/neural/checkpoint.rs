//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "QFSUMPRM"
//! version    u32      1
//! seed       u64
//! meta_len   u32, then meta_len bytes of UTF-8 metadata (free-form, JSON by convention)
//! count      u32
//! per tensor (sorted by name):
//!   name_len u32, name bytes
//!   ndim     u32, ndim × u64 dims
//!   data     product(dims) × f64
//! ```

use std::io::{Read, Write};

use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"QFSUMPRM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ParamSet, metadata: &str, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&params.rng_seed.to_le_bytes())?;
    write_bytes(&mut out, metadata.as_bytes())?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params.iter() {
        write_bytes(&mut out, name.as_bytes())?;
        out.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_bytes<W: Write>(out: &mut W, bytes: &[u8]) -> Result<()> {
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::parse("checkpoint", format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.exact::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.exact::<8>(what).map(u64::from_le_bytes)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::parse("checkpoint", format!("truncated while reading {what}")))?;
        String::from_utf8(buf).map_err(|_| Error::parse("checkpoint", format!("{what} is not UTF-8")))
    }
}

/// Returns the parameters and the metadata string.
pub fn read_checkpoint<R: Read>(input: R) -> Result<(ParamSet, String)> {
    let mut r = Reader { inner: input };
    if &r.exact::<8>("magic")? != MAGIC {
        return Err(Error::parse("checkpoint", "bad magic"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let seed = r.u64("seed")?;
    let metadata = r.string("metadata")?;
    let count = r.u32("tensor count")?;
    let mut params = ParamSet::new(seed);
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let ndim = r.u32("rank")? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| r.exact::<8>("tensor data").map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        if params.contains(&name) {
            return Err(Error::parse("checkpoint", format!("duplicate tensor {name}")));
        }
        params.insert(name, Tensor::from_vec(&shape, data)?);
    }
    Ok((params, metadata))
}
