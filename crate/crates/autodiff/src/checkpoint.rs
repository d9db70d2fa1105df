//! Binary parameter checkpoints.
//!
//! A checkpoint is a sequence of records, read until end of input:
//!
//! ```text
//! u32 name_len | name (UTF-8) | u32 rank | u32 extent * rank | f64 * numel
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{ErrorKind, Read, Write};

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

pub fn write<W: Write>(mut w: W, entries: &[(String, Tensor<f64>)]) -> Result<()> {
    for (name, tensor) in entries {
        w.write_all(&u32_of(name.len())?.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&u32_of(tensor.shape().len())?.to_le_bytes())?;
        for &e in tensor.shape() {
            w.write_all(&u32_of(e)?.to_le_bytes())?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f64>)>> {
    let mut entries = Vec::new();
    loop {
        let mut head = [0u8; 4];
        match r.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(head) as usize;
        let mut name = vec![0u8; name_len];
        read_or_truncated(&mut r, &mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| AutodiffError::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut payload = vec![0u8; numel * 8];
        read_or_truncated(&mut r, &mut payload)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data)
            .map_err(|e| AutodiffError::Checkpoint(format!("{name}: {e}")))?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

fn u32_of(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| AutodiffError::Checkpoint(format!("{v} does not fit in u32")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => AutodiffError::Checkpoint("truncated record".into()),
        _ => e.into(),
    })
}
