//! `PRB1` container for per-node float vectors.
//!
//! Layout: the four bytes `PRB1`, then three little-endian `u32` (rows,
//! columns, flags = 0), then `rows * columns` little-endian `f32` in
//! row-major order.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PRB1";

#[derive(Debug, Clone, PartialEq)]
pub struct PrbTable {
    /// Nodes (or pixels, `H * W`).
    pub rows: usize,
    /// Classes or bands.
    pub cols: usize,
    pub values: Vec<f32>,
}

pub fn read_prb<R: Read>(mut r: R) -> Result<PrbTable> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::BadMagic)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| Error::TruncatedFile("PRB1 header".into()))?;
    let field = |i: usize| u32::from_le_bytes(header[4 * i..4 * i + 4].try_into().unwrap());
    let (rows, cols, flags) = (field(0) as usize, field(1) as usize, field(2));
    if flags != 0 {
        return Err(Error::Format(format!("unsupported PRB1 flags {flags:#x}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("PRB1 dimensions overflow".into()))?;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(Error::TruncatedFile(format!(
            "PRB1 payload has {} of {expected} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::DimensionMismatch(format!(
            "PRB1 payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(PrbTable { rows, cols, values })
}

pub fn write_prb<W: Write>(mut w: W, table: &PrbTable) -> Result<()> {
    if table.values.len() != table.rows * table.cols {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {}x{} table",
            table.values.len(),
            table.rows,
            table.cols
        )));
    }
    let dim = |n: usize| {
        u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))
    };
    w.write_all(MAGIC)?;
    for v in [dim(table.rows)?, dim(table.cols)?, 0] {
        w.write_all(&v.to_le_bytes())?;
    }
    let bytes: Vec<u8> = table.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
