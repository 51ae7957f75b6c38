//! Binary persistence for precomputed `Φ(X_i, T_j)` tables.
//!
//! Layout (little endian): the 8-byte magic `AMEMTBL1`, then `m`, `n`, `k` as
//! `u64`, the SHA-256 of the payload bytes, and the `m * n * k` payload values
//! as `f64`, indexed `((j * n) + i) * k + c`.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::error::{AmemError, Result};

const MAGIC: &[u8; 8] = b"AMEMTBL1";

#[derive(Debug, Clone, PartialEq)]
pub struct TableFile {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

fn payload_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn write_table<W: Write>(mut out: W, table: &TableFile) -> Result<()> {
    if table.values.len() != table.m * table.n * table.k {
        return Err(AmemError::Table(format!(
            "{} values for m={} n={} k={}",
            table.values.len(),
            table.m,
            table.n,
            table.k
        )));
    }
    let payload = payload_bytes(&table.values);
    out.write_all(MAGIC)?;
    for dim in [table.m, table.n, table.k] {
        out.write_all(&(dim as u64).to_le_bytes())?;
    }
    out.write_all(&Sha256::digest(&payload))?;
    out.write_all(&payload)?;
    Ok(())
}

pub fn read_table<R: Read>(mut input: R) -> Result<TableFile> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(AmemError::Table("bad magic".into()));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        *d = usize::try_from(u64::from_le_bytes(b))
            .map_err(|_| AmemError::Table("dimension overflow".into()))?;
    }
    let [m, n, k] = dims;
    let mut checksum = [0u8; 32];
    input.read_exact(&mut checksum)?;
    let count = m
        .checked_mul(n)
        .and_then(|v| v.checked_mul(k))
        .ok_or_else(|| AmemError::Table("dimension overflow".into()))?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    if payload.len() != count * 8 {
        return Err(AmemError::Table(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            payload.len()
        )));
    }
    if Sha256::digest(&payload).as_slice() != checksum {
        return Err(AmemError::Table("checksum mismatch".into()));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(TableFile { m, n, k, values })
}
