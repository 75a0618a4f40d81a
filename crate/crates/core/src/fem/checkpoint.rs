//! Binary checkpoints.
//!
//! Layout (little endian): magic, format version (u32), step (u64), period
//! (u64), t (f64), node count (u64), velocity (3 f64 per node), pressure
//! (f64 per node), then the SHA-256 of everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{FemError, SimulationState};
use crate::mesh::Vec3;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AVFCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(state: &SimulationState) -> Vec<u8> {
    let n = state.n_nodes();
    let mut buf = Vec::with_capacity(48 + 32 * n + 32);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(state.step as u64).to_le_bytes());
    buf.extend_from_slice(&(state.period as u64).to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    for u in &state.u {
        for c in u.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for p in &state.p {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SimulationState, FemError> {
    let bad = |m: &str| FemError::Checkpoint(m.to_string());
    if bytes.len() < 44 + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let mut pos = 8;
    let mut take = |k: usize| {
        let s = &body[pos..pos + k];
        pos += k;
        s
    };
    let version = u32::from_le_bytes(take(4).try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(FemError::Checkpoint(format!("unsupported version {version}")));
    }
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
    let step = u64_at(take(8)) as usize;
    let period = u64_at(take(8)) as usize;
    let t = f64::from_le_bytes(take(8).try_into().unwrap());
    let n = u64_at(take(8)) as usize;
    if body.len() != 44 + 32 * n {
        return Err(bad("length does not match node count"));
    }
    let mut f = || f64::from_le_bytes(take(8).try_into().unwrap());
    let u = (0..n).map(|_| Vec3::new(f(), f(), f())).collect();
    let p = (0..n).map(|_| f()).collect();
    Ok(SimulationState { u, p, t, step, period })
}

pub fn write_checkpoint(state: &SimulationState, path: impl AsRef<Path>) -> Result<(), FemError> {
    std::fs::write(path, encode_checkpoint(state))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<SimulationState, FemError> {
    decode_checkpoint(&std::fs::read(path)?)
}
