//! Binary trajectory dump. Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `PAMTRJ01` |
//! | 32 | SHA-256 of the canonical config |
//! | 8 | mesh size `M` (u64) |
//! | 8 | checkpoint count `C` (u64) |
//! | 8 | path count `P` (u64) |
//! | 8·C | checkpoint times (f64) |
//! | 8·M·C·P | fields `u`, path-major, then checkpoint, then mesh node (f64) |

use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"PAMTRJ01";

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryHeader {
    pub config_hash: [u8; 32],
    pub mesh_size: usize,
    pub times: Vec<f64>,
    pub paths: usize,
}

/// `fields[path][checkpoint][node]`.
pub fn encode_trajectories(
    config_hash: [u8; 32],
    times: &[f64],
    fields: &[Vec<Vec<f64>>],
) -> Result<Vec<u8>> {
    let mesh = fields
        .first()
        .and_then(|p| p.first())
        .map_or(0, |f| f.len());
    for p in fields {
        if p.len() != times.len() || p.iter().any(|f| f.len() != mesh) {
            return Err(Error::InvalidInput(
                "trajectory fields have inconsistent shape".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(64 + 8 * times.len() * (1 + mesh * fields.len()));
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&config_hash);
    for n in [mesh, times.len(), fields.len()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for t in times {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for v in fields.iter().flatten().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_trajectories(bytes: &[u8]) -> Result<(TrajectoryHeader, Vec<Vec<Vec<f64>>>)> {
    let bad = |m: &str| Error::InvalidInput(format!("trajectory dump: {m}"));
    if bytes.len() < 64 || &bytes[..8] != TRAJECTORY_MAGIC {
        return Err(bad("missing header"));
    }
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&bytes[8..40]);
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes")) as usize;
    let (mesh, count, paths) = (word(40), word(48), word(56));
    let expected = count
        .checked_mul(mesh)
        .and_then(|x| x.checked_mul(paths))
        .and_then(|x| x.checked_add(count))
        .and_then(|x| x.checked_mul(8))
        .and_then(|x| x.checked_add(64))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut floats = bytes[64..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let times: Vec<f64> = floats.by_ref().take(count).collect();
    let fields = (0..paths)
        .map(|_| {
            (0..count)
                .map(|_| floats.by_ref().take(mesh).collect())
                .collect()
        })
        .collect();
    Ok((
        TrajectoryHeader {
            config_hash,
            mesh_size: mesh,
            times,
            paths,
        },
        fields,
    ))
}
