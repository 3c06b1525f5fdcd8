//! Ensemble serialization.
//!
//! Binary container, all fields little-endian:
//!
//! ```text
//! 0   8  magic  "EPSDPATH"
//! 8   4  u32    format version (1)
//! 12  4  u32    system kind (0 parametric_ode, 1 ito_sde,
//!               2 discrete_multiplicative, 3 discrete_additive)
//! 16  8  u64    num_paths
//! 24  8  u64    num_steps
//! 32  8  f64    t_end
//! 40  8  u64    state_dim
//! 48  8  u64    param_dim (0 when no parameters are stored)
//! 56  8  u64    substeps
//! 64  8  u64    master_seed
//! 72  …  f64    states, [path][time][state]
//!        f64    sampled parameters, [path][param]
//! ```

use std::io::{Read, Write};

use super::{PathEnsemble, TimeGrid};
use crate::error::{Error, Result};
use crate::systems::SystemKind;

pub const BINARY_MAGIC: [u8; 8] = *b"EPSDPATH";
pub const BINARY_VERSION: u32 = 1;

fn kind_code(kind: SystemKind) -> u32 {
    match kind {
        SystemKind::ParametricOde => 0,
        SystemKind::ItoSde => 1,
        SystemKind::DiscreteMultiplicative => 2,
        SystemKind::DiscreteAdditive => 3,
    }
}

fn kind_from_code(code: u32) -> Result<SystemKind> {
    Ok(match code {
        0 => SystemKind::ParametricOde,
        1 => SystemKind::ItoSde,
        2 => SystemKind::DiscreteMultiplicative,
        3 => SystemKind::DiscreteAdditive,
        other => return Err(Error::Format(format!("unknown system kind code {other}"))),
    })
}

pub fn write_binary<W: Write>(ensemble: &PathEnsemble, mut w: W) -> Result<()> {
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&kind_code(ensemble.kind).to_le_bytes())?;
    w.write_all(&(ensemble.num_paths as u64).to_le_bytes())?;
    w.write_all(&(ensemble.grid.num_steps() as u64).to_le_bytes())?;
    w.write_all(&ensemble.grid.t_end().to_le_bytes())?;
    w.write_all(&(ensemble.state_dim as u64).to_le_bytes())?;
    let param_dim = if ensemble.sampled_parameters.is_some() {
        ensemble.param_dim
    } else {
        0
    };
    w.write_all(&(param_dim as u64).to_le_bytes())?;
    w.write_all(&(ensemble.substeps as u64).to_le_bytes())?;
    w.write_all(&ensemble.master_seed.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * 4096);
    let params = ensemble.sampled_parameters.as_deref().unwrap_or(&[]);
    for chunk in ensemble.states.chunks(4096).chain(params.chunks(4096)) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<PathEnsemble> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if header[..8] != BINARY_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = kind_from_code(u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")))?;
    let num_paths = read_u64(&mut r)? as usize;
    let num_steps = read_u64(&mut r)? as usize;
    let t_end = f64::from_bits(read_u64(&mut r)?);
    let state_dim = read_u64(&mut r)? as usize;
    let param_dim = read_u64(&mut r)? as usize;
    let substeps = read_u64(&mut r)? as usize;
    let master_seed = read_u64(&mut r)?;
    let grid = TimeGrid::new(t_end, num_steps).map_err(|e| Error::Format(e.to_string()))?;
    let count = num_paths
        .checked_mul(grid.num_points())
        .and_then(|c| c.checked_mul(state_dim))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    let states = read_f64s(&mut r, count)?;
    let mut ensemble = PathEnsemble::from_states(grid, kind, state_dim, states, master_seed)
        .map_err(|e| Error::Format(e.to_string()))?;
    ensemble.substeps = substeps.max(1);
    if param_dim > 0 {
        ensemble.param_dim = param_dim;
        ensemble.sampled_parameters = Some(read_f64s(&mut r, num_paths * param_dim)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(ensemble)
}

/// Long-form CSV, header `path_id,t,dim,x`. With a `tag`, path ids are
/// written as `<tag>-<index>` so several ensembles can share one file.
pub fn write_paths_csv<W: Write>(
    ensemble: &PathEnsemble,
    tag: Option<&str>,
    write_header: bool,
    mut w: W,
) -> Result<()> {
    if write_header {
        writeln!(w, "path_id,t,dim,x")?;
    }
    for j in 0..ensemble.num_paths {
        for (i, t) in ensemble.grid.times().enumerate() {
            for d in 0..ensemble.state_dim {
                let x = ensemble.value(j, i, d);
                match tag {
                    Some(tag) => writeln!(w, "{tag}-{j},{t},{d},{x}")?,
                    None => writeln!(w, "{j},{t},{d},{x}")?,
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
