//! Mode container: a JSON header followed by little-endian f64 payload
//! (eigenvalues, then mode entries column-major), plus a JSON-only export
//! for small cases.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::{ModeSet, SolverError};

/// Magic prefix of the binary container.
pub const MODESET_MAGIC: &[u8; 8] = b"EMODES01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSetHeader {
    pub format: String,
    pub num_modes: usize,
    pub free_dofs: usize,
    pub mesh_fingerprint: Option<String>,
    pub eig_residual_tol: f64,
    pub cg_tol: f64,
    pub tool_version: String,
}

impl ModeSetHeader {
    fn for_modeset<T: Real>(modeset: &ModeSet<T>, cg_tol: f64) -> Self {
        Self {
            format: "modeset/1".to_string(),
            num_modes: modeset.num_modes(),
            free_dofs: modeset.free_dofs(),
            mesh_fingerprint: modeset.mesh_fingerprint().map(str::to_string),
            eig_residual_tol: modeset.residual_tol().as_f64(),
            cg_tol,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Writes the binary container. Output is byte-deterministic for equal
/// inputs: the header is a fixed-order struct and carries no timestamps.
pub fn write_modeset<T: Real>(
    path: &Path,
    modeset: &ModeSet<T>,
    cg_tol: f64,
) -> Result<(), SolverError> {
    let header = ModeSetHeader::for_modeset(modeset, cg_tol);
    let header_bytes = serde_json::to_vec(&header).map_err(|e| SolverError::BadContainer {
        reason: e.to_string(),
    })?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MODESET_MAGIC)?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for &l in modeset.lambdas() {
        file.write_all(&l.as_f64().to_le_bytes())?;
    }
    for col in 0..modeset.num_modes() {
        for row in 0..modeset.free_dofs() {
            file.write_all(&modeset.modes()[(row, col)].as_f64().to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Reads a binary container back; payload f64 values are converted to `T`.
pub fn read_modeset<T: Real>(path: &Path) -> Result<(ModeSet<T>, ModeSetHeader), SolverError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MODESET_MAGIC {
        return Err(SolverError::BadContainer {
            reason: "bad magic bytes".into(),
        });
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: ModeSetHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| SolverError::BadContainer {
            reason: format!("bad header: {e}"),
        })?;
    if header.format != "modeset/1" {
        return Err(SolverError::BadContainer {
            reason: format!("unknown format {:?}", header.format),
        });
    }

    let mut read_f64 = || -> Result<f64, SolverError> {
        let mut buf = [0u8; 8];
        file.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    };
    let mut lambdas = Vec::with_capacity(header.num_modes);
    for _ in 0..header.num_modes {
        lambdas.push(T::cast(read_f64()?));
    }
    let mut modes = DMatrix::<T>::zeros(header.free_dofs, header.num_modes);
    for col in 0..header.num_modes {
        for row in 0..header.free_dofs {
            modes[(row, col)] = T::cast(read_f64()?);
        }
    }
    let mut modeset = ModeSet::new(lambdas, modes, T::cast(header.eig_residual_tol))?;
    if let Some(fp) = &header.mesh_fingerprint {
        modeset = modeset.with_fingerprint(fp.clone());
    }
    Ok((modeset, header))
}

#[derive(Debug, Serialize)]
struct ModeSetJson<'a> {
    header: &'a ModeSetHeader,
    lambdas: Vec<f64>,
    /// Mode columns; `modes[n]` is the n-th eigenvector over free dofs.
    modes: Vec<Vec<f64>>,
}

/// JSON-only export for small cases (human-inspectable).
pub fn write_modeset_json<T: Real>(
    path: &Path,
    modeset: &ModeSet<T>,
    cg_tol: f64,
) -> Result<(), SolverError> {
    let header = ModeSetHeader::for_modeset(modeset, cg_tol);
    let json = ModeSetJson {
        header: &header,
        lambdas: modeset.lambdas().iter().map(|l| l.as_f64()).collect(),
        modes: (0..modeset.num_modes())
            .map(|n| modeset.mode(n).iter().map(|v| v.as_f64()).collect())
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| SolverError::BadContainer {
        reason: e.to_string(),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}
