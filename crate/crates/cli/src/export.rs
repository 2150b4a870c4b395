//! Statevector export: CSV rows or a flat little-endian binary file.
//!
//! Binary layout: a 32-byte header (`b"MFLO"`, `u32` version, `u32` qubits
//! per axis, `u32` form tag, `u64` amplitude count, 8 reserved zero bytes)
//! followed by `f64` amplitudes, `k_z` fastest.

use std::path::Path;

use mflo_core::basis::build_ideal_state;
use mflo_core::cpd::canonical_statevector;
use mflo_core::fitting::tucker_statevector;
use mflo_core::GridState;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::job::ExportFormat;
use crate::report::FitReport;

pub const MAGIC: &[u8; 4] = b"MFLO";
pub const BINARY_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Ideal,
    Tucker,
    /// Canonical form at the given requested rank.
    Canonical(usize),
}

impl Which {
    pub fn tag(self) -> u32 {
        match self {
            Which::Ideal => 0,
            Which::Tucker => 1,
            Which::Canonical(_) => 2,
        }
    }

    pub fn file_stem(self) -> String {
        match self {
            Which::Ideal => "ideal".into(),
            Which::Tucker => "tucker".into(),
            Which::Canonical(r) => format!("canonical_r{r}"),
        }
    }
}

/// Rebuilds the requested statevector of orbital `name` from a report.
pub fn state_from_report(report: &FitReport, name: &str, which: Which, max_qubits: u32) -> CliResult<GridState> {
    let cell = report.job.cell()?;
    let o = report.orbital(name)?;
    Ok(match which {
        Which::Ideal => build_ideal_state(&report.job.orbital(name)?, &cell, max_qubits)?.0,
        Which::Tucker => tucker_statevector(&o.basis, &o.core, &cell, max_qubits)?,
        Which::Canonical(r) => {
            let c = o.canonical.iter().find(|c| c.requested_rank == r).ok_or_else(|| {
                CliError::schema("/orbitals", format!("orbital '{name}' has no rank-{r} decomposition"))
            })?;
            canonical_statevector(&c.state(&o.basis, report.n_qe())?, &cell, max_qubits)?
        }
    })
}

pub fn to_csv(state: &GridState) -> String {
    let n = state.n_points();
    let mut s = String::with_capacity(40 * state.amplitudes.len() + 32);
    s.push_str("k_x,k_y,k_z,amplitude\n");
    for (i, a) in state.amplitudes.iter().enumerate() {
        let (kx, ky, kz) = (i / (n * n), (i / n) % n, i % n);
        s.push_str(&format!("{kx},{ky},{kz},{a:.17e}\n"));
    }
    s
}

pub fn to_binary(state: &GridState, which: Which) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * state.amplitudes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&state.qubits_per_axis.to_le_bytes());
    out.extend_from_slice(&which.tag().to_le_bytes());
    out.extend_from_slice(&(state.amplitudes.len() as u64).to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for a in &state.amplitudes {
        out.extend_from_slice(&a.to_le_bytes());
    }
    out
}

fn bad(msg: &str) -> CliError {
    CliError::schema("", msg)
}

/// Parses a binary export; returns the state and its form tag.
pub fn from_binary(bytes: &[u8]) -> CliResult<(GridState, u32)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("not an MFLO statevector file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != BINARY_VERSION {
        return Err(bad("unsupported statevector file version"));
    }
    let n_qe = u32_at(8);
    let tag = u32_at(12);
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if n_qe > 20 || count != 1usize << (3 * n_qe) || body.len() != 8 * count {
        return Err(bad("statevector length disagrees with its header"));
    }
    let amplitudes = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((
        GridState {
            qubits_per_axis: n_qe,
            amplitudes,
        },
        tag,
    ))
}

/// Parses a CSV export. Rows must be in the order [`to_csv`] writes them.
pub fn from_csv(text: &str) -> CliResult<GridState> {
    let mut lines = text.lines();
    if lines.next() != Some("k_x,k_y,k_z,amplitude") {
        return Err(bad("missing CSV header"));
    }
    let amplitudes: Vec<f64> = lines
        .map(|l| {
            l.rsplit(',')
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("malformed CSV row"))
        })
        .collect::<CliResult<_>>()?;
    let n_qe = (1..=20u32)
        .find(|&q| 1usize << (3 * q) == amplitudes.len())
        .ok_or_else(|| bad("CSV row count is not a cube of a power of two"))?;
    Ok(GridState {
        qubits_per_axis: n_qe,
        amplitudes,
    })
}

pub fn write_state(path: &Path, state: &GridState, which: Which, format: ExportFormat) -> CliResult<()> {
    let r = match format {
        ExportFormat::Csv => std::fs::write(path, to_csv(state)),
        ExportFormat::Binary => std::fs::write(path, to_binary(state, which)),
    };
    r.map_err(|e| CliError::io(path, e))
}

pub fn extension(format: ExportFormat) -> &'static str {
    match format {
        ExportFormat::Csv => "csv",
        ExportFormat::Binary => "bin",
    }
}
