//! Run-directory file formats.
//!
//! Tables are UTF-8 CSV with a header row and `{:.16e}` floats, so every
//! value round-trips exactly. Complex fields and Wigner grids are raw
//! little-endian `f64` files with a JSON sidecar named `<file>.json`.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bohmian::{ParticleStatus, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::hydrodynamics::DensityFields;
use crate::phasespace::{Particle, PhaseSpaceMeasure, Provenance, WignerGridFunction};
use crate::schrodinger::{EvolutionRecord, WaveFunction};
use crate::Complex64;

pub const COMPLEX_LAYOUT: &str = "complex128-le-interleaved";
pub const WIGNER_LAYOUT: &str = "float64-le-row-major-x-p";

fn num(s: &mut String, v: f64) {
    let _ = write!(s, "{v:.16e}");
}

/// `t,x,rho,J,u,mask`; `u` is empty on masked cells.
pub fn densities_csv(frames: &[(f64, DensityFields)]) -> String {
    let mut s = String::from("t,x,rho,J,u,mask\n");
    for (t, f) in frames {
        for k in 0..f.grid.n() {
            num(&mut s, *t);
            s.push(',');
            num(&mut s, f.grid.point(k));
            s.push(',');
            num(&mut s, f.rho[k]);
            s.push(',');
            num(&mut s, f.current[k]);
            s.push(',');
            if let Some(u) = f.velocity_at(k) {
                num(&mut s, u);
            }
            s.push_str(if f.mask[k] { ",1\n" } else { ",0\n" });
        }
    }
    s
}

/// `id,t,X,P,status`, one row per particle and snapshot, positions unwrapped.
pub fn trajectories_csv(ens: &TrajectoryEnsemble) -> String {
    let mut s = String::from("id,t,X,P,status\n");
    for (k, &t) in ens.times.iter().enumerate() {
        for i in 0..ens.len() {
            let status = match ens.stopped_at[i] {
                Some(ts) if ts <= t => ens.status[i],
                _ => ParticleStatus::Active,
            };
            let _ = write!(s, "{i},");
            num(&mut s, t);
            s.push(',');
            num(&mut s, ens.positions[k][i]);
            s.push(',');
            num(&mut s, ens.momenta[k][i]);
            let _ = writeln!(s, ",{}", status.as_str());
        }
    }
    s
}

/// `x,p,w`.
pub fn measure_csv(mu: &PhaseSpaceMeasure) -> String {
    let mut s = String::with_capacity(64 * mu.len() + 8);
    s.push_str("x,p,w\n");
    for q in mu.particles() {
        num(&mut s, q.x);
        s.push(',');
        num(&mut s, q.p);
        s.push(',');
        num(&mut s, q.w);
        s.push('\n');
    }
    s
}

/// `t,mass,kinetic,potential,total` for every recorded snapshot.
pub fn conservation_csv(record: &EvolutionRecord) -> String {
    let mut s = String::from("t,mass,kinetic,potential,total\n");
    for ((t, m), e) in record.times.iter().zip(&record.masses).zip(&record.energies) {
        for (i, v) in [*t, *m, e.kinetic, e.potential, e.total].into_iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            num(&mut s, v);
        }
        s.push('\n');
    }
    s
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidData(format!("line {line}: cannot parse {field:?} as a number")))
}

/// Reads an `x,p,w` table back into a measure.
pub fn read_measure_csv(path: &Path, provenance: Provenance) -> Result<PhaseSpaceMeasure> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "x,p,w" => {}
        _ => return Err(Error::InvalidData(format!("{}: expected header x,p,w", path.display()))),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::InvalidData(format!("{}: line {} has {} columns", path.display(), i + 2, cols.len())));
        }
        out.push(Particle::new(parse_f64(cols[0], i + 2)?, parse_f64(cols[1], i + 2)?, parse_f64(cols[2], i + 2)?));
    }
    PhaseSpaceMeasure::new(out, provenance)
}

/// Minimal CSV reader: header names and rows of optional numbers, empty
/// cells as `None`.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidData(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::InvalidData(format!("{}: line {} has {} cells", path.display(), i + 2, cells.len())));
        }
        rows.push(
            cells
                .iter()
                .map(|c| if c.trim().is_empty() { Ok(None) } else { parse_f64(c, i + 2).map(Some) })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexSidecar {
    pub layout: String,
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub eps: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSidecar {
    pub layout: String,
    pub nx: usize,
    pub np: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub p_min: f64,
    pub dp: f64,
    pub eps: f64,
    pub imaginary_residue: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn le_bytes(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn from_le_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidData(format!("binary length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Writes `ψ` at time `t`; returns the data and sidecar paths.
pub fn write_complex_snapshot(path: &Path, psi: &WaveFunction, time: f64) -> Result<[PathBuf; 2]> {
    let g = psi.grid();
    fs::write(path, le_bytes(psi.values().iter().flat_map(|c| [c.re, c.im])))?;
    let side = ComplexSidecar {
        layout: COMPLEX_LAYOUT.into(),
        n: g.n(),
        x_min: g.x_min(),
        x_max: g.x_max(),
        eps: psi.eps(),
        time,
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n")?;
    Ok([path.to_path_buf(), sp])
}

pub fn read_complex_snapshot(path: &Path) -> Result<(WaveFunction, f64)> {
    let side: ComplexSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if side.layout != COMPLEX_LAYOUT {
        return Err(Error::InvalidData(format!("unknown layout {:?}", side.layout)));
    }
    let raw = from_le_bytes(&fs::read(path)?)?;
    let values: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let grid = UniformGrid::new(side.x_min, side.x_max, side.n)?;
    Ok((WaveFunction::new(grid, values, side.eps)?, side.time))
}

pub fn write_wigner_grid(path: &Path, w: &WignerGridFunction) -> Result<[PathBuf; 2]> {
    fs::write(path, le_bytes(w.values.iter().copied()))?;
    let side = WignerSidecar {
        layout: WIGNER_LAYOUT.into(),
        nx: w.nx(),
        np: w.np(),
        x_min: w.grid.x_min(),
        x_max: w.grid.x_max(),
        dx: w.grid.dx(),
        p_min: w.p_min(),
        dp: w.dp,
        eps: w.eps,
        imaginary_residue: w.imaginary_residue,
    };
    let sp = sidecar_path(path);
    fs::write(&sp, serde_json::to_string_pretty(&side)? + "\n")?;
    Ok([path.to_path_buf(), sp])
}

pub fn read_wigner_grid(path: &Path) -> Result<WignerGridFunction> {
    let side: WignerSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if side.layout != WIGNER_LAYOUT {
        return Err(Error::InvalidData(format!("unknown layout {:?}", side.layout)));
    }
    let values = from_le_bytes(&fs::read(path)?)?;
    if values.len() != side.nx * side.np {
        return Err(Error::LengthMismatch {
            expected: side.nx * side.np,
            actual: values.len(),
        });
    }
    Ok(WignerGridFunction {
        grid: UniformGrid::new(side.x_min, side.x_max, side.nx)?,
        eps: side.eps,
        dp: side.dp,
        values,
        imaginary_residue: side.imaginary_residue,
    })
}
