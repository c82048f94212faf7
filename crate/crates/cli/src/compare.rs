use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use bohmlab_core::io::read_measure_csv;
use bohmlab_core::phasespace::{measure_distance_report, PhaseSpaceMeasure, Provenance};
use bohmlab_core::semiclassics::{limit_bohmian_at, limit_wigner_at};

use crate::run::{read_manifest, Manifest, MeasureEntry};
use crate::CliError;

pub const LIMIT_TARGETS: &[&str] = &["limit_bohmian", "limit_wigner"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub file: String,
    pub kind: String,
    pub eps: f64,
    pub time: f64,
    pub target: String,
    pub distance: f64,
    /// Masses differed and both sides were normalized before comparing.
    pub rescaled: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub max_distance: Option<f64>,
    pub warnings: Vec<String>,
}

impl CompareReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("file,kind,eps,time,target,distance,rescaled,verdict\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.16e},{:.16e},{},{:.16e},{},{}",
                r.file,
                r.kind,
                r.eps,
                r.time,
                r.target,
                r.distance,
                r.rescaled,
                if r.pass { "pass" } else { "fail" }
            );
        }
        s
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn provenance(kind: &str) -> Provenance {
    match kind {
        "beta" => Provenance::Bohmian,
        "husimi" => Provenance::Husimi,
        _ => Provenance::ClosedFormLimit,
    }
}

fn load(dir: &Path, m: &MeasureEntry) -> Result<PhaseSpaceMeasure, CliError> {
    let path = dir.join(&m.file);
    if !path.exists() {
        return Err(CliError::Runtime(format!("missing artifact {}", path.display())));
    }
    read_measure_csv(&path, provenance(&m.kind)).map_err(runtime)
}

fn limit_for(manifest: &Manifest, target: &str, m: &MeasureEntry) -> Result<PhaseSpaceMeasure, CliError> {
    let s = &manifest.scenario;
    let grid = s.grid_for(m.eps)?;
    let r = match target {
        "limit_bohmian" => limit_bohmian_at(&s.initial, &grid, &s.potential, m.time, &s.sweep.limits),
        _ => limit_wigner_at(&s.initial, &grid, &s.potential, m.time, &s.sweep.limits),
    };
    r.map_err(runtime)
}

/// Distances between the measures of run `a` and either the same-named
/// measures of run directory `target` or a built-in limit.
pub fn compare(a: &Path, target: &str) -> Result<CompareReport, CliError> {
    let ma = read_manifest(a)?;
    let max_distance = ma.scenario.compare.max_distance;
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let mut push = |m: &MeasureEntry, target: String, mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure, warnings: &mut Vec<String>| -> Result<(), CliError> {
        let rep = measure_distance_report(mu, nu).map_err(runtime)?;
        if rep.rescaled {
            warnings.push(format!(
                "{} vs {target}: masses {:.6e} and {:.6e} differ; both were normalized",
                m.file, rep.mass_a, rep.mass_b
            ));
        }
        rows.push(CompareRow {
            file: m.file.clone(),
            kind: m.kind.clone(),
            eps: m.eps,
            time: m.time,
            target,
            distance: rep.value,
            rescaled: rep.rescaled,
            pass: max_distance.is_none_or(|d| rep.value <= d),
        });
        Ok(())
    };

    if LIMIT_TARGETS.contains(&target) {
        for m in ma.measures.iter().filter(|m| m.kind == "beta" || m.kind == "husimi") {
            let mu = load(a, m)?;
            let nu = limit_for(&ma, target, m)?;
            push(m, target.to_string(), &mu, &nu, &mut warnings)?;
        }
    } else {
        let b = Path::new(target);
        if !b.is_dir() {
            return Err(CliError::Invalid(format!(
                "compare target {target:?} is neither a run directory nor one of {}",
                LIMIT_TARGETS.join(", ")
            )));
        }
        let mb = read_manifest(b)?;
        for m in &ma.measures {
            match mb.measures.iter().find(|n| n.file == m.file) {
                Some(n) => {
                    let mu = load(a, m)?;
                    let nu = load(b, n)?;
                    push(m, b.join(&n.file).display().to_string(), &mu, &nu, &mut warnings)?;
                }
                None => warnings.push(format!("{} has no counterpart in {}", m.file, b.display())),
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("missing artifacts: {} holds no comparable measures", a.display())));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CompareReport {
        rows,
        max_distance,
        warnings,
    })
}
