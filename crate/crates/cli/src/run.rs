use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bohmlab_core::bohmian::{equivariance_error, integrate_trajectories, sample_initial};
use bohmlab_core::hydrodynamics::{compute_densities, MASK_MASS_WARNING};
use bohmlab_core::io::{
    conservation_csv, densities_csv, measure_csv, sidecar_path, trajectories_csv, write_complex_snapshot, write_wigner_grid,
};
use bohmlab_core::phasespace::{bohmian_measure, husimi_with, wigner_transform, PhaseSpaceMeasure};
use bohmlab_core::schrodinger::{propagate, EvolutionRecord, PropagatorConfig, WaveFunction};
use bohmlab_core::semiclassics::{
    epsilon_sweep, hj_characteristics, limit_bohmian_at, limit_wigner_at, synthesize, wkb_fields, wkb_wavefunction, Envelope, Family,
    PhaseSpec, SweepTable,
};
use bohmlab_core::{Error, UniformGrid};

use crate::scenario::{Artifact, Derived, Scenario};
use crate::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const SCENARIO_ECHO: &str = "scenario.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub file: String,
    /// `beta`, `husimi`, `limit_bohmian` or `limit_wigner`.
    pub kind: String,
    pub eps: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub column: String,
    pub eps: f64,
    pub value: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: Scenario,
    pub derived: Vec<Derived>,
    pub timings: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
    pub measures: Vec<MeasureEntry>,
    pub diagnostics: BTreeMap<String, Value>,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path)
        .map_err(|_| CliError::Runtime(format!("{} has no {MANIFEST_NAME}: the run is incomplete", dir.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Output directory that records every file it writes.
struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| runtime(format!("cannot create {}: {e}", root.display())))?;
        // a stale manifest would mark this run complete before it is
        let stale = root.join(MANIFEST_NAME);
        if stale.exists() {
            fs::remove_file(&stale).map_err(runtime)?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn record(&mut self, rel: &str) -> Result<(), CliError> {
        let bytes = fs::read(self.root.join(rel)).map_err(runtime)?;
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
        fs::write(&path, contents).map_err(runtime)?;
        self.record(rel)
    }

    /// Binary file plus its JSON sidecar, written by `f`.
    fn write_binary(&mut self, rel: &str, f: impl FnOnce(&Path) -> bohmlab_core::Result<[PathBuf; 2]>) -> Result<(), CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
        f(&path).map_err(runtime)?;
        self.record(rel)?;
        let side = sidecar_path(Path::new(rel));
        self.record(&side.to_string_lossy())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

struct Context {
    dir: RunDir,
    timings: BTreeMap<String, f64>,
    measures: Vec<MeasureEntry>,
    diagnostics: BTreeMap<String, Value>,
    verdicts: Vec<Verdict>,
    warnings: Vec<String>,
}

impl Context {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t0 = Instant::now();
        let out = f(self);
        *self.timings.entry(stage.to_string()).or_default() += t0.elapsed().as_secs_f64();
        out
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    fn measure(&mut self, file: &str, kind: &str, eps: f64, time: f64, mu: &PhaseSpaceMeasure) -> Result<(), CliError> {
        self.dir.write(file, measure_csv(mu))?;
        self.measures.push(MeasureEntry {
            file: file.to_string(),
            kind: kind.to_string(),
            eps,
            time,
        });
        Ok(())
    }
}

/// Limit tabulations that do not exist at this time are skipped with a
/// warning instead of failing the run.
fn optional_limit(ctx: &mut Context, r: bohmlab_core::Result<PhaseSpaceMeasure>, what: &str) -> Result<Option<PhaseSpaceMeasure>, CliError> {
    match r {
        Ok(mu) => Ok(Some(mu)),
        Err(e @ (Error::NoLimit(_) | Error::Caustic { .. })) => {
            ctx.warn(format!("{what} skipped: {e}"));
            Ok(None)
        }
        Err(e) => Err(runtime(e)),
    }
}

fn single_phase(family: &Family) -> Option<(Envelope, PhaseSpec)> {
    match family {
        Family::WkbSingle { amplitude, phase } => Some((*amplitude, *phase)),
        Family::ModulatedPlaneWave { envelope, momentum } => Some((*envelope, PhaseSpec::Linear { momentum: *momentum })),
        _ => None,
    }
}

fn evolve(s: &Scenario, psi0: &WaveFunction) -> Result<EvolutionRecord, CliError> {
    let cfg = s.propagation.unwrap_or_else(|| PropagatorConfig::new(1.0, 0.0, 1));
    propagate(psi0, &s.potential, &cfg).map_err(runtime)
}

fn write_limits(ctx: &mut Context, s: &Scenario, grid: &UniformGrid, eps: f64, suffix: &str) -> Result<(), CliError> {
    let t = s.time();
    let lb = limit_bohmian_at(&s.initial, grid, &s.potential, t, &s.sweep.limits);
    if let Some(mu) = optional_limit(ctx, lb, "limit_bohmian")? {
        ctx.measure(&format!("limit_bohmian{suffix}.csv"), "limit_bohmian", eps, t, &mu)?;
    }
    let lw = limit_wigner_at(&s.initial, grid, &s.potential, t, &s.sweep.limits);
    if let Some(mu) = optional_limit(ctx, lw, "limit_wigner")? {
        ctx.measure(&format!("limit_wigner{suffix}.csv"), "limit_wigner", eps, t, &mu)?;
    }
    Ok(())
}

fn run_single(ctx: &mut Context, s: &Scenario, eps: f64) -> Result<(), CliError> {
    let grid = s.grid_for(eps)?;
    let psi0 = ctx.timed("synthesize", |_| synthesize(&s.initial, eps, &grid).map_err(runtime))?;
    let record = ctx.timed("propagate", |_| evolve(s, &psi0))?;
    let t_final = *record.times.last().unwrap();
    let psi = record.final_state().clone();
    let d = record.drift;
    ctx.diagnostics.insert(
        "conservation".into(),
        json!({
            "mass_drift": d.mass_drift,
            "energy_drift": d.energy_drift,
            "relative_energy_drift": d.relative_energy_drift,
            "max_edge_amplitude": d.max_edge_amplitude,
            "steps": record.steps,
            "dt": record.dt,
        }),
    );

    let frames: Vec<(f64, _)> = record.times.iter().zip(&record.snapshots).map(|(t, p)| (*t, compute_densities(p))).collect();
    let masked = frames.iter().map(|(_, f)| f.masked_mass()).fold(0.0, f64::max);
    ctx.diagnostics.insert("max_masked_mass".into(), json!(masked));
    if masked > MASK_MASS_WARNING {
        ctx.warn(format!("node mask holds up to {masked:.3e} of the mass"));
    }
    if s.wants(Artifact::Densities) {
        ctx.timed("write", |c| c.dir.write("densities.csv", densities_csv(&frames)))?;
    }
    if s.wants(Artifact::Conservation) {
        ctx.dir.write("conservation.csv", conservation_csv(&record))?;
    }
    if s.wants(Artifact::Snapshots) {
        for (k, (t, p)) in record.times.iter().zip(&record.snapshots).enumerate() {
            ctx.dir.write_binary(&format!("snapshots/psi_{k:05}.bin"), |path| write_complex_snapshot(path, p, *t))?;
        }
    }

    if s.wants(Artifact::Trajectories) {
        let ens_spec = s.ensemble.as_ref().expect("validated");
        let ens = ctx.timed("trajectories", |_| {
            let initial = sample_initial(&grid, &frames[0].1.rho, ens_spec.count, ens_spec.seed).map_err(runtime)?;
            integrate_trajectories(&record, &initial, &ens_spec.trajectory).map_err(runtime)
        })?;
        let last = ens.times.len() - 1;
        let e0 = equivariance_error(&ens, 0, &frames[0].1.rho);
        let e1 = equivariance_error(&ens, last, &frames[last].1.rho);
        let stalled = ens.non_active_fraction();
        ctx.diagnostics.insert(
            "ensemble".into(),
            json!({
                "count": ens.len(),
                "seed": ens_spec.seed,
                "equivariance_initial": e0,
                "equivariance_final": e1,
                "non_active_fraction": stalled,
                "order_violations": ens.order_violations,
            }),
        );
        if stalled > 0.0 {
            ctx.warn(format!("{:.3}% of particles stopped at nodes or seams", 100.0 * stalled));
        }
        ctx.timed("write", |c| c.dir.write("trajectories.csv", trajectories_csv(&ens)))?;
    }

    let needs_wigner = s.wants(Artifact::Wigner) || s.wants(Artifact::Husimi);
    let states: Vec<(&str, f64, &WaveFunction)> = if t_final > 0.0 {
        vec![("initial", 0.0, &psi0), ("final", t_final, &psi)]
    } else {
        vec![("initial", 0.0, &psi0)]
    };
    for (tag, t, state) in states {
        if s.wants(Artifact::BohmianMeasure) {
            ctx.measure(&format!("beta_{tag}.csv"), "beta", eps, t, &bohmian_measure(state))?;
        }
        if needs_wigner {
            let w = ctx.timed("wigner", |_| wigner_transform(state).map_err(runtime))?;
            if s.wants(Artifact::Wigner) {
                ctx.dir.write_binary(&format!("wigner_{tag}.bin"), |path| write_wigner_grid(path, &w))?;
            }
            if s.wants(Artifact::Husimi) {
                let h = ctx.timed("husimi", |_| husimi_with(&w, &s.sweep.husimi_options).map_err(runtime))?;
                ctx.measure(&format!("husimi_{tag}.csv"), "husimi", eps, t, &h)?;
            }
        }
    }
    if s.wants(Artifact::Limits) {
        ctx.timed("limits", |c| write_limits(c, s, &grid, eps, ""))?;
    }

    if s.wants(Artifact::Wkb) {
        let (amplitude, phase) = single_phase(&s.initial).expect("validated");
        let caustic = s.caustic();
        ctx.diagnostics.insert("caustic_time".into(), json!(caustic));
        let state = hj_characteristics(&phase, &amplitude, &s.potential, t_final, &grid.points()).map_err(runtime)?;
        match wkb_fields(&state, &grid) {
            Ok((a, sv, p)) => {
                let mut csv = String::from("x,a,S,P\n");
                for k in 0..grid.n() {
                    csv.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", grid.point(k), a[k], sv[k], p[k]));
                }
                ctx.dir.write("wkb.csv", csv)?;
                let approx = wkb_wavefunction(&state, eps, &grid).map_err(runtime)?;
                let err: f64 = approx.values().iter().zip(psi.values()).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>() * grid.dx();
                ctx.diagnostics.insert("wkb_error".into(), json!(err.sqrt()));
            }
            Err(e @ Error::Caustic { .. }) => ctx.warn(format!("no WKB output: {e}")),
            Err(e) => return Err(runtime(e)),
        }
    }
    Ok(())
}

fn sweep_verdicts(s: &Scenario, table: &SweepTable) -> Vec<Verdict> {
    let mut out = Vec::new();
    for (column, th) in &s.compare.thresholds {
        for (row, value) in table.rows.iter().zip(table.values(column)) {
            out.push(Verdict {
                column: column.clone(),
                eps: row.eps,
                value,
                pass: value.is_some_and(|v| th.passes(v)),
            });
        }
    }
    out
}

fn run_sweep(ctx: &mut Context, s: &Scenario) -> Result<(), CliError> {
    let table = ctx.timed("sweep", |_| epsilon_sweep(&s.sweep_config()).map_err(runtime))?;
    ctx.dir.write("sweep.csv", table.to_csv())?;
    ctx.diagnostics.insert("slopes".into(), json!(table.slopes()));
    let decreasing: BTreeMap<&str, bool> = ["d_beta_lb", "d_beta_lw", "d_husimi_lw", "d_husimi_lb", "wkb_error"]
        .into_iter()
        .filter(|c| table.values(c).iter().all(Option::is_some))
        .map(|c| (c, table.decreasing(c)))
        .collect();
    ctx.diagnostics.insert("decreasing".into(), json!(decreasing));
    ctx.verdicts = sweep_verdicts(s, &table);

    let per_eps = s.wants(Artifact::BohmianMeasure) || s.wants(Artifact::Husimi) || s.wants(Artifact::Limits);
    if per_eps {
        for (i, &eps) in s.epsilon_list().iter().enumerate() {
            let grid = s.grid_for(eps)?;
            let psi0 = synthesize(&s.initial, eps, &grid).map_err(runtime)?;
            let record = evolve(s, &psi0)?;
            let psi = record.final_state();
            let t = s.time();
            if s.wants(Artifact::BohmianMeasure) {
                ctx.measure(&format!("beta_e{i}.csv"), "beta", eps, t, &bohmian_measure(psi))?;
            }
            if s.wants(Artifact::Husimi) {
                let w = wigner_transform(psi).map_err(runtime)?;
                let h = husimi_with(&w, &s.sweep.husimi_options).map_err(runtime)?;
                ctx.measure(&format!("husimi_e{i}.csv"), "husimi", eps, t, &h)?;
            }
            if s.wants(Artifact::Limits) {
                write_limits(ctx, s, &grid, eps, &format!("_e{i}"))?;
            }
        }
    }
    Ok(())
}

pub fn default_output(s: &Scenario) -> PathBuf {
    s.output.clone().unwrap_or_else(|| Path::new("runs").join(&s.name))
}

/// Validates, runs and writes a complete run directory; the manifest is the
/// last file written.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut s = scenario.clone();
    if let (Some(seed), Some(ens)) = (opts.seed, s.ensemble.as_mut()) {
        ens.seed = seed;
    }
    let derived = s.validate()?;
    let root = opts.out.clone().unwrap_or_else(|| default_output(&s));
    let mut ctx = Context {
        dir: RunDir::create(&root)?,
        timings: BTreeMap::new(),
        measures: Vec::new(),
        diagnostics: BTreeMap::new(),
        verdicts: Vec::new(),
        warnings: Vec::new(),
    };
    ctx.dir.write(SCENARIO_ECHO, serde_json::to_string_pretty(&s).map_err(runtime)? + "\n")?;
    let t0 = Instant::now();
    if s.is_sweep() {
        run_sweep(&mut ctx, &s)?;
    } else {
        run_single(&mut ctx, &s, s.eps.expect("validated"))?;
    }
    ctx.timings.insert("total".into(), t0.elapsed().as_secs_f64());
    let manifest = Manifest {
        tool: "bohmlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: s,
        derived,
        timings: ctx.timings,
        files: ctx.dir.files,
        measures: ctx.measures,
        diagnostics: ctx.diagnostics,
        verdicts: ctx.verdicts,
        warnings: ctx.warnings,
    };
    fs::write(root.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest).map_err(runtime)? + "\n").map_err(runtime)?;
    Ok(RunOutcome { dir: root, manifest })
}
