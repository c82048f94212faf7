use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::family::{synthesize, Envelope, Family, PhaseSpec};
use super::limits::{limit_bohmian_at, limit_second_moment_gap, limit_wigner_at, LimitOptions};
use super::liouville::liouville_pushforward;
use super::wkb::{hj_characteristics, wkb_wavefunction};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::hydrodynamics::kinetic_split;
use crate::phasespace::{
    bohmian_measure, husimi_with, measure_distance, measure_moments, pair_functional, pair_measure, wigner_moments, wigner_transform,
    HusimiOptions, PhaseSpaceMeasure, TestFunction,
};
use crate::potentials::Potential;
use crate::schrodinger::{propagate, PropagatorConfig, WaveFunction};

pub fn default_epsilons() -> Vec<f64> {
    vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]
}

fn default_dt() -> f64 {
    1e-3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: Family,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    /// Grid size; with `adapt`, the minimum size before the resolution rule.
    pub n: usize,
    #[serde(default)]
    pub adapt: bool,
    #[serde(default)]
    pub potential: Potential,
    /// Observation time; 0 compares the initial data.
    #[serde(default)]
    pub time: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_true")]
    pub husimi: bool,
    #[serde(default)]
    pub husimi_options: HusimiOptions,
    #[serde(default)]
    pub limits: LimitOptions,
    #[serde(default)]
    pub pairings: Vec<TestFunction>,
}

impl SweepConfig {
    pub fn new(family: Family, x_min: f64, x_max: f64, n: usize) -> Self {
        Self {
            family,
            epsilons: default_epsilons(),
            x_min,
            x_max,
            n,
            adapt: false,
            potential: Potential::Free,
            time: 0.0,
            dt: default_dt(),
            husimi: true,
            husimi_options: HusimiOptions::default(),
            limits: LimitOptions::default(),
            pairings: Vec::new(),
        }
    }

    pub fn grid_for(&self, eps: f64) -> Result<UniformGrid> {
        if self.adapt {
            self.family.choose_grid(eps, self.x_min, self.x_max, self.n)
        } else {
            UniformGrid::new(self.x_min, self.x_max, self.n)
        }
    }

    /// Everything that can be checked without computing: family, grids and
    /// resolution at every ε, potential, time step and test functions.
    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if self.epsilons.is_empty() {
            return Err(Error::param("epsilons", "at least one value is required"));
        }
        for &eps in &self.epsilons {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::param("epsilons", format!("values must be positive, got {eps}")));
            }
            let grid = self.grid_for(eps)?;
            self.family.check_resolution(eps, &grid)?;
            self.potential.validate(&grid)?;
        }
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(Error::param("time", "must be finite and >= 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        for sigma in &self.pairings {
            sigma.validate()?;
        }
        Ok(())
    }
}

/// One ε of a sweep. Distances are sliced-W₁; `None` marks a quantity that
/// does not apply (no limit at that time, Husimi switched off, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub n: usize,
    pub dx: f64,
    pub time: f64,
    pub d_beta_lb: Option<f64>,
    pub d_beta_lw: Option<f64>,
    pub d_husimi_lw: Option<f64>,
    pub d_husimi_lb: Option<f64>,
    pub d_limits: Option<f64>,
    /// `½∬p² dw^ε - ½∬p² dβ^ε`.
    pub gap: f64,
    /// `(ε²/2)∫|∇√ρ|²`.
    pub osmotic: f64,
    /// Same gap between the tabulated limits.
    pub gap_limit: Option<f64>,
    /// `‖ψ_wkb(t) - ψ(t)‖` for single-phase data before the caustic.
    pub wkb_error: Option<f64>,
    /// Husimi at `t` against the classical flow of the Husimi at 0.
    pub d_liouville: Option<f64>,
    pub mass_drift: Option<f64>,
    pub energy_drift: Option<f64>,
    pub pairings: Vec<f64>,
    pub pairing_limits: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub family: String,
    pub rows: Vec<SweepRow>,
}

const COLUMNS: &[&str] = &[
    "d_beta_lb",
    "d_beta_lw",
    "d_husimi_lw",
    "d_husimi_lb",
    "d_limits",
    "gap",
    "osmotic",
    "gap_limit",
    "wkb_error",
    "d_liouville",
    "mass_drift",
    "energy_drift",
];

impl SweepRow {
    fn column(&self, name: &str) -> Option<f64> {
        match name {
            "d_beta_lb" => self.d_beta_lb,
            "d_beta_lw" => self.d_beta_lw,
            "d_husimi_lw" => self.d_husimi_lw,
            "d_husimi_lb" => self.d_husimi_lb,
            "d_limits" => self.d_limits,
            "gap" => Some(self.gap),
            "osmotic" => Some(self.osmotic),
            "gap_limit" => self.gap_limit,
            "wkb_error" => self.wkb_error,
            "d_liouville" => self.d_liouville,
            "mass_drift" => self.mass_drift,
            "energy_drift" => self.energy_drift,
            _ => None,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl SweepTable {
    /// Values of a named column in ε order.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.column(name)).collect()
    }

    /// Whether a column is present everywhere and strictly decreasing as ε
    /// decreases.
    pub fn decreasing(&self, name: &str) -> bool {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let vals: Option<Vec<f64>> = rows.iter().map(|r| r.column(name)).collect();
        matches!(vals, Some(v) if v.windows(2).all(|w| w[1] < w[0]))
    }

    /// Least-squares slope of `log d` against `log ε` for every column whose
    /// values are all present and positive.
    pub fn slopes(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if self.rows.len() < 2 {
            return out;
        }
        for name in COLUMNS {
            let pts: Option<Vec<(f64, f64)>> = self
                .rows
                .iter()
                .map(|r| r.column(name).filter(|v| *v > 0.0).map(|v| (r.eps.ln(), v.ln())))
                .collect();
            if let Some(pts) = pts {
                out.insert(name.to_string(), fit_slope(&pts));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let pairs = self.rows.first().map_or(0, |r| r.pairings.len());
        let mut s = String::from("eps,n,dx,time");
        for name in COLUMNS {
            s.push(',');
            s.push_str(name);
        }
        for k in 0..pairs {
            let _ = write!(s, ",pair_{k},pair_limit_{k}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:.16e},{},{:.16e},{:.16e}", r.eps, r.n, r.dx, r.time);
            for name in COLUMNS {
                s.push(',');
                s.push_str(&cell(r.column(name)));
            }
            for k in 0..pairs {
                let _ = write!(s, ",{},{}", cell(r.pairings.get(k).copied()), cell(r.pairing_limits.get(k).copied().flatten()));
            }
            s.push('\n');
        }
        s
    }
}

pub fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NoLimit(_)) | Err(Error::Caustic { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn l2_distance(a: &WaveFunction, b: &WaveFunction) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(u, v)| (u - v).norm_sqr()).sum();
    (s * a.grid().dx()).sqrt()
}

fn single_phase(family: &Family) -> Option<(Envelope, PhaseSpec)> {
    match family {
        Family::WkbSingle { amplitude, phase } => Some((*amplitude, *phase)),
        Family::ModulatedPlaneWave { envelope, momentum } => Some((*envelope, PhaseSpec::Linear { momentum: *momentum })),
        _ => None,
    }
}

fn sweep_point(cfg: &SweepConfig, eps: f64) -> Result<SweepRow> {
    let grid = cfg.grid_for(eps)?;
    let psi0 = synthesize(&cfg.family, eps, &grid)?;
    let (psi, drift) = if cfg.time > 0.0 {
        let steps = (cfg.time / cfg.dt).ceil().max(1.0) as usize;
        let record = propagate(&psi0, &cfg.potential, &PropagatorConfig::new(cfg.dt, cfg.time, steps))?;
        (record.final_state().clone(), Some(record.drift))
    } else {
        (psi0.clone(), None)
    };

    let lb = optional(limit_bohmian_at(&cfg.family, &grid, &cfg.potential, cfg.time, &cfg.limits))?;
    let lw = optional(limit_wigner_at(&cfg.family, &grid, &cfg.potential, cfg.time, &cfg.limits))?;
    let dist = |a: &PhaseSpaceMeasure, b: &Option<PhaseSpaceMeasure>| -> Result<Option<f64>> {
        b.as_ref().map(|b| measure_distance(a, b)).transpose()
    };

    let beta = bohmian_measure(&psi);
    let wigner = wigner_transform(&psi)?;
    let gap = wigner_moments(&wigner).second - measure_moments(&beta, &grid).second;
    let osmotic = kinetic_split(&psi).osmotic_part;

    let (d_husimi_lw, d_husimi_lb, d_liouville) = if cfg.husimi {
        let h = husimi_with(&wigner, &cfg.husimi_options)?;
        let d_liouville = if cfg.time > 0.0 {
            let h0 = husimi_with(&wigner_transform(&psi0)?, &cfg.husimi_options)?;
            Some(measure_distance(&h, &liouville_pushforward(&h0, &cfg.potential, cfg.time)?)?)
        } else {
            None
        };
        (dist(&h, &lw)?, dist(&h, &lb)?, d_liouville)
    } else {
        (None, None, None)
    };

    let d_limits = match (&lb, &lw) {
        (Some(a), Some(_)) => dist(a, &lw)?,
        _ => None,
    };
    let gap_limit = if cfg.time == 0.0 {
        Some(limit_second_moment_gap(&cfg.family, &grid, &cfg.limits)?)
    } else {
        None
    };

    let wkb_error = match single_phase(&cfg.family) {
        Some((amplitude, phase)) if cfg.time > 0.0 => {
            let state = hj_characteristics(&phase, &amplitude, &cfg.potential, cfg.time, &grid.points())?;
            optional(wkb_wavefunction(&state, eps, &grid))?.map(|w| l2_distance(&w, &psi))
        }
        _ => None,
    };

    let mut pairings = Vec::with_capacity(cfg.pairings.len());
    let mut pairing_limits = Vec::with_capacity(cfg.pairings.len());
    for sigma in &cfg.pairings {
        pairings.push(pair_functional(&psi, sigma)?);
        pairing_limits.push(match (sigma.phase_space_function(), &lb) {
            (Some(phi), Some(lb)) => Some(pair_measure(lb, phi)),
            _ => None,
        });
    }

    log::info!("sweep {} eps = {eps}: n = {}", cfg.family.name(), grid.n());
    Ok(SweepRow {
        eps,
        n: grid.n(),
        dx: grid.dx(),
        time: cfg.time,
        d_beta_lb: dist(&beta, &lb)?,
        d_beta_lw: dist(&beta, &lw)?,
        d_husimi_lw,
        d_husimi_lb,
        d_limits,
        gap,
        osmotic,
        gap_limit,
        wkb_error,
        d_liouville,
        mass_drift: drift.map(|d| d.mass_drift),
        energy_drift: drift.map(|d| d.energy_drift),
        pairings,
        pairing_limits,
    })
}

/// Runs every ε of the sweep; rows come back in the order of `cfg.epsilons`.
pub fn epsilon_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let rows = cfg
        .epsilons
        .par_iter()
        .map(|&eps| sweep_point(cfg, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        family: cfg.family.name().to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{MomentumFn, Window};
    use crate::semiclassics::PeriodicProfile;

    #[test]
    fn coherent_sweep_shape_and_trend() {
        let fam = Family::CoherentState { center: 0.0, momentum: 1.0, width: 1.0 };
        let mut cfg = SweepConfig::new(fam, -4.0, 4.0, 1024);
        cfg.epsilons = vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
        cfg.pairings = vec![TestFunction::Bohmian {
            window: Window::Gaussian { center: 0.0, width: 1.0 },
            momentum: MomentumFn::Cos { frequency: 1.0 },
        }];
        let table = epsilon_sweep(&cfg).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(table.decreasing("d_beta_lb"));
        assert!(table.decreasing("d_husimi_lw"));
        assert!(table.rows.iter().all(|r| r.d_limits == Some(0.0)));
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("eps,n,dx,time,d_beta_lb"));
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
        // ∫ρ cos(u) e^{-x²/2} → cos p₀
        let r = &table.rows[2];
        assert!((r.pairings[0] - 1f64.cos()).abs() < 0.05, "{}", r.pairings[0]);
        assert!((r.pairing_limits[0].unwrap() - 1f64.cos()).abs() < 1e-15);
        assert!(table.slopes().contains_key("d_beta_lb"));
    }

    #[test]
    fn cosine_gap_matches_osmotic_part() {
        let fam = Family::PeriodicOscillatory {
            envelope: Envelope::gaussian(0.0, 0.5),
            profile: PeriodicProfile::cosine(),
        };
        let mut cfg = SweepConfig::new(fam, -4.0, 4.0, 2048);
        cfg.epsilons = vec![1.0 / 32.0];
        cfg.husimi = false;
        let row = &epsilon_sweep(&cfg).unwrap().rows[0];
        // √ρ = |f cos| has kinks at the nodes, so the osmotic quadrature is only
        // accurate to a few percent here
        assert!((row.gap - row.osmotic).abs() < 0.05 * row.gap);
        assert!((row.gap - 0.5).abs() < 0.025, "{}", row.gap);
        assert_eq!(row.gap_limit.map(|g| (g - 0.5).abs() < 1e-12), Some(true));
        assert!(row.d_beta_lw.unwrap() > 0.3);
    }

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 0.5, 0.25].iter().map(|e| (e.ln(), (3.0 * e * e).ln())).collect();
        assert!((fit_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unresolved_epsilon() {
        let fam = Family::Concentrating { center: 0.0, width: 1.0, chirp: 0.0 };
        let mut cfg = SweepConfig::new(fam, -1.0, 1.0, 256);
        assert!(matches!(epsilon_sweep(&cfg), Err(Error::Resolution(_))));
        cfg.adapt = true;
        cfg.epsilons = vec![1.0 / 256.0];
        assert_eq!(cfg.grid_for(1.0 / 256.0).unwrap().n(), 4096);
    }
}
