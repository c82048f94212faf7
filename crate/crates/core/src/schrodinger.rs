//! Strang-split spectral propagation of `iε∂ₜψ = -(ε²/2)Δψ + Vψ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft_forward, edge_amplitude, fft_forward_in_place, fft_inverse_in_place, ComplexField, UniformGrid};
use crate::potentials::Potential;

/// Edge amplitude (relative to the peak) above which periodic wrap-around is
/// considered to pollute the solution.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Cells on either side of the seam inspected by the boundary check.
pub const BOUNDARY_BAND: usize = 2;

/// Complex samples of ψ^ε tagged with ε.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    field: ComplexField,
    eps: f64,
}

impl WaveFunction {
    pub fn new(grid: UniformGrid, values: Vec<Complex64>, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            field: ComplexField::new(grid, values)?,
            eps,
        })
    }

    pub fn from_field(field: ComplexField, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self { field, eps })
    }

    pub fn from_fn(grid: UniformGrid, eps: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::from_field(ComplexField::from_fn(grid, f), eps)
    }

    pub fn grid(&self) -> &UniformGrid {
        self.field.grid()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn values(&self) -> &[Complex64] {
        self.field.values()
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        self.field.values_mut()
    }

    pub fn mass(&self) -> f64 {
        self.field.norm_squared()
    }

    /// Copy rescaled to unit mass; the zero field is rejected.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::NotNormalized { mass: m });
        }
        let s = 1.0 / m.sqrt();
        let mut out = self.clone();
        out.values_mut().iter_mut().for_each(|v| *v *= s);
        Ok(out)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values_mut().iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Peak-relative modulus next to the periodic seam.
    pub fn edge_amplitude(&self) -> f64 {
        edge_amplitude(self.values(), BOUNDARY_BAND)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::param("eps", format!("must satisfy 0 < eps <= 1, got {eps}")));
    }
    Ok(())
}

pub fn mass(psi: &WaveFunction) -> f64 {
    psi.mass()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// `(ε²/2)∫|∇ψ|²` evaluated on the spectral side.
pub fn kinetic_energy(psi: &WaveFunction) -> f64 {
    let spec = dft_forward(psi.field());
    let grid = psi.grid();
    let sum: f64 = spec
        .coefficients()
        .iter()
        .enumerate()
        .map(|(i, c)| grid.wavenumber(i).powi(2) * c.norm_sqr())
        .sum();
    0.5 * psi.eps().powi(2) * sum * grid.dxi()
}

pub fn potential_energy(psi: &WaveFunction, v: &Potential) -> f64 {
    let grid = psi.grid();
    psi.values()
        .iter()
        .enumerate()
        .map(|(k, c)| v.eval(grid.point(k)) * c.norm_sqr())
        .sum::<f64>()
        * grid.dx()
}

pub fn energy(psi: &WaveFunction, v: &Potential) -> Energy {
    let kinetic = kinetic_energy(psi);
    let potential = potential_energy(psi, v);
    Energy {
        kinetic,
        potential,
        total: kinetic + potential,
    }
}

/// Precomputed Strang factors for a fixed `(grid, V, ε, dt)`.
#[derive(Debug, Clone)]
pub struct Propagator {
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

impl Propagator {
    pub fn new(grid: &UniformGrid, v: &Potential, eps: f64, dt: f64) -> Self {
        let half_potential = grid
            .points()
            .into_iter()
            .map(|x| Complex64::from_polar(1.0, -0.5 * dt * v.eval(x) / eps))
            .collect();
        let inv_n = 1.0 / grid.n() as f64;
        let kinetic = grid
            .wavenumbers()
            .into_iter()
            .map(|xi| Complex64::from_polar(inv_n, -0.5 * dt * eps * xi * xi))
            .collect();
        Self { half_potential, kinetic }
    }

    pub fn step(&self, values: &mut [Complex64]) {
        for (v, p) in values.iter_mut().zip(&self.half_potential) {
            *v *= p;
        }
        fft_forward_in_place(values);
        for (v, k) in values.iter_mut().zip(&self.kinetic) {
            *v *= k;
        }
        fft_inverse_in_place(values);
        for (v, p) in values.iter_mut().zip(&self.half_potential) {
            *v *= p;
        }
    }
}

/// One Strang step; a negative `dt` steps backward in time.
pub fn strang_step(psi: &WaveFunction, v: &Potential, dt: f64) -> WaveFunction {
    let mut out = psi.clone();
    Propagator::new(psi.grid(), v, psi.eps(), dt).step(out.values_mut());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_true")]
    pub check_energy: bool,
    #[serde(default = "default_true")]
    pub check_boundary: bool,
}

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl PropagatorConfig {
    pub fn new(dt: f64, t_final: f64, stride: usize) -> Self {
        Self {
            dt,
            t_final,
            stride,
            check_energy: true,
            check_boundary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::param("t_final", format!("must be >= 0, got {}", self.t_final)));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be at least 1"));
        }
        Ok(())
    }

    /// Total step count, a multiple of the stride, so that snapshots are
    /// evenly spaced and the last one lands on `t_final`.
    pub fn step_count(&self) -> usize {
        if self.t_final == 0.0 {
            return 0;
        }
        let chunk = self.dt * self.stride as f64;
        let blocks = (self.t_final / chunk * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        blocks * self.stride
    }

    pub fn effective_dt(&self) -> f64 {
        match self.step_count() {
            0 => self.dt,
            s => self.t_final / s as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStatistics {
    pub mass_initial: f64,
    /// `max_t |m(t) - m(0)| / m(0)`.
    pub mass_drift: f64,
    pub energy_initial: f64,
    /// `max_t |E(t) - E(0)|`.
    pub energy_drift: f64,
    pub relative_energy_drift: f64,
    pub max_edge_amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub snapshots: Vec<WaveFunction>,
    pub masses: Vec<f64>,
    pub energies: Vec<Energy>,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub drift: DriftStatistics,
}

impl EvolutionRecord {
    pub fn eps(&self) -> f64 {
        self.snapshots[0].eps()
    }

    pub fn grid(&self) -> &UniformGrid {
        self.snapshots[0].grid()
    }

    pub fn final_state(&self) -> &WaveFunction {
        self.snapshots.last().expect("record holds at least the initial state")
    }

    /// Spacing between consecutive snapshots (0 for a single snapshot).
    pub fn snapshot_spacing(&self) -> f64 {
        self.dt * self.stride as f64
    }
}

pub fn propagate(psi0: &WaveFunction, v: &Potential, cfg: &PropagatorConfig) -> Result<EvolutionRecord> {
    cfg.validate()?;
    v.validate(psi0.grid())?;
    let m0 = psi0.mass();
    if (m0 - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { mass: m0 });
    }
    let check_boundary = |psi: &WaveFunction, time: f64| -> Result<f64> {
        let amp = psi.edge_amplitude();
        if cfg.check_boundary && amp > BOUNDARY_TOLERANCE {
            return Err(Error::BoundaryDecay {
                time,
                amplitude: amp,
                tolerance: BOUNDARY_TOLERANCE,
            });
        }
        Ok(amp)
    };

    let steps = cfg.step_count();
    let dt = cfg.effective_dt();
    let mut max_edge = check_boundary(psi0, 0.0)?;
    let e0 = if cfg.check_energy { energy(psi0, v) } else { Energy { kinetic: 0.0, potential: 0.0, total: 0.0 } };

    let mut times = vec![0.0];
    let mut snapshots = vec![psi0.clone()];
    let mut masses = vec![m0];
    let mut energies = vec![e0];

    let prop = Propagator::new(psi0.grid(), v, psi0.eps(), dt);
    let mut current = psi0.clone();
    for step in 1..=steps {
        prop.step(current.values_mut());
        let time = step as f64 * dt;
        if step % 100 == 0 || step == steps {
            if current.values().iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::NonFinite { time });
            }
        }
        if step % cfg.stride == 0 {
            max_edge = max_edge.max(check_boundary(&current, time)?);
            times.push(time);
            masses.push(current.mass());
            if cfg.check_energy {
                energies.push(energy(&current, v));
            }
            snapshots.push(current.clone());
        }
    }
    if let Some(last) = times.last_mut() {
        if steps > 0 {
            *last = cfg.t_final;
        }
    }

    let mass_drift = masses.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / m0;
    let energy_drift = energies.iter().map(|e| (e.total - e0.total).abs()).fold(0.0, f64::max);
    let relative_energy_drift = if e0.total != 0.0 { energy_drift / e0.total.abs() } else { energy_drift };
    if !cfg.check_energy {
        energies.clear();
    }
    Ok(EvolutionRecord {
        times,
        snapshots,
        masses,
        energies,
        dt,
        steps,
        stride: cfg.stride,
        drift: DriftStatistics {
            mass_initial: m0,
            mass_drift,
            energy_initial: e0.total,
            energy_drift,
            relative_energy_drift,
            max_edge_amplitude: max_edge,
        },
    })
}
