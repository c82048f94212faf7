//! Quadratic densities of ψ^ε: position density, current, velocity, the
//! Bohm potential and the kinetic-energy split.

use serde::{Deserialize, Serialize};

use crate::grid::{real_spectral_derivative, real_spectral_derivatives, UniformGrid};
use crate::schrodinger::{kinetic_energy, WaveFunction};

/// Default node floor relative to `max ρ`.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-12;

/// Masked mass above which the kinetic split identity is flagged approximate.
pub const MASK_MASS_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityFields {
    pub grid: UniformGrid,
    pub eps: f64,
    pub rho: Vec<f64>,
    pub current: Vec<f64>,
    /// `J/ρ` on unmasked cells, 0 on masked ones.
    pub velocity: Vec<f64>,
    /// `true` where `ρ < rho_floor`.
    pub mask: Vec<bool>,
    pub rho_floor: f64,
}

impl DensityFields {
    pub fn velocity_at(&self, k: usize) -> Option<f64> {
        (!self.mask[k]).then_some(self.velocity[k])
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn masked_mass(&self) -> f64 {
        self.rho
            .iter()
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|(r, _)| r)
            .sum::<f64>()
            * self.grid.dx()
    }
}

/// Absolute floor `relative · max ρ`.
pub fn density_floor(rho: &[f64], relative: f64) -> f64 {
    relative * rho.iter().cloned().fold(0.0, f64::max)
}

pub fn compute_densities(psi: &WaveFunction) -> DensityFields {
    compute_densities_with_floor(psi, DEFAULT_RELATIVE_FLOOR)
}

pub fn compute_densities_with_floor(psi: &WaveFunction, relative_floor: f64) -> DensityFields {
    let grid = *psi.grid();
    let eps = psi.eps();
    let re: Vec<f64> = psi.values().iter().map(|c| c.re).collect();
    let im: Vec<f64> = psi.values().iter().map(|c| c.im).collect();
    // differentiating the real and imaginary parts separately keeps J exactly
    // zero for real states
    let dre = real_spectral_derivative(&grid, &re, 1);
    let dim = real_spectral_derivative(&grid, &im, 1);
    let rho: Vec<f64> = psi.values().iter().map(|c| c.norm_sqr()).collect();
    let current: Vec<f64> = (0..grid.n()).map(|k| eps * (re[k] * dim[k] - im[k] * dre[k])).collect();
    let rho_floor = density_floor(&rho, relative_floor);
    let mask: Vec<bool> = rho.iter().map(|&r| r < rho_floor || r == 0.0).collect();
    let velocity = rho
        .iter()
        .zip(&current)
        .zip(&mask)
        .map(|((r, j), m)| if *m { 0.0 } else { j / r })
        .collect();
    DensityFields {
        grid,
        eps,
        rho,
        current,
        velocity,
        mask,
        rho_floor,
    }
}

/// `s = √ρ` and its first three spectral derivatives.
#[derive(Debug, Clone)]
pub struct Amplitude {
    pub s: Vec<f64>,
    pub ds: Vec<f64>,
    pub d2s: Vec<f64>,
    pub d3s: Vec<f64>,
}

pub fn amplitude_derivatives(grid: &UniformGrid, rho: &[f64]) -> Amplitude {
    let s: Vec<f64> = rho.iter().map(|r| r.max(0.0).sqrt()).collect();
    let mut d = real_spectral_derivatives(grid, &s, &[1, 2, 3]).into_iter();
    Amplitude {
        ds: d.next().unwrap(),
        d2s: d.next().unwrap(),
        d3s: d.next().unwrap(),
        s,
    }
}

/// Pointwise Bohm potential `-(ε²/2)s''/s` and its gradient
/// `-(ε²/2)(s'''s - s''s')/s²`.
pub fn bohm_from_amplitude(eps: f64, s: f64, ds: f64, d2s: f64, d3s: f64) -> (f64, f64) {
    let c = -0.5 * eps * eps;
    (c * d2s / s, c * (d3s * s - d2s * ds) / (s * s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BohmPotential {
    /// Zero where masked.
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn bohm_potential(grid: &UniformGrid, rho: &[f64], eps: f64) -> BohmPotential {
    let floor = density_floor(rho, DEFAULT_RELATIVE_FLOOR);
    let amp = amplitude_derivatives(grid, rho);
    let n = rho.len();
    let mut values = vec![0.0; n];
    let mut gradient = vec![0.0; n];
    let mut mask = vec![true; n];
    for k in 0..n {
        if rho[k] >= floor && rho[k] > 0.0 {
            let (vb, g) = bohm_from_amplitude(eps, amp.s[k], amp.ds[k], amp.d2s[k], amp.d3s[k]);
            values[k] = vb;
            gradient[k] = g;
            mask[k] = false;
        }
    }
    BohmPotential { values, gradient, mask }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticSplit {
    pub total: f64,
    pub current_part: f64,
    pub osmotic_part: f64,
    pub masked_mass: f64,
}

impl KineticSplit {
    /// Whether the masked set is light enough for `total = current + osmotic`
    /// to hold to quadrature accuracy.
    pub fn identity_reliable(&self) -> bool {
        self.masked_mass <= MASK_MASS_WARNING
    }
}

pub fn kinetic_split(psi: &WaveFunction) -> KineticSplit {
    let fields = compute_densities(psi);
    kinetic_split_from(psi, &fields)
}

pub fn kinetic_split_from(psi: &WaveFunction, fields: &DensityFields) -> KineticSplit {
    let grid = fields.grid;
    let dx = grid.dx();
    let eps = fields.eps;
    let current_part = 0.5
        * fields
            .current
            .iter()
            .zip(&fields.rho)
            .zip(&fields.mask)
            .filter(|(_, m)| !**m)
            .map(|((j, r), _)| j * j / r)
            .sum::<f64>()
        * dx;
    let amp = amplitude_derivatives(&grid, &fields.rho);
    let osmotic_part = 0.5 * eps * eps * amp.ds.iter().map(|d| d * d).sum::<f64>() * dx;
    let masked_mass = fields.masked_mass();
    if masked_mass > MASK_MASS_WARNING {
        log::warn!("node mask carries mass {masked_mass:.3e}; kinetic split is approximate");
    }
    KineticSplit {
        total: kinetic_energy(psi),
        current_part,
        osmotic_part,
        masked_mass,
    }
}
