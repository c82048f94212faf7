use serde::{Deserialize, Serialize};

use super::measure::PhaseSpaceMeasure;
use super::wigner::WignerGridFunction;
use crate::grid::UniformGrid;

/// Zeroth and first momentum moments as x-fields, and `½∬p² dμ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    pub rho: Vec<f64>,
    pub first: Vec<f64>,
    pub second: f64,
}

/// Moments of a particle measure binned to the nearest cell of `grid`.
pub fn measure_moments(mu: &PhaseSpaceMeasure, grid: &UniformGrid) -> Moments {
    let n = grid.n();
    let dx = grid.dx();
    let mut rho = vec![0.0; n];
    let mut first = vec![0.0; n];
    let mut second = 0.0;
    for q in mu.particles() {
        let k = (grid.fractional_index(q.x).round() as usize) % n;
        rho[k] += q.w;
        first[k] += q.w * q.p;
        second += q.w * q.p * q.p;
    }
    rho.iter_mut().for_each(|v| *v /= dx);
    first.iter_mut().for_each(|v| *v /= dx);
    Moments {
        mass: mu.total_mass(),
        rho,
        first,
        second: 0.5 * second,
    }
}

pub fn wigner_moments(w: &WignerGridFunction) -> Moments {
    let momenta = w.momenta();
    let dp = w.dp;
    let mut rho = Vec::with_capacity(w.nx());
    let mut first = Vec::with_capacity(w.nx());
    let mut second = 0.0;
    for k in 0..w.nx() {
        let row = w.row(k);
        let (mut r, mut f, mut s) = (0.0, 0.0, 0.0);
        for (v, p) in row.iter().zip(&momenta) {
            r += v;
            f += v * p;
            s += v * p * p;
        }
        rho.push(r * dp);
        first.push(f * dp);
        second += s * dp;
    }
    let dx = w.grid.dx();
    Moments {
        mass: rho.iter().sum::<f64>() * dx,
        rho,
        first,
        second: 0.5 * second * dx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydrodynamics::{compute_densities, kinetic_split};
    use crate::phasespace::{bohmian_measure, wigner_transform};
    use crate::schrodinger::kinetic_energy;
    use crate::{Complex64, WaveFunction};

    fn chirped(grid: UniformGrid, eps: f64) -> WaveFunction {
        WaveFunction::from_fn(grid, eps, |x| {
            Complex64::from_polar((-(x - 0.2).powi(2) * 2.0).exp(), (0.3 * x - 0.4 * x * x) / eps)
        })
        .unwrap()
        .normalized()
        .unwrap()
    }

    #[test]
    fn bohmian_moments_reproduce_densities() {
        let g = UniformGrid::new(-6.0, 6.0, 1024).unwrap();
        let psi = chirped(g, 1.0 / 32.0);
        let fields = compute_densities(&psi);
        let m = measure_moments(&bohmian_measure(&psi), &g);
        for k in 0..g.n() {
            if !fields.mask[k] {
                assert!((m.rho[k] - fields.rho[k]).abs() <= 1e-15 * fields.rho[k].max(1e-300) * 4.0);
                assert!((m.first[k] - fields.current[k]).abs() <= 1e-14 * fields.current[k].abs() + 1e-300);
            }
        }
        let split = kinetic_split(&psi);
        assert!((m.second - split.current_part).abs() < 1e-12 * split.current_part);
    }

    #[test]
    fn wigner_moments_and_energy_partition() {
        let g = UniformGrid::new(-6.0, 6.0, 1024).unwrap();
        let psi = chirped(g, 1.0 / 32.0);
        let fields = compute_densities(&psi);
        let w = wigner_transform(&psi).unwrap();
        let m = wigner_moments(&w);
        let scale_r = fields.rho.iter().cloned().fold(0.0, f64::max);
        let scale_j = fields.current.iter().fold(0.0_f64, |a, j| a.max(j.abs()));
        for k in 0..g.n() {
            assert!((m.rho[k] - fields.rho[k]).abs() < 1e-12 * scale_r);
            assert!((m.first[k] - fields.current[k]).abs() < 1e-8 * scale_j, "k = {k}");
        }
        let total = kinetic_energy(&psi);
        assert!((m.second - total).abs() < 1e-6 * total);
        let split = kinetic_split(&psi);
        let beta = measure_moments(&bohmian_measure(&psi), &g);
        assert!((m.second - beta.second - split.osmotic_part).abs() < 1e-6 * split.osmotic_part);
        assert!((m.mass - 1.0).abs() < 1e-12);
    }
}
