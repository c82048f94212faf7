//! External potentials. Every built-in variant is smooth and nonnegative on
//! the domain it is validated against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `V = ω² x²/2`.
    Harmonic { omega: f64 },
    /// `V = A(1 + cos kx)`, offset so that `V ≥ 0`.
    CosineLattice { amplitude: f64, wavevector: f64 },
    /// `V = Σ c_j x^j`, coefficients in ascending order.
    Polynomial { coefficients: Vec<f64> },
}

impl Default for Potential {
    fn default() -> Self {
        Potential::Free
    }
}

pub fn eval_potential(v: &Potential, x: f64) -> f64 {
    v.eval(x)
}

pub fn eval_grad(v: &Potential, x: f64) -> f64 {
    v.grad(x)
}

impl Potential {
    pub fn harmonic(omega: f64) -> Self {
        Potential::Harmonic { omega }
    }

    pub fn is_free(&self) -> bool {
        match self {
            Potential::Free => true,
            Potential::Harmonic { omega } => *omega == 0.0,
            Potential::CosineLattice { amplitude, .. } => *amplitude == 0.0,
            Potential::Polynomial { coefficients } => coefficients.iter().skip(1).all(|&c| c == 0.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * omega * omega * x * x,
            Potential::CosineLattice { amplitude, wavevector } => amplitude * (1.0 + (wavevector * x).cos()),
            Potential::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    pub fn grad(&self, x: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => omega * omega * x,
            Potential::CosineLattice { amplitude, wavevector } => -amplitude * wavevector * (wavevector * x).sin(),
            Potential::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (j, c)| acc * x + j as f64 * c),
        }
    }

    /// Second derivative, used by the variational flow in the WKB solver.
    pub fn curvature(&self, x: f64) -> f64 {
        match self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => omega * omega,
            Potential::CosineLattice { amplitude, wavevector } => {
                -amplitude * wavevector * wavevector * (wavevector * x).cos()
            }
            Potential::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (j, c)| acc * x + (j * (j - 1)) as f64 * c),
        }
    }

    pub fn sample(&self, grid: &UniformGrid) -> Vec<f64> {
        grid.points().into_iter().map(|x| self.eval(x)).collect()
    }

    /// Checks parameters, nonnegativity on the grid, and agreement of the
    /// analytic gradient with centered differences.
    pub fn validate(&self, grid: &UniformGrid) -> Result<()> {
        match self {
            Potential::Free => {}
            Potential::Harmonic { omega } => {
                if !(omega.is_finite() && *omega >= 0.0) {
                    return Err(Error::InvalidPotential(format!("harmonic omega must be finite and >= 0, got {omega}")));
                }
            }
            Potential::CosineLattice { amplitude, wavevector } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidPotential(format!(
                        "cosine lattice amplitude must be finite and >= 0, got {amplitude}"
                    )));
                }
                if !wavevector.is_finite() {
                    return Err(Error::InvalidPotential("cosine lattice wavevector must be finite".into()));
                }
            }
            Potential::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidPotential("polynomial coefficients must be finite".into()));
                }
            }
        }
        let values = self.sample(grid);
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidPotential(format!(
                "potential is negative ({v}) at x = {}",
                grid.point(k)
            )));
        }
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let h = 1e-4 * grid.length().max(1.0);
        for k in (0..grid.n()).step_by((grid.n() / 16).max(1)) {
            let x = grid.point(k);
            let fd = (self.eval(x + h) - self.eval(x - h)) / (2.0 * h);
            let third = (self.curvature(x + h) - self.curvature(x - h)) / (2.0 * h);
            let allowance = 1e-8 * scale + third.abs() * h * h / 3.0;
            if (fd - self.grad(x)).abs() > allowance {
                return Err(Error::InvalidPotential(format!("gradient inconsistent with potential at x = {x}")));
            }
        }
        Ok(())
    }
}
