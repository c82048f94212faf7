use serde::{Deserialize, Serialize};

use super::measure::PhaseSpaceMeasure;
use crate::error::{Error, Result};
use crate::hydrodynamics::compute_densities;
use crate::schrodinger::WaveFunction;

/// Smooth bounded window in x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Window {
    One,
    /// `exp(-(x-c)²/(2w²))`.
    Gaussian { center: f64, width: f64 },
    /// `exp(1 - 1/(1 - ((x-c)/r)²))` on `|x-c| < r`, zero outside; peak 1.
    Bump { center: f64, radius: f64 },
}

impl Window {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Window::One => 1.0,
            Window::Gaussian { center, width } => (-(x - center).powi(2) / (2.0 * width * width)).exp(),
            Window::Bump { center, radius } => {
                let s = (x - center) / radius;
                if s.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Window::Gaussian { width, .. } if !(width > 0.0) => Err(Error::UnsupportedTestFunction("window width must be positive".into())),
            Window::Bump { radius, .. } if !(radius > 0.0) => Err(Error::UnsupportedTestFunction("bump radius must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Function of the density value `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityFn {
    One,
    /// `r^k` with `k ≥ 0`; bounded on the bounded range of `ρ^ε` under study.
    Power { exponent: f64 },
    /// `tanh(r/s)`.
    Tanh { scale: f64 },
}

impl DensityFn {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            DensityFn::One => 1.0,
            DensityFn::Power { exponent } => r.powf(exponent),
            DensityFn::Tanh { scale } => (r / scale).tanh(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DensityFn::Power { exponent } if !(exponent >= 0.0) => {
                Err(Error::UnsupportedTestFunction("density exponent must be >= 0".into()))
            }
            DensityFn::Tanh { scale } if !(scale > 0.0) => Err(Error::UnsupportedTestFunction("tanh scale must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Bounded function of the current value `ξ` (or, for the Bohmian form, of
/// the velocity `ξ/r`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentFn {
    One,
    Tanh { scale: f64 },
    Cos { frequency: f64 },
    /// `exp(-(ξ-c)²/(2w²))`.
    Gaussian { center: f64, width: f64 },
}

pub type MomentumFn = CurrentFn;

impl CurrentFn {
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            CurrentFn::One => 1.0,
            CurrentFn::Tanh { scale } => (v / scale).tanh(),
            CurrentFn::Cos { frequency } => (frequency * v).cos(),
            CurrentFn::Gaussian { center, width } => (-(v - center).powi(2) / (2.0 * width * width)).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            CurrentFn::Tanh { scale } if !(scale > 0.0) => Err(Error::UnsupportedTestFunction("tanh scale must be positive".into())),
            CurrentFn::Gaussian { width, .. } if !(width > 0.0) => {
                Err(Error::UnsupportedTestFunction("gaussian width must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Test functions `σ(x, r, ξ)` from the supported dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `window(x)·f(r)·g(ξ)`.
    Product { window: Window, density: DensityFn, current: CurrentFn },
    /// `r·φ(x, ξ/r)` with `φ = window(x)·g(p)`, extended by 0 at `r = 0`.
    Bohmian { window: Window, momentum: MomentumFn },
}

impl TestFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Product { window, density, current } => {
                window.validate()?;
                density.validate()?;
                current.validate()
            }
            TestFunction::Bohmian { window, momentum } => {
                window.validate()?;
                momentum.validate()
            }
        }
    }

    /// `σ(x, r, ξ)`; for the Bohmian form `u` is the masked velocity.
    fn eval(&self, x: f64, r: f64, xi: f64, u: Option<f64>) -> f64 {
        match self {
            TestFunction::Product { window, density, current } => window.eval(x) * density.eval(r) * current.eval(xi),
            TestFunction::Bohmian { window, momentum } => match u {
                Some(u) => r * window.eval(x) * momentum.eval(u),
                None => 0.0,
            },
        }
    }

    /// `φ(x, p)` of the Bohmian form.
    pub fn phase_space_function(&self) -> Option<impl Fn(f64, f64) -> f64 + '_> {
        match self {
            TestFunction::Bohmian { window, momentum } => Some(move |x: f64, p: f64| window.eval(x) * momentum.eval(p)),
            TestFunction::Product { .. } => None,
        }
    }
}

/// `∫σ(x, ρ^ε(x), J^ε(x)) dx` by grid quadrature.
pub fn pair_functional(psi: &WaveFunction, sigma: &TestFunction) -> Result<f64> {
    sigma.validate()?;
    let fields = compute_densities(psi);
    let grid = fields.grid;
    let total: f64 = (0..grid.n())
        .map(|k| sigma.eval(grid.point(k), fields.rho[k], fields.current[k], fields.velocity_at(k)))
        .sum();
    Ok(total * grid.dx())
}

/// `⟨μ, φ⟩ = Σ w_i φ(x_i, p_i)`.
pub fn pair_measure(mu: &PhaseSpaceMeasure, phi: impl Fn(f64, f64) -> f64) -> f64 {
    mu.particles().iter().map(|q| q.w * phi(q.x, q.p)).sum()
}
