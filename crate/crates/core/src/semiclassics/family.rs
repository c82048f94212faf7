use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::hermite::hermite_function;
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::schrodinger::{WaveFunction, BOUNDARY_TOLERANCE};

/// Points required per local ε-wavelength `2πε/|p|` and across a width.
pub const POINTS_PER_WAVELENGTH: f64 = 8.0;

/// Amplitude level (relative to the peak of `|a|²`) that bounds the bulk
/// region used for momentum estimates.
pub const BULK_LEVEL: f64 = 1e-6;

fn one() -> f64 {
    1.0
}

/// Smooth real envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    /// `h·exp(-(x-c)²/(2w²))`.
    Gaussian {
        center: f64,
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
    /// `h·exp(1 - 1/(1 - ((x-c)/r)²))` on `|x-c| < r`.
    Bump {
        center: f64,
        radius: f64,
        #[serde(default = "one")]
        height: f64,
    },
}

impl Envelope {
    pub fn gaussian(center: f64, width: f64) -> Self {
        Envelope::Gaussian { center, width, height: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Envelope::Gaussian { center, width, height } => height * (-(x - center).powi(2) / (2.0 * width * width)).exp(),
            Envelope::Bump { center, radius, height } => {
                let s = (x - center) / radius;
                if s.abs() < 1.0 {
                    height * (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Interval outside which `|a|² < BULK_LEVEL·max|a|²`.
    pub fn bulk(&self) -> (f64, f64) {
        match *self {
            Envelope::Gaussian { center, width, .. } => {
                let r = width * (-BULK_LEVEL.ln()).sqrt();
                (center - r, center + r)
            }
            Envelope::Bump { center, radius, .. } => {
                // 1 - 1/(1-s²) = ln(level)/2
                let c = -0.5 * BULK_LEVEL.ln();
                let s = (1.0 - 1.0 / (1.0 + c)).sqrt();
                (center - s * radius, center + s * radius)
            }
        }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        let (scale, height) = match *self {
            Envelope::Gaussian { width, height, .. } => (width, height),
            Envelope::Bump { radius, height, .. } => (radius, height),
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param(name, "envelope width must be positive"));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::param(name, "envelope height must be positive"));
        }
        Ok(())
    }
}

/// Real phase function `S(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseSpec {
    /// `S = p x`.
    Linear { momentum: f64 },
    /// `S = p x + c x²/2`.
    Quadratic {
        #[serde(default)]
        momentum: f64,
        curvature: f64,
    },
    /// `S = A cos(kx)`.
    Cosine { amplitude: f64, wavenumber: f64 },
}

impl PhaseSpec {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            PhaseSpec::Linear { momentum } => momentum * x,
            PhaseSpec::Quadratic { momentum, curvature } => momentum * x + 0.5 * curvature * x * x,
            PhaseSpec::Cosine { amplitude, wavenumber } => amplitude * (wavenumber * x).cos(),
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match *self {
            PhaseSpec::Linear { momentum } => momentum,
            PhaseSpec::Quadratic { momentum, curvature } => momentum + curvature * x,
            PhaseSpec::Cosine { amplitude, wavenumber } => -amplitude * wavenumber * (wavenumber * x).sin(),
        }
    }

    pub fn curvature(&self, x: f64) -> f64 {
        match *self {
            PhaseSpec::Linear { .. } => 0.0,
            PhaseSpec::Quadratic { curvature, .. } => curvature,
            PhaseSpec::Cosine { amplitude, wavenumber } => -amplitude * wavenumber * wavenumber * (wavenumber * x).cos(),
        }
    }

    /// `max |S'|` over `[a, b]`, sampled densely.
    fn max_gradient(&self, (a, b): (f64, f64)) -> f64 {
        (0..=1024)
            .map(|i| self.gradient(a + (b - a) * i as f64 / 1024.0).abs())
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let finite = match *self {
            PhaseSpec::Linear { momentum } => momentum.is_finite(),
            PhaseSpec::Quadratic { momentum, curvature } => momentum.is_finite() && curvature.is_finite(),
            PhaseSpec::Cosine { amplitude, wavenumber } => amplitude.is_finite() && wavenumber.is_finite(),
        };
        if finite {
            Ok(())
        } else {
            Err(Error::param("phase", "coefficients must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub index: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// A `2π`-periodic profile `g(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeriodicProfile {
    /// `g(y) = Σ c_k e^{iky}`.
    Fourier { modes: Vec<FourierMode> },
    /// `g(y) = exp(i(m y + Σ_j b_j sin(j y)))`, harmonics listed from `j = 1`.
    Phase { winding: i64, harmonics: Vec<f64> },
}

impl PeriodicProfile {
    pub fn cosine() -> Self {
        PeriodicProfile::Fourier {
            modes: vec![
                FourierMode { index: 1, re: 0.5, im: 0.0 },
                FourierMode { index: -1, re: 0.5, im: 0.0 },
            ],
        }
    }

    /// `(g(y), g'(y))`.
    pub fn eval(&self, y: f64) -> (Complex64, Complex64) {
        match self {
            PeriodicProfile::Fourier { modes } => modes.iter().fold(
                (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
                |(g, dg), m| {
                    let term = Complex64::new(m.re, m.im) * Complex64::from_polar(1.0, m.index as f64 * y);
                    (g + term, dg + term * Complex64::new(0.0, m.index as f64))
                },
            ),
            PeriodicProfile::Phase { winding, harmonics } => {
                let mut theta = *winding as f64 * y;
                let mut dtheta = *winding as f64;
                for (j, b) in harmonics.iter().enumerate() {
                    let j = (j + 1) as f64;
                    theta += b * (j * y).sin();
                    dtheta += b * j * (j * y).cos();
                }
                let g = Complex64::from_polar(1.0, theta);
                (g, g * Complex64::new(0.0, dtheta))
            }
        }
    }

    /// Largest local frequency `|Im(g'/g)|` or mode index in the profile.
    pub fn max_frequency(&self) -> f64 {
        match self {
            PeriodicProfile::Fourier { modes } => modes.iter().map(|m| m.index.unsigned_abs() as f64).fold(0.0, f64::max),
            PeriodicProfile::Phase { winding, harmonics } => {
                winding.unsigned_abs() as f64 + harmonics.iter().enumerate().map(|(j, b)| (j + 1) as f64 * b.abs()).sum::<f64>()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PeriodicProfile::Fourier { modes } => {
                if modes.is_empty() || modes.iter().all(|m| m.re == 0.0 && m.im == 0.0) {
                    return Err(Error::param("profile", "at least one nonzero Fourier mode is required"));
                }
                if modes.iter().any(|m| !(m.re.is_finite() && m.im.is_finite())) {
                    return Err(Error::param("profile", "Fourier coefficients must be finite"));
                }
            }
            PeriodicProfile::Phase { harmonics, .. } => {
                if harmonics.iter().any(|b| !b.is_finite()) {
                    return Err(Error::param("profile", "phase harmonics must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Case-study wave-function families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `f(x) e^{i p₀ x/ε}`.
    ModulatedPlaneWave { envelope: Envelope, momentum: f64 },
    /// `f(x) g(x/ε)` with `g` periodic.
    PeriodicOscillatory { envelope: Envelope, profile: PeriodicProfile },
    /// `ε^{-1/2} f((x-x₀)/ε)`, `f(y) = exp(-(1 - ic) y²/(2w²))`.
    Concentrating {
        center: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        chirp: f64,
    },
    /// `ε^{-1/4} f((x-x₀)/√ε) e^{i p₀ x/ε}`, `f(y) = exp(-y²/(2w²))`.
    CoherentState {
        center: f64,
        momentum: f64,
        #[serde(default = "one")]
        width: f64,
    },
    /// Eigenfunction of `V = ω²x²/2` with index `n = round(Λ/(εω) - 1/2)`.
    HarmonicEigenstate {
        energy: f64,
        #[serde(default = "one")]
        omega: f64,
    },
    /// `a₁ e^{iS₁/ε} + a₂ e^{iS₂/ε}`.
    TwoPhaseWkb { a1: Envelope, a2: Envelope, s1: PhaseSpec, s2: PhaseSpec },
    /// `a₀ e^{iS₀/ε}`.
    WkbSingle { amplitude: Envelope, phase: PhaseSpec },
}

/// One line per family for listings.
pub const FAMILY_SUMMARIES: &[(&str, &str)] = &[
    ("modulated_plane_wave", "f(x) exp(i p0 x/eps); Bohmian and Wigner limits coincide"),
    ("periodic_oscillatory", "f(x) g(x/eps) with 2pi-periodic g; limits differ unless g has one mode"),
    ("concentrating", "eps^-1/2 f((x-x0)/eps); limits differ for every nonzero f"),
    ("coherent_state", "eps^-1/4 f((x-x0)/sqrt(eps)) exp(i p0 x/eps); point-mass limits coincide"),
    ("harmonic_eigenstate", "harmonic-oscillator eigenfunction near energy Lambda; rho delta(p) vs energy curve"),
    ("two_phase_wkb", "a1 exp(i S1/eps) + a2 exp(i S2/eps); two atoms vs theta-averaged Bohmian limit"),
    ("wkb_single", "a0 exp(i S0/eps); mono-kinetic limits before the first caustic"),
];

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::ModulatedPlaneWave { .. } => "modulated_plane_wave",
            Family::PeriodicOscillatory { .. } => "periodic_oscillatory",
            Family::Concentrating { .. } => "concentrating",
            Family::CoherentState { .. } => "coherent_state",
            Family::HarmonicEigenstate { .. } => "harmonic_eigenstate",
            Family::TwoPhaseWkb { .. } => "two_phase_wkb",
            Family::WkbSingle { .. } => "wkb_single",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Family::ModulatedPlaneWave { envelope, momentum } => {
                envelope.validate("envelope")?;
                if !momentum.is_finite() {
                    return Err(Error::param("momentum", "must be finite"));
                }
            }
            Family::PeriodicOscillatory { envelope, profile } => {
                envelope.validate("envelope")?;
                profile.validate()?;
            }
            Family::Concentrating { center, width, chirp } => {
                if !(width > &0.0 && center.is_finite() && chirp.is_finite()) {
                    return Err(Error::param("width", "profile width must be positive, center and chirp finite"));
                }
            }
            Family::CoherentState { center, momentum, width } => {
                if !(width > &0.0 && center.is_finite() && momentum.is_finite()) {
                    return Err(Error::param("width", "profile width must be positive, center and momentum finite"));
                }
            }
            Family::HarmonicEigenstate { energy, omega } => {
                if !(*energy >= 0.0 && energy.is_finite()) {
                    return Err(Error::param("energy", "must be finite and >= 0"));
                }
                if !(*omega > 0.0 && omega.is_finite()) {
                    return Err(Error::param("omega", "must be positive"));
                }
            }
            Family::TwoPhaseWkb { a1, a2, s1, s2 } => {
                a1.validate("a1")?;
                a2.validate("a2")?;
                s1.validate()?;
                s2.validate()?;
                let (lo, hi) = a1.bulk();
                for i in 0..=2048 {
                    let x = lo + (hi - lo) * i as f64 / 2048.0;
                    if a1.eval(x) <= a2.eval(x) {
                        return Err(Error::param("a2", format!("a1 > a2 is required on the support; fails at x = {x:.4}")));
                    }
                    if (s1.gradient(x) - s2.gradient(x)).abs() < 1e-12 {
                        return Err(Error::param("s2", format!("phase gradients must differ; equal at x = {x:.4}")));
                    }
                }
            }
            Family::WkbSingle { amplitude, phase } => {
                amplitude.validate("amplitude")?;
                phase.validate()?;
            }
        }
        Ok(())
    }

    /// Whether both limits are mono-kinetic (`ρ δ(p - u)`) and coincide.
    pub fn is_mono_kinetic(&self) -> bool {
        match self {
            Family::ModulatedPlaneWave { .. } | Family::CoherentState { .. } | Family::WkbSingle { .. } => true,
            Family::PeriodicOscillatory { profile, .. } => match profile {
                PeriodicProfile::Fourier { modes } => modes.iter().filter(|m| m.re != 0.0 || m.im != 0.0).count() == 1,
                PeriodicProfile::Phase { harmonics, .. } => harmonics.iter().all(|&b| b == 0.0),
            },
            _ => false,
        }
    }

    /// For harmonic eigenstates, the index selected at `ε`.
    pub fn eigen_index(&self, eps: f64) -> Option<usize> {
        match *self {
            Family::HarmonicEigenstate { energy, omega } => Some((energy / (eps * omega) - 0.5).round().max(0.0) as usize),
            _ => None,
        }
    }

    /// Largest spacing allowed at `ε`, with the rule that sets it.
    pub fn max_spacing(&self, eps: f64) -> (f64, &'static str) {
        let wavelength = |p: f64| {
            if p > 0.0 {
                2.0 * PI * eps / (POINTS_PER_WAVELENGTH * p)
            } else {
                f64::INFINITY
            }
        };
        match self {
            Family::ModulatedPlaneWave { envelope, momentum } => {
                let width = match *envelope {
                    Envelope::Gaussian { width, .. } => width,
                    Envelope::Bump { radius, .. } => radius,
                };
                let w = wavelength(momentum.abs()).min(width / POINTS_PER_WAVELENGTH);
                (w, "8 points per eps-wavelength 2*pi*eps/|p0|")
            }
            Family::PeriodicOscillatory { profile, .. } => {
                (wavelength(profile.max_frequency()), "8 points per eps-wavelength of the periodic profile")
            }
            Family::Concentrating { width, chirp, .. } => {
                let w = (eps * width / POINTS_PER_WAVELENGTH).min(wavelength(chirp.abs() * 4.0 / width));
                (w, "8 points across the concentration width eps")
            }
            Family::CoherentState { momentum, width, .. } => {
                let w = (eps.sqrt() * width / POINTS_PER_WAVELENGTH).min(wavelength(momentum.abs()));
                (w, "8 points across the packet width sqrt(eps) and per eps-wavelength 2*pi*eps/|p0|")
            }
            Family::HarmonicEigenstate { energy, .. } => {
                (wavelength((2.0 * energy).sqrt()), "8 points per eps-wavelength at the bottom of the well")
            }
            Family::TwoPhaseWkb { a1, s1, s2, .. } => {
                let p = s1.max_gradient(a1.bulk()).max(s2.max_gradient(a1.bulk()));
                (wavelength(p), "8 points per eps-wavelength of the bulk momentum")
            }
            Family::WkbSingle { amplitude, phase } => {
                (wavelength(phase.max_gradient(amplitude.bulk())), "8 points per eps-wavelength of the bulk momentum")
            }
        }
    }

    /// Checks the resolution rule for `ε` on `grid`.
    pub fn check_resolution(&self, eps: f64, grid: &UniformGrid) -> Result<()> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::param("eps", format!("must satisfy 0 < eps <= 1, got {eps}")));
        }
        let (limit, rule) = self.max_spacing(eps);
        if grid.dx() > limit * (1.0 + 1e-12) {
            return Err(Error::Resolution(format!(
                "{} at eps = {eps}: dx = {:.4e} exceeds {limit:.4e} ({rule})",
                self.name(),
                grid.dx()
            )));
        }
        Ok(())
    }

    /// Smallest power-of-two grid on `[x_min, x_max)` with at least `min_n`
    /// points that satisfies the resolution rule.
    pub fn choose_grid(&self, eps: f64, x_min: f64, x_max: f64, min_n: usize) -> Result<UniformGrid> {
        let (limit, _) = self.max_spacing(eps);
        let needed = ((x_max - x_min) / limit).ceil().max(min_n as f64).max(16.0);
        if needed > (1u64 << 24) as f64 {
            return Err(Error::Resolution(format!("{} at eps = {eps} needs more than 2^24 points", self.name())));
        }
        UniformGrid::new(x_min, x_max, (needed as usize).next_power_of_two())
    }

    /// Unnormalized closed-form samples `ψ^ε(x)`.
    fn amplitude(&self, eps: f64, x: f64) -> Complex64 {
        match self {
            Family::ModulatedPlaneWave { envelope, momentum } => Complex64::from_polar(envelope.eval(x), momentum * x / eps),
            Family::PeriodicOscillatory { envelope, profile } => profile.eval(x / eps).0 * envelope.eval(x),
            Family::Concentrating { center, width, chirp } => {
                let y = (x - center) / eps;
                let q = y * y / (2.0 * width * width);
                Complex64::from_polar((-q).exp(), chirp * q) / eps.sqrt()
            }
            Family::CoherentState { center, momentum, width } => {
                let y = (x - center) / eps.sqrt();
                Complex64::from_polar((-y * y / (2.0 * width * width)).exp() * eps.powf(-0.25), momentum * x / eps)
            }
            Family::HarmonicEigenstate { omega, .. } => {
                let n = self.eigen_index(eps).unwrap_or(0);
                let y = (omega / eps).sqrt() * x;
                Complex64::new(hermite_function(n, y) * (omega / eps).powf(0.25), 0.0)
            }
            Family::TwoPhaseWkb { a1, a2, s1, s2 } => {
                Complex64::from_polar(a1.eval(x), s1.value(x) / eps) + Complex64::from_polar(a2.eval(x), s2.value(x) / eps)
            }
            Family::WkbSingle { amplitude, phase } => Complex64::from_polar(amplitude.eval(x), phase.value(x) / eps),
        }
    }
}

/// Normalized grid samples of the family at `ε`.
pub fn synthesize(family: &Family, eps: f64, grid: &UniformGrid) -> Result<WaveFunction> {
    family.validate()?;
    family.check_resolution(eps, grid)?;
    let psi = WaveFunction::from_fn(*grid, eps, |x| family.amplitude(eps, x))?;
    let edge = psi.edge_amplitude();
    if edge > BOUNDARY_TOLERANCE {
        return Err(Error::BoundaryDecay {
            time: 0.0,
            amplitude: edge,
            tolerance: BOUNDARY_TOLERANCE,
        });
    }
    let psi = psi.normalized()?;
    let mass = psi.mass();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { mass });
    }
    Ok(psi)
}
