//! Periodic uniform grids and the spectral toolbox built on them.
//!
//! Transform convention (binding for every module): for a field sampled at
//! `x_k = x_min + k·dx` the coefficient at wavenumber `ξ_m = 2πm/L` is
//!
//! ```text
//! f̂(ξ_m) = dx/√(2π) · Σ_k f(x_k) e^{-iξ_m x_k}
//! ```
//!
//! which is the Riemann sum of the unitary continuous Fourier transform. With
//! spectral quadrature weight `dξ = 2π/L`, Parseval reads
//! `Σ|f_k|² dx = Σ|f̂_m|² dξ` exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlannerScalar};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible point count.
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Direction {
    Forward,
    Inverse,
}

type PlanCache = Mutex<HashMap<(usize, Direction), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<PlanCache> = OnceLock::new();
    static PLANNER: OnceLock<Mutex<FftPlannerScalar<f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("fft plan cache poisoned");
    map.entry((n, direction))
        .or_insert_with(|| {
            let mut planner = PLANNER
                .get_or_init(|| Mutex::new(FftPlannerScalar::new()))
                .lock()
                .expect("fft planner poisoned");
            match direction {
                Direction::Forward => planner.plan_fft_forward(n),
                Direction::Inverse => planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

/// Unnormalized in-place forward FFT (`Σ_k f_k e^{-2πikm/n}`).
pub fn fft_forward_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), Direction::Forward).process(buf);
}

/// Unnormalized in-place inverse FFT (`Σ_m F_m e^{+2πikm/n}`, no `1/n`).
pub fn fft_inverse_in_place(buf: &mut [Complex64]) {
    plan(buf.len(), Direction::Inverse).process(buf);
}

/// A one-dimensional periodic uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct UniformGrid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

/// Plain serialized form of a grid, validated on conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl TryFrom<GridSpec> for UniformGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        UniformGrid::new(spec.x_min, spec.x_max, spec.n)
    }
}

impl From<UniformGrid> for GridSpec {
    fn from(grid: UniformGrid) -> Self {
        GridSpec {
            x_min: grid.x_min,
            x_max: grid.x_max,
            n: grid.n,
        }
    }
}

/// Builds a grid after checking the power-of-two and ordering rules.
pub fn make_grid(x_min: f64, x_max: f64, n: usize) -> Result<UniformGrid> {
    UniformGrid::new(x_min, x_max, n)
}

impl UniformGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid("domain bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        if !n.is_power_of_two() || n < MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "point count n = {n} must be a power of two and at least {MIN_POINTS}"
            )));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn dimension(&self) -> usize {
        1
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n as f64
    }

    /// Spectral spacing `2π/L`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length()
    }

    pub fn point(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.point(k)).collect()
    }

    /// Signed mode number of FFT slot `index` (`0..n/2-1` then `-n/2..-1`).
    pub fn mode(&self, index: usize) -> i64 {
        let n = self.n as i64;
        let i = index as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber of FFT slot `index`.
    pub fn wavenumber(&self, index: usize) -> f64 {
        self.mode(index) as f64 * self.dxi()
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest resolved wavenumber `π/dx`.
    pub fn nyquist(&self) -> f64 {
        PI / self.dx()
    }

    /// Wraps `x` into the canonical window `[x_min, x_max)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.length();
        let mut y = (x - self.x_min).rem_euclid(l) + self.x_min;
        if y >= self.x_max {
            y -= l;
        }
        y
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x < self.x_max
    }

    /// Continuous grid coordinate `(x - x_min)/dx` of a wrapped point.
    pub(crate) fn fractional_index(&self, x: f64) -> f64 {
        (self.wrap(x) - self.x_min) / self.dx()
    }
}

/// Complex samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: UniformGrid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: UniformGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: UniformGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// `∫|f|² dx` by grid quadrature.
    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `∫ conj(self)·other dx`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.grid.dx()
    }
}

/// Spectral coefficients in FFT order under the unitary convention above.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: UniformGrid,
    coefficients: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn wavenumber(&self, index: usize) -> f64 {
        self.grid.wavenumber(index)
    }

    /// Coefficient at the resolved wavenumber closest to `xi`.
    pub fn at_wavenumber(&self, xi: f64) -> Complex64 {
        let m = (xi / self.grid.dxi()).round() as i64;
        let n = self.grid.n() as i64;
        self.coefficients[m.rem_euclid(n) as usize]
    }

    /// `Σ|f̂_m|² dξ`.
    pub fn norm_squared(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dxi()
    }
}

fn spectral_phase(grid: &UniformGrid, index: usize) -> Complex64 {
    Complex64::from_polar(1.0, -grid.wavenumber(index) * grid.x_min())
}

pub fn dft_forward(f: &ComplexField) -> Spectrum {
    let grid = *f.grid();
    let mut buf = f.values().to_vec();
    fft_forward_in_place(&mut buf);
    let scale = grid.dx() / (2.0 * PI).sqrt();
    for (i, c) in buf.iter_mut().enumerate() {
        *c *= spectral_phase(&grid, i) * scale;
    }
    Spectrum {
        grid,
        coefficients: buf,
    }
}

pub fn dft_inverse(s: &Spectrum) -> ComplexField {
    let grid = *s.grid();
    let scale = (2.0 * PI).sqrt() / (grid.dx() * grid.n() as f64);
    let mut buf: Vec<Complex64> = s
        .coefficients()
        .iter()
        .enumerate()
        .map(|(i, c)| c * spectral_phase(&grid, i).conj() * scale)
        .collect();
    fft_inverse_in_place(&mut buf);
    ComplexField { grid, values: buf }
}

/// `order`-th spectral derivative of complex samples.
pub fn spectral_derivative(grid: &UniformGrid, values: &[Complex64], order: u32) -> Vec<Complex64> {
    let n = grid.n();
    let mut buf = values.to_vec();
    fft_forward_in_place(&mut buf);
    let inv_n = 1.0 / n as f64;
    let i_unit = Complex64::new(0.0, 1.0);
    for (idx, c) in buf.iter_mut().enumerate() {
        let factor = (i_unit * grid.wavenumber(idx)).powu(order);
        *c *= factor * inv_n;
    }
    fft_inverse_in_place(&mut buf);
    buf
}

/// Spectral derivative of real samples; the imaginary residue (from the
/// Nyquist slot only) is discarded.
pub fn real_spectral_derivative(grid: &UniformGrid, values: &[f64], order: u32) -> Vec<f64> {
    let complex: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    spectral_derivative(grid, &complex, order)
        .into_iter()
        .map(|c| c.re)
        .collect()
}

/// Several derivatives of one real field from a single forward transform.
pub fn real_spectral_derivatives(grid: &UniformGrid, values: &[f64], orders: &[u32]) -> Vec<Vec<f64>> {
    let n = grid.n();
    let mut base: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward_in_place(&mut base);
    let inv_n = 1.0 / n as f64;
    let i_unit = Complex64::new(0.0, 1.0);
    orders
        .iter()
        .map(|&order| {
            let mut buf: Vec<Complex64> = base
                .iter()
                .enumerate()
                .map(|(idx, c)| c * (i_unit * grid.wavenumber(idx)).powu(order) * inv_n)
                .collect();
            fft_inverse_in_place(&mut buf);
            buf.into_iter().map(|c| c.re).collect()
        })
        .collect()
}

pub fn spectral_gradient(f: &ComplexField) -> ComplexField {
    ComplexField {
        grid: *f.grid(),
        values: spectral_derivative(f.grid(), f.values(), 1),
    }
}

/// Off-grid evaluation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Trigonometric (Fourier-sum) interpolation; exact for band-limited data.
    #[default]
    Fourier,
    /// Four-point periodic Lagrange stencil, error O(dx⁴).
    LocalCubic,
}

/// Trigonometric interpolant with coefficients computed once.
#[derive(Debug, Clone)]
pub struct FourierInterpolant {
    grid: UniformGrid,
    coefficients: Vec<Complex64>,
}

impl FourierInterpolant {
    pub fn new(grid: &UniformGrid, values: &[Complex64]) -> Self {
        let mut buf = values.to_vec();
        fft_forward_in_place(&mut buf);
        let inv_n = 1.0 / grid.n() as f64;
        buf.iter_mut().for_each(|c| *c *= inv_n);
        Self {
            grid: *grid,
            coefficients: buf,
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let n = self.grid.n();
        let half = n / 2;
        let theta = 2.0 * PI * self.grid.fractional_index(x) / n as f64;
        let step = Complex64::from_polar(1.0, theta);
        let mut sum = self.coefficients[0];
        let mut pos = Complex64::new(1.0, 0.0);
        for m in 1..half {
            pos *= step;
            sum += self.coefficients[m] * pos + self.coefficients[n - m] * pos.conj();
        }
        // The Nyquist mode is split evenly between ±n/2 so real data stays real.
        pos *= step;
        sum += self.coefficients[half] * pos.re;
        sum
    }
}

/// Periodic Lagrange interpolation through `points` consecutive samples
/// (`points` even) at fractional index `s` of a grid of spacing 1.
pub fn lagrange_periodic<T>(values: &[T], s: f64, points: usize) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let n = values.len() as i64;
    let base = s.floor();
    let frac = s - base;
    let base = base as i64;
    let half = (points / 2) as i64;
    let first = 1 - half;
    let mut acc: Option<T> = None;
    for a in 0..points as i64 {
        let node_a = (first + a) as f64;
        let mut weight = 1.0;
        for b in 0..points as i64 {
            if a != b {
                let node_b = (first + b) as f64;
                weight *= (frac - node_b) / (node_a - node_b);
            }
        }
        let idx = (base + first + a).rem_euclid(n) as usize;
        let term = values[idx] * weight;
        acc = Some(match acc {
            Some(v) => v + term,
            None => term,
        });
    }
    acc.expect("at least one stencil point")
}

/// Value of `f` at an arbitrary coordinate (wrapped into the domain).
pub fn interpolate(f: &ComplexField, x: f64, mode: Interpolation) -> Complex64 {
    let s = f.grid().fractional_index(x);
    let nearest = s.round();
    if (s - nearest).abs() < 1e-9 {
        return f.values()[(nearest as usize) % f.grid().n()];
    }
    match mode {
        Interpolation::Fourier => FourierInterpolant::new(f.grid(), f.values()).eval(x),
        Interpolation::LocalCubic => lagrange_periodic(f.values(), s, 4),
    }
}

/// Band-limited upsampling by zero padding; `factor` must be a power of two.
/// Returned samples sit at `x_min + j·dx/factor`.
pub fn upsample(grid: &UniformGrid, values: &[Complex64], factor: usize) -> Vec<Complex64> {
    assert!(factor.is_power_of_two(), "upsampling factor must be a power of two");
    let n = grid.n();
    if factor == 1 {
        return values.to_vec();
    }
    let m = n * factor;
    let mut buf = values.to_vec();
    fft_forward_in_place(&mut buf);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    let inv_n = 1.0 / n as f64;
    for k in 0..half {
        padded[k] = buf[k] * inv_n;
    }
    for k in 1..half {
        padded[m - k] = buf[n - k] * inv_n;
    }
    let nyq = buf[half] * (0.5 * inv_n);
    padded[half] = nyq;
    padded[m - half] = nyq;
    fft_inverse_in_place(&mut padded);
    padded
}

/// How a sampled field is evaluated at many off-grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerKind {
    /// Direct trigonometric sum, O(n) per point.
    Fourier,
    /// Zero-padded upsampling by `factor`, then a `points`-point periodic
    /// Lagrange stencil on the refined grid, O(points) per point.
    Upsampled { factor: usize, points: usize },
}

impl Default for SamplerKind {
    fn default() -> Self {
        SamplerKind::Upsampled { factor: 8, points: 8 }
    }
}

impl SamplerKind {
    pub fn validate(&self) -> Result<()> {
        if let SamplerKind::Upsampled { factor, points } = *self {
            if !factor.is_power_of_two() {
                return Err(Error::param("factor", format!("upsampling factor must be a power of two, got {factor}")));
            }
            if points < 2 || points % 2 == 1 || points > 16 {
                return Err(Error::param("points", format!("stencil size must be even and in 2..=16, got {points}")));
            }
        }
        Ok(())
    }
}

/// A complex grid field prepared for repeated off-grid evaluation.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    grid: UniformGrid,
    inner: SamplerData,
}

#[derive(Debug, Clone)]
enum SamplerData {
    Fourier(FourierInterpolant),
    Upsampled { values: Vec<Complex64>, factor: usize, points: usize },
}

impl FieldSampler {
    pub fn new(grid: &UniformGrid, values: &[Complex64], kind: SamplerKind) -> Self {
        let inner = match kind {
            SamplerKind::Fourier => SamplerData::Fourier(FourierInterpolant::new(grid, values)),
            SamplerKind::Upsampled { factor, points } => SamplerData::Upsampled {
                values: upsample(grid, values, factor),
                factor,
                points,
            },
        };
        Self { grid: *grid, inner }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        match &self.inner {
            SamplerData::Fourier(f) => f.eval(x),
            SamplerData::Upsampled { values, factor, points } => {
                let s = self.grid.fractional_index(x) * *factor as f64;
                lagrange_periodic(values, s, *points)
            }
        }
    }
}

/// Largest sample modulus within `band` cells of either edge, relative to the
/// global maximum (0 for the zero field).
pub fn edge_amplitude(values: &[Complex64], band: usize) -> f64 {
    let max = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0.0;
    }
    let n = values.len();
    let band = band.min(n / 2);
    let edge = values[..band]
        .iter()
        .chain(&values[n - band..])
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    edge / max
}
