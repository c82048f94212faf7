use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{dft_forward, fft_forward_in_place, UniformGrid};
use crate::schrodinger::WaveFunction;

/// Spectral mass fraction allowed beyond `p_max`, where the periodic p-grid
/// would alias it.
const ALIAS_LIMIT: f64 = 1e-10;
/// Fraction beyond `0.8·p_max` that triggers a warning.
const MARGIN_WARNING: f64 = 1e-8;

/// Wigner function sampled on `x_k × p_m` with `p_m = (m - n/2)Δp`,
/// `Δp = πε/L`, stored row-major as `[x index][p index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGridFunction {
    pub grid: UniformGrid,
    pub eps: f64,
    pub dp: f64,
    pub values: Vec<f64>,
    /// Largest discarded imaginary part relative to the largest `|w|`.
    pub imaginary_residue: f64,
}

impl WignerGridFunction {
    pub fn nx(&self) -> usize {
        self.grid.n()
    }

    pub fn np(&self) -> usize {
        self.grid.n()
    }

    pub fn p_min(&self) -> f64 {
        -(self.np() as f64 / 2.0) * self.dp
    }

    /// `πε/(2dx)`.
    pub fn p_max(&self) -> f64 {
        self.np() as f64 / 2.0 * self.dp
    }

    pub fn p(&self, m: usize) -> f64 {
        (m as f64 - self.np() as f64 / 2.0) * self.dp
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.np()).map(|m| self.p(m)).collect()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let np = self.np();
        &self.values[k * np..(k + 1) * np]
    }

    pub fn value(&self, k: usize, m: usize) -> f64 {
        self.values[k * self.np() + m]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `Σ_m w Δp` per x-row.
    pub fn position_marginal(&self) -> Vec<f64> {
        (0..self.nx()).map(|k| self.row(k).iter().sum::<f64>() * self.dp).collect()
    }

    /// `Σ_k w dx` per p-column.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let np = self.np();
        let mut out = vec![0.0; np];
        for k in 0..self.nx() {
            for (o, v) in out.iter_mut().zip(self.row(k)) {
                *o += v;
            }
        }
        let dx = self.grid.dx();
        out.iter_mut().for_each(|v| *v *= dx);
        out
    }
}

/// Fraction of spectral mass with `|εξ| > threshold`.
fn spectral_fraction_beyond(psi: &WaveFunction, threshold: f64) -> f64 {
    let spec = dft_forward(psi.field());
    let total: f64 = spec.coefficients().iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let beyond: f64 = spec
        .coefficients()
        .iter()
        .enumerate()
        .filter(|(i, _)| (psi.eps() * spec.wavenumber(*i)).abs() > threshold)
        .map(|(_, c)| c.norm_sqr())
        .sum();
    beyond / total
}

/// How the correlation `ψ(x_{k+j}) conj ψ(x_{k-j})` treats shifts that leave
/// the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Samples outside the window are zero: the state is seen on the line.
    /// The momentum marginal is then the continuous transform of the samples
    /// at every p-node.
    #[default]
    ZeroExtended,
    /// Indices wrap around. Exact for periodic states such as plane waves, but
    /// a localized state acquires an alternating copy displaced by `L/2`.
    Periodic,
}

pub fn wigner_transform(psi: &WaveFunction) -> Result<WignerGridFunction> {
    wigner_transform_with(psi, Correlation::ZeroExtended)
}

pub fn wigner_transform_with(psi: &WaveFunction, correlation: Correlation) -> Result<WignerGridFunction> {
    let grid = *psi.grid();
    let n = grid.n();
    let eps = psi.eps();
    let dp = PI * eps / grid.length();
    let p_max = n as f64 / 2.0 * dp;

    let aliased = spectral_fraction_beyond(psi, p_max);
    if aliased > ALIAS_LIMIT {
        return Err(Error::WignerUnresolved(format!(
            "spectral mass fraction {aliased:.2e} lies beyond p_max = {p_max:.4}; refine the grid"
        )));
    }
    let margin = spectral_fraction_beyond(psi, 0.8 * p_max);
    if margin > MARGIN_WARNING {
        log::warn!("Wigner p-grid margin: fraction {margin:.2e} beyond 0.8·p_max");
    }

    let psi_v = psi.values();
    let scale = grid.dx() / (PI * eps);
    let half = n / 2;
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            match correlation {
                Correlation::ZeroExtended => {
                    let reach = k.min(n - 1 - k).min(half - 1);
                    for j in 0..=reach {
                        let c = psi_v[k + j] * psi_v[k - j].conj();
                        buf[j] = c;
                        if j > 0 {
                            buf[n - j] = c.conj();
                        }
                    }
                }
                Correlation::Periodic => {
                    for (j, slot) in buf.iter_mut().enumerate() {
                        *slot = psi_v[(k + j) % n] * psi_v[(k + n - j) % n].conj();
                    }
                }
            }
            fft_forward_in_place(&mut buf);
            let mut row = vec![0.0; n];
            let mut imag: f64 = 0.0;
            for (m_fft, c) in buf.iter().enumerate() {
                let out = (m_fft + half) % n;
                row[out] = c.re * scale;
                imag = imag.max((c.im * scale).abs());
            }
            (row, imag)
        })
        .collect();

    let mut values = Vec::with_capacity(n * n);
    let mut max_imag: f64 = 0.0;
    for (row, imag) in rows {
        values.extend_from_slice(&row);
        max_imag = max_imag.max(imag);
    }
    let peak = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let residue = if peak > 0.0 { max_imag / peak } else { 0.0 };
    if residue > 1e-10 {
        return Err(Error::InvalidData(format!("Wigner imaginary residue {residue:.2e} exceeds 1e-10")));
    }
    Ok(WignerGridFunction {
        grid,
        eps,
        dp,
        values,
        imaginary_residue: residue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::fft_forward_in_place;
    use crate::hydrodynamics::compute_densities;

    fn packet(grid: UniformGrid, eps: f64, x0: f64, p0: f64) -> WaveFunction {
        let norm = (eps * PI).powf(-0.25);
        WaveFunction::from_fn(grid, eps, |x| {
            Complex64::from_polar(norm * (-(x - x0).powi(2) / (2.0 * eps)).exp(), p0 * x / eps)
        })
        .unwrap()
    }

    #[test]
    fn marginals_of_a_packet() {
        let g = UniformGrid::new(-4.0, 4.0, 256).unwrap();
        let eps = 1.0 / 16.0;
        let psi = packet(g, eps, 0.3, 0.5);
        let w = wigner_transform(&psi).unwrap();
        let fields = compute_densities(&psi);
        let rho = w.position_marginal();
        for k in 0..g.n() {
            assert!((rho[k] - fields.rho[k]).abs() < 1e-12);
        }

        // momentum density (1/ε)|ψ̂(p/ε)|² at p = mΔp, i.e. at half-integer
        // DFT frequencies: evaluate through a zero-padded transform
        let n = g.n();
        let mut padded = vec![Complex64::new(0.0, 0.0); 2 * n];
        padded[..n].copy_from_slice(psi.values());
        fft_forward_in_place(&mut padded);
        let pm = w.momentum_marginal();
        for m in 0..n {
            let mm = m as i64 - (n / 2) as i64;
            let xi = mm as f64 * w.dp / eps;
            let c = padded[mm.rem_euclid(2 * n as i64) as usize]
                * Complex64::from_polar(g.dx() / (2.0 * PI).sqrt(), -xi * g.x_min());
            let expect = c.norm_sqr() / eps;
            assert!((pm[m] - expect).abs() < 1e-10, "m = {m}: {} vs {expect}", pm[m]);
        }
    }

    #[test]
    fn gaussian_wigner_is_closed_form() {
        // W = (1/πε) exp(-(x-x0)²/ε - (p-p0)²/ε)
        let g = UniformGrid::new(-4.0, 4.0, 256).unwrap();
        let eps = 1.0 / 16.0;
        let (x0, p0) = (0.25, -0.5);
        let w = wigner_transform(&packet(g, eps, x0, p0)).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..g.n() {
            for m in 0..w.np() {
                let (x, p) = (g.point(k), w.p(m));
                let exact = (-(x - x0).powi(2) / eps - (p - p0).powi(2) / eps).exp() / (PI * eps);
                err = err.max((w.value(k, m) - exact).abs());
            }
        }
        assert!(err < 1e-10, "err {err}");
        assert!(w.min_value() > -1e-10);
    }

    #[test]
    fn plane_wave_occupies_one_row() {
        let g = UniformGrid::new(0.0, 2.0 * PI, 64).unwrap();
        let eps = 1.0 / 8.0;
        // Δp = ε/2, so p0 = 4Δp
        let p0 = 0.5;
        let psi = WaveFunction::from_fn(g, eps, |x| Complex64::from_polar((2.0 * PI).powf(-0.5), p0 * x / eps)).unwrap();
        let w = wigner_transform_with(&psi, Correlation::Periodic).unwrap();
        let target = w.momenta().iter().position(|p| (p - p0).abs() < 1e-12).unwrap();
        for k in 0..g.n() {
            for (m, v) in w.row(k).iter().enumerate() {
                let expect = if m == target { 1.0 / (PI * eps) } else { 0.0 };
                assert!((v - expect).abs() < 1e-12, "k = {k}, m = {m}");
            }
        }

        // on the line the same samples are a truncated wave: a sinc in p
        // peaked on the target row
        let w = wigner_transform(&psi).unwrap();
        for k in 16..48 {
            let row = w.row(k);
            let peak = row.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(row.iter().position(|&v| v == peak), Some(target));
        }
    }

    #[test]
    fn unresolved_state_is_rejected() {
        let g = UniformGrid::new(-4.0, 4.0, 64).unwrap();
        let eps = 1.0 / 16.0;
        // p0 beyond p_max = πε/(2dx) ≈ 0.79
        let psi = packet(g, eps, 0.0, 1.2);
        assert!(matches!(wigner_transform(&psi), Err(Error::WignerUnresolved(_))));
    }
}
