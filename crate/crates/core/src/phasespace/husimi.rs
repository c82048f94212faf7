use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::measure::{Histogram, Particle, PhaseSpaceMeasure, Provenance};
use super::wigner::WignerGridFunction;
use crate::error::{Error, Result};
use crate::grid::{fft_forward_in_place, fft_inverse_in_place};

/// Largest tolerated mass removed by clipping negative cells.
pub const HUSIMI_CLIP_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HusimiOptions {
    /// Smoothing widths; `√(ε/2)` when absent.
    pub sigma_x: Option<f64>,
    pub sigma_p: Option<f64>,
    /// Merge cells into blocks of about a quarter smoothing width before
    /// emitting particles.
    pub aggregate: bool,
    /// Particles at or below this mass are dropped.
    pub drop_below: f64,
    pub keep_histogram: bool,
}

impl Default for HusimiOptions {
    fn default() -> Self {
        Self {
            sigma_x: None,
            sigma_p: None,
            aggregate: true,
            drop_below: 1e-18,
            keep_histogram: false,
        }
    }
}

/// Gaussian multipliers `exp(-σ²κ²/2)` for a periodic axis of `n` samples
/// spaced `h`, one FFT normalization folded in.
fn gaussian_multiplier(n: usize, h: f64, sigma: f64) -> Vec<f64> {
    let period = n as f64 * h;
    (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            let kappa = 2.0 * PI * m / period;
            (-0.5 * sigma * sigma * kappa * kappa).exp() / n as f64
        })
        .collect()
}

/// Smooths every contiguous row of `data` (rows of length `len`), two rows per
/// complex transform since the kernel is real and even.
fn smooth_rows(data: &mut [f64], len: usize, multiplier: &[f64]) {
    data.par_chunks_mut(2 * len).for_each(|pair| {
        let two = pair.len() == 2 * len;
        let mut buf: Vec<Complex64> = (0..len)
            .map(|i| Complex64::new(pair[i], if two { pair[len + i] } else { 0.0 }))
            .collect();
        fft_forward_in_place(&mut buf);
        for (c, m) in buf.iter_mut().zip(multiplier) {
            *c *= m;
        }
        fft_inverse_in_place(&mut buf);
        for i in 0..len {
            pair[i] = buf[i].re;
            if two {
                pair[len + i] = buf[i].im;
            }
        }
    });
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    const B: usize = 64;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    out[c * rows + r] = data[r * cols + c];
                }
            }
        }
    }
    out
}

pub fn husimi(w: &WignerGridFunction) -> Result<PhaseSpaceMeasure> {
    husimi_with(w, &HusimiOptions::default())
}

/// Gaussian phase-space smoothing of a Wigner grid function.
pub fn husimi_with(w: &WignerGridFunction, opts: &HusimiOptions) -> Result<PhaseSpaceMeasure> {
    let nx = w.nx();
    let np = w.np();
    let dx = w.grid.dx();
    let dp = w.dp;
    let default_sigma = (0.5 * w.eps).sqrt();
    let sigma_x = opts.sigma_x.unwrap_or(default_sigma);
    let sigma_p = opts.sigma_p.unwrap_or(default_sigma);
    if !(sigma_x > 0.0 && sigma_p > 0.0) {
        return Err(Error::param("sigma", "smoothing widths must be positive"));
    }

    let mut data = w.values.clone();
    smooth_rows(&mut data, np, &gaussian_multiplier(np, dp, sigma_p));
    let mut cols = transpose(&data, nx, np);
    drop(data);
    smooth_rows(&mut cols, nx, &gaussian_multiplier(nx, dx, sigma_x));
    let mut masses = transpose(&cols, np, nx);
    drop(cols);

    let cell = dx * dp;
    let mut clipped = 0.0;
    for m in masses.iter_mut() {
        *m *= cell;
        if *m < 0.0 {
            clipped -= *m;
            *m = 0.0;
        }
    }
    if clipped > HUSIMI_CLIP_LIMIT {
        return Err(Error::HusimiClipping {
            clipped,
            limit: HUSIMI_CLIP_LIMIT,
        });
    }

    let (bx, bp) = if opts.aggregate {
        (((sigma_x / (4.0 * dx)).floor() as usize).max(1), ((sigma_p / (4.0 * dp)).floor() as usize).max(1))
    } else {
        (1, 1)
    };
    let x_of = |k: usize| w.grid.point(k);
    let p_of = |m: usize| w.p(m);
    let block_rows: Vec<Vec<Particle>> = (0..nx.div_ceil(bx))
        .into_par_iter()
        .map(|bi| {
            let k0 = bi * bx;
            let k1 = (k0 + bx).min(nx);
            let mut out = Vec::new();
            for m0 in (0..np).step_by(bp) {
                let m1 = (m0 + bp).min(np);
                let (mut mass, mut sx, mut sp) = (0.0, 0.0, 0.0);
                for k in k0..k1 {
                    for m in m0..m1 {
                        let q = masses[k * np + m];
                        mass += q;
                        sx += q * x_of(k);
                        sp += q * p_of(m);
                    }
                }
                if mass > opts.drop_below {
                    out.push(Particle::new(sx / mass, sp / mass, mass));
                }
            }
            out
        })
        .collect();
    let particles: Vec<Particle> = block_rows.into_iter().flatten().collect();

    let mut measure = PhaseSpaceMeasure::new(particles, Provenance::Husimi)?;
    if opts.keep_histogram {
        measure = measure.with_histogram(Histogram {
            x_min: w.grid.x_min(),
            dx,
            nx,
            p_min: w.p_min(),
            dp,
            np,
            masses,
        });
    }
    Ok(measure)
}
