use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::measure::PhaseSpaceMeasure;
use crate::error::{Error, Result};

/// Number of projection directions in the sliced distance.
pub const SLICE_COUNT: usize = 64;

/// Relative mass mismatch above which both measures are normalized first.
const MASS_TOLERANCE: f64 = 1e-6;

/// Unit vectors at angles `(k + ½)π/K`, covering the half circle evenly.
pub fn slice_directions() -> Vec<(f64, f64)> {
    (0..SLICE_COUNT)
        .map(|k| {
            let theta = (k as f64 + 0.5) * PI / SLICE_COUNT as f64;
            (theta.cos(), theta.sin())
        })
        .collect()
}

/// Exact `W₁ = ∫|F_a - F_b|` between weighted point sets `(position, weight)`.
pub fn weighted_w1(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(a.len() + b.len());
    events.extend(a.iter().copied());
    events.extend(b.iter().map(|&(t, w)| (t, -w)));
    events.sort_by(|u, v| u.0.total_cmp(&v.0));
    let mut cumulative = 0.0;
    let mut total = 0.0;
    for pair in events.windows(2) {
        cumulative += pair[0].1;
        total += cumulative.abs() * (pair[1].0 - pair[0].0);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub value: f64,
    /// Whether the masses differed enough that both were normalized to one.
    pub rescaled: bool,
    pub mass_a: f64,
    pub mass_b: f64,
}

fn project(mu: &PhaseSpaceMeasure, dir: (f64, f64), scale: f64) -> Vec<(f64, f64)> {
    mu.particles()
        .iter()
        .map(|q| (q.x * dir.0 + q.p * dir.1, q.w * scale))
        .collect()
}

pub fn measure_distance_report(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure) -> Result<DistanceReport> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let mass_a = mu.total_mass();
    let mass_b = nu.total_mass();
    if !(mass_a > 0.0 && mass_b > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    let rescaled = (mass_a - mass_b).abs() > MASS_TOLERANCE * mass_a.max(mass_b);
    let (sa, sb) = if rescaled { (1.0 / mass_a, 1.0 / mass_b) } else { (1.0, 1.0) };
    if rescaled {
        log::warn!("measure masses differ ({mass_a:.6e} vs {mass_b:.6e}); comparing normalized measures");
    }
    let per_slice: Vec<f64> = slice_directions()
        .into_par_iter()
        .map(|dir| weighted_w1(&project(mu, dir, sa), &project(nu, dir, sb)))
        .collect();
    let value = per_slice.iter().sum::<f64>() / SLICE_COUNT as f64;
    Ok(DistanceReport {
        value,
        rescaled,
        mass_a,
        mass_b,
    })
}

/// Sliced Wasserstein-1 distance.
pub fn measure_distance(mu: &PhaseSpaceMeasure, nu: &PhaseSpaceMeasure) -> Result<f64> {
    measure_distance_report(mu, nu).map(|r| r.value)
}
