use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phasespace::{Particle, PhaseSpaceMeasure};
use crate::potentials::Potential;

/// Largest RK4 step used for classical flows.
pub const CLASSICAL_STEP: f64 = 1e-3;

/// Number of equal RK4 steps covering `[0, t]` with step at most `max_step`.
pub(crate) fn step_plan(t: f64, max_step: f64) -> (usize, f64) {
    if t == 0.0 {
        return (0, 0.0);
    }
    let steps = (t.abs() / max_step).ceil().max(1.0) as usize;
    (steps, t / steps as f64)
}

/// One RK4 step of `ẋ = p, ṗ = -V'(x)`.
pub fn hamilton_step(v: &Potential, x: f64, p: f64, h: f64) -> (f64, f64) {
    let f = |x: f64, p: f64| (p, -v.grad(x));
    let (a1, b1) = f(x, p);
    let (a2, b2) = f(x + 0.5 * h * a1, p + 0.5 * h * b1);
    let (a3, b3) = f(x + 0.5 * h * a2, p + 0.5 * h * b2);
    let (a4, b4) = f(x + h * a3, p + h * b3);
    (
        x + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
        p + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
    )
}

/// Classical phase-space flow `Φ_t(x, p)`; exact for `Free`.
pub fn classical_flow(v: &Potential, x: f64, p: f64, t: f64) -> (f64, f64) {
    if v.is_free() {
        return (x + p * t, p);
    }
    let (steps, h) = step_plan(t, CLASSICAL_STEP);
    (0..steps).fold((x, p), |(x, p), _| hamilton_step(v, x, p, h))
}

/// `Φ_t # μ₀`: every particle carried by the flow, weights unchanged.
pub fn liouville_pushforward(mu0: &PhaseSpaceMeasure, v: &Potential, t: f64) -> Result<PhaseSpaceMeasure> {
    if !t.is_finite() {
        return Err(Error::param("t", "must be finite"));
    }
    let particles: Vec<Particle> = mu0
        .particles()
        .par_iter()
        .map(|q| {
            let (x, p) = classical_flow(v, q.x, q.p, t);
            Particle::new(x, p, q.w)
        })
        .collect();
    Ok(PhaseSpaceMeasure::new(particles, mu0.provenance())?.with_defect(mu0.defect()))
}
