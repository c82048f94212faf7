use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{Envelope, PhaseSpec};
use super::liouville::{step_plan, CLASSICAL_STEP};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::potentials::Potential;
use crate::schrodinger::WaveFunction;

/// Characteristic state `(X, P, ∂X/∂x₀, ∂P/∂x₀, S)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Ray {
    x: f64,
    p: f64,
    j: f64,
    q: f64,
    s: f64,
}

impl Ray {
    fn start(phase: &PhaseSpec, x0: f64) -> Self {
        Ray {
            x: x0,
            p: phase.gradient(x0),
            j: 1.0,
            q: phase.curvature(x0),
            s: phase.value(x0),
        }
    }

    fn rate(&self, v: &Potential) -> Ray {
        Ray {
            x: self.p,
            p: -v.grad(self.x),
            j: self.q,
            q: -v.curvature(self.x) * self.j,
            s: 0.5 * self.p * self.p - v.eval(self.x),
        }
    }

    fn add(&self, k: &Ray, h: f64) -> Ray {
        Ray {
            x: self.x + h * k.x,
            p: self.p + h * k.p,
            j: self.j + h * k.j,
            q: self.q + h * k.q,
            s: self.s + h * k.s,
        }
    }

    fn step(&self, v: &Potential, h: f64) -> Ray {
        let k1 = self.rate(v);
        let k2 = self.add(&k1, 0.5 * h).rate(v);
        let k3 = self.add(&k2, 0.5 * h).rate(v);
        let k4 = self.add(&k3, h).rate(v);
        Ray {
            x: self.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            p: self.p + h / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
            j: self.j + h / 6.0 * (k1.j + 2.0 * k2.j + 2.0 * k3.j + k4.j),
            q: self.q + h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
            s: self.s + h / 6.0 * (k1.s + 2.0 * k2.s + 2.0 * k3.s + k4.s),
        }
    }
}

/// WKB amplitude and phase carried along Hamilton–Jacobi characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WkbState {
    pub time: f64,
    pub seeds: Vec<f64>,
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    /// `∂X/∂x₀`.
    pub jacobian: Vec<f64>,
    /// `∂P/∂x₀`.
    pub momentum_jacobian: Vec<f64>,
    /// `a₀(x₀)/√|∂X/∂x₀|`; meaningless where `folded`.
    pub amplitude: Vec<f64>,
    /// `S(t, X(t, x₀))` from the action along the ray.
    pub phase: Vec<f64>,
    /// Seeds whose Jacobian reached zero at some time in `[0, t]`.
    pub folded: Vec<bool>,
    pub caustic: bool,
}

impl WkbState {
    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    /// `Σ a²|∂X/∂x₀| Δx₀` over the seeds (trapezoid-free: seeds are uniform).
    pub fn transported_mass(&self) -> f64 {
        let h = if self.seeds.len() > 1 { self.seeds[1] - self.seeds[0] } else { 1.0 };
        self.amplitude.iter().zip(&self.jacobian).map(|(a, j)| a * a * j.abs()).sum::<f64>() * h
    }

    /// Largest mismatch between the action `S` and the integral of `P dX`
    /// along the seeds, normalised by `1 + max|S|`.
    pub fn phase_consistency(&self) -> f64 {
        let mut integral = self.phase[0];
        let mut worst: f64 = 0.0;
        let scale = 1.0 + self.phase.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        for i in 1..self.len() {
            let (x0, x1) = (self.positions[i - 1], self.positions[i]);
            let (p0, p1) = (self.momenta[i - 1], self.momenta[i]);
            // cubic Hermite for P(X) with slopes dP/dX = (∂P/∂x₀)/(∂X/∂x₀)
            let m0 = self.momentum_jacobian[i - 1] / self.jacobian[i - 1];
            let m1 = self.momentum_jacobian[i] / self.jacobian[i];
            let h = x1 - x0;
            integral += h * (p0 + p1) / 2.0 + h * h * (m0 - m1) / 12.0;
            worst = worst.max((integral - self.phase[i]).abs());
        }
        worst / scale
    }
}

/// Characteristics of `∂_t S + ½|S'|² + V = 0` from `(x₀, S₀'(x₀))` with the
/// variational equations and the action, RK4 at step ≤ `CLASSICAL_STEP`.
pub fn hj_characteristics(phase: &PhaseSpec, amplitude: &Envelope, v: &Potential, t: f64, seeds: &[f64]) -> Result<WkbState> {
    hj_characteristics_with(phase, amplitude, v, t, seeds, CLASSICAL_STEP)
}

pub fn hj_characteristics_with(
    phase: &PhaseSpec,
    amplitude: &Envelope,
    v: &Potential,
    t: f64,
    seeds: &[f64],
    max_step: f64,
) -> Result<WkbState> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", "must be finite and >= 0"));
    }
    if seeds.len() < 2 || seeds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("seeds", "at least two strictly increasing seeds are required"));
    }
    let (steps, h) = step_plan(t, max_step);
    let rays: Vec<(Ray, bool)> = seeds
        .par_iter()
        .map(|&x0| {
            let mut ray = Ray::start(phase, x0);
            let mut folded = false;
            for _ in 0..steps {
                ray = ray.step(v, h);
                folded |= ray.j <= 0.0;
            }
            (ray, folded)
        })
        .collect();
    let folded: Vec<bool> = rays.iter().map(|r| r.1).collect();
    Ok(WkbState {
        time: t,
        seeds: seeds.to_vec(),
        positions: rays.iter().map(|r| r.0.x).collect(),
        momenta: rays.iter().map(|r| r.0.p).collect(),
        jacobian: rays.iter().map(|r| r.0.j).collect(),
        momentum_jacobian: rays.iter().map(|r| r.0.q).collect(),
        amplitude: rays
            .iter()
            .zip(seeds)
            .map(|(r, &x0)| amplitude.eval(x0) / r.0.j.abs().sqrt())
            .collect(),
        phase: rays.iter().map(|r| r.0.s).collect(),
        caustic: folded.iter().any(|&f| f),
        folded,
    })
}

/// First time `∂X/∂x₀` vanishes along the ray from `x₀`, within `horizon`.
fn crossing_time(phase: &PhaseSpec, v: &Potential, x0: f64, horizon: f64) -> Option<f64> {
    let (steps, h) = step_plan(horizon, CLASSICAL_STEP);
    let mut ray = Ray::start(phase, x0);
    for k in 0..steps {
        let next = ray.step(v, h);
        if next.j <= 0.0 {
            // bisection on the length of the last step
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-13 {
                let mid = 0.5 * (lo + hi);
                if ray.step(v, mid).j <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(k as f64 * h + 0.5 * (lo + hi));
        }
        ray = next;
    }
    None
}

/// First caustic time over the seeds, refined by golden-section search in
/// `x₀` around the earliest seed; `None` if no ray folds within `horizon`.
pub fn caustic_time(phase: &PhaseSpec, v: &Potential, horizon: f64, seeds: &[f64]) -> Option<f64> {
    if seeds.is_empty() || !(horizon > 0.0) {
        return None;
    }
    let times: Vec<f64> = seeds
        .par_iter()
        .map(|&x0| crossing_time(phase, v, x0, horizon).unwrap_or(f64::INFINITY))
        .collect();
    let (best, &t_best) = times.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    if !t_best.is_finite() {
        return None;
    }
    let lo_i = best.saturating_sub(1);
    let hi_i = (best + 1).min(seeds.len() - 1);
    if lo_i == hi_i {
        return Some(t_best);
    }
    let cost = |x0: f64| crossing_time(phase, v, x0, horizon * 1.01).unwrap_or(f64::INFINITY);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (seeds[lo_i], seeds[hi_i]);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-9 * (1.0 + a.abs().max(b.abs())) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = cost(d);
        }
    }
    Some(t_best.min(fc).min(fd))
}

/// Lagrange interpolation on the six nodes of `xs` around `x`.
fn local_lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = xs.partition_point(|&s| s <= x);
    if i > 0 && xs[i - 1] == x {
        return ys[i - 1];
    }
    let width = n.min(6);
    let start = (i as isize - 3).clamp(0, (n - width) as isize) as usize;
    let mut sum = 0.0;
    for a in start..start + width {
        let mut w = 1.0;
        for b in start..start + width {
            if a != b {
                w *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        sum += w * ys[a];
    }
    sum
}

/// `a(t,·)` and `S'(t,·) = P∘X⁻¹` on the grid; zero amplitude outside the
/// range covered by the rays.
pub fn wkb_fields(state: &WkbState, grid: &UniformGrid) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if state.caustic {
        return Err(Error::Caustic { time: state.time });
    }
    if state.positions.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Caustic { time: state.time });
    }
    let consistency = state.phase_consistency();
    if consistency > 1e-8 {
        log::warn!("WKB phase and integrated momentum disagree by {consistency:.2e}");
    }
    let (lo, hi) = (state.positions[0], *state.positions.last().unwrap());
    let mut a = Vec::with_capacity(grid.n());
    let mut s = Vec::with_capacity(grid.n());
    let mut p = Vec::with_capacity(grid.n());
    for x in grid.points() {
        if x < lo || x > hi {
            a.push(0.0);
            s.push(0.0);
            p.push(0.0);
        } else {
            a.push(local_lagrange(&state.positions, &state.amplitude, x));
            s.push(local_lagrange(&state.positions, &state.phase, x));
            p.push(local_lagrange(&state.positions, &state.momenta, x));
        }
    }
    Ok((a, s, p))
}

/// `a(t,x) e^{iS(t,x)/ε}` on the grid, renormalized.
pub fn wkb_wavefunction(state: &WkbState, eps: f64, grid: &UniformGrid) -> Result<WaveFunction> {
    let (a, s, _) = wkb_fields(state, grid)?;
    let values = a.iter().zip(&s).map(|(&a, &s)| Complex64::from_polar(a, s / eps)).collect();
    WaveFunction::new(*grid, values, eps)?.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schrodinger::{propagate, PropagatorConfig};
    use crate::semiclassics::{synthesize, Family};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn seeds(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn focusing_quadratic_phase() {
        let phase = PhaseSpec::Quadratic { momentum: 0.0, curvature: -1.0 };
        let amp = Envelope::gaussian(0.0, 0.4);
        let x0 = seeds(-2.0, 2.0, 101);
        let st = hj_characteristics(&phase, &amp, &Potential::Free, 0.5, &x0).unwrap();
        for i in 0..st.len() {
            assert!((st.positions[i] - 0.5 * x0[i]).abs() < 1e-13);
            assert!((st.jacobian[i] - 0.5).abs() < 1e-13);
        }
        assert!(!st.caustic);
        let late = hj_characteristics(&phase, &amp, &Potential::Free, 1.2, &x0).unwrap();
        assert!(late.caustic);
        let t = caustic_time(&phase, &Potential::Free, 3.0, &x0).unwrap();
        assert!((t - 1.0).abs() < 1e-8, "{t}");
        let expanding = PhaseSpec::Quadratic { momentum: 0.0, curvature: 1.0 };
        assert_eq!(caustic_time(&expanding, &Potential::Free, 10.0, &x0), None);
    }

    #[test]
    fn rigid_transport_and_harmonic_focus() {
        let lin = PhaseSpec::Linear { momentum: 0.7 };
        let amp = Envelope::gaussian(0.0, 0.4);
        let x0 = seeds(-2.0, 2.0, 41);
        let st = hj_characteristics(&lin, &amp, &Potential::Free, 2.0, &x0).unwrap();
        assert!(st.jacobian.iter().all(|&j| (j - 1.0).abs() < 1e-14));
        assert_eq!(caustic_time(&lin, &Potential::Free, 10.0, &x0), None);

        let flat = PhaseSpec::Linear { momentum: 0.0 };
        let v = Potential::harmonic(1.0);
        let st = hj_characteristics(&flat, &amp, &v, 1.0, &x0).unwrap();
        for i in 0..st.len() {
            assert!((st.positions[i] - x0[i] * 1f64.cos()).abs() < 1e-12);
        }
        let t = caustic_time(&flat, &v, 3.0, &x0).unwrap();
        assert!((t - PI / 2.0).abs() < 1e-8);
    }

    #[test]
    fn cosine_phase_caustic() {
        let phase = PhaseSpec::Cosine { amplitude: -1.0, wavenumber: 1.0 };
        let t = caustic_time(&phase, &Potential::Free, 5.0, &seeds(-4.0, 4.0, 57)).unwrap();
        assert!((t - 1.0).abs() < 1e-8, "{t}");
    }

    #[test]
    fn amplitude_transport_conserves_mass() {
        let phase = PhaseSpec::Quadratic { momentum: 0.3, curvature: -0.8 };
        let amp = Envelope::gaussian(0.2, 0.4);
        let grid = UniformGrid::new(-4.0, 4.0, 2048).unwrap();
        let st = hj_characteristics(&phase, &amp, &Potential::harmonic(0.5), 0.6, &grid.points()).unwrap();
        let m0: f64 = grid.points().iter().map(|&x| amp.eval(x).powi(2)).sum::<f64>() * grid.dx();
        assert!((st.transported_mass() - m0).abs() < 1e-8 * m0);
        let (a, _, _) = wkb_fields(&st, &grid).unwrap();
        let m_t: f64 = a.iter().map(|a| a * a).sum::<f64>() * grid.dx();
        assert!((m_t - m0).abs() < 1e-8 * m0, "{m_t} vs {m0}");
        assert!(st.phase_consistency() < 1e-8);
    }

    #[test]
    fn wkb_at_zero_is_initial_data() {
        let grid = UniformGrid::new(-4.0, 4.0, 1024).unwrap();
        let eps = 1.0 / 64.0;
        let amplitude = Envelope::gaussian(0.0, 0.4);
        let phase = PhaseSpec::Quadratic { momentum: 0.0, curvature: -1.0 };
        let st = hj_characteristics(&phase, &amplitude, &Potential::Free, 0.0, &grid.points()).unwrap();
        let psi = wkb_wavefunction(&st, eps, &grid).unwrap();
        let direct = synthesize(&Family::WkbSingle { amplitude, phase }, eps, &grid).unwrap();
        for (a, b) in psi.values().iter().zip(direct.values()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn transported_plane_wave_phase() {
        let grid = UniformGrid::new(-4.0, 4.0, 2048).unwrap();
        let eps = 1.0 / 64.0;
        let (p0, t) = (0.8, 1.0);
        let amp = Envelope::gaussian(-0.5, 0.4);
        let st = hj_characteristics(&PhaseSpec::Linear { momentum: p0 }, &amp, &Potential::Free, t, &grid.points()).unwrap();
        let psi = wkb_wavefunction(&st, eps, &grid).unwrap();
        let exact = WaveFunction::from_fn(grid, eps, |x| Complex64::from_polar(amp.eval(x - p0 * t), (p0 * x - 0.5 * p0 * p0 * t) / eps))
            .unwrap()
            .normalized()
            .unwrap();
        let err: f64 = psi.values().iter().zip(exact.values()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * grid.dx();
        assert!(err.sqrt() < 1e-8, "{}", err.sqrt());
    }

    #[test]
    fn refuses_past_caustic() {
        let grid = UniformGrid::new(-4.0, 4.0, 512).unwrap();
        let phase = PhaseSpec::Quadratic { momentum: 0.0, curvature: -1.0 };
        let st = hj_characteristics(&phase, &Envelope::gaussian(0.0, 0.4), &Potential::Free, 1.5, &grid.points()).unwrap();
        assert!(matches!(wkb_wavefunction(&st, 0.01, &grid), Err(Error::Caustic { .. })));
    }

    #[test]
    fn error_against_exact_solution_is_first_order() {
        let grid = UniformGrid::new(-4.0, 4.0, 4096).unwrap();
        let amplitude = Envelope::gaussian(0.0, 0.4);
        let phase = PhaseSpec::Quadratic { momentum: 0.0, curvature: -1.0 };
        let st = hj_characteristics(&phase, &amplitude, &Potential::Free, 0.5, &grid.points()).unwrap();
        let errors: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0]
            .iter()
            .map(|&eps| {
                let psi0 = synthesize(&Family::WkbSingle { amplitude, phase }, eps, &grid).unwrap();
                let exact = propagate(&psi0, &Potential::Free, &PropagatorConfig::new(0.5, 0.5, 1)).unwrap();
                let wkb = wkb_wavefunction(&st, eps, &grid).unwrap();
                let e: f64 = wkb
                    .values()
                    .iter()
                    .zip(exact.final_state().values())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    * grid.dx();
                e.sqrt()
            })
            .collect();
        let slope = (errors[0] / errors[1]).log2();
        assert!((0.7..1.3).contains(&slope), "{errors:?} slope {slope}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn free_caustic_matches_curvature(c in 0.3f64..3.0, m in -1.0f64..1.0, amp in 0.2f64..2.0, k in 0.5f64..2.0) {
            let x0 = seeds(-4.0, 4.0, 81);
            let quad = PhaseSpec::Quadratic { momentum: m, curvature: -c };
            let t = caustic_time(&quad, &Potential::Free, 20.0, &x0).unwrap();
            prop_assert!((t - 1.0 / c).abs() < 1e-6);
            let cosine = PhaseSpec::Cosine { amplitude: amp, wavenumber: k };
            let t = caustic_time(&cosine, &Potential::Free, 20.0, &x0).unwrap();
            prop_assert!((t - 1.0 / (amp * k * k)).abs() < 1e-6);
        }
    }
}
