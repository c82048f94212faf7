use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::family::{Envelope, Family, PeriodicProfile, PhaseSpec};
use super::liouville::{classical_flow, liouville_pushforward};
use super::wkb::{hj_characteristics, wkb_fields};
use crate::error::{Error, Result};
use crate::grid::{fft_forward_in_place, UniformGrid};
use crate::phasespace::{Particle, PhaseSpaceMeasure, Provenance};
use crate::potentials::Potential;

/// Resolution of the closed-form limit tabulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitOptions {
    /// Quadrature nodes over the periodic cell `Y`, the profile variable `y`,
    /// the angle `θ`, or the energy curve.
    pub nodes: usize,
    /// Particle budget for product tabulations; above it, neighbouring
    /// x-nodes are merged into blocks.
    pub max_particles: usize,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            nodes: 4096,
            max_particles: 1 << 20,
        }
    }
}

impl LimitOptions {
    fn validate(&self) -> Result<()> {
        if self.nodes < 16 || self.nodes % 2 == 1 {
            return Err(Error::param("nodes", "quadrature needs an even number of at least 16 nodes"));
        }
        if self.max_particles < 1024 {
            return Err(Error::param("max_particles", "budget must be at least 1024"));
        }
        Ok(())
    }
}

fn finish(mut particles: Vec<Particle>) -> Result<PhaseSpaceMeasure> {
    let total: f64 = particles.iter().map(|q| q.w).sum();
    if !(total > 0.0) {
        return Err(Error::EmptyMeasure);
    }
    particles.iter_mut().for_each(|q| q.w /= total);
    Ok(PhaseSpaceMeasure::new(particles, Provenance::ClosedFormLimit)?.compact())
}

/// `(x_k, w·dx)` on grid nodes with positive weight.
fn x_weights(grid: &UniformGrid, density: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    grid.points()
        .into_iter()
        .map(|x| (x, density(x) * grid.dx()))
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Merges neighbouring x-nodes into weighted centroids so that
/// `blocks · per_node ≤ budget`.
fn block_x(xs: Vec<(f64, f64)>, per_node: usize, budget: usize) -> Vec<(f64, f64)> {
    let b = (xs.len() * per_node).div_ceil(budget).max(1);
    if b == 1 {
        return xs;
    }
    xs.chunks(b)
        .map(|c| {
            let w: f64 = c.iter().map(|q| q.1).sum();
            (c.iter().map(|q| q.0 * q.1).sum::<f64>() / w, w)
        })
        .collect()
}

/// Sorts a 1-D weighted distribution and merges values closer than `tol`.
fn merge_close(mut ps: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    ps.retain(|q| q.1 > 0.0);
    ps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for (p, w) in ps {
        match out.last_mut() {
            Some(last) if (p - last.2) <= tol => {
                last.0 += p * w;
                last.1 += w;
            }
            _ => out.push((p * w, w, p)),
        }
    }
    out.into_iter().map(|(m, w, _)| (m / w, w)).collect()
}

fn product(xs: Vec<(f64, f64)>, ps: &[(f64, f64)], budget: usize) -> Vec<Particle> {
    let xs = block_x(xs, ps.len(), budget);
    let mut out = Vec::with_capacity(xs.len() * ps.len());
    for &(x, wx) in &xs {
        for &(p, wp) in ps {
            out.push(Particle::new(x, p, wx * wp));
        }
    }
    out
}

fn midpoints(m: usize, a: f64, b: f64) -> impl Iterator<Item = f64> {
    let h = (b - a) / m as f64;
    (0..m).map(move |j| a + (j as f64 + 0.5) * h)
}

/// `|Y|⁻¹ ∫_Y |g|² δ(p - Im(g'/g)) dy` by midpoint quadrature.
fn cell_velocity_law(profile: &PeriodicProfile, nodes: usize) -> Vec<(f64, f64)> {
    let ps: Vec<(f64, f64)> = midpoints(nodes, 0.0, 2.0 * PI)
        .map(|y| {
            let (g, dg) = profile.eval(y);
            let r = g.norm_sqr();
            if r > 0.0 {
                ((dg * g.conj()).im / r, r / nodes as f64)
            } else {
                (0.0, 0.0)
            }
        })
        .collect();
    let scale = 1.0 + ps.iter().fold(0.0_f64, |m, q| m.max(q.0.abs()));
    merge_close(ps, 1e-10 * scale)
}

/// `Σ_k |ĝ_k|² δ(p - k)` with `ĝ` from an FFT over the cell.
fn cell_spectrum(profile: &PeriodicProfile, nodes: usize) -> Vec<(f64, f64)> {
    let mut buf: Vec<Complex64> = (0..nodes).map(|j| profile.eval(2.0 * PI * j as f64 / nodes as f64).0).collect();
    fft_forward_in_place(&mut buf);
    let weights: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let k = if i < nodes / 2 { i as f64 } else { i as f64 - nodes as f64 };
            (k, c.norm_sqr() / (nodes * nodes) as f64)
        })
        .collect();
    let peak = weights.iter().fold(0.0_f64, |m, q| m.max(q.1));
    weights.into_iter().filter(|q| q.1 > 1e-16 * peak).collect()
}

fn concentrating_profile(width: f64, chirp: f64, y: f64) -> Complex64 {
    let q = y * y / (2.0 * width * width);
    Complex64::from_polar((-q).exp(), chirp * q)
}

/// `|f̂(p)|²/(2π)`, `f̂(p) = ∫ f(y) e^{-ipy} dy` by direct trapezoid sums.
pub fn concentrating_momentum_law(width: f64, chirp: f64, nodes: usize) -> Vec<(f64, f64)> {
    let y_max = 8.0 * width;
    let hy = 2.0 * y_max / nodes as f64;
    let fy: Vec<(f64, Complex64)> = (0..nodes)
        .map(|j| {
            let y = -y_max + j as f64 * hy;
            (y, concentrating_profile(width, chirp, y))
        })
        .collect();
    let p_max = 8.0 * (1.0 + chirp * chirp).sqrt() / width;
    let hp = 2.0 * p_max / nodes as f64;
    midpoints(nodes, -p_max, p_max)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|p| {
            let ft: Complex64 = fy.iter().map(|&(y, f)| f * Complex64::from_polar(1.0, -p * y)).sum::<Complex64>() * hy;
            (p, ft.norm_sqr() / (2.0 * PI) * hp)
        })
        .collect()
}

fn mono_kinetic_on_grid(grid: &UniformGrid, amplitude: &Envelope, phase: &PhaseSpec) -> Vec<Particle> {
    x_weights(grid, |x| amplitude.eval(x).powi(2))
        .into_iter()
        .map(|(x, w)| Particle::new(x, phase.gradient(x), w))
        .collect()
}

/// Closed-form limit of the Bohmian measures `β^ε` as `ε → 0`, tabulated on
/// the x-nodes of `grid` where the limit has an x-density.
pub fn limit_bohmian(family: &Family, grid: &UniformGrid, opts: &LimitOptions) -> Result<PhaseSpaceMeasure> {
    family.validate()?;
    opts.validate()?;
    let m = opts.nodes;
    match family {
        Family::ModulatedPlaneWave { envelope, momentum } => {
            finish(mono_kinetic_on_grid(grid, envelope, &PhaseSpec::Linear { momentum: *momentum }))
        }
        Family::WkbSingle { amplitude, phase } => finish(mono_kinetic_on_grid(grid, amplitude, phase)),
        Family::PeriodicOscillatory { envelope, profile } => {
            let law = cell_velocity_law(profile, m);
            finish(product(x_weights(grid, |x| envelope.eval(x).powi(2)), &law, opts.max_particles))
        }
        Family::Concentrating { center, width, chirp } => {
            let y_max = 8.0 * width;
            let law: Vec<(f64, f64)> = midpoints(m, -y_max, y_max)
                .map(|y| {
                    let f = concentrating_profile(*width, *chirp, y);
                    (chirp * y / (width * width), f.norm_sqr())
                })
                .collect();
            let law = merge_close(law, 1e-12);
            finish(law.into_iter().map(|(p, w)| Particle::new(*center, p, w)).collect())
        }
        Family::CoherentState { center, momentum, .. } => finish(vec![Particle::new(*center, *momentum, 1.0)]),
        Family::HarmonicEigenstate { energy, omega } => {
            let amp = (2.0 * energy).sqrt() / omega;
            finish(midpoints(m, 0.0, 2.0 * PI).map(|phi| Particle::new(amp * phi.cos(), 0.0, 1.0)).collect())
        }
        Family::TwoPhaseWkb { a1, a2, s1, s2 } => {
            let half = m / 2;
            let xs = block_x(
                x_weights(grid, |x| a1.eval(x).powi(2) + a2.eval(x).powi(2)),
                half,
                opts.max_particles,
            );
            // θ and 2π - θ carry the same point, so half the midpoint nodes
            // with double weight reproduce the full rule
            let thetas: Vec<f64> = midpoints(m, 0.0, 2.0 * PI).take(half).collect();
            let particles: Vec<Particle> = xs
                .par_iter()
                .flat_map_iter(|&(x, w)| {
                    let (b1, b2) = (a1.eval(x), a2.eval(x));
                    let (u1, u2) = (s1.gradient(x), s2.gradient(x));
                    let mass = b1 * b1 + b2 * b2;
                    thetas.iter().map(move |&th| {
                        let c = th.cos();
                        let n = mass + 2.0 * b1 * b2 * c;
                        let phi = (b1 * b1 * u1 + b2 * b2 * u2 + b1 * b2 * c * (u1 + u2)) / n;
                        Particle::new(x, phi, w * n / mass / half as f64)
                    })
                })
                .collect();
            finish(particles)
        }
    }
}

/// Closed-form limit of the Wigner functions `w^ε` as `ε → 0`.
pub fn limit_wigner(family: &Family, grid: &UniformGrid, opts: &LimitOptions) -> Result<PhaseSpaceMeasure> {
    family.validate()?;
    opts.validate()?;
    let m = opts.nodes;
    match family {
        Family::ModulatedPlaneWave { .. } | Family::WkbSingle { .. } | Family::CoherentState { .. } => {
            limit_bohmian(family, grid, opts)
        }
        Family::PeriodicOscillatory { envelope, profile } => {
            let atoms = cell_spectrum(profile, m);
            finish(product(x_weights(grid, |x| envelope.eval(x).powi(2)), &atoms, opts.max_particles))
        }
        Family::Concentrating { center, width, chirp } => finish(
            concentrating_momentum_law(*width, *chirp, m)
                .into_iter()
                .map(|(p, w)| Particle::new(*center, p, w))
                .collect(),
        ),
        Family::HarmonicEigenstate { energy, omega } => {
            let amp = (2.0 * energy).sqrt() / omega;
            finish(
                midpoints(m, 0.0, 2.0 * PI)
                    .map(|phi| Particle::new(amp * phi.cos(), -omega * amp * phi.sin(), 1.0))
                    .collect(),
            )
        }
        Family::TwoPhaseWkb { a1, a2, s1, s2 } => {
            let mut ps = mono_kinetic_on_grid(grid, a1, s1);
            ps.extend(mono_kinetic_on_grid(grid, a2, s2));
            finish(ps)
        }
    }
}

/// Bohmian limit at time `t` under `v`. Available for mono-kinetic families
/// before their first caustic and for harmonic eigenstates in their own well.
pub fn limit_bohmian_at(family: &Family, grid: &UniformGrid, v: &Potential, t: f64, opts: &LimitOptions) -> Result<PhaseSpaceMeasure> {
    if t == 0.0 {
        return limit_bohmian(family, grid, opts);
    }
    family.validate()?;
    let wkb = |amplitude: &Envelope, phase: &PhaseSpec| -> Result<PhaseSpaceMeasure> {
        let state = hj_characteristics(phase, amplitude, v, t, &grid.points())?;
        let (a, _, p) = wkb_fields(&state, grid)?;
        let dx = grid.dx();
        finish(
            grid.points()
                .into_iter()
                .zip(a.iter().zip(&p))
                .filter(|(_, (a, _))| **a > 0.0)
                .map(|(x, (a, p))| Particle::new(x, *p, a * a * dx))
                .collect(),
        )
    };
    match family {
        Family::WkbSingle { amplitude, phase } => wkb(amplitude, phase),
        Family::ModulatedPlaneWave { envelope, momentum } => wkb(envelope, &PhaseSpec::Linear { momentum: *momentum }),
        Family::CoherentState { center, momentum, .. } => {
            let (x, p) = classical_flow(v, *center, *momentum, t);
            finish(vec![Particle::new(x, p, 1.0)])
        }
        Family::HarmonicEigenstate { omega, .. } if *v == Potential::harmonic(*omega) => limit_bohmian(family, grid, opts),
        other => Err(Error::NoLimit(format!("the Bohmian limit of {} at t > 0", other.name()))),
    }
}

/// Wigner limit at time `t`: the classical Liouville push-forward of the
/// initial limit.
pub fn limit_wigner_at(family: &Family, grid: &UniformGrid, v: &Potential, t: f64, opts: &LimitOptions) -> Result<PhaseSpaceMeasure> {
    let w0 = limit_wigner(family, grid, opts)?;
    if t == 0.0 {
        return Ok(w0);
    }
    liouville_pushforward(&w0, v, t)
}

/// `½∬p² dw - ½∬p² dβ` between the two tabulated limits.
pub fn limit_second_moment_gap(family: &Family, grid: &UniformGrid, opts: &LimitOptions) -> Result<f64> {
    let second = |mu: &PhaseSpaceMeasure| 0.5 * mu.particles().iter().map(|q| q.w * q.p * q.p).sum::<f64>();
    Ok(second(&limit_wigner(family, grid, opts)?) - second(&limit_bohmian(family, grid, opts)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::measure_distance;
    use crate::semiclassics::family::FourierMode;

    fn grid() -> UniformGrid {
        UniformGrid::new(-4.0, 4.0, 1024).unwrap()
    }

    fn env() -> Envelope {
        Envelope::gaussian(0.0, 0.5)
    }

    #[test]
    fn cosine_profile_limits() {
        let fam = Family::PeriodicOscillatory {
            envelope: env(),
            profile: PeriodicProfile::cosine(),
        };
        let b = limit_bohmian(&fam, &grid(), &LimitOptions::default()).unwrap();
        assert_eq!(b.len(), 1024);
        assert!(b.particles().iter().all(|q| q.p == 0.0));
        assert!((b.total_mass() - 1.0).abs() < 1e-14);
        let w = limit_wigner(&fam, &grid(), &LimitOptions::default()).unwrap();
        let plus: f64 = w.particles().iter().filter(|q| q.p == 1.0).map(|q| q.w).sum();
        let minus: f64 = w.particles().iter().filter(|q| q.p == -1.0).map(|q| q.w).sum();
        assert!((plus - 0.5).abs() < 1e-12 && (minus - 0.5).abs() < 1e-12);
        // ½(⟨|g'|²⟩ - 0)/⟨|g|²⟩ = ½
        let gap = limit_second_moment_gap(&fam, &grid(), &LimitOptions::default()).unwrap();
        assert!((gap - 0.5).abs() < 1e-12);
        assert!(measure_distance(&b, &w).unwrap() > 0.3);
    }

    #[test]
    fn single_mode_limits_coincide() {
        let opts = LimitOptions::default();
        let single = Family::PeriodicOscillatory {
            envelope: env(),
            profile: PeriodicProfile::Fourier {
                modes: vec![FourierMode { index: 2, re: 0.6, im: -0.8 }],
            },
        };
        let plane = Family::ModulatedPlaneWave { envelope: env(), momentum: 2.0 };
        for fam in [&single, &plane] {
            let d = measure_distance(&limit_bohmian(fam, &grid(), &opts).unwrap(), &limit_wigner(fam, &grid(), &opts).unwrap()).unwrap();
            assert!(d < 1e-10, "{d}");
            assert!(fam.is_mono_kinetic());
        }
        let two = Family::PeriodicOscillatory {
            envelope: env(),
            profile: PeriodicProfile::Fourier {
                modes: vec![FourierMode { index: 1, re: 1.0, im: 0.0 }, FourierMode { index: 2, re: 0.5, im: 0.0 }],
            },
        };
        let d = measure_distance(&limit_bohmian(&two, &grid(), &opts).unwrap(), &limit_wigner(&two, &grid(), &opts).unwrap()).unwrap();
        assert!(d > 0.1, "{d}");
        // the Bohmian momenta of a two-mode profile stay inside the mode range
        let b = limit_bohmian(&two, &grid(), &opts).unwrap();
        let (_, _, p_lo, p_hi) = b.bounds().unwrap();
        assert!(p_lo >= 0.0 && p_hi <= 2.0 + 1e-12);
        let mean: f64 = b.particles().iter().map(|q| q.w * q.p).sum();
        // first moments agree: Σ k|c_k|²/Σ|c_k|² = (1 + 2·¼)/(1 + ¼)
        assert!((mean - 1.5 / 1.25).abs() < 1e-10);
    }

    #[test]
    fn phase_profile_gap_is_zero_only_for_linear_phase() {
        let opts = LimitOptions::default();
        let wavy = Family::PeriodicOscillatory {
            envelope: env(),
            profile: PeriodicProfile::Phase { winding: 1, harmonics: vec![0.5] },
        };
        // |g| = 1: the second moments coincide even though the limits differ
        let gap = limit_second_moment_gap(&wavy, &grid(), &opts).unwrap();
        assert!(gap.abs() < 1e-10, "{gap}");
        let d = measure_distance(&limit_bohmian(&wavy, &grid(), &opts).unwrap(), &limit_wigner(&wavy, &grid(), &opts).unwrap()).unwrap();
        assert!(d > 0.05, "{d}");
    }

    #[test]
    fn concentrating_momentum_profile() {
        let (w, c) = (0.8, 1.5);
        let law = concentrating_momentum_law(w, c, 4096);
        let total: f64 = law.iter().map(|q| q.1).sum();
        // Plancherel: ∫|f̂|²/(2π) = ∫|f|² = w√π
        assert!((total - w * PI.sqrt()).abs() < 1e-10);
        // closed form |f̂|² = (2π w²/√(1+c²)) exp(-p² w²/(1+c²))
        let hp = law[1].0 - law[0].0;
        for &(p, m) in law.iter().step_by(97) {
            let exact = w * w / (1.0 + c * c).sqrt() * (-p * p * w * w / (1.0 + c * c)).exp() * hp;
            assert!((m - exact).abs() < 1e-12, "{p}");
        }
        let fam = Family::Concentrating { center: 0.1, width: 1.0, chirp: 0.0 };
        let opts = LimitOptions::default();
        let b = limit_bohmian(&fam, &grid(), &opts).unwrap();
        assert_eq!(b.len(), 1);
        let lw = limit_wigner(&fam, &grid(), &opts).unwrap();
        let d = measure_distance(&b, &lw).unwrap();
        assert!(d > 0.1, "{d}");
    }

    #[test]
    fn coherent_and_eigenstate_limits() {
        let opts = LimitOptions::default();
        let coh = Family::CoherentState { center: 0.0, momentum: 1.0, width: 1.0 };
        let b = limit_bohmian(&coh, &grid(), &opts).unwrap();
        assert_eq!(b.particles(), &[Particle::new(0.0, 1.0, 1.0)]);
        assert_eq!(measure_distance(&b, &limit_wigner(&coh, &grid(), &opts).unwrap()).unwrap(), 0.0);

        let eig = Family::HarmonicEigenstate { energy: 1.0, omega: 1.0 };
        let w = limit_wigner(&eig, &grid(), &opts).unwrap();
        let r = 2f64.sqrt();
        assert!(w.particles().iter().all(|q| ((q.x * q.x + q.p * q.p).sqrt() - r).abs() < 1e-12));
        let b = limit_bohmian(&eig, &grid(), &opts).unwrap();
        // arcsine law: second moment of x is A²/2 = Λ
        let x2: f64 = b.particles().iter().map(|q| q.w * q.x * q.x).sum();
        assert!((x2 - 1.0).abs() < 1e-10);
        assert!(measure_distance(&b, &w).unwrap() > 0.1);
    }

    #[test]
    fn two_phase_theta_average() {
        let fam = Family::TwoPhaseWkb {
            a1: env(),
            a2: Envelope::Gaussian { center: 0.0, width: 0.5, height: 0.5 },
            s1: PhaseSpec::Linear { momentum: 1.0 },
            s2: PhaseSpec::Linear { momentum: -1.0 },
        };
        let opts = LimitOptions::default();
        let b = limit_bohmian(&fam, &grid(), &opts).unwrap();
        // Φ = (3/4)/(5/4 + cos θ) ranges over [1/3, 3]
        let (_, _, lo, hi) = b.bounds().unwrap();
        assert!(lo > 1.0 / 3.0 - 1e-6 && lo < 1.0 / 3.0 + 1e-5);
        assert!(hi < 3.0 + 1e-6 && hi > 3.0 - 1e-4);
        // the θ-average of n Φ is a₁²S₁' + a₂²S₂', normalized: (1 - ¼)/(1 + ¼)
        let mean: f64 = b.particles().iter().map(|q| q.w * q.p).sum();
        assert!((mean - 0.6).abs() < 1e-12);
        let w = limit_wigner(&fam, &grid(), &opts).unwrap();
        let w_mean: f64 = w.particles().iter().map(|q| q.w * q.p).sum();
        assert!((w_mean - 0.6).abs() < 1e-12);
        assert!(measure_distance(&b, &w).unwrap() > 0.2);
    }

    #[test]
    fn time_dependent_limits() {
        let opts = LimitOptions::default();
        let v = Potential::harmonic(1.0);
        let coh = Family::CoherentState { center: 1.0, momentum: 0.0, width: 1.0 };
        let t = PI / 2.0;
        let b = limit_bohmian_at(&coh, &grid(), &v, t, &opts).unwrap();
        let q = b.particles()[0];
        assert!(q.x.abs() < 1e-12 && (q.p + 1.0).abs() < 1e-12);

        let wkb = Family::WkbSingle {
            amplitude: Envelope::gaussian(0.0, 0.4),
            phase: PhaseSpec::Quadratic { momentum: 0.0, curvature: -1.0 },
        };
        let at = limit_bohmian_at(&wkb, &grid(), &Potential::Free, 0.5, &opts).unwrap();
        let pushed = limit_wigner_at(&wkb, &grid(), &Potential::Free, 0.5, &opts).unwrap();
        let d = measure_distance(&at, &pushed).unwrap();
        // the two routes are quadratures on node sets of different spacing
        assert!(d < grid().dx(), "{d}");
        assert!(matches!(
            limit_bohmian_at(&wkb, &grid(), &Potential::Free, 1.5, &opts),
            Err(Error::Caustic { .. })
        ));
        let osc = Family::PeriodicOscillatory { envelope: env(), profile: PeriodicProfile::cosine() };
        assert!(matches!(limit_bohmian_at(&osc, &grid(), &v, 0.1, &opts), Err(Error::NoLimit(_))));
    }
}
