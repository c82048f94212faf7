use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrodynamics::compute_densities;
use crate::schrodinger::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: f64,
    pub p: f64,
    pub w: f64,
}

impl Particle {
    pub fn new(x: f64, p: f64, w: f64) -> Self {
        Self { x, p, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Bohmian,
    Husimi,
    ClosedFormLimit,
    Ensemble,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Bohmian => "bohmian",
            Provenance::Husimi => "husimi",
            Provenance::ClosedFormLimit => "closed_form_limit",
            Provenance::Ensemble => "ensemble",
        }
    }
}

/// Cell masses on a product grid, stored row-major as `[x index][p index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub x_min: f64,
    pub dx: f64,
    pub nx: usize,
    pub p_min: f64,
    pub dp: f64,
    pub np: usize,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp
    }
}

/// Finite nonnegative measure on phase space as weighted particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceMeasure {
    particles: Vec<Particle>,
    histogram: Option<Histogram>,
    provenance: Provenance,
    /// Mass that belongs to the source state but is not represented, e.g. the
    /// node-masked cells of a Bohmian measure.
    defect: f64,
}

impl PhaseSpaceMeasure {
    pub fn new(particles: Vec<Particle>, provenance: Provenance) -> Result<Self> {
        if let Some(bad) = particles
            .iter()
            .find(|q| !(q.w >= 0.0 && q.w.is_finite() && q.x.is_finite() && q.p.is_finite()))
        {
            return Err(Error::InvalidData(format!(
                "particle ({}, {}) has weight {}; weights must be finite and nonnegative",
                bad.x, bad.p, bad.w
            )));
        }
        Ok(Self {
            particles,
            histogram: None,
            provenance,
            defect: 0.0,
        })
    }

    pub fn point_mass(x: f64, p: f64, w: f64, provenance: Provenance) -> Result<Self> {
        Self::new(vec![Particle::new(x, p, w)], provenance)
    }

    pub fn with_histogram(mut self, histogram: Histogram) -> Self {
        self.histogram = Some(histogram);
        self
    }

    pub fn with_defect(mut self, defect: f64) -> Self {
        self.defect = defect;
        self
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn histogram(&self) -> Option<&Histogram> {
        self.histogram.as_ref()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn defect(&self) -> f64 {
        self.defect
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|q| q.w).sum()
    }

    /// `(x_min, x_max, p_min, p_max)` of the support, `None` when empty.
    pub fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let first = self.particles.first()?;
        Some(self.particles.iter().fold(
            (first.x, first.x, first.p, first.p),
            |(a, b, c, d), q| (a.min(q.x), b.max(q.x), c.min(q.p), d.max(q.p)),
        ))
    }

    /// Same measure with weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.particles.iter_mut().for_each(|q| q.w *= factor);
        if let Some(h) = out.histogram.as_mut() {
            h.masses.iter_mut().for_each(|m| *m *= factor);
        }
        out
    }

    pub fn translated(&self, dx: f64, dp: f64) -> Self {
        let mut out = self.clone();
        out.particles.iter_mut().for_each(|q| {
            q.x += dx;
            q.p += dp;
        });
        if let Some(h) = out.histogram.as_mut() {
            h.x_min += dx;
            h.p_min += dp;
        }
        out
    }

    /// Merges particles sharing a location and drops zero weights.
    pub fn compact(&self) -> Self {
        let mut ps: Vec<Particle> = self.particles.iter().copied().filter(|q| q.w > 0.0).collect();
        ps.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.p.total_cmp(&b.p)));
        let mut merged: Vec<Particle> = Vec::with_capacity(ps.len());
        for q in ps {
            match merged.last_mut() {
                Some(last) if last.x == q.x && last.p == q.p => last.w += q.w,
                _ => merged.push(q),
            }
        }
        Self {
            particles: merged,
            histogram: self.histogram.clone(),
            provenance: self.provenance,
            defect: self.defect,
        }
    }

    pub fn into_particles(self) -> Vec<Particle> {
        self.particles
    }
}

/// One particle per unmasked cell at `(x_k, u(x_k))` with weight `ρ_k dx`;
/// masked cells go to the defect so that `mass + defect = ‖ψ‖²`.
pub fn bohmian_measure(psi: &WaveFunction) -> PhaseSpaceMeasure {
    let fields = compute_densities(psi);
    let grid = fields.grid;
    let dx = grid.dx();
    let mut defect = 0.0;
    let mut particles = Vec::with_capacity(grid.n());
    for k in 0..grid.n() {
        let w = fields.rho[k] * dx;
        match fields.velocity_at(k) {
            Some(u) => particles.push(Particle::new(grid.point(k), u, w)),
            None => defect += w,
        }
    }
    PhaseSpaceMeasure {
        particles,
        histogram: None,
        provenance: Provenance::Bohmian,
        defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Complex64, UniformGrid};
    use std::f64::consts::PI;

    #[test]
    fn plane_wave_measure_sits_on_one_momentum() {
        let g = UniformGrid::new(0.0, 2.0 * PI, 128).unwrap();
        let eps = 1.0 / 8.0;
        let psi = WaveFunction::from_fn(g, eps, |x| Complex64::from_polar((2.0 * PI).powf(-0.5), 0.5 * x / eps)).unwrap();
        let beta = bohmian_measure(&psi);
        assert_eq!(beta.len(), 128);
        assert!((beta.total_mass() - 1.0).abs() < 1e-12);
        // ⟨β, φ⟩ for φ = cos(x)·p² reduces to (1/L)∫cos·p0² = 0 and for φ = p to p0
        let first: f64 = beta.particles().iter().map(|q| q.w * q.p).sum();
        assert!((first - 0.5).abs() < 1e-11);
        for q in beta.particles() {
            assert!((q.p - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn real_envelope_times_carrier() {
        let g = UniformGrid::new(-4.0, 4.0, 512).unwrap();
        let eps = 1.0 / 32.0;
        let psi = WaveFunction::from_fn(g, eps, |x| Complex64::from_polar((-x * x).exp(), -0.4 * x / eps))
            .unwrap()
            .normalized()
            .unwrap();
        let beta = bohmian_measure(&psi);
        let first: f64 = beta.particles().iter().map(|q| q.w * q.p).sum();
        assert!((first + 0.4).abs() < 1e-10);
        assert!((beta.total_mass() + beta.defect() - psi.mass()).abs() < 1e-12);
    }

    #[test]
    fn defect_accounts_for_nodes() {
        let g = UniformGrid::new(-4.0, 4.0, 256).unwrap();
        let psi = WaveFunction::from_fn(g, 0.1, |x| Complex64::new(x * (-x * x).exp(), 0.0)).unwrap();
        let beta = bohmian_measure(&psi);
        assert!(beta.len() < 256);
        assert!((beta.total_mass() + beta.defect() - psi.mass()).abs() < 1e-12 * psi.mass());
        assert!(beta.particles().iter().all(|q| q.p == 0.0));
    }

    #[test]
    fn compact_merges_duplicates() {
        let m = PhaseSpaceMeasure::new(
            vec![Particle::new(0.0, 1.0, 0.25), Particle::new(0.0, 1.0, 0.5), Particle::new(1.0, 0.0, 0.0)],
            Provenance::ClosedFormLimit,
        )
        .unwrap()
        .compact();
        assert_eq!(m.particles(), &[Particle::new(0.0, 1.0, 0.75)]);
        assert!(PhaseSpaceMeasure::point_mass(0.0, 0.0, -1.0, Provenance::Ensemble).is_err());
    }
}
