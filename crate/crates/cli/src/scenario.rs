use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use bohmlab_core::bohmian::TrajectoryConfig;
use bohmlab_core::phasespace::{HusimiOptions, TestFunction};
use bohmlab_core::schrodinger::PropagatorConfig;
use bohmlab_core::semiclassics::{caustic_time, Family, LimitOptions, PhaseSpec, SweepConfig};
use bohmlab_core::{Potential, UniformGrid};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    Densities,
    Conservation,
    Snapshots,
    Trajectories,
    Wigner,
    Husimi,
    BohmianMeasure,
    Limits,
    Wkb,
    Sweep,
}

impl Artifact {
    /// Artifacts that make sense for every ε of a sweep.
    fn per_epsilon(self) -> bool {
        matches!(self, Artifact::Sweep | Artifact::BohmianMeasure | Artifact::Husimi | Artifact::Limits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trajectory: TrajectoryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub adapt: bool,
    pub husimi: bool,
    pub husimi_options: HusimiOptions,
    pub limits: LimitOptions,
    pub pairings: Vec<TestFunction>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            adapt: false,
            husimi: true,
            husimi_options: HusimiOptions::default(),
            limits: LimitOptions::default(),
            pairings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

impl Threshold {
    pub fn passes(&self, v: f64) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    /// Verdict for `compare` against another run or a built-in limit.
    pub max_distance: Option<f64>,
    /// Verdicts on sweep-table columns, checked at every ε.
    pub thresholds: BTreeMap<String, Threshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: UniformGrid,
    #[serde(default)]
    pub potential: Potential,
    pub initial: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<PropagatorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub artifacts: Vec<Artifact>,
    #[serde(default)]
    pub sweep: SweepOptions,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Quantities reported by `validate` for one ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub eps: f64,
    pub n: usize,
    pub dx: f64,
    pub dp: f64,
    pub p_max: f64,
    /// Allowed spacing over actual spacing; at least 1 when resolved.
    pub resolution_margin: f64,
    pub rule: String,
}

pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            CliError::Invalid(inner.to_string())
        } else {
            CliError::Invalid(format!("field `{path}`: {inner}"))
        }
    })
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

impl Scenario {
    pub fn is_sweep(&self) -> bool {
        self.epsilons.is_some()
    }

    pub fn epsilon_list(&self) -> Vec<f64> {
        match (&self.epsilons, self.eps) {
            (Some(list), _) => list.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => Vec::new(),
        }
    }

    pub fn time(&self) -> f64 {
        self.propagation.map_or(0.0, |p| p.t_final)
    }

    pub fn wants(&self, a: Artifact) -> bool {
        self.artifacts.contains(&a)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        let mut cfg = SweepConfig::new(self.initial.clone(), self.grid.x_min(), self.grid.x_max(), self.grid.n());
        cfg.epsilons = self.epsilon_list();
        cfg.adapt = self.sweep.adapt;
        cfg.potential = self.potential.clone();
        cfg.time = self.time();
        if let Some(p) = self.propagation {
            cfg.dt = p.dt;
        }
        cfg.husimi = self.sweep.husimi;
        cfg.husimi_options = self.sweep.husimi_options;
        cfg.limits = self.sweep.limits;
        cfg.pairings = self.sweep.pairings.clone();
        cfg
    }

    pub fn grid_for(&self, eps: f64) -> Result<UniformGrid, CliError> {
        self.sweep_config().grid_for(eps).map_err(invalid)
    }

    /// Every check that needs no computation.
    pub fn validate(&self) -> Result<Vec<Derived>, CliError> {
        if self.name.trim().is_empty() {
            return Err(invalid("field `name`: must not be empty"));
        }
        match (&self.eps, &self.epsilons) {
            (Some(_), Some(_)) => return Err(invalid("give either `eps` or `epsilons`, not both")),
            (None, None) => return Err(invalid("one of `eps` or `epsilons` is required")),
            (_, Some(list)) if list.is_empty() => return Err(invalid("field `epsilons`: at least one value is required")),
            _ => {}
        }
        for &e in &self.epsilon_list() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(invalid(format!("eps must be positive and finite, got {e}")));
            }
        }
        if self.is_sweep() {
            if let Some(a) = self.artifacts.iter().find(|a| !a.per_epsilon()) {
                return Err(invalid(format!("artifact {a:?} needs a single `eps`, not an `epsilons` list")));
            }
        } else if self.wants(Artifact::Sweep) {
            return Err(invalid("artifact Sweep needs an `epsilons` list"));
        }
        if let Some(p) = &self.propagation {
            p.validate().map_err(|e| invalid(format!("field `propagation`: {e}")))?;
        }
        if self.wants(Artifact::Trajectories) {
            let ens = self.ensemble.as_ref().ok_or_else(|| invalid("artifact Trajectories needs an `ensemble` block"))?;
            if ens.count == 0 {
                return Err(invalid("field `ensemble.count`: must be at least 1"));
            }
            ens.trajectory.validate().map_err(|e| invalid(format!("field `ensemble.trajectory`: {e}")))?;
            if self.propagation.is_none() {
                return Err(invalid("artifact Trajectories needs a `propagation` block"));
            }
        }
        if self.wants(Artifact::Wkb) && !matches!(self.initial, Family::WkbSingle { .. } | Family::ModulatedPlaneWave { .. }) {
            return Err(invalid("artifact Wkb needs single-phase initial data (wkb_single or modulated_plane_wave)"));
        }
        self.initial.validate().map_err(|e| invalid(format!("field `initial`: {e}")))?;
        for (i, sigma) in self.sweep.pairings.iter().enumerate() {
            sigma.validate().map_err(|e| invalid(format!("field `sweep.pairings[{i}]`: {e}")))?;
        }
        let mut derived = Vec::new();
        for eps in self.epsilon_list() {
            let grid = self.grid_for(eps)?;
            self.potential.validate(&grid).map_err(|e| invalid(format!("field `potential`: {e}")))?;
            self.initial.check_resolution(eps, &grid).map_err(invalid)?;
            let (limit, rule) = self.initial.max_spacing(eps);
            let dp = PI * eps / grid.length();
            derived.push(Derived {
                eps,
                n: grid.n(),
                dx: grid.dx(),
                dp,
                p_max: grid.n() as f64 / 2.0 * dp,
                resolution_margin: limit / grid.dx(),
                rule: rule.to_string(),
            });
        }
        Ok(derived)
    }

    /// First caustic of single-phase data within the propagation window.
    pub fn caustic(&self) -> Option<f64> {
        let phase = match &self.initial {
            Family::WkbSingle { phase, .. } => *phase,
            Family::ModulatedPlaneWave { momentum, .. } => PhaseSpec::Linear { momentum: *momentum },
            _ => return None,
        };
        let horizon = self.time().max(1.0) * 4.0;
        caustic_time(&phase, &self.potential, horizon, &self.grid.points())
    }
}
