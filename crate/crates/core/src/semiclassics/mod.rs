//! Case-study families of ε-dependent initial data, their closed-form
//! Bohmian and Wigner limits, WKB characteristics, and ε-sweeps that measure
//! how the finite-ε measures approach those limits.

mod family;
mod hermite;
mod limits;
mod liouville;
mod sweep;
mod wkb;

pub use family::{
    synthesize, Envelope, Family, FourierMode, PeriodicProfile, PhaseSpec, BULK_LEVEL, FAMILY_SUMMARIES, POINTS_PER_WAVELENGTH,
};
pub use hermite::hermite_function;
pub use limits::{
    concentrating_momentum_law, limit_bohmian, limit_bohmian_at, limit_second_moment_gap, limit_wigner, limit_wigner_at, LimitOptions,
};
pub use liouville::{classical_flow, hamilton_step, liouville_pushforward, CLASSICAL_STEP};
pub use sweep::{default_epsilons, epsilon_sweep, fit_slope, SweepConfig, SweepRow, SweepTable};
pub use wkb::{caustic_time, hj_characteristics, hj_characteristics_with, wkb_fields, wkb_wavefunction, WkbState};
