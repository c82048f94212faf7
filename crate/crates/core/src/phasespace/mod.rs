//! Phase-space measures on `(x, p)`: the Bohmian measure, Wigner and Husimi
//! transforms, moments, a sliced-W₁ comparison metric and the Young-measure
//! pairing functional.

mod distance;
mod husimi;
mod measure;
mod moments;
mod pairing;
mod wigner;

pub use distance::{measure_distance, measure_distance_report, slice_directions, weighted_w1, DistanceReport, SLICE_COUNT};
pub use husimi::{husimi, husimi_with, HusimiOptions, HUSIMI_CLIP_LIMIT};
pub use measure::{bohmian_measure, Histogram, Particle, PhaseSpaceMeasure, Provenance};
pub use moments::{measure_moments, wigner_moments, Moments};
pub use pairing::{pair_functional, pair_measure, CurrentFn, DensityFn, MomentumFn, TestFunction, Window};
pub use wigner::{wigner_transform, wigner_transform_with, Correlation, WignerGridFunction};
