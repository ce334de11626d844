//! Monte Carlo experiments over medium and source realizations, with
//! ordered merging, error bars from between-realization scatter, and
//! persisted manifests.

mod accumulator;
mod engine;
mod plan;
mod result;
mod theory;

pub use accumulator::{
    accumulate, Accumulator, ChannelSums, Layout, Observation, Outcome, Record, MAX_DROP_FRACTION,
};
pub(crate) use engine::with_workers;
pub use engine::{
    field_correlation, run_coherent_plane, run_experiment, run_outcomes, run_realization, run_speckle_c, run_speckle_pc};
pub use plan::{grid_points, output_schedule, ExperimentPlan};
pub use result::{
    check_resume, persist, read_manifest, reload, CorrelationPoint, CorrelationSeries, CurvePoint, EnsembleResult,
    FieldPoint, FieldSeries, Manifest, Provenance, MANIFEST, VERSION,
};
pub use theory::{field_correlation_quadratic, field_correlation_theory, power_law_exponent};
