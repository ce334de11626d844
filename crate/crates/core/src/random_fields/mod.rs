mod covariance;
mod potential;
mod speckle;
mod stream;

pub use covariance::{
    estimate_covariance, estimate_covariance_2d, estimate_field_correlation, CorrelationEstimate,
    CovarianceEstimate,
};
pub use potential::{synthesize_potential, PotentialField, PotentialGrid, RowEvaluator, RowKind};
pub use speckle::{speckle_spectrum, synthesize_speckle, SpeckleField};
pub use stream::{RngStream, POTENTIAL_SUBSTREAM, SPECKLE_SUBSTREAM_BASE};
