//! Deterministic solvers for the closed moment equations of the scaled
//! problem, and the curves extracted from them.

mod curves;
mod grid;
mod oracle;
mod solver;

pub use curves::{intensity_correlation, window_correlation, CorrelationCurve, CurveRegime, ScintillationCurve};
pub use grid::{fft_friendly, MomentGrid, StepSchedule};
pub use oracle::{scan_coherent_max, small_z_oracle, threshold_scan, MaxProbe, ThresholdResult, ThresholdSettings};
pub use solver::{
    solve_coherent_d, solve_incoherent_pi, BoundaryReport, MomentRegime, MomentSnapshot, MomentSolution,
    SlopeSlice, SolveSettings, SymmetryReport, DEFAULT_BOUNDARY_TOLERANCE,
};
