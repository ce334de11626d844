use serde::{Deserialize, Serialize};

use crate::correlation::{derived_scales, MediumCorrelation, SourceCoherence};
use crate::error::{invalid, Result};
use crate::moments::CurveRegime;
use crate::paraxial::TransverseGrid;
use crate::random_fields::PotentialGrid;

/// Everything needed to reproduce a Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub medium: MediumCorrelation,
    pub source: SourceCoherence,
    pub alpha: f64,
    pub nx: usize,
    pub dx: f64,
    pub dz: f64,
    pub regime: CurveRegime,
    /// Outer realizations of the medium.
    pub n_medium: usize,
    /// Speckles per medium; 1 except for `pc`.
    pub m_source: usize,
    /// Physical distances at which statistics are recorded.
    pub outputs: Vec<f64>,
    /// Intensity-correlation lags `0..=correlation_lags` grid steps.
    pub correlation_lags: usize,
    /// Field-correlation lags `0..=field_lags` grid steps.
    pub field_lags: usize,
    pub root_seed: u64,
    /// Keep `|psi|^2` of the first realization at each output, every
    /// `stride`-th point.
    #[serde(default)]
    pub map_stride: Option<usize>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.n_medium == 0 {
            return Err(invalid("n_medium must be at least 1"));
        }
        match self.regime {
            CurveRegime::Plane => {
                if self.source.is_speckle() {
                    return Err(invalid("the plane regime needs a plane-wave source"));
                }
                if self.m_source != 1 {
                    return Err(invalid("the plane regime uses m_source = 1"));
                }
            }
            CurveRegime::C => {
                if !self.source.is_speckle() {
                    return Err(invalid("the c regime needs a speckle source"));
                }
                if self.m_source != 1 {
                    return Err(invalid("the c regime uses one speckle per medium (m_source = 1)"));
                }
            }
            CurveRegime::Pc => {
                if !self.source.is_speckle() {
                    return Err(invalid("the pc regime needs a speckle source"));
                }
                if self.m_source < 2 {
                    return Err(invalid("the pc regime needs m_source >= 2 for the bias correction"));
                }
            }
        }
        if !(self.dz > 0.0 && self.dz.is_finite()) {
            return Err(invalid(format!("dz must be positive, got {}", self.dz)));
        }
        if self.outputs.is_empty() {
            return Err(invalid("no output distances"));
        }
        let mut prev = 0.0;
        for &z in &self.outputs {
            let steps = z / self.dz;
            if z < prev || (steps - steps.round()).abs() > 1e-9 * steps.round().max(1.0) {
                return Err(invalid(format!(
                    "outputs must be increasing multiples of dz = {}; got {z}",
                    self.dz
                )));
            }
            prev = z;
        }
        if self.correlation_lags >= self.nx || self.field_lags >= self.nx {
            return Err(invalid("correlation lags must be below the grid size"));
        }
        self.potential_grid().validate(&self.medium)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TransverseGrid> {
        TransverseGrid::new(self.nx, self.dx)
    }

    pub fn z_c(&self) -> Result<f64> {
        Ok(derived_scales(&self.medium, &self.source, self.alpha)?.z_c)
    }

    /// Rows at the step midpoints up to the last output, and at least
    /// `8 ell_c` long.
    pub fn potential_grid(&self) -> PotentialGrid {
        let z_end = self.outputs.last().copied().unwrap_or(0.0).max(8.0 * self.medium.ell_c);
        let nz = ((z_end / self.dz - 1e-9).ceil() as usize).max(1);
        PotentialGrid::midpoint(self.nx, self.dx, nz, self.dz)
    }
}

/// Distances `f z_c` for each fraction, rounded to whole steps, deduplicated.
pub fn output_schedule(z_c: f64, fractions: &[f64], dz: f64) -> Vec<f64> {
    let mut out: Vec<f64> = fractions.iter().map(|f| (f * z_c / dz).round() * dz).collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    out.dedup();
    out
}

/// Smallest power of two covering `window` at step `dx`.
pub fn grid_points(window: f64, dx: f64) -> usize {
    ((window / dx).ceil() as usize).max(2).next_power_of_two()
}
