use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::CurveRegime;
use super::solver::{solve_coherent_d, SolveSettings};
use crate::correlation::MediumCorrelation;
use crate::error::{Error, Result};

/// Leading small-distance behaviour: `g4/6 z^3` (plane, pc) and
/// `1 + g4/3 z^3` (c), where `g4` is the fourth derivative of the scaled
/// integrated covariance at zero.
pub fn small_z_oracle(z: f64, regime: CurveRegime, medium: &MediumCorrelation) -> f64 {
    if z > 0.5 {
        log::warn!("small-z law evaluated at z/z_c = {z}, beyond its validity range (<= 0.5)");
    }
    let g4 = medium.gamma4_tilde();
    match regime {
        CurveRegime::Plane | CurveRegime::Pc => g4 / 6.0 * z.powi(3),
        CurveRegime::C => 1.0 + g4 / 3.0 * z.powi(3),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxProbe {
    pub parameter: f64,
    pub z_at_max: f64,
    pub max_s: f64,
}

/// Plane-wave maximum of `S` over `(0, z_max]` for each `X_c`, solved in
/// parallel with default grids.
pub fn scan_coherent_max(
    x_cs: &[f64],
    medium: &MediumCorrelation,
    z_max: f64,
) -> Result<Vec<MaxProbe>> {
    x_cs.par_iter()
        .map(|&x_c| {
            let settings = SolveSettings::coherent(x_c, z_max)?;
            let sol = solve_coherent_d(x_c, medium, &settings)?;
            let (z, s) = sol.scintillation(CurveRegime::Plane)?.refined_max();
            Ok(MaxProbe {
                parameter: x_c,
                z_at_max: z,
                max_s: s,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSettings {
    pub lo: f64,
    pub hi: f64,
    /// Overshoot means `max S > 1 + eps`.
    pub eps: f64,
    pub z_max: f64,
    /// Stop when the bracket is narrower than this.
    pub width: f64,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self {
            lo: 0.5,
            hi: 6.0,
            eps: 1e-3,
            // Every curve eventually approaches 1 from above, so the
            // predicate needs a finite range; this is the range over which
            // simulations are compared.
            z_max: 4.0,
            width: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Largest probed `X_c` without overshoot.
    pub lo: f64,
    /// Smallest probed `X_c` with overshoot.
    pub hi: f64,
    pub probes: Vec<MaxProbe>,
}

impl ThresholdResult {
    pub fn estimate(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Bisection for the smallest `X_c` whose plane-wave curve overshoots 1 within
/// `z_max`. The result depends on `z_max`: close to the threshold the maximum
/// moves to large distances.
pub fn threshold_scan(medium: &MediumCorrelation, settings: &ThresholdSettings) -> Result<ThresholdResult> {
    if !(settings.lo > 0.0 && settings.hi > settings.lo && settings.width > 0.0) {
        return Err(Error::InvalidParameter(format!("bad threshold bracket {settings:?}")));
    }
    let probe = |x_c: f64| -> Result<MaxProbe> {
        let s = SolveSettings::coherent(x_c, settings.z_max)?;
        let sol = solve_coherent_d(x_c, medium, &s)?;
        let (z, m) = sol.scintillation(CurveRegime::Plane)?.max();
        log::info!("threshold probe X_c = {x_c}: max S = {m} at z = {z}");
        Ok(MaxProbe {
            parameter: x_c,
            z_at_max: z,
            max_s: m,
        })
    };
    let over = |p: &MaxProbe| p.max_s > 1.0 + settings.eps;
    let ends: Vec<MaxProbe> = [settings.lo, settings.hi]
        .par_iter()
        .map(|&x| probe(x))
        .collect::<Result<_>>()?;
    let (mut lo, mut hi) = (settings.lo, settings.hi);
    if over(&ends[0]) == over(&ends[1]) {
        return Err(Error::NoBracket(format!(
            "overshoot predicate is {} at both X_c = {lo} and X_c = {hi}",
            over(&ends[0])
        )));
    }
    let increasing = over(&ends[1]);
    let mut probes = ends;
    while hi - lo > settings.width {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid)?;
        if over(&p) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
        probes.push(p);
    }
    Ok(ThresholdResult { lo, hi, probes })
}
