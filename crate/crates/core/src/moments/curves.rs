use std::path::Path;

use serde::{Deserialize, Serialize};

use super::solver::{MomentRegime, MomentSolution};
use crate::correlation::DerivedScales;
use crate::error::{Error, Result};
use crate::fft::TrigInterpolant;
use crate::io::{sidecar_path, write_csv, write_json};
use num_complex::Complex64;

/// Observation regime of an intensity statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveRegime {
    /// Plane-wave source.
    Plane,
    /// Single frozen speckle per shot.
    C,
    /// Intensity averaged over many speckles, medium fixed.
    Pc,
}

impl CurveRegime {
    pub fn name(&self) -> &'static str {
        match self {
            CurveRegime::Plane => "plane",
            CurveRegime::C => "c",
            CurveRegime::Pc => "pc",
        }
    }
}

impl std::str::FromStr for CurveRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(CurveRegime::Plane),
            "c" => Ok(CurveRegime::C),
            "pc" => Ok(CurveRegime::Pc),
            other => Err(Error::InvalidParameter(format!("unknown regime '{other}' (plane, c, pc)"))),
        }
    }
}

/// `(z / z_c, S)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScintillationCurve {
    pub regime: CurveRegime,
    pub points: Vec<(f64, f64)>,
}

/// `(x / ell_c, C)` pairs at one distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub regime: CurveRegime,
    pub z: f64,
    pub points: Vec<(f64, f64)>,
    pub ell_c: f64,
    pub rho_o: Option<f64>,
    /// Some requested lags fell outside the window and were dropped.
    pub truncated: bool,
}

fn check_regime(solution: &MomentSolution, regime: CurveRegime) -> Result<()> {
    match (solution.regime, regime) {
        (MomentRegime::CoherentD { .. }, CurveRegime::Plane) => Ok(()),
        (MomentRegime::IncoherentPi { .. }, CurveRegime::C | CurveRegime::Pc) => Ok(()),
        (r, c) => Err(Error::InvalidParameter(format!("regime {} does not match solution {r:?}", c.name()))),
    }
}

fn from_origin(value: f64, regime: CurveRegime) -> f64 {
    match regime {
        CurveRegime::Plane | CurveRegime::Pc => value - 1.0,
        CurveRegime::C => 2.0 * value - 1.0,
    }
}

impl MomentSolution {
    pub fn scintillation(&self, regime: CurveRegime) -> Result<ScintillationCurve> {
        check_regime(self, regime)?;
        Ok(ScintillationCurve {
            regime,
            points: self.origin.iter().map(|&(z, v)| (z, from_origin(v, regime))).collect(),
        })
    }
}

impl ScintillationCurve {
    /// Largest sample as `(z, S)`.
    pub fn max(&self) -> (f64, f64) {
        self.points
            .iter()
            .copied()
            .fold((f64::NAN, f64::NEG_INFINITY), |a, p| if p.1 > a.1 { p } else { a })
    }

    /// Maximum refined by a parabola through the largest sample and its
    /// neighbours.
    pub fn refined_max(&self) -> (f64, f64) {
        let i = self
            .points
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, p)| if p.1 > a.1 { (i, p.1) } else { a })
            .0;
        if i == 0 || i + 1 >= self.points.len() {
            return self.points[i];
        }
        parabola_vertex(self.points[i - 1], self.points[i], self.points[i + 1])
    }

    /// Indices of interior local maxima standing at least `prominence` above
    /// the lowest sample on each side, scanning until a higher sample.
    pub fn local_maxima(&self, prominence: f64) -> Vec<usize> {
        let s: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        let n = s.len();
        let mut out = Vec::new();
        for i in 1..n.saturating_sub(1) {
            if !(s[i] > s[i - 1] && s[i] >= s[i + 1]) {
                continue;
            }
            let mut left = s[i];
            for k in (0..i).rev() {
                if s[k] > s[i] {
                    break;
                }
                left = left.min(s[k]);
            }
            let right = s[i + 1..]
                .iter()
                .take_while(|&&v| v <= s[i])
                .fold(s[i], |a, &v| a.min(v));
            let depth = (s[i] - left).min(s[i] - right);
            if depth >= prominence {
                out.push(i);
            }
        }
        out
    }

    /// Largest drop between consecutive samples; zero for a non-decreasing
    /// curve.
    pub fn max_decrease(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max)
    }

    pub fn value_at(&self, z: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.0 - z).abs() < 1e-9).map(|p| p.1)
    }

    /// Linearly interpolated value at `z`.
    pub fn interpolate(&self, z: f64) -> Option<f64> {
        let i = self.points.windows(2).position(|w| w[0].0 <= z && z <= w[1].0)?;
        let (a, b) = (self.points[i], self.points[i + 1]);
        if b.0 == a.0 {
            return Some(a.1);
        }
        Some(a.1 + (b.1 - a.1) * (z - a.0) / (b.0 - a.0))
    }

    /// CSV `(z_over_zc, S)` with a JSON sidecar.
    pub fn write(&self, path: &Path, sidecar: &impl Serialize) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.points.iter().map(|&(z, s)| vec![z, s]).collect();
        write_csv(path, &["z_over_zc", "S"], &rows)?;
        write_json(&sidecar_path(path), sidecar)
    }
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let curv = (d2 - d1) / (x2 - x0);
    if !(curv < 0.0) {
        return b;
    }
    // y = y0 + d1 (x - x0) + curv (x - x0)(x - x1)
    let xv = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
    let yv = y0 + d1 * (xv - x0) + curv * (xv - x0) * (xv - x1);
    (xv, yv)
}

impl CorrelationCurve {
    /// Rectangle-rule `sum C dx` in wavelength units, assuming uniform lags.
    pub fn integral(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let dx = (self.points[1].0 - self.points[0].0) * self.ell_c;
        self.points.iter().map(|p| p.1).sum::<f64>() * dx
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.1.abs()).fold(0.0, f64::max)
    }

    pub fn value_at(&self, x_over_lc: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.0 - x_over_lc).abs() < 1e-9).map(|p| p.1)
    }

    /// CSV `(x_over_lc, C)` with a JSON sidecar.
    pub fn write(&self, path: &Path, sidecar: &impl Serialize) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.points.iter().map(|&(x, c)| vec![x, c]).collect();
        write_csv(path, &["x_over_lc", "C"], &rows)?;
        write_json(&sidecar_path(path), sidecar)
    }
}

/// Evaluates periodic nodal samples at arbitrary positions, returning exact
/// node values on nodes.
struct Sampler<'a> {
    values: &'a [Complex64],
    d: f64,
    origin: f64,
    interp: Option<TrigInterpolant>,
}

impl<'a> Sampler<'a> {
    fn new(values: &'a [Complex64], d: f64, origin: f64) -> Self {
        Self {
            values,
            d,
            origin,
            interp: None,
        }
    }

    fn eval(&mut self, x: f64) -> Complex64 {
        let pos = (x - self.origin) / self.d;
        let k = pos.round();
        if (pos - k).abs() < 1e-9 {
            let n = self.values.len() as i64;
            return self.values[(k as i64).rem_euclid(n) as usize];
        }
        let (values, d, origin) = (self.values, self.d, self.origin);
        self.interp
            .get_or_insert_with(|| TrigInterpolant::new(values, d, origin))
            .eval(x)
    }
}

/// Intensity correlation at physical lags `x` (wavelength units) from the
/// snapshot at `z`:
/// plane `D(x/ell_c, 0) - 1`, pc `Pi(x/ell_c, 0) - 1`,
/// c `Pi(x/ell_c, 0) + Pi(x/ell_c, X_o x/rho_o) - 1`.
pub fn intensity_correlation(
    solution: &MomentSolution,
    z: f64,
    scales: &DerivedScales,
    regime: CurveRegime,
    x: &[f64],
) -> Result<CorrelationCurve> {
    check_regime(solution, regime)?;
    let snap = solution
        .snapshots
        .iter()
        .find(|s| (s.z - z).abs() < 1e-9)
        .ok_or_else(|| Error::InvalidParameter(format!("no snapshot stored at z = {z}")))?;
    let g = &solution.grid;
    let lc = scales.ell_c;
    let mut row = Sampler::new(&snap.row, g.dx(), g.x(0));
    let slope_slice = if regime == CurveRegime::C {
        let (x_o, rho) = match (solution.regime, scales.rho_o) {
            (MomentRegime::IncoherentPi { x_o }, Some(rho)) => (x_o, rho),
            _ => return Err(Error::InvalidParameter("regime c needs a speckle source".into())),
        };
        let want = x_o * lc / rho;
        let slice = snap
            .slope
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("solution was run without the slope slice".into()))?;
        if (slice.slope - want).abs() > 1e-9 * want {
            return Err(Error::InvalidParameter(format!(
                "stored slope {} differs from X_o ell_c / rho_o = {want}",
                slice.slope
            )));
        }
        Some(slice)
    } else {
        None
    };
    let mut slope = slope_slice.map(|s| Sampler::new(&s.values, s.step, s.origin));
    let slope_reach = slope_slice.map_or(0.0, |s| s.step * (s.values.len() / 2) as f64);
    let half = g.lx / 2.0;
    let mut truncated = false;
    let mut points = Vec::with_capacity(x.len());
    for &xp in x {
        let xt = xp / lc;
        if xt.abs() > half {
            truncated = true;
            continue;
        }
        let base = row.eval(xt).re;
        let c = match regime {
            CurveRegime::Plane | CurveRegime::Pc => base - 1.0,
            CurveRegime::C => {
                let s = slope.as_mut().expect("slope slice checked above");
                // Beyond the slice the speckle term has decayed; it is taken
                // as zero.
                let term = if xt.abs() < slope_reach { s.eval(xt).re } else { 0.0 };
                base + term - 1.0
            }
        };
        points.push((xt, c));
    }
    if truncated {
        log::warn!("intensity correlation truncated to the moment window |x| <= {} ell_c", half);
    }
    Ok(CorrelationCurve {
        regime,
        z,
        points,
        ell_c: lc,
        rho_o: scales.rho_o,
        truncated,
    })
}

/// Correlation on every `x` node of the moment window, `[-L/2, L/2)`.
pub fn window_correlation(
    solution: &MomentSolution,
    z: f64,
    scales: &DerivedScales,
    regime: CurveRegime,
) -> Result<CorrelationCurve> {
    let g = &solution.grid;
    let x: Vec<f64> = (0..g.nx).map(|i| g.x(i) * scales.ell_c).collect();
    intensity_correlation(solution, z, scales, regime, &x)
}
