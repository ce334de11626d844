//! Statistical descriptors of the random medium and of the source, and the
//! dimensionless scales derived from them.
//!
//! All lengths are stored normalized to the optical wavelength. The
//! integrated medium correlation is `gamma(x) = sigma2 * ell_c * g(x / ell_c)`
//! where `g` is the scaled profile returned by [`MediumCorrelation::gamma_tilde`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Unit convention for user-supplied lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum LengthUnit {
    /// Lengths already divided by the wavelength.
    Wavelength,
    /// SI lengths in meters, with the wavelength in meters.
    Meter { wavelength: f64 },
}

impl LengthUnit {
    fn wavelength(&self) -> f64 {
        match *self {
            LengthUnit::Wavelength => 1.0,
            LengthUnit::Meter { wavelength } => wavelength,
        }
    }

    pub fn length(&self, value: f64) -> f64 {
        value / self.wavelength()
    }

    /// Potential variance has units of inverse length squared.
    pub fn sigma2(&self, value: f64) -> f64 {
        value * self.wavelength().powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.wavelength();
        if !(l.is_finite() && l > 0.0) {
            return Err(invalid(format!("wavelength must be positive, got {l}")));
        }
        Ok(())
    }
}

/// Paraxial coefficient `alpha / lambda = 1 / (4 pi n_o)` in wavelength units.
pub fn paraxial_alpha(n_o: f64) -> f64 {
    1.0 / (4.0 * PI * n_o)
}

/// Scaled integrated-correlation profile sampled on `[0, x_max]`, with its first
/// and second derivatives. Interpolated with quintic Hermite splines so that
/// the second derivative (and hence `Gamma~`) is continuous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedProfile {
    step: f64,
    value: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d4_at_zero: f64,
}

impl TabulatedProfile {
    pub fn new(step: f64, value: Vec<f64>, d1: Vec<f64>, d2: Vec<f64>, d4_at_zero: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid("tabulated profile step must be positive"));
        }
        if value.len() < 2 || value.len() != d1.len() || value.len() != d2.len() {
            return Err(invalid(
                "tabulated profile needs >= 2 nodes with matching derivative arrays",
            ));
        }
        if value.iter().chain(&d1).chain(&d2).any(|v| !v.is_finite()) || !d4_at_zero.is_finite() {
            return Err(invalid("tabulated profile contains non-finite values"));
        }
        if d1[0].abs() > 1e-12 * value[0].abs().max(1.0) {
            return Err(invalid("profile must be even: first derivative at 0 must vanish"));
        }
        Ok(Self {
            step,
            value,
            d1,
            d2,
            d4_at_zero,
        })
    }

    pub fn support(&self) -> f64 {
        self.step * (self.value.len() - 1) as f64
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let ax = x.abs();
        let max = self.support();
        if !(ax <= max) {
            return Err(Error::OutOfRange {
                what: "tabulated profile argument",
                value: x,
                min: -max,
                max,
            });
        }
        let i = ((ax / self.step) as usize).min(self.value.len() - 2);
        Ok((i, ax / self.step - i as f64))
    }

    fn eval(&self, x: f64) -> Result<f64> {
        let (i, t) = self.locate(x)?;
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
        let h3 = 0.5 * (t3 - 2.0 * t4 + t5);
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        Ok(self.value[i] * h0
            + h * self.d1[i] * h1
            + h * h * self.d2[i] * h2
            + h * h * self.d2[i + 1] * h3
            + h * self.d1[i + 1] * h4
            + self.value[i + 1] * h5)
    }

    fn second_derivative(&self, x: f64) -> Result<f64> {
        let (i, t) = self.locate(x)?;
        let h = self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        let a0 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
        let a1 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
        let a2 = 1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3;
        let a3 = 3.0 * t - 12.0 * t2 + 10.0 * t3;
        let a4 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
        let a5 = 60.0 * t - 180.0 * t2 + 120.0 * t3;
        Ok((self.value[i] * a0 + self.value[i + 1] * a5) / (h * h)
            + (self.d1[i] * a1 + self.d1[i + 1] * a4) / h
            + self.d2[i] * a2
            + self.d2[i + 1] * a3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediumKind {
    /// `E[V(0,0) V(z,x)] = sigma2 exp(-(x^2 + z^2) / ell_c^2)`.
    Gaussian,
    Tabulated(TabulatedProfile),
}

/// Statistics of the random potential, lengths in wavelength units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumCorrelation {
    pub sigma2: f64,
    pub ell_c: f64,
    pub kind: MediumKind,
}

impl MediumCorrelation {
    pub fn gaussian(sigma2: f64, ell_c: f64) -> Result<Self> {
        Self::new(sigma2, ell_c, MediumKind::Gaussian)
    }

    pub fn new(sigma2: f64, ell_c: f64, kind: MediumKind) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !(ell_c > 0.0 && ell_c.is_finite()) {
            return Err(invalid(format!("ell_c must be positive, got {ell_c}")));
        }
        Ok(Self {
            sigma2,
            ell_c,
            kind,
        })
    }

    /// Builds a model from values expressed in `unit`.
    pub fn with_units(sigma2: f64, ell_c: f64, kind: MediumKind, unit: LengthUnit) -> Result<Self> {
        unit.validate()?;
        Self::new(unit.sigma2(sigma2), unit.length(ell_c), kind)
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, MediumKind::Gaussian)
    }

    /// Scaled integrated correlation `g(x)`; `sqrt(pi) exp(-x^2)` for the
    /// Gaussian model.
    pub fn gamma_tilde(&self, x: f64) -> Result<f64> {
        match &self.kind {
            MediumKind::Gaussian => Ok(SQRT_PI * (-x * x).exp()),
            MediumKind::Tabulated(t) => t.eval(x),
        }
    }

    /// `Gamma~(x) = -g''(x)`.
    #[allow(non_snake_case)]
    pub fn Gamma_tilde(&self, x: f64) -> Result<f64> {
        match &self.kind {
            MediumKind::Gaussian => Ok(2.0 * SQRT_PI * (1.0 - 2.0 * x * x) * (-x * x).exp()),
            MediumKind::Tabulated(t) => Ok(-t.second_derivative(x)?),
        }
    }

    /// Fourth derivative of the scaled profile at the origin.
    pub fn gamma4_tilde(&self) -> f64 {
        match &self.kind {
            MediumKind::Gaussian => 12.0 * SQRT_PI,
            MediumKind::Tabulated(t) => t.d4_at_zero,
        }
    }

    /// `U~(x,y) = 2g(x) + 2g(y) - g(x+y) - g(x-y) - 2g(0)`.
    #[allow(non_snake_case)]
    pub fn U_tilde(&self, x: f64, y: f64) -> Result<f64> {
        let g = |v| self.gamma_tilde(v);
        Ok(2.0 * g(x)? + 2.0 * g(y)? - g(x + y)? - g(x - y)? - 2.0 * g(0.0)?)
    }

    /// Largest argument accepted by the profile (infinite for the Gaussian).
    pub fn support(&self) -> f64 {
        match &self.kind {
            MediumKind::Gaussian => f64::INFINITY,
            MediumKind::Tabulated(t) => t.support(),
        }
    }

    /// Unscaled integrated correlation `gamma(x) = sigma2 ell_c g(x / ell_c)`.
    pub fn gamma(&self, x: f64) -> Result<f64> {
        Ok(self.sigma2 * self.ell_c * self.gamma_tilde(x / self.ell_c)?)
    }

    /// Unscaled `Gamma(x) = -gamma''(x) = (sigma2 / ell_c) Gamma~(x / ell_c)`.
    #[allow(non_snake_case)]
    pub fn Gamma(&self, x: f64) -> Result<f64> {
        Ok(self.sigma2 / self.ell_c * self.Gamma_tilde(x / self.ell_c)?)
    }

    /// Covariance `E[V(0,0) V(z,x)]` of the Gaussian model.
    pub fn covariance(&self, z: f64, x: f64) -> Result<f64> {
        match self.kind {
            MediumKind::Gaussian => {
                Ok(self.sigma2 * (-(x * x + z * z) / (self.ell_c * self.ell_c)).exp())
            }
            MediumKind::Tabulated(_) => Err(Error::Unsupported(
                "a tabulated integrated profile does not define the 2D covariance".into(),
            )),
        }
    }
}

/// Tabulated initial coherence `C~_o` sampled on `[0, y_max]` at uniform step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCoherence {
    step: f64,
    value: Vec<f64>,
}

impl TabulatedCoherence {
    /// Values are normalized so that `C~_o(0) = 1`.
    pub fn new(step: f64, value: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || value.len() < 2 {
            return Err(invalid("tabulated coherence needs a positive step and >= 2 nodes"));
        }
        let c0 = value[0];
        if !(c0 > 0.0) || value.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tabulated coherence must be finite with C(0) > 0"));
        }
        Ok(Self {
            step,
            value: value.into_iter().map(|v| v / c0).collect(),
        })
    }

    /// Catmull-Rom interpolation, even extension, zero beyond the table.
    fn eval(&self, y: f64) -> f64 {
        let ay = y.abs() / self.step;
        let n = self.value.len();
        if ay >= (n - 1) as f64 {
            return if ay == (n - 1) as f64 { self.value[n - 1] } else { 0.0 };
        }
        let i = ay as usize;
        let t = ay - i as f64;
        let at = |j: isize| -> f64 {
            let j = j.unsigned_abs();
            if j < n {
                self.value[j]
            } else {
                0.0
            }
        };
        let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
        0.5 * ((2.0 * p1)
            + (-p0 + p2) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    PlaneWave,
    /// `C_o(y) = exp(-y^2 / (4 rho_o^2))`.
    GaussianSchell,
    Tabulated(TabulatedCoherence),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceCoherence {
    /// Speckle correlation radius in wavelength units; ignored for plane waves.
    pub rho_o: f64,
    pub kind: SourceKind,
}

impl SourceCoherence {
    pub fn plane_wave() -> Self {
        Self {
            rho_o: 0.0,
            kind: SourceKind::PlaneWave,
        }
    }

    pub fn gaussian_schell(rho_o: f64) -> Result<Self> {
        Self::new(rho_o, SourceKind::GaussianSchell)
    }

    pub fn new(rho_o: f64, kind: SourceKind) -> Result<Self> {
        if !matches!(kind, SourceKind::PlaneWave) && !(rho_o > 0.0 && rho_o.is_finite()) {
            return Err(invalid(format!("rho_o must be positive for speckle sources, got {rho_o}")));
        }
        Ok(Self { rho_o, kind })
    }

    pub fn with_units(rho_o: f64, kind: SourceKind, unit: LengthUnit) -> Result<Self> {
        unit.validate()?;
        Self::new(unit.length(rho_o), kind)
    }

    pub fn is_speckle(&self) -> bool {
        !matches!(self.kind, SourceKind::PlaneWave)
    }

    /// Scaled coherence `C~_o(y)` with `C~_o(0) = 1`.
    pub fn coherence_tilde(&self, y: f64) -> Result<f64> {
        match &self.kind {
            SourceKind::PlaneWave => Err(Error::Unsupported(
                "a plane wave has no coherence profile".into(),
            )),
            SourceKind::GaussianSchell => Ok((-y * y / 4.0).exp()),
            SourceKind::Tabulated(t) => Ok(t.eval(y)),
        }
    }

    /// Field correlation `C_o(y) = C~_o(y / rho_o)` in wavelength units.
    pub fn coherence(&self, y: f64) -> Result<f64> {
        self.coherence_tilde(y / self.rho_o)
    }

    /// `pi~_o(y) = |C~_o(y)|^2 / C~_o(0)^2`.
    pub fn pi_tilde_o(&self, y: f64) -> Result<f64> {
        let c0 = self.coherence_tilde(0.0)?;
        let c = self.coherence_tilde(y)?;
        Ok(c * c / (c0 * c0))
    }
}

/// Scales shared by every module. Lengths in wavelength units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub alpha: f64,
    pub x_c: f64,
    /// Absent for plane-wave sources.
    pub x_o: Option<f64>,
    pub z_c: f64,
    /// `-gamma''(0)`, equal to `Gamma(0)`.
    pub gamma2: f64,
    pub gamma4_tilde: f64,
    pub ell_c: f64,
    pub rho_o: Option<f64>,
}

pub fn derived_scales(
    medium: &MediumCorrelation,
    source: &SourceCoherence,
    alpha: f64,
) -> Result<DerivedScales> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let s23 = medium.sigma2.cbrt();
    let x_c = s23 * medium.ell_c / alpha.cbrt();
    let z_c = medium.ell_c / (2.0 * s23 * alpha.powf(2.0 / 3.0));
    let (x_o, rho_o) = if source.is_speckle() {
        (Some(s23 * source.rho_o / alpha.cbrt()), Some(source.rho_o))
    } else {
        (None, None)
    };
    Ok(DerivedScales {
        alpha,
        x_c,
        x_o,
        z_c,
        gamma2: medium.sigma2 / medium.ell_c * medium.Gamma_tilde(0.0)?,
        gamma4_tilde: medium.gamma4_tilde(),
        ell_c: medium.ell_c,
        rho_o,
    })
}
