use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::stream::RngStream;
use crate::correlation::{SourceCoherence, SourceKind};
use crate::error::{Error, Result};
use crate::fft::{mode_index, Fft1};

/// Minimum window, in correlation radii, for a speckle to be synthesized.
const MIN_WINDOW_OVER_RHO: f64 = 16.0;

/// Initial field `psi_o(x_n)` at `x_n = n dx`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpeckleField {
    pub values: Vec<Complex64>,
    pub dx: f64,
    pub seed: RngStream,
    pub source: SourceCoherence,
}

/// Power spectrum `W_o(k_j)` of the source on the FFT grid, clamped at zero.
pub fn speckle_spectrum(n: usize, dx: f64, source: &SourceCoherence) -> Result<Vec<f64>> {
    let l = n as f64 * dx;
    match &source.kind {
        SourceKind::PlaneWave => Err(Error::Unsupported("plane waves have no speckle spectrum".into())),
        SourceKind::GaussianSchell => {
            let rho = source.rho_o;
            Ok((0..n)
                .map(|i| {
                    let k = 2.0 * PI * mode_index(i, n) as f64 / l;
                    2.0 * PI.sqrt() * rho * (-k * k * rho * rho).exp()
                })
                .collect())
        }
        SourceKind::Tabulated(_) => {
            let mut buf: Vec<Complex64> = (0..n)
                .map(|i| {
                    let y = mode_index(i, n) as f64 * dx;
                    source.coherence(y).map(|c| Complex64::new(c * dx, 0.0))
                })
                .collect::<Result<_>>()?;
            Fft1::new(n).forward(&mut buf);
            Ok(buf.iter().map(|v| v.re.max(0.0)).collect())
        }
    }
}

/// Circular complex Gaussian field with correlation `C_o`, obtained by
/// filtering complex white noise with `sqrt(W_o)`. The filter is scaled so the
/// ensemble mean intensity is exactly one on the discrete grid. A plane-wave
/// source yields the constant field 1.
pub fn synthesize_speckle(
    n: usize,
    dx: f64,
    source: &SourceCoherence,
    stream: RngStream,
) -> Result<SpeckleField> {
    if n < 2 || !(dx > 0.0) {
        return Err(Error::InvalidParameter(format!("bad speckle grid n={n}, dx={dx}")));
    }
    if !source.is_speckle() {
        return Ok(SpeckleField {
            values: vec![Complex64::new(1.0, 0.0); n],
            dx,
            seed: stream,
            source: source.clone(),
        });
    }
    let rho = source.rho_o;
    if dx > rho / 4.0 {
        return Err(Error::GridTooSmall(format!("dx={dx} must be <= rho_o/4 = {}", rho / 4.0)));
    }
    if (n as f64) * dx < MIN_WINDOW_OVER_RHO * rho {
        return Err(Error::GridTooSmall(format!(
            "window {} must be >= {MIN_WINDOW_OVER_RHO} rho_o",
            n as f64 * dx
        )));
    }
    let spectrum = speckle_spectrum(n, dx, source)?;
    let total: f64 = spectrum.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("source spectrum vanishes".into()));
    }
    let mut rng = stream.rng();
    let mut values: Vec<Complex64> = spectrum
        .iter()
        .map(|w| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * (0.5 * w / total).sqrt()
        })
        .collect();
    Fft1::new(n).inverse_unnormalized(&mut values);
    Ok(SpeckleField {
        values,
        dx,
        seed: stream,
        source: source.clone(),
    })
}
