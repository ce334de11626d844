use crate::correlation::{MediumCorrelation, SourceCoherence};
use crate::error::{invalid, Result};

fn initial_coherence(source: &SourceCoherence, y: f64) -> Result<f64> {
    if source.is_speckle() {
        source.coherence(y)
    } else {
        Ok(1.0)
    }
}

/// `E[psi(x + y/2) conj(psi(x - y/2))] = C_o(y) exp(z (gamma(y) - gamma(0)))`
/// in physical units. The plane wave has `C_o = 1`.
pub fn field_correlation_theory(medium: &MediumCorrelation, source: &SourceCoherence, y: f64, z: f64) -> Result<f64> {
    Ok(initial_coherence(source, y)? * (z * (medium.gamma(y)? - medium.gamma(0.0)?)).exp())
}

/// The small-lag form `C_o(y) exp(-gamma_2 z y^2 / 2)`.
pub fn field_correlation_quadratic(
    medium: &MediumCorrelation,
    source: &SourceCoherence,
    y: f64,
    z: f64,
) -> Result<f64> {
    Ok(initial_coherence(source, y)? * (-0.5 * medium.Gamma(0.0)? * z * y * y).exp())
}

/// Least-squares exponent `p` of `w = a z^p`.
pub fn power_law_exponent(z: &[f64], w: &[f64]) -> Result<f64> {
    if z.len() != w.len() || z.len() < 2 {
        return Err(invalid("a power-law fit needs at least two paired points"));
    }
    if z.iter().chain(w).any(|v| !(*v > 0.0)) {
        return Err(invalid("a power-law fit needs positive values"));
    }
    let lx: Vec<f64> = z.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
