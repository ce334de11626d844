use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ensemble lag-covariance curve at lags `0, dx, 2 dx, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub dx: f64,
    pub values: Vec<f64>,
    /// Standard error from the scatter between realizations.
    pub stderr: Vec<f64>,
    pub realizations: usize,
}

impl CovarianceEstimate {
    pub fn lag(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }
}

/// Complex counterpart, `<f(x + lag) conj f(x)>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub dx: f64,
    pub values: Vec<Complex64>,
    /// Standard error of the real part.
    pub stderr_re: Vec<f64>,
    pub realizations: usize,
}

fn check(realizations: usize, len: usize, max_lag: usize) -> Result<()> {
    if realizations < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance estimation needs at least 2 realizations, got {realizations}"
        )));
    }
    if max_lag > len / 2 {
        return Err(Error::InvalidParameter(format!(
            "max lag {max_lag} exceeds half the window ({})",
            len / 2
        )));
    }
    Ok(())
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Periodic lag products averaged over positions of `lines`, after removing
/// `mean`.
fn line_lag_products(lines: &[&[f64]], mean: f64, max_lag: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut count = 0usize;
    for line in lines {
        let n = line.len();
        for (lag, o) in out.iter_mut().enumerate().take(max_lag + 1) {
            let mut acc = 0.0;
            for i in 0..n {
                acc += (line[(i + lag) % n] - mean) * (line[i] - mean);
            }
            *o += acc / n as f64;
        }
        count += 1;
    }
    out.iter_mut().for_each(|v| *v /= count as f64);
}

fn finish(per_real: Vec<Vec<f64>>, dx: f64, max_lag: usize) -> CovarianceEstimate {
    let mut values = Vec::with_capacity(max_lag + 1);
    let mut stderr = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let s: Vec<f64> = per_real.iter().map(|r| r[lag]).collect();
        let (m, e) = mean_and_stderr(&s);
        values.push(m);
        stderr.push(e);
    }
    CovarianceEstimate {
        dx,
        values,
        stderr,
        realizations: per_real.len(),
    }
}

/// Lag covariance of periodic real series, one per realization, averaged over
/// positions. The grand ensemble mean is removed first.
pub fn estimate_covariance(fields: &[&[f64]], dx: f64, max_lag: usize) -> Result<CovarianceEstimate> {
    let len = fields.first().map_or(0, |f| f.len());
    check(fields.len(), len, max_lag)?;
    if fields.iter().any(|f| f.len() != len) {
        return Err(Error::InvalidParameter("realizations differ in length".into()));
    }
    let total: f64 = fields.iter().flat_map(|f| f.iter()).sum();
    let mean = total / (len * fields.len()) as f64;
    let per_real = fields
        .iter()
        .map(|f| {
            let mut out = vec![0.0; max_lag + 1];
            line_lag_products(&[f], mean, max_lag, &mut out);
            out
        })
        .collect();
    Ok(finish(per_real, dx, max_lag))
}

/// Lag covariance of 2D periodic fields along `axis` (0 = rows index `z`,
/// 1 = columns index `x`), treating every line along that axis as a sample.
pub fn estimate_covariance_2d(
    fields: &[Array2<f64>],
    axis: usize,
    step: f64,
    max_lag: usize,
) -> Result<CovarianceEstimate> {
    if axis > 1 {
        return Err(Error::InvalidParameter(format!("axis must be 0 or 1, got {axis}")));
    }
    let shape = fields.first().map_or((0, 0), |f| f.dim());
    let len = if axis == 0 { shape.0 } else { shape.1 };
    check(fields.len(), len, max_lag)?;
    if fields.iter().any(|f| f.dim() != shape) {
        return Err(Error::InvalidParameter("realizations differ in shape".into()));
    }
    let total: f64 = fields.iter().map(|f| f.sum()).sum();
    let mean = total / (shape.0 * shape.1 * fields.len()) as f64;
    let per_real = fields
        .iter()
        .map(|f| {
            let lines: Vec<Vec<f64>> = f.lanes(Axis(axis)).into_iter().map(|l| l.to_vec()).collect();
            let refs: Vec<&[f64]> = lines.iter().map(|l| l.as_slice()).collect();
            let mut out = vec![0.0; max_lag + 1];
            line_lag_products(&refs, mean, max_lag, &mut out);
            out
        })
        .collect();
    Ok(finish(per_real, step, max_lag))
}

/// Field correlation `<f(x + lag) conj f(x)>` of periodic complex series.
pub fn estimate_field_correlation(
    fields: &[&[Complex64]],
    dx: f64,
    max_lag: usize,
) -> Result<CorrelationEstimate> {
    let len = fields.first().map_or(0, |f| f.len());
    check(fields.len(), len, max_lag)?;
    if fields.iter().any(|f| f.len() != len) {
        return Err(Error::InvalidParameter("realizations differ in length".into()));
    }
    let per_real: Vec<Vec<Complex64>> = fields
        .iter()
        .map(|f| {
            (0..=max_lag)
                .map(|lag| (0..len).map(|i| f[(i + lag) % len] * f[i].conj()).sum::<Complex64>() / len as f64)
                .collect()
        })
        .collect();
    let n = per_real.len() as f64;
    let mut values = Vec::with_capacity(max_lag + 1);
    let mut stderr_re = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let mean = per_real.iter().map(|r| r[lag]).sum::<Complex64>() / n;
        let re: Vec<f64> = per_real.iter().map(|r| r[lag].re).collect();
        values.push(mean);
        stderr_re.push(mean_and_stderr(&re).1);
    }
    Ok(CorrelationEstimate {
        dx,
        values,
        stderr_re,
        realizations: per_real.len(),
    })
}
