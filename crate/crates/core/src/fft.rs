//! Thin wrappers over `rustfft` with the normalization used throughout the
//! crate: forward transforms are unnormalized, inverse transforms divide by
//! the length so that `inverse(forward(x)) == x`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Angular wavenumbers of a periodic grid of `n` points with spacing `d`,
/// in the standard FFT ordering (non-negative frequencies first).
pub fn wavenumbers(n: usize, d: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * d);
    (0..n)
        .map(|i| {
            let m = if i <= (n - 1) / 2 { i as i64 } else { i as i64 - n as i64 };
            m as f64 * dk
        })
        .collect()
}

/// Signed mode index of FFT slot `i` on an `n`-point grid.
pub fn mode_index(i: usize, n: usize) -> i64 {
    if i <= (n - 1) / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// FFT slot of signed mode `m` on an `n`-point grid.
pub fn slot_of_mode(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

#[derive(Clone)]
pub struct Fft1 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft1 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Self {
            n,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len() % self.n, 0);
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    /// Normalized inverse transform. `buf` may hold several consecutive
    /// transforms of length `n`.
    pub fn inverse(&mut self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len() % self.n, 0);
        self.inv.process_with_scratch(buf, &mut self.scratch);
        let s = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= s;
        }
    }

    /// Inverse transform without the `1/n` factor.
    pub fn inverse_unnormalized(&mut self, buf: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
    }
}

/// Row-major 2D transform of an `nx x ny` array (`ny` contiguous).
pub struct Fft2 {
    nx: usize,
    ny: usize,
    rows: Fft1,
    cols: Fft1,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            rows: Fft1::new(ny),
            cols: Fft1::new(nx),
            transposed: vec![Complex64::new(0.0, 0.0); nx * ny],
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.nx * self.ny);
        self.rows.forward(data);
        transpose(data, &mut self.transposed, self.nx, self.ny);
        self.cols.forward(&mut self.transposed);
        transpose(&self.transposed, data, self.ny, self.nx);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.nx * self.ny);
        self.rows.inverse(data);
        transpose(data, &mut self.transposed, self.nx, self.ny);
        self.cols.inverse(&mut self.transposed);
        transpose(&self.transposed, data, self.ny, self.nx);
    }

    /// Transform along the contiguous axis only.
    pub fn forward_rows(&mut self, data: &mut [Complex64]) {
        self.rows.forward(data);
    }
}

/// Out-of-place transpose of a `rows x cols` row-major block.
pub fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const B: usize = 32;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Evaluates the trigonometric interpolant of periodic samples `values`
/// (spacing `d`, first sample at `origin`) at position `x`.
pub struct TrigInterpolant {
    coeffs: Vec<Complex64>,
    k: Vec<f64>,
    origin: f64,
    n: usize,
}

impl TrigInterpolant {
    pub fn new(values: &[Complex64], d: f64, origin: f64) -> Self {
        let n = values.len();
        let mut coeffs = values.to_vec();
        let mut fft = Fft1::new(n);
        fft.forward(&mut coeffs);
        let k = wavenumbers(n, d);
        let s = 1.0 / n as f64;
        for c in coeffs.iter_mut() {
            *c *= s;
        }
        // Split the Nyquist mode evenly so real data interpolates to real values.
        let mut k = k;
        if n % 2 == 0 {
            let nyq = n / 2;
            k[nyq] = k[nyq].abs();
            coeffs[nyq] *= 0.5;
            coeffs.push(coeffs[nyq]);
            k.push(-k[nyq]);
        }
        Self {
            coeffs,
            k,
            origin,
            n,
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        let t = x - self.origin;
        self.coeffs
            .iter()
            .zip(&self.k)
            .map(|(c, k)| c * Complex64::from_polar(1.0, k * t))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}
