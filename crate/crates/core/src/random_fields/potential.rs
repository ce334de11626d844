//! Spectral synthesis of the Gaussian random potential `V(z, x)`.
//!
//! The field is a band-limited trigonometric polynomial on the periodic
//! `(z, x)` box. White noise is drawn directly in the spectral domain with
//! Hermitian symmetry, filtered by the square root of the power spectrum
//! `pi sigma2 ell_c^2 exp(-|k|^2 ell_c^2 / 4)`, and transformed back along `z`
//! once per realization. Rows `V(z_m, .)` are then produced on demand by one
//! inverse transform along `x`, so a propagation never needs the whole grid in
//! memory; [`PotentialField::materialize`] builds the full array when wanted.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::stream::RngStream;
use crate::correlation::MediumCorrelation;
use crate::error::{Error, Result};
use crate::fft::{slot_of_mode, Fft1};

/// Modes with `|k| ell_c` above this carry less than `exp(-42)` of the spectrum.
const BAND_CUTOFF: f64 = 13.0;

/// Sampling of the potential: rows at `z_m = z_offset + m dz`, columns at
/// `x_n = n dx`. Periodic with periods `nz dz` and `nx dx`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialGrid {
    pub nx: usize,
    pub dx: f64,
    pub nz: usize,
    pub dz: f64,
    pub z_offset: f64,
}

impl PotentialGrid {
    /// Rows registered at the midpoints of integration steps of size `dz`.
    pub fn midpoint(nx: usize, dx: f64, nz: usize, dz: f64) -> Self {
        Self {
            nx,
            dx,
            nz,
            dz,
            z_offset: 0.5 * dz,
        }
    }

    pub fn window_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn period_z(&self) -> f64 {
        self.nz as f64 * self.dz
    }

    /// Largest `z` (exclusive) reachable without wrapping past the period.
    pub fn z_end(&self) -> f64 {
        self.z_offset - 0.5 * self.dz + self.period_z()
    }

    pub fn validate(&self, medium: &MediumCorrelation) -> Result<()> {
        let lc = medium.ell_c;
        if self.nx < 2 || self.nz < 2 {
            return Err(Error::GridTooSmall("need at least 2 points per axis".into()));
        }
        if !(self.dx > 0.0 && self.dz > 0.0) {
            return Err(Error::InvalidParameter("grid steps must be positive".into()));
        }
        if self.window_x() < 8.0 * lc || self.period_z() < 8.0 * lc {
            return Err(Error::GridTooSmall(format!(
                "extents ({:.1}, {:.1}) must be >= 8 ell_c = {:.1} to avoid aliased covariance",
                self.period_z(),
                self.window_x(),
                8.0 * lc
            )));
        }
        if self.dx > lc / 4.0 || self.dz > lc / 4.0 {
            return Err(Error::GridTooSmall(format!(
                "steps (dz={}, dx={}) must be <= ell_c/4 = {}",
                self.dz,
                self.dx,
                lc / 4.0
            )));
        }
        Ok(())
    }
}

/// One realization of the potential, stored as its `z`-transformed spectral
/// band.
#[derive(Clone, Debug)]
pub struct PotentialField {
    grid: PotentialGrid,
    seed: RngStream,
    /// Signed `x` mode indices present in the band.
    modes_x: Vec<i64>,
    /// `columns[b * nz + m]` = sum over `kz` of the filtered noise for mode
    /// `modes_x[b]`, evaluated at row `m`.
    columns: Vec<Complex64>,
    sigma2: f64,
    ell_c: f64,
}

pub fn synthesize_potential(
    grid: PotentialGrid,
    medium: &MediumCorrelation,
    stream: RngStream,
) -> Result<PotentialField> {
    if !medium.is_gaussian() {
        return Err(Error::Unsupported(
            "potential synthesis requires the Gaussian covariance model".into(),
        ));
    }
    grid.validate(medium)?;
    let lc = medium.ell_c;
    let lx = grid.window_x();
    let lz = grid.period_z();
    let max_x = ((BAND_CUTOFF / lc * lx / (2.0 * PI)).ceil() as i64).min((grid.nx as i64 - 1) / 2);
    let max_z = ((BAND_CUTOFF / lc * lz / (2.0 * PI)).ceil() as i64).min((grid.nz as i64 - 1) / 2);
    let wx = (2 * max_x + 1) as usize;
    let wz = (2 * max_z + 1) as usize;

    // Complex white noise, E|xi|^2 = 1, drawn in a fixed (mx, mz) order.
    let mut rng = stream.rng();
    let mut xi = vec![Complex64::new(0.0, 0.0); wx * wz];
    for v in xi.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    }
    let at = |mx: i64, mz: i64| ((mx + max_x) as usize) * wz + (mz + max_z) as usize;

    let norm = 1.0 / (lx * lz);
    let dkx = 2.0 * PI / lx;
    let dkz = 2.0 * PI / lz;
    let mut fft_z = Fft1::new(grid.nz);
    let mut columns = vec![Complex64::new(0.0, 0.0); wx * grid.nz];
    let modes_x: Vec<i64> = (-max_x..=max_x).collect();
    for (b, &mx) in modes_x.iter().enumerate() {
        let col = &mut columns[b * grid.nz..(b + 1) * grid.nz];
        let kx = mx as f64 * dkx;
        for mz in -max_z..=max_z {
            let kz = mz as f64 * dkz;
            let k2 = (kx * kx + kz * kz) * lc * lc;
            let spectrum = PI * medium.sigma2 * lc * lc * (-k2 / 4.0).exp();
            let amp = (spectrum * norm).sqrt();
            // Hermitian white noise: eta(-k) = conj(eta(k)).
            let eta = if mx == 0 && mz == 0 {
                Complex64::new(xi[at(0, 0)].re * std::f64::consts::SQRT_2, 0.0)
            } else {
                (xi[at(mx, mz)] + xi[at(-mx, -mz)].conj()) * std::f64::consts::FRAC_1_SQRT_2
            };
            let shift = Complex64::from_polar(1.0, kz * grid.z_offset);
            col[slot_of_mode(mz, grid.nz)] = amp * eta * shift;
        }
        fft_z.inverse_unnormalized(col);
    }

    Ok(PotentialField {
        grid,
        seed: stream,
        modes_x,
        columns,
        sigma2: medium.sigma2,
        ell_c: lc,
    })
}

/// Which row quantity to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Potential,
    /// `d V / d x`.
    Gradient,
    /// `d^2 V / d x^2`.
    Curvature,
}

impl PotentialField {
    pub fn grid(&self) -> &PotentialGrid {
        &self.grid
    }

    pub fn seed(&self) -> RngStream {
        self.seed
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn ell_c(&self) -> f64 {
        self.ell_c
    }

    pub fn band_width(&self) -> usize {
        self.modes_x.len()
    }

    /// Workspace for evaluating rows; one per thread.
    pub fn rows(&self) -> RowEvaluator<'_> {
        RowEvaluator {
            field: self,
            fft: Fft1::new(self.grid.nx),
            buf: vec![Complex64::new(0.0, 0.0); self.grid.nx],
        }
    }

    /// Full `nz x nx` array.
    pub fn materialize(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.grid.nz, self.grid.nx));
        let mut rows = self.rows();
        for (m, mut row) in out.outer_iter_mut().enumerate() {
            rows.fill(m, RowKind::Potential, row.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

pub struct RowEvaluator<'a> {
    field: &'a PotentialField,
    fft: Fft1,
    buf: Vec<Complex64>,
}

impl RowEvaluator<'_> {
    fn spectral_row(&mut self, m: usize, kind: RowKind) {
        let g = &self.field.grid;
        let nz = g.nz;
        let dkx = 2.0 * PI / g.window_x();
        self.buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (b, &mx) in self.field.modes_x.iter().enumerate() {
            let kx = mx as f64 * dkx;
            let c = self.field.columns[b * nz + m];
            let factor = match kind {
                RowKind::Potential => Complex64::new(1.0, 0.0),
                RowKind::Gradient => Complex64::new(0.0, kx),
                RowKind::Curvature => Complex64::new(-kx * kx, 0.0),
            };
            self.buf[slot_of_mode(mx, g.nx)] = c * factor;
        }
        self.fft.inverse_unnormalized(&mut self.buf);
    }

    /// Writes row `m` (modulo the period) of the requested quantity.
    pub fn fill(&mut self, m: usize, kind: RowKind, out: &mut [f64]) {
        let m = m % self.field.grid.nz;
        self.spectral_row(m, kind);
        for (o, v) in out.iter_mut().zip(&self.buf) {
            *o = v.re;
        }
    }

    /// Largest imaginary part of the synthesized row, relative to its largest
    /// real part. Zero up to rounding for a Hermitian spectrum.
    pub fn imaginary_residual(&mut self, m: usize) -> f64 {
        self.spectral_row(m % self.field.grid.nz, RowKind::Potential);
        let re = self.buf.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        let im = self.buf.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        im / re.max(f64::MIN_POSITIVE)
    }
}
