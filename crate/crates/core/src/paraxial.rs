//! Split-step spectral integrator for `i dz psi = -alpha dxx psi + V(z, x) psi`
//! in wavelength units.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{wavenumbers, Fft1};
use crate::random_fields::{PotentialField, RowEvaluator, RowKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseGrid {
    pub n: usize,
    pub dx: f64,
}

impl TransverseGrid {
    /// `n` must be a power of two and `dx <= 1/2` (cutoff at least `2 pi`).
    pub fn new(n: usize, dx: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("N = {n} must be a power of two >= 2")));
        }
        if !(dx > 0.0 && dx <= 0.5) {
            return Err(Error::OutOfRange {
                what: "dx",
                value: dx,
                min: 0.0,
                max: 0.5,
            });
        }
        Ok(Self { n, dx })
    }

    pub fn window(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        wavenumbers(self.n, self.dx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveState {
    pub psi: Vec<Complex64>,
    pub z: f64,
}

impl WaveState {
    pub fn new(psi: Vec<Complex64>) -> Self {
        Self { psi, z: 0.0 }
    }

    pub fn plane_wave(grid: &TransverseGrid) -> Self {
        Self::new(vec![Complex64::new(1.0, 0.0); grid.n])
    }

    /// `sum |psi|^2 dx`.
    pub fn norm(&self, dx: f64) -> f64 {
        self.psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx
    }
}

pub fn intensity(state: &WaveState) -> Vec<f64> {
    state.psi.iter().map(|v| v.norm_sqr()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    Lie,
    Strang,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    /// Signed step; negative steps propagate backwards.
    pub dz: f64,
    pub splitting: Splitting,
    /// Distances at which states are recorded, monotone in the direction of
    /// `dz`. Each interval must be a whole number of steps.
    pub outputs: Vec<f64>,
}

impl StepPlan {
    pub fn default_dz(ell_c: f64) -> f64 {
        (ell_c / 8.0).min(2.0)
    }

    pub fn strang(dz: f64, outputs: Vec<f64>) -> Self {
        Self {
            dz,
            splitting: Splitting::Strang,
            outputs,
        }
    }

    /// Step counts between the start and each output.
    fn step_counts(&self, z0: f64) -> Result<Vec<usize>> {
        if !(self.dz.is_finite() && self.dz != 0.0) {
            return Err(Error::InvalidParameter(format!("dz = {} must be finite and non-zero", self.dz)));
        }
        let mut prev = z0;
        let mut total = 0usize;
        let mut counts = Vec::with_capacity(self.outputs.len());
        for &z in &self.outputs {
            let steps = (z - prev) / self.dz;
            let rounded = steps.round();
            if rounded < 0.0 || (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
                return Err(Error::InvalidParameter(format!(
                    "output z = {z} is not a whole number of steps dz = {} past {prev}",
                    self.dz
                )));
            }
            total += rounded as usize;
            counts.push(total);
            prev = z;
        }
        Ok(counts)
    }
}

/// Supplies `V(z, .)` on the transverse grid.
pub trait PotentialSampler {
    fn sample(&mut self, z: f64, out: &mut [f64]) -> Result<()>;

    /// Correlation length of the medium, used to bound the step; `None` for
    /// deterministic test potentials.
    fn ell_c(&self) -> Option<f64> {
        None
    }

    /// Checks that the transverse sampling matches `grid`.
    fn check_grid(&self, _grid: &TransverseGrid) -> Result<()> {
        Ok(())
    }
}

pub struct FreeSpace;

impl PotentialSampler for FreeSpace {
    fn sample(&mut self, _z: f64, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }
}

/// `V(z, x)` given by a closure, evaluated at `x_i = i dx`.
pub struct FnPotential<F> {
    pub dx: f64,
    pub f: F,
}

impl<F: FnMut(f64, f64) -> f64> PotentialSampler for FnPotential<F> {
    fn sample(&mut self, z: f64, out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.f)(z, i as f64 * self.dx);
        }
        Ok(())
    }
}

/// Rows of a synthesized medium. Rows must sit at the step midpoints.
pub struct FieldPotential<'a> {
    field: &'a PotentialField,
    rows: RowEvaluator<'a>,
}

impl<'a> FieldPotential<'a> {
    pub fn new(field: &'a PotentialField) -> Self {
        Self {
            field,
            rows: field.rows(),
        }
    }
}

impl PotentialSampler for FieldPotential<'_> {
    fn sample(&mut self, z: f64, out: &mut [f64]) -> Result<()> {
        let g = self.field.grid();
        let pos = (z - g.z_offset) / g.dz;
        let m = pos.round();
        if (pos - m).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "no potential row registered at z = {z} (rows at {} + m {})",
                g.z_offset, g.dz
            )));
        }
        if m < 0.0 || m as usize >= g.nz {
            return Err(Error::OutOfRange {
                what: "z",
                value: z,
                min: g.z_offset,
                max: g.z_offset + (g.nz - 1) as f64 * g.dz,
            });
        }
        self.rows.fill(m as usize, RowKind::Potential, out);
        Ok(())
    }

    fn ell_c(&self) -> Option<f64> {
        Some(self.field.ell_c())
    }

    fn check_grid(&self, grid: &TransverseGrid) -> Result<()> {
        let g = self.field.grid();
        if g.nx != grid.n || (g.dx - grid.dx).abs() > 1e-12 * grid.dx {
            return Err(Error::InvalidParameter(format!(
                "potential x-axis ({} x {}) differs from the wave grid ({} x {})",
                g.nx, g.dx, grid.n, grid.dx
            )));
        }
        Ok(())
    }
}

/// Raised-cosine damping strip of width `width` at both window edges, applied
/// once per step. Peak per-step attenuation is `strength`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Absorber {
    pub width: f64,
    pub strength: f64,
}

impl Absorber {
    fn mask(&self, grid: &TransverseGrid) -> Vec<f64> {
        let l = grid.window();
        (0..grid.n)
            .map(|i| {
                let x = grid.x(i);
                let d = x.min(l - x);
                if d < self.width {
                    1.0 - self.strength * 0.5 * (1.0 + (std::f64::consts::PI * d / self.width).cos())
                } else {
                    1.0
                }
            })
            .collect()
    }
}

pub struct Propagator {
    grid: TransverseGrid,
    alpha: f64,
    fft: Fft1,
    k2: Vec<f64>,
    absorber: Option<Vec<f64>>,
}

impl Propagator {
    pub fn new(grid: TransverseGrid, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let k2 = grid.wavenumbers().iter().map(|k| k * k).collect();
        Ok(Self {
            grid,
            alpha,
            fft: Fft1::new(grid.n),
            k2,
            absorber: None,
        })
    }

    pub fn with_absorber(mut self, absorber: Absorber) -> Self {
        self.absorber = Some(absorber.mask(&self.grid));
        self
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    /// Propagates through `plan`, calling `on_output` with the state at each
    /// scheduled distance. Returns the final state.
    pub fn run(
        &mut self,
        initial: WaveState,
        potential: &mut dyn PotentialSampler,
        plan: &StepPlan,
        mut on_output: impl FnMut(&WaveState) -> Result<()>,
    ) -> Result<WaveState> {
        let mut out = self.run_batch(vec![initial], potential, plan, |states| on_output(&states[0]))?;
        Ok(out.pop().expect("one state"))
    }

    /// Propagates several states through the same medium, sampling each
    /// potential row once per step. All states must start at the same `z`.
    pub fn run_batch(
        &mut self,
        initial: Vec<WaveState>,
        potential: &mut dyn PotentialSampler,
        plan: &StepPlan,
        mut on_output: impl FnMut(&[WaveState]) -> Result<()>,
    ) -> Result<Vec<WaveState>> {
        let Some(first) = initial.first() else {
            return Err(Error::InvalidParameter("no states to propagate".into()));
        };
        let z0 = first.z;
        for s in &initial {
            if s.psi.len() != self.grid.n {
                return Err(Error::InvalidParameter(format!(
                    "state has {} points, grid has {}",
                    s.psi.len(),
                    self.grid.n
                )));
            }
            if s.z != z0 {
                return Err(Error::InvalidParameter("batched states must share z".into()));
            }
        }
        potential.check_grid(&self.grid)?;
        if let Some(lc) = potential.ell_c() {
            if plan.dz.abs() > lc / 8.0 * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "|dz| = {} exceeds ell_c/8 = {}",
                    plan.dz.abs(),
                    lc / 8.0
                )));
            }
        }
        let counts = plan.step_counts(z0)?;
        let dz = plan.dz;
        let n = self.grid.n;
        let kinetic: Vec<Complex64> = self
            .k2
            .iter()
            .map(|k2| Complex64::from_polar(1.0, -self.alpha * k2 * dz))
            .collect();
        let (vfrac, strang) = match plan.splitting {
            Splitting::Strang => (0.5, true),
            Splitting::Lie => (1.0, false),
        };
        let mut v = vec![0.0; n];
        let mut phase = vec![Complex64::new(0.0, 0.0); n];
        let mut states = initial;
        let mut step = 0usize;
        for &target in &counts {
            while step < target {
                let zs = z0 + step as f64 * dz;
                potential.sample(zs + 0.5 * dz, &mut v)?;
                for (p, vi) in phase.iter_mut().zip(&v) {
                    *p = Complex64::from_polar(1.0, -vi * vfrac * dz);
                }
                step += 1;
                let z = z0 + step as f64 * dz;
                for state in states.iter_mut() {
                    let psi = &mut state.psi;
                    psi.iter_mut().zip(&phase).for_each(|(a, p)| *a *= p);
                    self.fft.forward(psi);
                    psi.iter_mut().zip(&kinetic).for_each(|(a, k)| *a *= k);
                    self.fft.inverse(psi);
                    if strang {
                        psi.iter_mut().zip(&phase).for_each(|(a, p)| *a *= p);
                    }
                    if let Some(mask) = &self.absorber {
                        psi.iter_mut().zip(mask).for_each(|(a, m)| *a *= m);
                    }
                    state.z = z;
                    let norm: f64 = state.psi.iter().map(|a| a.norm_sqr()).sum();
                    if !norm.is_finite() {
                        return Err(Error::NumericalFailure {
                            step,
                            z,
                            detail: "non-finite field".into(),
                        });
                    }
                }
            }
            on_output(&states)?;
        }
        Ok(states)
    }
}

/// States at each scheduled distance of `plan`.
pub fn propagate(
    initial: WaveState,
    grid: TransverseGrid,
    alpha: f64,
    potential: &mut dyn PotentialSampler,
    plan: &StepPlan,
) -> Result<Vec<WaveState>> {
    let mut out = Vec::with_capacity(plan.outputs.len());
    Propagator::new(grid, alpha)?.run(initial, potential, plan, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// `|psi|^2` of each state as rows of a `z x x` array, keeping every
/// `stride`-th transverse point.
pub fn intensity_map(states: &[WaveState], stride: usize) -> Array2<f64> {
    let stride = stride.max(1);
    let n = states.first().map_or(0, |s| s.psi.len().div_ceil(stride));
    let mut out = Array2::zeros((states.len(), n));
    for (r, s) in states.iter().enumerate() {
        for (c, v) in s.psi.iter().step_by(stride).enumerate() {
            out[[r, c]] = v.norm_sqr();
        }
    }
    out
}
