//! Characteristic rays `dX/dz = 2 alpha K`, `dK/dz = -dV/dx(z, X)` through a
//! synthesized medium, with diffusion-limit statistics and phase-space
//! histograms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::path::Path;

use ndarray::Array2;

use crate::correlation::{derived_scales, MediumCorrelation, SourceCoherence, SourceKind};
use crate::error::{Error, Result};
use crate::io::{write_array, ArrayHeader};
use crate::random_fields::{synthesize_potential, PotentialField, PotentialGrid, RngStream, RowKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayState {
    /// Position, not wrapped into the window.
    pub x: f64,
    pub k: f64,
    pub label_x: f64,
    pub label_k: f64,
}

impl RayState {
    pub fn launch(x: f64, k: f64) -> Self {
        Self {
            x,
            k,
            label_x: x,
            label_k: k,
        }
    }
}

/// Rays sharing one distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayBundle {
    pub rays: Vec<RayState>,
    pub z: f64,
}

impl RayBundle {
    pub fn new(rays: Vec<RayState>) -> Result<Self> {
        if rays.is_empty() {
            return Err(Error::InvalidParameter("a bundle needs at least one ray".into()));
        }
        Ok(Self { rays, z: 0.0 })
    }

    /// `nx` positions uniformly over `[0, window)` times `nk` wavenumbers
    /// uniformly over `[k_min, k_max]` (cell centres).
    pub fn label_grid(window: f64, nx: usize, k_min: f64, k_max: f64, nk: usize) -> Result<Self> {
        if nx == 0 || nk == 0 || !(k_max >= k_min) {
            return Err(Error::InvalidParameter("bad ray label grid".into()));
        }
        let dx = window / nx as f64;
        let dk = (k_max - k_min) / nk as f64;
        let mut rays = Vec::with_capacity(nx * nk);
        for i in 0..nx {
            for j in 0..nk {
                let k = if nk == 1 && k_max == k_min { k_min } else { k_min + (j as f64 + 0.5) * dk };
                rays.push(RayState::launch((i as f64 + 0.5) * dx, k));
            }
        }
        Self::new(rays)
    }

    /// Number of rays whose position has wrapped out of `[0, window)`.
    pub fn wrapped(&self, window: f64) -> usize {
        self.rays.iter().filter(|r| !(0.0..window).contains(&r.x)).count()
    }
}

/// `V`, `dV/dx` and `d2V/dx2` on a periodic `x` grid at the midpoint of every
/// integration step.
#[derive(Clone, Debug)]
pub struct RayMedium {
    nx: usize,
    dx: f64,
    dz: f64,
    ell_c: Option<f64>,
    /// Rows per step: `values[m * nx ..]`.
    v: Vec<f64>,
    grad: Vec<f64>,
    curv: Vec<f64>,
    steps: usize,
    /// A single row reused at every step.
    frozen: bool,
}

impl RayMedium {
    /// Rows of `field`, which must be registered at the midpoints of steps of
    /// its own `dz`.
    pub fn from_field(field: &PotentialField) -> Result<Self> {
        let g = *field.grid();
        if (g.z_offset - 0.5 * g.dz).abs() > 1e-9 * g.dz {
            return Err(Error::InvalidParameter("ray media need rows at step midpoints".into()));
        }
        let mut v = vec![0.0; g.nz * g.nx];
        let mut grad = vec![0.0; g.nz * g.nx];
        let mut curv = vec![0.0; g.nz * g.nx];
        let mut rows = field.rows();
        for m in 0..g.nz {
            let r = m * g.nx..(m + 1) * g.nx;
            rows.fill(m, RowKind::Potential, &mut v[r.clone()]);
            rows.fill(m, RowKind::Gradient, &mut grad[r.clone()]);
            rows.fill(m, RowKind::Curvature, &mut curv[r]);
        }
        Ok(Self {
            nx: g.nx,
            dx: g.dx,
            dz: g.dz,
            ell_c: Some(field.ell_c()),
            v,
            grad,
            curv,
            steps: g.nz,
            frozen: false,
        })
    }

    /// Row `m` of `field` held fixed for every step.
    pub fn frozen(field: &PotentialField, m: usize) -> Self {
        let g = *field.grid();
        let mut v = vec![0.0; g.nx];
        let mut grad = vec![0.0; g.nx];
        let mut curv = vec![0.0; g.nx];
        let mut rows = field.rows();
        rows.fill(m, RowKind::Potential, &mut v);
        rows.fill(m, RowKind::Gradient, &mut grad);
        rows.fill(m, RowKind::Curvature, &mut curv);
        Self {
            nx: g.nx,
            dx: g.dx,
            dz: g.dz,
            ell_c: Some(field.ell_c()),
            v,
            grad,
            curv,
            steps: usize::MAX,
            frozen: true,
        }
    }

    pub fn free(nx: usize, dx: f64, dz: f64) -> Self {
        Self {
            nx,
            dx,
            dz,
            ell_c: None,
            v: vec![0.0; nx],
            grad: vec![0.0; nx],
            curv: vec![0.0; nx],
            steps: usize::MAX,
            frozen: true,
        }
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn window(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn z_end(&self) -> f64 {
        if self.frozen {
            f64::INFINITY
        } else {
            self.steps as f64 * self.dz
        }
    }

    fn row(&self, m: usize) -> usize {
        if self.frozen {
            0
        } else {
            m * self.nx
        }
    }

    /// Cubic Hermite interpolation of `f` with derivative `df` on row `m`.
    fn hermite(&self, f: &[f64], df: &[f64], m: usize, x: f64) -> f64 {
        let base = self.row(m);
        let s = (x / self.dx).rem_euclid(self.nx as f64);
        let i = (s.floor() as usize).min(self.nx - 1);
        let t = s - i as f64;
        let j = (i + 1) % self.nx;
        let (f0, f1) = (f[base + i], f[base + j]);
        let (d0, d1) = (df[base + i] * self.dx, df[base + j] * self.dx);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0 + (t3 - 2.0 * t2 + t) * d0 + (-2.0 * t3 + 3.0 * t2) * f1 + (t3 - t2) * d1
    }

    /// Derivative in `x` of the interpolant used by [`force`](Self::force).
    pub fn force_derivative(&self, m: usize, x: f64) -> f64 {
        let base = self.row(m);
        let s = (x / self.dx).rem_euclid(self.nx as f64);
        let i = (s.floor() as usize).min(self.nx - 1);
        let t = s - i as f64;
        let j = (i + 1) % self.nx;
        let (f0, f1) = (self.grad[base + i], self.grad[base + j]);
        let (d0, d1) = (self.curv[base + i] * self.dx, self.curv[base + j] * self.dx);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * (f0 - f1) + (3.0 * t2 - 4.0 * t + 1.0) * d0 + (3.0 * t2 - 2.0 * t) * d1) / self.dx
    }

    /// `dV/dx` at step `m`'s midpoint.
    pub fn force(&self, m: usize, x: f64) -> f64 {
        self.hermite(&self.grad, &self.curv, m, x)
    }

    /// `V` at step `m`'s midpoint.
    pub fn potential(&self, m: usize, x: f64) -> f64 {
        self.hermite(&self.v, &self.grad, m, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySettings {
    pub alpha: f64,
    /// Signed step; must match the medium's row spacing in magnitude.
    pub dz: f64,
}

/// Default step `ell_c / 20`.
pub fn default_ray_dz(ell_c: f64) -> f64 {
    ell_c / 20.0
}

/// Potential grid for rays: `x` spacing `ell_c / 8` (cubic interpolation of
/// the spectral gradient is accurate there), rows at the midpoints of steps of
/// `dz`, enough rows to reach `z_max`.
pub fn ray_potential_grid(ell_c: f64, window: f64, z_max: f64, dz: f64) -> Result<PotentialGrid> {
    if !(ell_c > 0.0 && window > 0.0 && z_max >= 0.0 && dz > 0.0) {
        return Err(Error::InvalidParameter("bad ray grid parameters".into()));
    }
    let dx0 = ell_c / 8.0;
    let nx = ((window / dx0).ceil() as usize).max(2);
    let nx = nx + nx % 2;
    let nz = ((z_max / dz - 1e-9).ceil() as usize).max(1);
    Ok(PotentialGrid::midpoint(nx, window / nx as f64, nz, dz))
}

const CHUNK: usize = 1024;

/// Advances `bundle` to each distance in `outputs` (monotone in the direction
/// of `dz`) with drift-kick-drift leapfrog, calling `on_output` at each.
pub fn trace_rays(
    bundle: &mut RayBundle,
    medium: &RayMedium,
    settings: &RaySettings,
    outputs: &[f64],
    mut on_output: impl FnMut(&RayBundle) -> Result<()>,
) -> Result<()> {
    let dz = settings.dz;
    if !(dz.is_finite() && dz != 0.0) {
        return Err(Error::InvalidParameter(format!("ray step must be non-zero, got {dz}")));
    }
    if let Some(lc) = medium.ell_c {
        if dz.abs() > lc / 10.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "ray step {} exceeds ell_c/10 = {}; the gradient would be under-resolved",
                dz.abs(),
                lc / 10.0
            )));
        }
    }
    if (dz.abs() - medium.dz).abs() > 1e-9 * medium.dz {
        return Err(Error::InvalidParameter(format!(
            "ray step {} differs from the medium row spacing {}",
            dz.abs(),
            medium.dz
        )));
    }
    let alpha = settings.alpha;
    for &target in outputs {
        let n = (target - bundle.z) / dz;
        let steps = n.round();
        if steps < 0.0 || (n - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "output z = {target} is not a whole number of steps from z = {}",
                bundle.z
            )));
        }
        let steps = steps as usize;
        // Index of the first step's midpoint row.
        let start = bundle.z / medium.dz;
        let start_row = start.round() as i64;
        let end = target.max(bundle.z);
        if end > medium.z_end() * (1.0 + 1e-12) + 1e-9 || target.min(bundle.z) < -1e-9 {
            return Err(Error::OutOfRange {
                what: "z",
                value: target,
                min: 0.0,
                max: medium.z_end(),
            });
        }
        bundle.rays.par_chunks_mut(CHUNK).for_each(|chunk| {
            for r in chunk.iter_mut() {
                for s in 0..steps {
                    let m = if dz > 0 as f64 {
                        (start_row + s as i64) as usize
                    } else {
                        (start_row - 1 - s as i64) as usize
                    };
                    r.x += alpha * r.k * dz;
                    r.k -= dz * medium.force(m, r.x);
                    r.x += alpha * r.k * dz;
                }
            }
        });
        bundle.z = target;
        if bundle.rays.iter().any(|r| !(r.x.is_finite() && r.k.is_finite())) {
            return Err(Error::NumericalFailure {
                step: steps,
                z: target,
                detail: "non-finite ray state".into(),
            });
        }
        on_output(bundle)?;
    }
    Ok(())
}

/// Jacobian `d(X, K)/d(x, k)` as `[[dX/dx, dX/dk], [dK/dx, dK/dk]]`.
pub type Jacobian = [[f64; 2]; 2];

pub fn determinant(j: &Jacobian) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Jacobians by central differences over a `2 x 2` label stencil
/// `(x +- hx, k)`, `(x, k +- hk)` around each label.
pub fn jacobian_finite_difference(
    labels: &[(f64, f64)],
    medium: &RayMedium,
    settings: &RaySettings,
    z: f64,
    hx: f64,
    hk: f64,
) -> Result<Vec<Jacobian>> {
    let mut rays = Vec::with_capacity(labels.len() * 4);
    for &(x, k) in labels {
        rays.push(RayState::launch(x + hx, k));
        rays.push(RayState::launch(x - hx, k));
        rays.push(RayState::launch(x, k + hk));
        rays.push(RayState::launch(x, k - hk));
    }
    let mut bundle = RayBundle::new(rays)?;
    trace_rays(&mut bundle, medium, settings, &[z], |_| Ok(()))?;
    Ok(bundle
        .rays
        .chunks_exact(4)
        .map(|c| {
            [
                [(c[0].x - c[1].x) / (2.0 * hx), (c[2].x - c[3].x) / (2.0 * hk)],
                [(c[0].k - c[1].k) / (2.0 * hx), (c[2].k - c[3].k) / (2.0 * hk)],
            ]
        })
        .collect())
}

/// Jacobians from the tangent map of the discrete integrator: the `h -> 0`
/// limit of [`jacobian_finite_difference`] without its cancellation, which
/// dominates once the entries grow past `1/sqrt(eps)` near caustics.
pub fn jacobian_tangent(
    labels: &[(f64, f64)],
    medium: &RayMedium,
    settings: &RaySettings,
    z: f64,
) -> Result<Vec<Jacobian>> {
    let rays: Vec<RayState> = labels.iter().map(|&(x, k)| RayState::launch(x, k)).collect();
    let mut bundle = RayBundle::new(rays)?;
    let dz = settings.dz;
    let n = z / dz;
    let steps = n.round();
    if !(dz.is_finite() && dz > 0.0) || steps < 0.0 || (n - steps).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::InvalidParameter(format!("z = {z} is not a whole number of steps of {dz}")));
    }
    // Validates the step and range; the states are recomputed below.
    trace_rays(&mut bundle, medium, settings, &[z], |_| Ok(()))?;
    let alpha = settings.alpha;
    let steps = steps as usize;
    Ok(labels
        .par_iter()
        .map(|&(x0, k0)| {
            let (mut x, mut k) = (x0, k0);
            // Columns: derivatives with respect to x and k.
            let mut t = [[1.0, 0.0], [0.0, 1.0]];
            for s in 0..steps {
                let m = s;
                x += alpha * k * dz;
                t[0][0] += alpha * t[1][0] * dz;
                t[0][1] += alpha * t[1][1] * dz;
                let fp = medium.force_derivative(m, x);
                k -= dz * medium.force(m, x);
                t[1][0] -= dz * fp * t[0][0];
                t[1][1] -= dz * fp * t[0][1];
                x += alpha * k * dz;
                t[0][0] += alpha * t[1][0] * dz;
                t[0][1] += alpha * t[1][1] * dz;
            }
            t
        })
        .collect())
}

/// Per-realization sums of ray displacements at one distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Sums {
    n: f64,
    dk: f64,
    dx: f64,
    dk2: f64,
    dx2: f64,
    dxdk: f64,
}

/// Moments of `K - k` and `X - x - 2 alpha k z`, averaged over rays within a
/// realization and then over realizations; standard errors come from the
/// scatter between realizations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionAccumulator {
    /// `per_z[i][r]`: realization `r` at the `i`-th distance.
    zs: Vec<f64>,
    per_z: Vec<Vec<Sums>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMoments {
    pub z: f64,
    pub realizations: usize,
    pub rays: usize,
    pub mean_k: Estimate,
    pub var_k: Estimate,
    pub mean_x: Estimate,
    pub var_x: Estimate,
    pub cov_xk: Estimate,
    pub corr_xk: Estimate,
}

/// Closed-form moments of the diffusion limit for comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPrediction {
    pub z: f64,
    pub var_k: f64,
    /// `(4/3) alpha^2 Gamma(0) z^3`, from `X = x + 2 alpha int K`.
    pub var_x: f64,
    /// `Gamma(0) z^3 (alpha^2 + 1/3)`, the marginal implied by a conditional
    /// spread without the `alpha^2` factor.
    pub var_x_literal: f64,
    pub cov_xk: f64,
    pub corr_xk: f64,
}

pub fn diffusion_prediction(gamma0: f64, alpha: f64, z: f64) -> DiffusionPrediction {
    DiffusionPrediction {
        z,
        var_k: gamma0 * z,
        var_x: 4.0 / 3.0 * alpha * alpha * gamma0 * z.powi(3),
        var_x_literal: gamma0 * z.powi(3) * (alpha * alpha + 1.0 / 3.0),
        cov_xk: alpha * gamma0 * z * z,
        corr_xk: 3f64.sqrt() / 2.0,
    }
}

impl DiffusionAccumulator {
    /// Adds one realization's bundle at distance `bundle.z`.
    pub fn add(&mut self, bundle: &RayBundle, alpha: f64, realization: usize) {
        let z = bundle.z;
        let idx = match self.zs.iter().position(|v| (v - z).abs() < 1e-9) {
            Some(i) => i,
            None => {
                self.zs.push(z);
                self.per_z.push(Vec::new());
                self.zs.len() - 1
            }
        };
        let list = &mut self.per_z[idx];
        if list.len() <= realization {
            list.resize(realization + 1, Sums::default());
        }
        let s = &mut list[realization];
        for r in &bundle.rays {
            let dk = r.k - r.label_k;
            let dx = r.x - r.label_x - 2.0 * alpha * r.label_k * z;
            s.n += 1.0;
            s.dk += dk;
            s.dx += dx;
            s.dk2 += dk * dk;
            s.dx2 += dx * dx;
            s.dxdk += dx * dk;
        }
    }

    /// Concatenates realizations of `other` after those of `self`.
    pub fn merge(mut self, other: &DiffusionAccumulator) -> Self {
        for (z, list) in other.zs.iter().zip(&other.per_z) {
            match self.zs.iter().position(|v| (v - z).abs() < 1e-9) {
                Some(i) => self.per_z[i].extend_from_slice(list),
                None => {
                    self.zs.push(*z);
                    self.per_z.push(list.clone());
                }
            }
        }
        self
    }

    pub fn moments(&self) -> Vec<DiffusionMoments> {
        self.zs
            .iter()
            .zip(&self.per_z)
            .map(|(&z, list)| {
                let reals: Vec<&Sums> = list.iter().filter(|s| s.n > 0.0).collect();
                let per = |f: &dyn Fn(&Sums) -> f64| -> Vec<f64> { reals.iter().map(|s| f(s)).collect() };
                // Moments about the known zero mean of the displacements.
                let mk = per(&|s| s.dk / s.n);
                let mx = per(&|s| s.dx / s.n);
                let vk = per(&|s| s.dk2 / s.n);
                let vx = per(&|s| s.dx2 / s.n);
                let cxk = per(&|s| s.dxdk / s.n);
                let var_k = mean_se(&vk);
                let var_x = mean_se(&vx);
                let cov = mean_se(&cxk);
                // Ratio estimator with delta-method error.
                let corr_v = cov.value / (var_x.value * var_k.value).sqrt();
                let corr_samples: Vec<f64> = cxk
                    .iter()
                    .zip(vx.iter().zip(&vk))
                    .map(|(c, (a, b))| {
                        corr_v
                            * (c / cov.value - 0.5 * a / var_x.value - 0.5 * b / var_k.value)
                    })
                    .collect();
                let corr_se = mean_se(&corr_samples).stderr;
                DiffusionMoments {
                    z,
                    realizations: reals.len(),
                    rays: reals.iter().map(|s| s.n as usize).sum(),
                    mean_k: mean_se(&mk),
                    var_k,
                    mean_x: mean_se(&mx),
                    var_x,
                    cov_xk: cov,
                    corr_xk: Estimate {
                        value: corr_v,
                        stderr: corr_se,
                    },
                }
            })
            .collect()
    }
}

fn mean_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    if n == 0.0 {
        return Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let m = v.iter().sum::<f64>() / n;
    let var = if n > 1.0 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { f64::NAN };
    Estimate {
        value: m,
        stderr: (var / n).sqrt(),
    }
}

/// Normalized source spectrum `W_o(k)` with `int W_o dk = 1`.
pub fn source_spectrum_density(source: &SourceCoherence, k: f64) -> Result<f64> {
    match source.kind {
        SourceKind::GaussianSchell => {
            let rho = source.rho_o;
            Ok(rho / std::f64::consts::PI.sqrt() * (-(k * rho).powi(2)).exp())
        }
        _ => Err(Error::Unsupported(
            "ray histograms need a Gaussian-Schell source spectrum".into(),
        )),
    }
}

/// Weighted `(X, K)` histogram: each ray carries `W_o(k) dx dk`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceHistogram {
    pub nx: usize,
    pub nk: usize,
    pub window: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Row-major `nx x nk`.
    pub weights: Vec<f64>,
    pub total: f64,
    /// Weight of rays with `K` outside `[k_min, k_max)`.
    pub out_of_range: f64,
    /// Fraction of the source spectrum outside the launched `k` labels.
    pub label_tail_mass: f64,
}

impl PhaseSpaceHistogram {
    /// Sum over `K` per `X` bin, divided by the bin width.
    pub fn marginal_x(&self) -> Vec<f64> {
        let w = self.window / self.nx as f64;
        self.weights.chunks(self.nk).map(|r| r.iter().sum::<f64>() / w).collect()
    }

    /// Sum over `X` per `K` bin, divided by the window and bin width.
    pub fn marginal_k(&self) -> Vec<f64> {
        let dk = (self.k_max - self.k_min) / self.nk as f64;
        (0..self.nk)
            .map(|j| (0..self.nx).map(|i| self.weights[i * self.nk + j]).sum::<f64>() / (self.window * dk))
            .collect()
    }

    /// Flat binary weights plus a JSON header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let data = Array2::from_shape_vec((self.nx, self.nk), self.weights.clone())
            .map_err(|e| Error::Format(e.to_string()))?;
        let header = ArrayHeader {
            kind: "wigner_histogram".into(),
            shape: [self.nx, self.nk],
            steps: [self.window / self.nx as f64, (self.k_max - self.k_min) / self.nk as f64],
            origin: [0.0, self.k_min],
            dtype: "f64le".into(),
            seed: None,
        };
        write_array(path, &data, header)
    }
}

/// Bins rays of a bundle launched on a uniform `(x, k)` label grid with
/// spacings `(label_dx, label_dk)`. `source_spectrum` is `W_o(k)`;
/// `label_k_range` is the launched `k` interval, used to estimate how much
/// spectral weight the labels miss.
#[allow(clippy::too_many_arguments)]
pub fn wigner_histogram(
    bundle: &RayBundle,
    source_spectrum: &dyn Fn(f64) -> f64,
    label_dx: f64,
    label_dk: f64,
    label_k_range: (f64, f64),
    window: f64,
    bins: (usize, usize),
    k_range: (f64, f64),
) -> Result<PhaseSpaceHistogram> {
    let (nx, nk) = bins;
    let (k_min, k_max) = k_range;
    if nx == 0 || nk == 0 || !(k_max > k_min) || !(window > 0.0) {
        return Err(Error::InvalidParameter("bad histogram geometry".into()));
    }
    let mut weights = vec![0.0; nx * nk];
    let mut total = 0.0;
    let mut out = 0.0;
    let dk_bin = (k_max - k_min) / nk as f64;
    for r in &bundle.rays {
        let w = source_spectrum(r.label_k) * label_dx * label_dk;
        total += w;
        let kb = (r.k - k_min) / dk_bin;
        if !(0.0..nk as f64).contains(&kb) {
            out += w;
            continue;
        }
        let xb = ((r.x.rem_euclid(window)) / window * nx as f64) as usize;
        weights[xb.min(nx - 1) * nk + kb as usize] += w;
    }
    // Spectral mass captured by the labels, by quadrature on a fine grid.
    let (a, b) = label_k_range;
    let span = 20.0 * (b - a).abs().max(label_dk);
    let mid = 0.5 * (a + b);
    let n = 20_000;
    let h = 2.0 * span / n as f64;
    let (mut inside, mut all) = (0.0, 0.0);
    for i in 0..n {
        let k = mid - span + (i as f64 + 0.5) * h;
        let w = source_spectrum(k);
        all += w;
        if k >= a && k <= b {
            inside += w;
        }
    }
    // A single launched wavenumber stands for a delta spectrum.
    let tail = if a == b || all <= 0.0 { 0.0 } else { 1.0 - inside / all };
    if tail > 0.01 {
        log::warn!("ray labels miss {:.1}% of the source spectrum", 100.0 * tail);
    }
    Ok(PhaseSpaceHistogram {
        nx,
        nk,
        window,
        k_min,
        k_max,
        weights,
        total,
        out_of_range: out,
        label_tail_mass: tail,
    })
}

/// A ray Monte Carlo run: `n_medium` media, each traced with the same label
/// grid of rays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayEnsemblePlan {
    pub medium: MediumCorrelation,
    pub source: SourceCoherence,
    pub alpha: f64,
    pub window: f64,
    pub dz: f64,
    /// Physical distances, whole multiples of `dz`, positive and increasing.
    pub outputs: Vec<f64>,
    pub n_medium: usize,
    /// Position labels per medium.
    pub rays_per_medium: usize,
    /// Wavenumber labels per position; speckle sources only.
    pub k_labels: usize,
    /// Launched wavenumbers cover `|k| <= k_span / rho_o`.
    pub k_span: f64,
    pub bins: (usize, usize),
    pub root_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayEnsembleResult {
    pub plan: RayEnsemblePlan,
    pub z_c: f64,
    pub gamma0: f64,
    pub moments: Vec<DiffusionMoments>,
    pub predictions: Vec<DiffusionPrediction>,
    /// Histograms averaged over media, one per output.
    pub histograms: Vec<PhaseSpaceHistogram>,
}

impl RayEnsemblePlan {
    fn k_labels_range(&self) -> (f64, f64, usize) {
        if self.source.is_speckle() {
            let k = self.k_span / self.source.rho_o;
            (-k, k, self.k_labels)
        } else {
            (0.0, 0.0, 1)
        }
    }

    /// Histogram wavenumber range: the launched band plus four diffusion
    /// widths at the last output.
    fn k_bins_range(&self, gamma0: f64) -> (f64, f64) {
        let (_, k, _) = self.k_labels_range();
        let z = self.outputs.last().copied().unwrap_or(0.0);
        let h = k + 4.0 * (gamma0 * z).sqrt();
        (-h, h)
    }

    fn spectrum(&self, k: f64) -> f64 {
        if self.source.is_speckle() {
            source_spectrum_density(&self.source, k).unwrap_or(0.0)
        } else {
            1.0
        }
    }
}

pub fn run_ray_ensemble(plan: &RayEnsemblePlan, workers: usize) -> Result<RayEnsembleResult> {
    if plan.n_medium == 0 || plan.rays_per_medium == 0 || plan.k_labels == 0 {
        return Err(Error::InvalidParameter("ray ensemble needs media, rays and labels".into()));
    }
    if plan.outputs.is_empty() || plan.outputs.windows(2).any(|w| w[1] <= w[0]) || plan.outputs[0] <= 0.0 {
        return Err(Error::InvalidParameter("ray outputs must be positive and increasing".into()));
    }
    let ell = plan.medium.ell_c;
    let z_max = *plan.outputs.last().expect("checked");
    let grid = ray_potential_grid(ell, plan.window, z_max, plan.dz)?;
    let gamma0 = plan.medium.Gamma(0.0)?;
    let (k_lo, k_hi, nk_labels) = plan.k_labels_range();
    let label_dx = plan.window / plan.rays_per_medium as f64;
    let label_dk = if nk_labels > 1 { (k_hi - k_lo) / nk_labels as f64 } else { 1.0 };
    let k_bins = plan.k_bins_range(gamma0);
    let settings = RaySettings {
        alpha: plan.alpha,
        dz: plan.dz,
    };
    let one = |r: usize| -> Result<(DiffusionAccumulator, Vec<PhaseSpaceHistogram>)> {
        let field = synthesize_potential(grid, &plan.medium, RngStream::new(plan.root_seed, r as u64))?;
        let medium = RayMedium::from_field(&field)?;
        let mut bundle = RayBundle::label_grid(plan.window, plan.rays_per_medium, k_lo, k_hi, nk_labels)?;
        let mut acc = DiffusionAccumulator::default();
        let mut hists = Vec::with_capacity(plan.outputs.len());
        let spectrum = |k: f64| plan.spectrum(k);
        trace_rays(&mut bundle, &medium, &settings, &plan.outputs, |b| {
            acc.add(b, plan.alpha, 0);
            hists.push(wigner_histogram(
                b,
                &spectrum,
                label_dx,
                label_dk,
                (k_lo, k_hi),
                plan.window,
                plan.bins,
                k_bins,
            )?);
            Ok(())
        })?;
        Ok((acc, hists))
    };
    let per: Vec<Result<(DiffusionAccumulator, Vec<PhaseSpaceHistogram>)>> =
        crate::ensemble::with_workers(workers, || (0..plan.n_medium).into_par_iter().map(one).collect())?;
    let mut acc = DiffusionAccumulator::default();
    let mut sums: Option<Vec<PhaseSpaceHistogram>> = None;
    for item in per {
        let (a, h) = item?;
        acc = acc.merge(&a);
        match &mut sums {
            None => sums = Some(h),
            Some(s) => {
                for (t, v) in s.iter_mut().zip(&h) {
                    for (x, y) in t.weights.iter_mut().zip(&v.weights) {
                        *x += y;
                    }
                    t.total += v.total;
                    t.out_of_range += v.out_of_range;
                }
            }
        }
    }
    let inv = 1.0 / plan.n_medium as f64;
    let mut histograms = sums.unwrap_or_default();
    for h in &mut histograms {
        h.weights.iter_mut().for_each(|w| *w *= inv);
        h.total *= inv;
        h.out_of_range *= inv;
    }
    let moments = acc.moments();
    let predictions = moments.iter().map(|m| diffusion_prediction(gamma0, plan.alpha, m.z)).collect();
    Ok(RayEnsembleResult {
        plan: plan.clone(),
        z_c: derived_scales(&plan.medium, &plan.source, plan.alpha)?.z_c,
        gamma0,
        moments,
        predictions,
        histograms,
    })
}
