use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{MomentGrid, StepSchedule};
use crate::correlation::{MediumCorrelation, SourceCoherence};
use crate::error::{Error, Result};
use crate::fft::{transpose, wavenumbers, Fft1, TrigInterpolant};

/// Which moment equation a field solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentRegime {
    /// Fourth moment of a plane wave, parameter `X_c`.
    CoherentD { x_c: f64 },
    /// Incoherent second moment of the time-averaged intensity, parameter `X_o`.
    IncoherentPi { x_o: f64 },
}

/// Slices of the solution kept at one scheduled distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSnapshot {
    pub z: f64,
    /// `F(x_i, 0)` for every `x` node.
    pub row: Vec<Complex64>,
    /// `F(0, y_j)` for every `y` node.
    pub column: Vec<Complex64>,
    pub slope: Option<SlopeSlice>,
}

/// `F(y_j / slope, y_j)` for every `y` node, i.e. the line `y = slope x`
/// sampled at `x` spacing `dy / slope`. Values are exact in `y` and
/// band-limited interpolants in `x`, so a steep line stays resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeSlice {
    pub slope: f64,
    /// `x` of the first sample; samples are spaced by `step`.
    pub origin: f64,
    pub step: f64,
    pub values: Vec<Complex64>,
}

/// Distance of the solution from its far-field plateau on the window edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub max_deviation: f64,
    pub tolerance: f64,
    pub z: f64,
    /// Edge point `(x, y)` of the largest deviation.
    pub at: (f64, f64),
}

impl BoundaryReport {
    pub fn ok(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `max |F(-x,-y) - F(x,y)|`.
    pub point_reflection: f64,
    /// `max |F(x,-y) - conj F(x,y)|`.
    pub mirror_conjugate: f64,
    /// `|Im F(0,0)|`.
    pub origin_imag: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSolution {
    pub regime: MomentRegime,
    pub grid: MomentGrid,
    pub schedule: StepSchedule,
    /// `(z, Re F(0,0))` after every step, starting at `z = 0`.
    pub origin: Vec<(f64, f64)>,
    pub snapshots: Vec<MomentSnapshot>,
    /// Worst boundary check over all snapshots and the final state.
    pub boundary: BoundaryReport,
    pub symmetry: SymmetryReport,
    /// Exact `x`-sum of `F(., 0)` at the end, divided by `nx`. Conserved.
    pub row_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSettings {
    pub grid: MomentGrid,
    pub schedule: StepSchedule,
    pub z_max: f64,
    /// Distances at which slices are stored.
    pub snapshots: Vec<f64>,
    /// Slope of the extra slice `F(x, slope x)`, if wanted.
    pub slope: Option<f64>,
    pub boundary_tolerance: f64,
}

pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-3;

/// Half-width at `z = 0`, in scaled units, of the diagonal bands skipped by
/// the coherent boundary check.
const DIAGONAL_EXCLUSION: f64 = 4.0;

impl SolveSettings {
    pub fn coherent(x_c: f64, z_max: f64) -> Result<Self> {
        Ok(Self {
            grid: MomentGrid::coherent_default(x_c, z_max)?,
            schedule: StepSchedule::coherent_default(x_c),
            z_max,
            snapshots: Vec::new(),
            slope: None,
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
        })
    }

    pub fn incoherent(x_o: f64, z_max: f64) -> Result<Self> {
        Ok(Self {
            grid: MomentGrid::incoherent_default(x_o, z_max)?,
            schedule: StepSchedule::incoherent_default(),
            z_max,
            snapshots: Vec::new(),
            slope: None,
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
        })
    }

    pub fn with_snapshots(mut self, zs: Vec<f64>) -> Self {
        self.snapshots = zs;
        self
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = Some(slope);
        self
    }
}

/// Wavenumbers for an odd derivative: the Nyquist mode has no sign and is
/// zeroed, which keeps the mixed derivative odd under reflections.
fn odd_wavenumbers(n: usize, d: f64) -> Vec<f64> {
    let mut k = wavenumbers(n, d);
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    k
}

/// Strang split-step integrator for `dz F = i c dxy F + A(x, y) F` on a
/// periodic grid, where `A` is real.
struct SplitStep {
    nx: usize,
    ny: usize,
    row_fft: Fft1,
    col_fft: Fft1,
    field: Vec<Complex64>,
    work: Vec<Complex64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    coupling: f64,
    rate: Vec<f64>,
    cached_dz: f64,
    kinetic: Vec<Complex64>,
    half: Vec<f64>,
}

impl SplitStep {
    fn new(grid: &MomentGrid, coupling: f64, rate: Vec<f64>, field: Vec<Complex64>) -> Self {
        let n = grid.nx * grid.ny;
        Self {
            nx: grid.nx,
            ny: grid.ny,
            row_fft: Fft1::new(grid.ny),
            col_fft: Fft1::new(grid.nx),
            field,
            work: vec![Complex64::new(0.0, 0.0); n],
            kx: odd_wavenumbers(grid.nx, grid.dx()),
            ky: odd_wavenumbers(grid.ny, grid.dy()),
            coupling,
            rate,
            cached_dz: f64::NAN,
            kinetic: vec![Complex64::new(0.0, 0.0); n],
            half: vec![0.0; n],
        }
    }

    fn prepare(&mut self, dz: f64) {
        if dz == self.cached_dz {
            return;
        }
        let norm = 1.0 / (self.nx * self.ny) as f64;
        // Transposed layout: slot j * nx + i holds (kx_i, ky_j). In this
        // convention dx -> i kx, so i c dxy -> -i c kx ky.
        for (j, ky) in self.ky.iter().enumerate() {
            let row = &mut self.kinetic[j * self.nx..(j + 1) * self.nx];
            for (m, kx) in row.iter_mut().zip(&self.kx) {
                *m = Complex64::from_polar(norm, -self.coupling * kx * ky * dz);
            }
        }
        for (h, a) in self.half.iter_mut().zip(&self.rate) {
            *h = (0.5 * a * dz).exp();
        }
        self.cached_dz = dz;
    }

    fn step(&mut self, dz: f64) {
        self.prepare(dz);
        self.field.iter_mut().zip(&self.half).for_each(|(f, h)| *f *= h);
        self.row_fft.forward(&mut self.field);
        transpose(&self.field, &mut self.work, self.nx, self.ny);
        self.col_fft.forward(&mut self.work);
        self.work.iter_mut().zip(&self.kinetic).for_each(|(w, k)| *w *= k);
        self.col_fft.inverse_unnormalized(&mut self.work);
        transpose(&self.work, &mut self.field, self.ny, self.nx);
        self.row_fft.inverse_unnormalized(&mut self.field);
        self.field.iter_mut().zip(&self.half).for_each(|(f, h)| *f *= h);
    }

    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.field[i * self.ny + j]
    }
}

/// Largest distance from the far-field reference on the edges `x = -L_x/2`
/// (reference `far_x(y)`) and `y = -L_y/2` (reference `far_y(x)`). By
/// periodicity these are also the `+L/2` edges. Points without a reference
/// are skipped; if none is left the deviation is infinite.
fn boundary_deviation(
    s: &SplitStep,
    grid: &MomentGrid,
    far_x: &dyn Fn(f64) -> Option<f64>,
    far_y: &dyn Fn(f64) -> Option<f64>,
) -> (f64, (f64, f64)) {
    let mut worst = (0.0, (0.0, 0.0));
    let mut checked = 0usize;
    for j in 0..grid.ny {
        if let Some(r) = far_x(grid.y(j)) {
            checked += 1;
            let d = (s.at(0, j) - r).norm();
            if d > worst.0 {
                worst = (d, (grid.x(0), grid.y(j)));
            }
        }
    }
    for i in 0..grid.nx {
        if let Some(r) = far_y(grid.x(i)) {
            checked += 1;
            let d = (s.at(i, 0) - r).norm();
            if d > worst.0 {
                worst = (d, (grid.x(i), grid.y(0)));
            }
        }
    }
    if checked == 0 {
        return (f64::INFINITY, (grid.x(0), grid.y(0)));
    }
    worst
}

fn symmetry(s: &SplitStep) -> SymmetryReport {
    let (nx, ny) = (s.nx, s.ny);
    let mut point: f64 = 0.0;
    let mut mirror: f64 = 0.0;
    for i in 0..nx {
        let mi = (nx - i) % nx;
        for j in 0..ny {
            let mj = (ny - j) % ny;
            let f = s.at(i, j);
            point = point.max((s.at(mi, mj) - f).norm());
            mirror = mirror.max((s.at(i, mj) - f.conj()).norm());
        }
    }
    SymmetryReport {
        point_reflection: point,
        mirror_conjugate: mirror,
        origin_imag: s.at(nx / 2, ny / 2).im.abs(),
    }
}

fn snapshot(s: &SplitStep, grid: &MomentGrid, z: f64, slope: Option<f64>) -> MomentSnapshot {
    let (i0, j0) = (grid.nx / 2, grid.ny / 2);
    let row = (0..grid.nx).map(|i| s.at(i, j0)).collect();
    let column = (0..grid.ny).map(|j| s.at(i0, j)).collect();
    let slope = slope.map(|a| {
        let mut line = vec![Complex64::new(0.0, 0.0); grid.nx];
        let values = (0..grid.ny)
            .map(|j| {
                let x = grid.y(j) / a;
                if x.abs() > grid.lx / 2.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let pos = x / grid.dx();
                if (pos - pos.round()).abs() < 1e-9 {
                    let i = (pos.round() as i64 + (grid.nx / 2) as i64).rem_euclid(grid.nx as i64);
                    return s.at(i as usize, j);
                }
                for (i, v) in line.iter_mut().enumerate() {
                    *v = s.at(i, j);
                }
                TrigInterpolant::new(&line, grid.dx(), grid.x(0)).eval(x)
            })
            .collect();
        SlopeSlice {
            slope: a,
            origin: grid.y(0) / a,
            step: grid.dy() / a,
            values,
        }
    });
    MomentSnapshot { z, row, column, slope }
}

fn check_settings(settings: &SolveSettings) -> Result<()> {
    settings.schedule.validate()?;
    if !(settings.z_max > 0.0 && settings.z_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("z_max must be positive, got {}", settings.z_max)));
    }
    if let Some(z) = settings.snapshots.iter().find(|z| !(**z >= 0.0 && **z <= settings.z_max)) {
        return Err(Error::InvalidParameter(format!("snapshot z = {z} outside [0, z_max]")));
    }
    Ok(())
}

fn integrate(
    mut s: SplitStep,
    regime: MomentRegime,
    settings: &SolveSettings,
    far_x: &dyn Fn(f64, f64) -> Option<f64>,
    far_y: &dyn Fn(f64, f64) -> Option<f64>,
) -> Result<MomentSolution> {
    let grid = settings.grid;
    let mut snaps: Vec<f64> = settings.snapshots.clone();
    snaps.sort_by(|a, b| a.total_cmp(b));
    snaps.dedup();
    let (i0, j0) = (grid.nx / 2, grid.ny / 2);
    let mut origin = vec![(0.0, s.at(i0, j0).re)];
    let mut snapshots = Vec::with_capacity(snaps.len());
    let tol = settings.boundary_tolerance;
    let mut boundary = BoundaryReport {
        max_deviation: 0.0,
        tolerance: tol,
        z: 0.0,
        at: (0.0, 0.0),
    };
    let check_boundary = |s: &SplitStep, z: f64, boundary: &mut BoundaryReport| {
        let (dev, at) = boundary_deviation(s, &grid, &|y| far_x(y, z), &|x| far_y(x, z));
        if dev > boundary.max_deviation {
            *boundary = BoundaryReport {
                max_deviation: dev,
                tolerance: tol,
                z,
                at,
            };
        }
    };
    let mut next = 0;
    while next < snaps.len() && snaps[next] <= 0.0 {
        snapshots.push(snapshot(&s, &grid, 0.0, settings.slope));
        next += 1;
    }
    let mut z = 0.0;
    let mut step = 0usize;
    let eps = 1e-12;
    while z < settings.z_max - eps {
        let mut dz = settings.schedule.step_at(z).min(settings.z_max - z);
        let target = snaps.get(next).copied();
        if let Some(t) = target {
            if z + dz > t - eps {
                dz = t - z;
            }
        }
        s.step(dz);
        step += 1;
        z = match target {
            Some(t) if (z + dz - t).abs() <= eps => t,
            _ if (z + dz - settings.z_max).abs() <= eps => settings.z_max,
            _ => z + dz,
        };
        let v = s.at(i0, j0);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NumericalFailure {
                step,
                z,
                detail: "non-finite moment at the origin".into(),
            });
        }
        origin.push((z, v.re));
        while next < snaps.len() && snaps[next] <= z + eps {
            check_boundary(&s, z, &mut boundary);
            snapshots.push(snapshot(&s, &grid, z, settings.slope));
            next += 1;
        }
    }
    check_boundary(&s, z, &mut boundary);
    if !boundary.ok() {
        log::warn!(
            "moment solution deviates from its far-field plateau by {:.2e} at z = {} (tolerance {:.1e}); enlarge the window",
            boundary.max_deviation,
            boundary.z,
            tol
        );
    }
    let row_mean = (0..grid.nx).map(|i| s.at(i, j0).re).sum::<f64>() / grid.nx as f64;
    Ok(MomentSolution {
        regime,
        grid,
        schedule: settings.schedule,
        origin,
        snapshots,
        boundary,
        symmetry: symmetry(&s),
        row_mean,
    })
}

/// Coherent fourth moment `D(x, y)` from `D = 1` with coupling `1/X_c` and
/// growth rate `X_c^2 U(x, y) / 2`.
pub fn solve_coherent_d(x_c: f64, medium: &MediumCorrelation, settings: &SolveSettings) -> Result<MomentSolution> {
    if !(x_c > 0.0 && x_c.is_finite()) {
        return Err(Error::InvalidParameter(format!("X_c must be positive, got {x_c}")));
    }
    check_settings(settings)?;
    let g = settings.grid;
    let mut rate = Vec::with_capacity(g.nx * g.ny);
    let mut u_plus: f64 = 0.0;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let u = medium.U_tilde(g.x(i), g.y(j))?;
            u_plus = u_plus.max(u);
            rate.push(0.5 * x_c * x_c * u);
        }
    }
    if x_c * x_c * u_plus * settings.schedule.dz_max >= 0.5 {
        return Err(Error::InvalidParameter(format!(
            "step too large for growth rate: X_c^2 max U+ dz = {}",
            x_c * x_c * u_plus * settings.schedule.dz_max
        )));
    }
    // Far from the origin and from the diagonals the coupling term is
    // negligible and each point relaxes on its own, D = exp(X_c^2 U z / 2).
    // Along the diagonals U keeps a ridge that the coupling term spreads over
    // a width of order sqrt(z / X_c), so the corners have no local reference.
    let hx = -g.lx / 2.0;
    let hy = -g.ly / 2.0;
    let local = move |x: f64, y: f64, z: f64| -> Option<f64> {
        if (x.abs() - y.abs()).abs() < DIAGONAL_EXCLUSION * (1.0 + (z / x_c).sqrt()) {
            return None;
        }
        Some((0.5 * x_c * x_c * medium.U_tilde(x, y).ok()? * z).exp())
    };
    let far_x = |y: f64, z: f64| local(hx, y, z);
    let far_y = |x: f64, z: f64| local(x, hy, z);
    let field = vec![Complex64::new(1.0, 0.0); g.nx * g.ny];
    let s = SplitStep::new(&g, 1.0 / x_c, rate, field);
    integrate(s, MomentRegime::CoherentD { x_c }, settings, &far_x, &far_y)
}

/// Incoherent moment `Pi(x, y)` from `pi_o(y / X_o)` with unit coupling and
/// damping rate `(Gamma(0) - Gamma(x)) y^2 / 2`.
pub fn solve_incoherent_pi(
    x_o: f64,
    source: &SourceCoherence,
    medium: &MediumCorrelation,
    settings: &SolveSettings,
) -> Result<MomentSolution> {
    if !(x_o > 0.0 && x_o.is_finite()) {
        return Err(Error::InvalidParameter(format!("X_o must be positive, got {x_o}")));
    }
    check_settings(settings)?;
    let g = settings.grid;
    if g.ly < 8.0 * x_o {
        return Err(Error::GridTooSmall(format!("y extent {} must be >= 8 X_o = {}", g.ly, 8.0 * x_o)));
    }
    let big0 = medium.Gamma_tilde(0.0)?;
    let gx: Vec<f64> = (0..g.nx).map(|i| medium.Gamma_tilde(g.x(i))).collect::<Result<_>>()?;
    let pio: Vec<f64> = (0..g.ny).map(|j| source.pi_tilde_o(g.y(j) / x_o)).collect::<Result<_>>()?;
    let mut rate = Vec::with_capacity(g.nx * g.ny);
    let mut field = Vec::with_capacity(g.nx * g.ny);
    for gxi in &gx {
        for (j, p) in pio.iter().enumerate() {
            let y = g.y(j);
            rate.push(-0.5 * (big0 - gxi) * y * y);
            field.push(Complex64::new(*p, 0.0));
        }
    }
    let far_x = |y: f64, z: f64| -> Option<f64> {
        Some(source.pi_tilde_o(y / x_o).ok()? * (-0.5 * big0 * y * y * z).exp())
    };
    let far_y = |_x: f64, _z: f64| Some(0.0);
    let s = SplitStep::new(&g, 1.0, rate, field);
    integrate(s, MomentRegime::IncoherentPi { x_o }, settings, &far_x, &far_y)
}
