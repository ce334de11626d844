use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic grid on `[-L/2, L/2)` in each scaled variable; index `n/2` is the
/// origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

/// Smallest even `2^a 3^b 5^c` not below `n`.
pub fn fft_friendly(n: usize) -> usize {
    let mut m = n.max(2);
    loop {
        if m % 2 == 0 {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            if r == 1 {
                return m;
            }
        }
        m += 1;
    }
}

impl MomentGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidParameter(format!("grid sizes must be even and >= 4, got {nx} x {ny}")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidParameter(format!("extents must be positive, got {lx} x {ly}")));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Grid with steps close to `(dx, dy)` covering `(lx, ly)`.
    pub fn with_steps(lx: f64, ly: f64, dx: f64, dy: f64) -> Result<Self> {
        let nx = fft_friendly((lx / dx).ceil() as usize);
        let ny = fft_friendly((ly / dy).ceil() as usize);
        Self::new(nx, ny, lx, ly)
    }

    /// Default for the coherent fourth moment: step `min(1/4, 1/(4 X_c))`
    /// and extent `max(16, 12 z_max)`, since the structure narrows like
    /// `1/X_c` and spreads linearly in `z`.
    pub fn coherent_default(x_c: f64, z_max: f64) -> Result<Self> {
        let d = (0.25f64).min(1.0 / (4.0 * x_c));
        let l = (16.0f64).max(12.0 * z_max);
        Self::with_steps(l, l, d, d)
    }

    /// Default for the incoherent moment: step 1/16, `x` extent
    /// `max(16, 12 z_max)`, `y` extent `max(16, 8 X_o, 32 z_max)`.
    pub fn incoherent_default(x_o: f64, z_max: f64) -> Result<Self> {
        let lx = (16.0f64).max(12.0 * z_max);
        let ly = (16.0f64).max(8.0 * x_o).max(32.0 * z_max);
        Self::with_steps(lx, ly, 1.0 / 16.0, 1.0 / 16.0)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx / 2) as f64) * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny / 2) as f64) * self.dy()
    }

    /// Same extents, twice the points per axis.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            ny: 2 * self.ny,
            ..*self
        }
    }
}

/// Step sizes grow geometrically (by doubling) from `dz_min` to `dz_max`,
/// keeping `dz <= z / per_unit` so relative accuracy is uniform at small `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub dz_min: f64,
    pub dz_max: f64,
    pub steps_per_z: f64,
}

impl StepSchedule {
    pub fn fixed(dz: f64) -> Self {
        Self {
            dz_min: dz,
            dz_max: dz,
            steps_per_z: f64::INFINITY,
        }
    }

    /// `1e-3` near the origin, growing to `min(1e-2, 0.12 / X_c)`.
    pub fn coherent_default(x_c: f64) -> Self {
        Self {
            dz_min: 1e-3,
            dz_max: (1e-2f64).min(0.12 / x_c).max(1e-3),
            steps_per_z: 20.0,
        }
    }

    pub fn incoherent_default() -> Self {
        Self {
            dz_min: 1e-3,
            dz_max: 1e-2,
            steps_per_z: 20.0,
        }
    }

    pub fn halved(&self) -> Self {
        Self {
            dz_min: self.dz_min / 2.0,
            dz_max: self.dz_max / 2.0,
            steps_per_z: self.steps_per_z * 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dz_min > 0.0 && self.dz_max >= self.dz_min && self.steps_per_z > 0.0) {
            return Err(Error::InvalidParameter(format!("bad step schedule {self:?}")));
        }
        Ok(())
    }

    /// Step to take from `z`. Values are `dz_min * 2^j` or `dz_max`, so the
    /// solver only rebuilds its multipliers a handful of times.
    pub fn step_at(&self, z: f64) -> f64 {
        let target = (z / self.steps_per_z).max(self.dz_min);
        let mut dz = self.dz_min;
        while dz * 2.0 <= target && dz * 2.0 <= self.dz_max {
            dz *= 2.0;
        }
        if target >= self.dz_max {
            self.dz_max
        } else {
            dz
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn friendly_sizes() {
        assert_eq!(fft_friendly(496), 500);
        assert_eq!(fft_friendly(256), 256);
        assert_eq!(fft_friendly(7), 8);
        assert_eq!(fft_friendly(31), 32);
    }

    #[test]
    fn origin_is_on_grid() {
        let g = MomentGrid::new(64, 32, 16.0, 8.0).unwrap();
        assert_eq!(g.x(32), 0.0);
        assert_eq!(g.y(16), 0.0);
        assert_eq!(g.x(0), -8.0);
    }

    #[test]
    fn default_grids_scale_with_parameters() {
        let g = MomentGrid::coherent_default(12.4, 1.0).unwrap();
        assert!(g.dx() <= 1.0 / 49.6 + 1e-12 && g.lx == 16.0);
        let g = MomentGrid::coherent_default(0.5, 10.0).unwrap();
        assert!(g.dx() <= 0.25 && g.lx == 120.0);
        let g = MomentGrid::incoherent_default(1.24, 3.0).unwrap();
        assert_eq!((g.lx, g.ly), (36.0, 96.0));
    }

    #[test]
    fn schedule_grows_by_doubling() {
        let s = StepSchedule::coherent_default(1.0);
        assert_eq!(s.step_at(0.0), 1e-3);
        assert_eq!(s.step_at(0.05), 2e-3);
        assert_eq!(s.step_at(0.1), 4e-3);
        assert_eq!(s.step_at(5.0), 1e-2);
        assert_eq!(StepSchedule::fixed(0.01).step_at(3.0), 0.01);
    }
}
