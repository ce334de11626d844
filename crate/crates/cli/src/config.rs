//! TOML run configuration. Every field has a default; a file only needs the
//! keys it changes, and command-line flags override both.

use std::path::Path;

use anyhow::{bail, Context};
use branchflow_core::correlation::{derived_scales, paraxial_alpha, DerivedScales, MediumCorrelation, SourceCoherence};
use branchflow_core::ensemble::{grid_points, output_schedule, ExperimentPlan};
use branchflow_core::moments::{CurveRegime, MomentGrid, SolveSettings};
use branchflow_core::paraxial::StepPlan;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub medium: MediumSection,
    pub source: SourceSection,
    pub run: RunSection,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub rays: RaySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediumSection {
    pub sigma2_lambda2: f64,
    pub ell_c_over_lambda: f64,
    pub kind: MediumName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediumName {
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub kind: SourceName,
    pub rho_o_over_lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceName {
    PlaneWave,
    GaussianSchell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub regime: CurveRegime,
    pub n_medium: usize,
    pub m_source: usize,
    pub z_max_over_zc: f64,
    /// Output distances as fractions of `z_c`. When absent, `output_count`
    /// evenly spaced points on `[0, z_max]`.
    pub outputs: Option<Vec<f64>>,
    pub output_count: usize,
    pub n_o: f64,
    pub correlation_lags_over_ell_c: f64,
    pub field_lags_over_ell_c: f64,
    pub map_stride: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dx: f64,
    pub window_over_ell_c: f64,
    /// Propagation step; `min(ell_c / 8, 2)` when absent.
    pub dz: Option<f64>,
}

/// Overrides of the moment-solver defaults, in scaled units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub lx: Option<f64>,
    pub ly: Option<f64>,
    pub dx: Option<f64>,
    pub dy: Option<f64>,
    pub dz_min: Option<f64>,
    pub dz_max: Option<f64>,
    pub boundary_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaySection {
    pub rays_per_medium: usize,
    /// Wavenumber labels per position for speckle sources.
    pub k_labels: usize,
    /// Launched wavenumbers span `[-k_span / rho_o, k_span / rho_o]`.
    pub k_span: f64,
    pub x_bins: usize,
    pub k_bins: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            medium: MediumSection::default(),
            source: SourceSection::default(),
            run: RunSection::default(),
            grid: GridSection::default(),
            solver: SolverSection::default(),
            rays: RaySection::default(),
        }
    }
}

impl Default for MediumSection {
    fn default() -> Self {
        Self {
            sigma2_lambda2: 1e-4,
            ell_c_over_lambda: 25.0,
            kind: MediumName::Gaussian,
        }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            kind: SourceName::PlaneWave,
            rho_o_over_lambda: 10.0,
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            regime: CurveRegime::Plane,
            n_medium: 1000,
            m_source: 1,
            z_max_over_zc: 4.0,
            outputs: None,
            output_count: 41,
            n_o: 1.5,
            correlation_lags_over_ell_c: 4.0,
            field_lags_over_ell_c: 2.0,
            map_stride: None,
        }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dx: 0.5,
            window_over_ell_c: 40.0,
            dz: None,
        }
    }
}

impl Default for RaySection {
    fn default() -> Self {
        Self {
            rays_per_medium: 1000,
            k_labels: 32,
            k_span: 2.5,
            x_bins: 64,
            k_bins: 64,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.medium()?;
        self.source()?;
        let r = &self.run;
        if !(r.z_max_over_zc > 0.0 && r.z_max_over_zc.is_finite()) {
            bail!("run.z_max_over_zc must be positive");
        }
        if r.outputs.is_none() && r.output_count < 2 {
            bail!("run.output_count must be at least 2");
        }
        if let Some(o) = &r.outputs {
            if o.is_empty() || o.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
                bail!("run.outputs must be non-negative fractions of z_c");
            }
        }
        if !(r.n_o > 0.0) {
            bail!("run.n_o must be positive");
        }
        let source_is_speckle = self.source.kind == SourceName::GaussianSchell;
        if (r.regime == CurveRegime::Plane) == source_is_speckle {
            bail!("run.regime {} does not match source.kind", r.regime.name());
        }
        if !(self.grid.dx > 0.0 && self.grid.window_over_ell_c > 0.0) {
            bail!("grid.dx and grid.window_over_ell_c must be positive");
        }
        if let Some(dz) = self.grid.dz {
            if !(dz > 0.0) {
                bail!("grid.dz must be positive");
            }
        }
        if self.rays.rays_per_medium == 0 || self.rays.x_bins == 0 || self.rays.k_bins == 0 || self.rays.k_labels == 0 {
            bail!("ray counts and bins must be positive");
        }
        Ok(())
    }

    pub fn medium(&self) -> anyhow::Result<MediumCorrelation> {
        Ok(MediumCorrelation::gaussian(self.medium.sigma2_lambda2, self.medium.ell_c_over_lambda)?)
    }

    pub fn source(&self) -> anyhow::Result<SourceCoherence> {
        Ok(match self.source.kind {
            SourceName::PlaneWave => SourceCoherence::plane_wave(),
            SourceName::GaussianSchell => SourceCoherence::gaussian_schell(self.source.rho_o_over_lambda)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        paraxial_alpha(self.run.n_o)
    }

    pub fn scales(&self) -> anyhow::Result<DerivedScales> {
        Ok(derived_scales(&self.medium()?, &self.source()?, self.alpha())?)
    }

    /// Output distances as fractions of `z_c`, ascending.
    pub fn output_fractions(&self) -> Vec<f64> {
        match &self.run.outputs {
            Some(o) => {
                let mut o = o.clone();
                o.sort_by(|a, b| a.partial_cmp(b).expect("validated"));
                o.dedup();
                o
            }
            None => {
                let n = self.run.output_count;
                (0..n).map(|i| self.run.z_max_over_zc * i as f64 / (n - 1) as f64).collect()
            }
        }
    }

    pub fn dz(&self) -> f64 {
        self.grid.dz.unwrap_or_else(|| StepPlan::default_dz(self.medium.ell_c_over_lambda))
    }

    pub fn window(&self) -> f64 {
        self.grid.window_over_ell_c * self.medium.ell_c_over_lambda
    }

    pub fn plan(&self) -> anyhow::Result<ExperimentPlan> {
        let medium = self.medium()?;
        let ell = medium.ell_c;
        let dx = self.grid.dx;
        let dz = self.dz();
        let lags = |over: f64| ((over * ell / dx).round() as usize).max(1);
        let mut plan = ExperimentPlan {
            medium,
            source: self.source()?,
            alpha: self.alpha(),
            nx: grid_points(self.window(), dx),
            dx,
            dz,
            regime: self.run.regime,
            n_medium: self.run.n_medium,
            m_source: self.run.m_source,
            outputs: Vec::new(),
            correlation_lags: lags(self.run.correlation_lags_over_ell_c),
            field_lags: lags(self.run.field_lags_over_ell_c),
            root_seed: self.seed,
            map_stride: self.run.map_stride,
        };
        plan.outputs = output_schedule(plan.z_c()?, &self.output_fractions(), dz);
        plan.validate()?;
        Ok(plan)
    }

    /// Moment-solver settings up to the largest output, with defaults
    /// replaced by any `[solver]` overrides.
    pub fn solve_settings(&self, snapshots: Vec<f64>) -> anyhow::Result<SolveSettings> {
        let scales = self.scales()?;
        // Outputs rounded to whole propagation steps may overshoot z_max.
        let z_max = snapshots
            .iter()
            .chain(self.output_fractions().last())
            .fold(self.run.z_max_over_zc, |a, &b| a.max(b));
        let mut s = match scales.x_o {
            None => SolveSettings::coherent(scales.x_c, z_max)?,
            Some(x_o) => SolveSettings::incoherent(x_o, z_max)?.with_slope(x_o * scales.ell_c / self.source.rho_o_over_lambda),
        };
        s = s.with_snapshots(snapshots);
        let o = &self.solver;
        if o.lx.is_some() || o.ly.is_some() || o.dx.is_some() || o.dy.is_some() {
            let g = s.grid;
            let lx = o.lx.unwrap_or(g.lx);
            let ly = o.ly.unwrap_or(g.ly);
            s.grid = MomentGrid::with_steps(lx, ly, o.dx.unwrap_or(g.lx / g.nx as f64), o.dy.unwrap_or(g.ly / g.ny as f64))?;
        }
        if let Some(v) = o.dz_min {
            s.schedule.dz_min = v;
        }
        if let Some(v) = o.dz_max {
            s.schedule.dz_max = v;
        }
        if let Some(v) = o.boundary_tolerance {
            s.boundary_tolerance = v;
        }
        Ok(s)
    }
}
