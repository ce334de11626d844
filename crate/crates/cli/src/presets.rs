//! Named experiment setups. Each preset expands to one or more configs
//! whose realization counts are multiplied by a scale factor.

use anyhow::bail;
use branchflow_core::moments::CurveRegime;

use crate::config::{Config, SourceName};

pub const PRESETS: [&str; 6] = ["fig1b", "fig2", "fig3b", "fig3c", "fig3d", "fig4"];

pub const DEFAULT_PRESET_SCALE: f64 = 0.2;

/// A config with the name of the run it describes.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedConfig {
    pub name: String,
    pub config: Config,
}

fn plane(ell_c: f64, sigma2: f64, n: usize) -> Config {
    let mut c = Config::default();
    c.medium.ell_c_over_lambda = ell_c;
    c.medium.sigma2_lambda2 = sigma2;
    c.run.regime = CurveRegime::Plane;
    c.run.n_medium = n;
    c
}

fn speckle(ell_c: f64, sigma2: f64, rho: f64, regime: CurveRegime, n: usize, m: usize) -> Config {
    let mut c = plane(ell_c, sigma2, n);
    c.source.kind = SourceName::GaussianSchell;
    c.source.rho_o_over_lambda = rho;
    c.run.regime = regime;
    c.run.m_source = m;
    c
}

fn tag(v: f64) -> String {
    format!("{v}").replace('.', "p")
}

/// Expands `name` at full realization counts.
pub fn expand_full(name: &str) -> anyhow::Result<Vec<NamedConfig>> {
    let named = |name: String, config: Config| NamedConfig { name, config };
    let out = match name {
        "fig1b" => {
            let mut v: Vec<NamedConfig> = [10.0, 25.0, 50.0, 75.0]
                .iter()
                .map(|&l| named(format!("fig1b_lc{}", tag(l)), plane(l, 1e-4, 1000)))
                .collect();
            v.push(named("fig1b_lc50_s8e-4".into(), plane(50.0, 8e-4, 1000)));
            v
        }
        "fig2" => {
            let mut c = plane(100.0, 1e-4, 1000);
            c.run.z_max_over_zc = 2.0;
            c.run.outputs = Some(vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]);
            vec![named("fig2".into(), c)]
        }
        "fig3b" => [50.0, 100.0, 200.0]
            .iter()
            .map(|&l| named(format!("fig3b_lc{}", tag(l)), speckle(l, 1e-4, 10.0, CurveRegime::C, 1000, 1)))
            .collect(),
        "fig3c" => [5.0, 10.0, 20.0]
            .iter()
            .map(|&r| named(format!("fig3c_rho{}", tag(r)), speckle(100.0, 1e-4, r, CurveRegime::C, 1000, 1)))
            .collect(),
        "fig3d" => [0.5e-4, 1e-4, 2e-4]
            .iter()
            .map(|&s| named(format!("fig3d_s{s:e}"), speckle(100.0, s, 10.0, CurveRegime::C, 1000, 1)))
            .collect(),
        "fig4" => {
            let outputs = Some(vec![0.0, 0.25, 0.5, 1.0, 2.0]);
            let mut c = speckle(100.0, 1e-4, 10.0, CurveRegime::C, 1000, 1);
            let mut pc = speckle(100.0, 1e-4, 10.0, CurveRegime::Pc, 300, 400);
            for cfg in [&mut c, &mut pc] {
                cfg.run.z_max_over_zc = 2.0;
                cfg.run.outputs = outputs.clone();
                cfg.run.correlation_lags_over_ell_c = 2.0;
            }
            vec![named("fig4_c".into(), c), named("fig4_pc".into(), pc)]
        }
        other => bail!("unknown preset '{other}'; available: {}", PRESETS.join(", ")),
    };
    Ok(out)
}

/// Expands `name` with realization counts scaled by `scale`. Counts are
/// rounded and kept at least 1 (media) and 2 (speckles per medium in `pc`).
pub fn expand(name: &str, scale: f64, seed: Option<u64>) -> anyhow::Result<Vec<NamedConfig>> {
    if !(scale > 0.0 && scale.is_finite()) {
        bail!("--scale must be positive, got {scale}");
    }
    let mut v = expand_full(name)?;
    for (i, nc) in v.iter_mut().enumerate() {
        let run = &mut nc.config.run;
        run.n_medium = scaled(run.n_medium, scale, 1);
        if run.regime == CurveRegime::Pc {
            run.m_source = scaled(run.m_source, scale, 2);
        }
        // Independent media for each run of a preset.
        nc.config.seed = seed.unwrap_or(nc.config.seed) + i as u64;
        nc.config.validate()?;
    }
    Ok(v)
}

fn scaled(n: usize, scale: f64, min: usize) -> usize {
    ((n as f64 * scale).round() as usize).max(min)
}
