use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use branchflow_core::ensemble::{check_resume, persist, read_manifest, run_experiment, ExperimentPlan, VERSION};
use branchflow_core::io::{read_csv, write_csv, write_json};
use branchflow_core::moments::{
    intensity_correlation, solve_coherent_d, solve_incoherent_pi, BoundaryReport, CurveRegime, SymmetryReport,
};
use branchflow_core::rays::{default_ray_dz, run_ray_ensemble, RayEnsemblePlan};
use serde::Serialize;

use crate::config::Config;
use crate::presets;

pub const CONFIG_FILE: &str = "config.toml";

/// Multiplies realization counts, keeping `pc` at two speckles or more.
pub fn apply_scale(cfg: &mut Config, scale: f64) -> anyhow::Result<()> {
    if !(scale > 0.0 && scale.is_finite()) {
        bail!("--scale must be positive, got {scale}");
    }
    if scale != 1.0 {
        let r = &mut cfg.run;
        r.n_medium = ((r.n_medium as f64 * scale).round() as usize).max(1);
        if r.regime == CurveRegime::Pc {
            r.m_source = ((r.m_source as f64 * scale).round() as usize).max(2);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TheorySidecar<'a> {
    version: &'a str,
    config: &'a Config,
    regime: CurveRegime,
    z_c: f64,
    x_c: f64,
    x_o: Option<f64>,
    boundary: &'a BoundaryReport,
    symmetry: &'a SymmetryReport,
}

/// Solves the moment equations and writes `theory_scintillation[_c|_pc].csv`
/// and `theory_correlation[_c|_pc]_{i}.csv` at the simulation output
/// distances. Returns the files written.
pub fn theory(cfg: &Config, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let plan = cfg.plan()?;
    let scales = cfg.scales()?;
    let snaps: Vec<f64> = plan.outputs.iter().map(|z| z / scales.z_c).collect();
    let settings = cfg.solve_settings(snaps.clone())?;
    let medium = cfg.medium()?;
    let solution = match scales.x_o {
        None => solve_coherent_d(scales.x_c, &medium, &settings)?,
        Some(x_o) => solve_incoherent_pi(x_o, &cfg.source()?, &medium, &settings)?,
    };
    if !solution.boundary.ok() {
        log::warn!("moment solution failed its far-field check: {:?}", solution.boundary);
    }
    let regimes: &[(CurveRegime, &str)] = match scales.x_o {
        None => &[(CurveRegime::Plane, "")],
        Some(_) => &[(CurveRegime::C, "_c"), (CurveRegime::Pc, "_pc")],
    };
    let lags: Vec<f64> = (0..=plan.correlation_lags).map(|l| l as f64 * plan.dx).collect();
    let mut files = Vec::new();
    for &(regime, suffix) in regimes {
        let side = TheorySidecar {
            version: VERSION,
            config: cfg,
            regime,
            z_c: scales.z_c,
            x_c: scales.x_c,
            x_o: scales.x_o,
            boundary: &solution.boundary,
            symmetry: &solution.symmetry,
        };
        let path = out.join(format!("theory_scintillation{suffix}.csv"));
        solution.scintillation(regime)?.write(&path, &side)?;
        files.push(path);
        for (i, &z) in snaps.iter().enumerate() {
            let curve = intensity_correlation(&solution, z, &scales, regime, &lags)?;
            let path = out.join(format!("theory_correlation{suffix}_{i:03}.csv"));
            curve.write(&path, &side)?;
            files.push(path);
        }
    }
    Ok(files)
}

/// Runs the Monte Carlo experiment and persists it under `out`. A plan taken
/// from `manifest` replaces the one built from the config.
pub fn simulate(cfg: &Config, manifest: Option<&Path>, workers: usize, out: &Path) -> anyhow::Result<ExperimentPlan> {
    let plan = match manifest {
        Some(m) => {
            let plan = read_manifest(m)?.plan;
            plan.validate()?;
            plan
        }
        None => cfg.plan()?,
    };
    check_resume(out, &plan)?;
    let start = Instant::now();
    let result = run_experiment(&plan, workers)?;
    if !result.dropped.is_empty() {
        log::warn!("{} realizations dropped", result.dropped.len());
    }
    persist(&result, out, Some(start.elapsed().as_secs_f64()))?;
    if manifest.is_none() {
        fs::write(out.join(CONFIG_FILE), cfg.to_toml())?;
    }
    Ok(plan)
}

#[derive(Serialize)]
struct RayManifest<'a> {
    version: &'a str,
    config: &'a Config,
    plan: &'a RayEnsemblePlan,
    z_c: f64,
    gamma0: f64,
    files: Vec<String>,
}

/// Traces ray ensembles and writes `ray_moments.csv` with the diffusion-limit
/// predictions alongside, plus one phase-space histogram per output.
pub fn rays(cfg: &Config, workers: usize, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    let medium = cfg.medium()?;
    let scales = cfg.scales()?;
    let dz = default_ray_dz(medium.ell_c);
    let mut outputs: Vec<f64> = cfg
        .output_fractions()
        .iter()
        .map(|f| (f * scales.z_c / dz).round() * dz)
        .filter(|z| *z > 0.0)
        .collect();
    outputs.dedup();
    let plan = RayEnsemblePlan {
        medium,
        source: cfg.source()?,
        alpha: scales.alpha,
        window: cfg.window(),
        dz,
        outputs,
        n_medium: cfg.run.n_medium,
        rays_per_medium: cfg.rays.rays_per_medium,
        k_labels: cfg.rays.k_labels,
        k_span: cfg.rays.k_span,
        bins: (cfg.rays.x_bins, cfg.rays.k_bins),
        root_seed: cfg.seed,
    };
    let result = run_ray_ensemble(&plan, workers)?;
    let header = [
        "z_over_zc", "var_k", "var_k_se", "var_k_theory", "var_x", "var_x_se", "var_x_theory", "cov_xk", "cov_xk_se",
        "cov_xk_theory", "corr_xk", "corr_xk_se", "corr_xk_theory", "mean_k", "mean_k_se", "n",
    ];
    let rows: Vec<Vec<f64>> = result
        .moments
        .iter()
        .zip(&result.predictions)
        .map(|(m, p)| {
            vec![
                m.z / result.z_c,
                m.var_k.value,
                m.var_k.stderr,
                p.var_k,
                m.var_x.value,
                m.var_x.stderr,
                p.var_x,
                m.cov_xk.value,
                m.cov_xk.stderr,
                p.cov_xk,
                m.corr_xk.value,
                m.corr_xk.stderr,
                p.corr_xk,
                m.mean_k.value,
                m.mean_k.stderr,
                m.realizations as f64,
            ]
        })
        .collect();
    let mut files = vec!["ray_moments.csv".to_string()];
    write_csv(&out.join(&files[0]), &header, &rows)?;
    for (i, h) in result.histograms.iter().enumerate() {
        let name = format!("ray_histogram_{i:03}.bin");
        h.write(&out.join(&name))?;
        files.push(name);
    }
    fs::write(out.join(CONFIG_FILE), cfg.to_toml())?;
    write_json(
        &out.join("ray_manifest.json"),
        &RayManifest {
            version: VERSION,
            config: cfg,
            plan: &plan,
            z_c: result.z_c,
            gamma0: result.gamma0,
            files,
        },
    )?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparePoint {
    pub x: f64,
    pub simulated: f64,
    pub stderr: f64,
    pub theory: f64,
    /// `|simulated - theory|` in units of the combined standard error.
    pub sigmas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub theory: String,
    pub simulation: String,
    pub sigma: f64,
    pub points: Vec<ComparePoint>,
    pub max_sigmas: f64,
    pub max_abs_difference: f64,
    pub pass: bool,
}

/// Differences below this are treated as exact agreement, so noiseless
/// points (zero standard error) can pass.
const EXACT: f64 = 1e-12;

fn interpolate(curve: &[(f64, f64, f64)], x: f64) -> Option<(f64, f64)> {
    let i = curve.partition_point(|p| p.0 < x);
    if i < curve.len() && (curve[i].0 - x).abs() <= 1e-12 * x.abs().max(1.0) {
        return Some((curve[i].1, curve[i].2));
    }
    if i == 0 || i == curve.len() {
        return None;
    }
    let (a, b) = (curve[i - 1], curve[i]);
    let t = (x - a.0) / (b.0 - a.0);
    Some((a.1 + t * (b.1 - a.1), a.2 + t * (b.2 - a.2)))
}

/// Columns: abscissa, value, optional standard error.
fn read_curve(path: &Path) -> anyhow::Result<Vec<(f64, f64, f64)>> {
    let (_, rows) = read_csv(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v = Vec::with_capacity(rows.len());
    for r in rows {
        if r.len() < 2 {
            bail!("{}: rows need at least two columns", path.display());
        }
        v.push((r[0], r[1], r.get(2).copied().unwrap_or(0.0)));
    }
    if v.windows(2).any(|w| w[1].0 < w[0].0) {
        bail!("{}: abscissa must be non-decreasing", path.display());
    }
    Ok(v)
}

/// Compares a simulated curve against a theory curve interpolated at the
/// simulated abscissae. Errors of both files are combined in quadrature.
pub fn compare(theory: &Path, simulation: &Path, sigma: f64) -> anyhow::Result<CompareReport> {
    if !(sigma > 0.0) {
        bail!("--sigma must be positive");
    }
    let t = read_curve(theory)?;
    let s = read_curve(simulation)?;
    if s.is_empty() {
        bail!("{} has no points", simulation.display());
    }
    let mut points = Vec::with_capacity(s.len());
    for &(x, v, se) in &s {
        let (tv, tse) = interpolate(&t, x)
            .with_context(|| format!("x = {x} lies outside the theory curve {}", theory.display()))?;
        let err = (se * se + tse * tse).sqrt();
        let d = (v - tv).abs();
        let sigmas = if d <= EXACT { 0.0 } else if err > 0.0 { d / err } else { f64::INFINITY };
        points.push(ComparePoint {
            x,
            simulated: v,
            stderr: err,
            theory: tv,
            sigmas,
        });
    }
    let max_sigmas = points.iter().map(|p| p.sigmas).fold(0.0, f64::max);
    let max_abs_difference = points.iter().map(|p| (p.simulated - p.theory).abs()).fold(0.0, f64::max);
    Ok(CompareReport {
        theory: theory.display().to_string(),
        simulation: simulation.display().to_string(),
        sigma,
        points,
        max_sigmas,
        max_abs_difference,
        pass: max_sigmas <= sigma,
    })
}

pub fn print_report(r: &CompareReport) {
    println!("# {} vs {}", r.simulation, r.theory);
    println!("{:>12} {:>14} {:>12} {:>14} {:>8}", "x", "simulated", "stderr", "theory", "sigmas");
    for p in &r.points {
        println!("{:>12.6} {:>14.6e} {:>12.3e} {:>14.6e} {:>8.2}", p.x, p.simulated, p.stderr, p.theory, p.sigmas);
    }
    println!(
        "max |diff| = {:.3e}, max = {:.2} sigma (limit {}): {}",
        r.max_abs_difference,
        r.max_sigmas,
        r.sigma,
        if r.pass { "PASS" } else { "FAIL" }
    );
}

/// Writes each expanded config to `out/<name>.toml`, or prints them when no
/// directory is given.
pub fn preset(name: &str, scale: f64, seed: Option<u64>, out: Option<&Path>) -> anyhow::Result<Vec<presets::NamedConfig>> {
    let configs = presets::expand(name, scale, seed)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            for nc in &configs {
                fs::write(dir.join(format!("{}.toml", nc.name)), nc.config.to_toml())?;
            }
        }
        None => {
            for nc in &configs {
                println!("# {}\n{}", nc.name, nc.config.to_toml());
            }
        }
    }
    Ok(configs)
}

/// Theory, simulation and comparison for every config of a preset, each in
/// `out/<name>/`. Returns whether all comparisons passed.
pub fn run_preset(configs: &[presets::NamedConfig], workers: usize, sigma: f64, out: &Path) -> anyhow::Result<bool> {
    let mut all = true;
    for nc in configs {
        let dir = out.join(&nc.name);
        log::info!("{}: theory", nc.name);
        theory(&nc.config, &dir)?;
        log::info!("{}: simulation with {} media", nc.name, nc.config.run.n_medium);
        simulate(&nc.config, None, workers, &dir)?;
        let suffix = match nc.config.run.regime {
            CurveRegime::Plane => "",
            CurveRegime::C => "_c",
            CurveRegime::Pc => "_pc",
        };
        let report = compare(
            &dir.join(format!("theory_scintillation{suffix}.csv")),
            &dir.join("scintillation.csv"),
            sigma,
        )?;
        print_report(&report);
        write_json(&dir.join("compare.json"), &report)?;
        all &= report.pass;
    }
    Ok(all)
}
