use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::accumulator::{Accumulator, ChannelSums, Layout};
use super::plan::ExperimentPlan;
use crate::error::{Error, Result};
use crate::io::{write_array, write_csv, write_json, ArrayHeader};
use crate::moments::CurveRegime;

/// Version recorded in manifests; reloading or resuming requires a match.
pub const VERSION: &str = concat!("branchflow-core/", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub z: f64,
    pub z_over_zc: f64,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub x: f64,
    pub x_over_lc: f64,
    pub c: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub z: f64,
    pub z_over_zc: f64,
    pub points: Vec<CorrelationPoint>,
    /// `dx sum C` over every lag of the periodic window.
    pub window_integral: f64,
}

impl CorrelationSeries {
    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.c.abs()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub y: f64,
    pub y_over_lc: f64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSeries {
    pub z: f64,
    pub z_over_zc: f64,
    pub points: Vec<FieldPoint>,
}

impl FieldSeries {
    /// Lag at which `|corr| / |corr(0)|` first falls to `1/e`, by linear
    /// interpolation; `None` if it never does within the stored lags.
    pub fn width(&self) -> Option<f64> {
        let a0 = self.points.first()?.abs;
        let target = a0 * (-1.0f64).exp();
        self.points.windows(2).find_map(|w| {
            (w[0].abs >= target && w[1].abs < target)
                .then(|| w[0].y + (w[0].abs - target) / (w[0].abs - w[1].abs) * (w[1].y - w[0].y))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub root_seed: u64,
    /// How realization `r` draws its randomness.
    pub streams: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub plan: ExperimentPlan,
    pub z_c: f64,
    /// Plane and c: the plain estimator. pc: bias-corrected.
    pub scintillation: Vec<CurvePoint>,
    /// pc only: plug-in estimator without bias correction.
    pub scintillation_plugin: Option<Vec<CurvePoint>>,
    /// pc only: the c estimator from the first speckle of each medium.
    pub scintillation_single: Option<Vec<CurvePoint>>,
    pub mean_intensity: Vec<CurvePoint>,
    pub correlation: Vec<CorrelationSeries>,
    pub correlation_plugin: Option<Vec<CorrelationSeries>>,
    pub field: Vec<FieldSeries>,
    pub realizations: usize,
    pub dropped: Vec<usize>,
    pub provenance: Provenance,
    #[serde(default)]
    pub intensity_map: Option<Vec<Vec<f64>>>,
}

fn curve(
    plan: &ExperimentPlan,
    z_c: f64,
    acc: &Accumulator,
    f: impl Fn(&ChannelSums) -> (f64, f64),
) -> Vec<CurvePoint> {
    plan.outputs
        .iter()
        .zip(&acc.per_z)
        .map(|(&z, s)| {
            let (value, stderr) = f(s);
            CurvePoint {
                z,
                z_over_zc: z / z_c,
                value,
                stderr,
                n: s.count,
            }
        })
        .collect()
}

impl EnsembleResult {
    pub fn from_accumulator(plan: &ExperimentPlan, acc: &Accumulator) -> Result<Self> {
        if acc.per_z.len() != plan.outputs.len() {
            return Err(Error::InsufficientData(format!(
                "{} output distances but {} accumulated",
                plan.outputs.len(),
                acc.per_z.len()
            )));
        }
        let z_c = plan.z_c()?;
        let layout = Layout {
            lags: plan.correlation_lags,
            field: plan.field_lags,
        };
        let ell = plan.medium.ell_c;
        let nx = plan.nx as f64;
        let pc = plan.regime == CurveRegime::Pc;
        let corr_series = |corrected: bool| -> Vec<CorrelationSeries> {
            plan.outputs
                .iter()
                .zip(&acc.per_z)
                .map(|(&z, s)| {
                    let points = (0..=plan.correlation_lags)
                        .map(|l| {
                            let ch = if corrected { layout.lag_corrected(l) } else { layout.lag(l) };
                            let (c, stderr) = s.normalized(ch);
                            let x = l as f64 * plan.dx;
                            CorrelationPoint {
                                x,
                                x_over_lc: x / ell,
                                c,
                                stderr,
                                n: s.count,
                            }
                        })
                        .collect();
                    let b = s.sum[Layout::M1] / s.count as f64;
                    let total = s.sum[Layout::LAG_TOTAL] / s.count as f64;
                    CorrelationSeries {
                        z,
                        z_over_zc: z / z_c,
                        points,
                        window_integral: plan.dx * (total / (b * b) - nx),
                    }
                })
                .collect()
        };
        let field = plan
            .outputs
            .iter()
            .zip(&acc.per_z)
            .map(|(&z, s)| FieldSeries {
                z,
                z_over_zc: z / z_c,
                points: (0..=plan.field_lags)
                    .map(|l| {
                        let (re, se_re) = s.mean(layout.field_re(l));
                        let (im, se_im) = s.mean(layout.field_im(l));
                        let y = l as f64 * plan.dx;
                        FieldPoint {
                            y,
                            y_over_lc: y / ell,
                            re,
                            im,
                            abs: re.hypot(im),
                            stderr: se_re.hypot(se_im),
                            n: s.count,
                        }
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            plan: plan.clone(),
            z_c,
            scintillation: curve(plan, z_c, acc, |s| s.normalized(Layout::M2_CORRECTED)),
            scintillation_plugin: pc.then(|| curve(plan, z_c, acc, |s| s.normalized(Layout::M2))),
            scintillation_single: pc.then(|| curve(plan, z_c, acc, |s| s.normalized(Layout::M2_SINGLE))),
            mean_intensity: curve(plan, z_c, acc, |s| s.mean(Layout::M1)),
            correlation: corr_series(true),
            correlation_plugin: pc.then(|| corr_series(false)),
            field,
            realizations: acc.realizations(),
            dropped: acc.dropped.clone(),
            provenance: Provenance {
                version: VERSION.into(),
                root_seed: plan.root_seed,
                streams: "realization r: ChaCha8(root_seed) stream r; potential substream 0, speckle j substream 1 + j"
                    .into(),
            },
            intensity_map: None,
        })
    }
}

/// Written next to the curves; enough to re-run the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub plan: ExperimentPlan,
    pub z_c: f64,
    pub realizations: usize,
    pub dropped: Vec<usize>,
    pub files: Vec<String>,
    pub elapsed_seconds: Option<f64>,
}

pub const MANIFEST: &str = "manifest.json";
const RESULT: &str = "result.json";

fn curve_rows(points: &[CurvePoint]) -> Vec<Vec<f64>> {
    points.iter().map(|p| vec![p.z_over_zc, p.value, p.stderr, p.n as f64]).collect()
}

fn correlation_rows(s: &CorrelationSeries) -> Vec<Vec<f64>> {
    s.points.iter().map(|p| vec![p.x_over_lc, p.c, p.stderr, p.n as f64]).collect()
}

/// Writes CSV curves, `result.json` and `manifest.json` into `dir`.
pub fn persist(result: &EnsembleResult, dir: &Path, elapsed_seconds: Option<f64>) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, header: &[&str], rows: Vec<Vec<f64>>| -> Result<()> {
        write_csv(&dir.join(&name), header, &rows)?;
        files.push(name);
        Ok(())
    };
    let s_header = ["z_over_zc", "S", "stderr", "n"];
    put("scintillation.csv".into(), &s_header, curve_rows(&result.scintillation))?;
    if let Some(p) = &result.scintillation_plugin {
        put("scintillation_plugin.csv".into(), &s_header, curve_rows(p))?;
    }
    if let Some(p) = &result.scintillation_single {
        put("scintillation_single.csv".into(), &s_header, curve_rows(p))?;
    }
    put(
        "mean_intensity.csv".into(),
        &["z_over_zc", "mean", "stderr", "n"],
        curve_rows(&result.mean_intensity),
    )?;
    let c_header = ["x_over_lc", "C", "stderr", "n"];
    for (i, s) in result.correlation.iter().enumerate() {
        put(format!("correlation_{i:03}.csv"), &c_header, correlation_rows(s))?;
    }
    if let Some(plug) = &result.correlation_plugin {
        for (i, s) in plug.iter().enumerate() {
            put(format!("correlation_plugin_{i:03}.csv"), &c_header, correlation_rows(s))?;
        }
    }
    for (i, s) in result.field.iter().enumerate() {
        let rows = s
            .points
            .iter()
            .map(|p| vec![p.y_over_lc, p.re, p.im, p.abs, p.stderr, p.n as f64])
            .collect();
        put(
            format!("field_{i:03}.csv"),
            &["y_over_lc", "re_corr", "im_corr", "abs_corr", "stderr", "n"],
            rows,
        )?;
    }
    if let Some(map) = &result.intensity_map {
        let cols = map.first().map_or(0, |r| r.len());
        let data = Array2::from_shape_vec((map.len(), cols), map.concat()).map_err(|e| Error::Format(e.to_string()))?;
        let stride = result.plan.map_stride.unwrap_or(1).max(1);
        write_array(
            &dir.join("intensity_map.bin"),
            &data,
            ArrayHeader {
                kind: "intensity_map".into(),
                shape: [0, 0],
                // Output distances need not be uniform; they are listed in the plan.
                steps: [0.0, result.plan.dx * stride as f64],
                origin: [result.plan.outputs.first().copied().unwrap_or(0.0), 0.0],
                dtype: String::new(),
                seed: None,
            },
        )?;
        files.push("intensity_map.bin".into());
    }
    write_json(&dir.join(RESULT), result)?;
    files.push(RESULT.into());
    let manifest = Manifest {
        version: VERSION.into(),
        plan: result.plan.clone(),
        z_c: result.z_c,
        realizations: result.realizations,
        dropped: result.dropped.clone(),
        files,
        elapsed_seconds,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.version != VERSION {
        return Err(Error::ManifestMismatch(format!(
            "{} was written by {}, this is {VERSION}",
            path.display(),
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Loads a persisted result, refusing other versions.
pub fn reload(dir: &Path) -> Result<EnsembleResult> {
    let manifest = read_manifest(&dir.join(MANIFEST))?;
    let result: EnsembleResult = serde_json::from_str(&fs::read_to_string(dir.join(RESULT))?)?;
    if result.plan != manifest.plan {
        return Err(Error::ManifestMismatch("result and manifest disagree on the plan".into()));
    }
    Ok(result)
}

/// Before writing into `dir`: an existing manifest must match `plan` and
/// this version.
pub fn check_resume(dir: &Path, plan: &ExperimentPlan) -> Result<()> {
    let path: PathBuf = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(());
    }
    let manifest = read_manifest(&path)?;
    if &manifest.plan != plan {
        return Err(Error::ManifestMismatch(format!(
            "{} holds a different experiment plan",
            path.display()
        )));
    }
    Ok(())
}
