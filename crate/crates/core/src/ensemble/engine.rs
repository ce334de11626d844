use num_complex::Complex64;
use rayon::prelude::*;

use super::accumulator::{accumulate, Accumulator, Observation, Outcome, Record};
use super::plan::ExperimentPlan;
use super::result::{EnsembleResult, FieldSeries};
use crate::error::{Error, Result};
use crate::fft::Fft1;
use crate::moments::CurveRegime;
use crate::paraxial::{FieldPotential, Propagator, StepPlan, WaveState};
use crate::random_fields::{synthesize_potential, synthesize_speckle, RngStream};

/// Circular autocorrelation `out[l] = (1/n) sum_x a(x + l) conj(a(x))` for
/// all lags.
fn autocorrelation(fft: &mut Fft1, a: &[Complex64], out: &mut Vec<Complex64>) {
    out.clear();
    out.extend_from_slice(a);
    fft.forward(out);
    for v in out.iter_mut() {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    fft.inverse(out);
    let n = a.len() as f64;
    for v in out.iter_mut() {
        *v /= n;
    }
}

fn observe(plan: &ExperimentPlan, fft: &mut Fft1, states: &[WaveState]) -> Observation {
    let n = plan.nx;
    let m = states.len() as f64;
    let intensities: Vec<Vec<f64>> = states.iter().map(|s| s.psi.iter().map(|v| v.norm_sqr()).collect()).collect();
    let mean_i: Vec<f64> = (0..n).map(|x| intensities.iter().map(|i| i[x]).sum::<f64>() / m).collect();
    let nf = n as f64;
    let m1 = mean_i.iter().sum::<f64>() / nf;
    let mut buf = Vec::with_capacity(n);
    let to_c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();

    autocorrelation(fft, &to_c(&mean_i), &mut buf);
    let lag_all: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let lag_total = lag_all.iter().sum::<f64>();
    // The lag-0 product directly, so that C(0) and S share their sums.
    let m2 = mean_i.iter().map(|v| v * v).sum::<f64>() / nf;
    let mut lag: Vec<f64> = lag_all[..=plan.correlation_lags].to_vec();
    lag[0] = m2;

    let (m2_corrected, lag_corrected) = if states.len() > 1 {
        // Q(l) = sum_j <I_j(x) I_j(x + l)>_x.
        let mut q = vec![0.0; plan.correlation_lags + 1];
        for i in &intensities {
            autocorrelation(fft, &to_c(i), &mut buf);
            for (ql, b) in q.iter_mut().zip(&buf) {
                *ql += b.re;
            }
        }
        q[0] = intensities.iter().map(|i| i.iter().map(|v| v * v).sum::<f64>() / nf).sum();
        let corr: Vec<f64> =
            lag.iter().zip(&q).map(|(p, q)| p - (q - m * p) / (m * (m - 1.0))).collect();
        (corr[0], corr)
    } else {
        (m2, lag.clone())
    };

    let first = &intensities[0];
    let m1_single = first.iter().sum::<f64>() / nf;
    let m2_single = first.iter().map(|v| v * v).sum::<f64>() / nf;

    let mut field = vec![Complex64::new(0.0, 0.0); plan.field_lags + 1];
    for s in states {
        autocorrelation(fft, &s.psi, &mut buf);
        for (f, b) in field.iter_mut().zip(&buf) {
            *f += b / m;
        }
    }
    Observation {
        m1,
        m2,
        m2_corrected,
        m1_single,
        m2_single,
        lag,
        lag_corrected,
        lag_total,
        field,
    }
}

/// Observations of realization `r`, plus the first speckle's intensity rows
/// when a map is requested.
pub fn run_realization(plan: &ExperimentPlan, r: usize) -> Result<(Record, Option<Vec<Vec<f64>>>)> {
    let grid = plan.grid()?;
    let stream = RngStream::new(plan.root_seed, r as u64);
    let field = synthesize_potential(plan.potential_grid(), &plan.medium, stream.potential())?;
    let initial: Vec<WaveState> = (0..plan.m_source)
        .map(|j| {
            synthesize_speckle(plan.nx, plan.dx, &plan.source, stream.speckle(j as u64))
                .map(|s| WaveState::new(s.values))
        })
        .collect::<Result<_>>()?;
    let mut sampler = FieldPotential::new(&field);
    let mut fft = Fft1::new(plan.nx);
    let mut observations = Vec::with_capacity(plan.outputs.len());
    let keep_map = plan.map_stride.filter(|_| r == 0);
    let mut map = keep_map.map(|_| Vec::new());
    Propagator::new(grid, plan.alpha)?.run_batch(
        initial,
        &mut sampler,
        &StepPlan::strang(plan.dz, plan.outputs.clone()),
        |states| {
            let obs = observe(plan, &mut fft, states);
            if !obs.is_finite() {
                return Err(Error::NumericalFailure {
                    step: (states[0].z / plan.dz).round() as usize,
                    z: states[0].z,
                    detail: "non-finite statistics".into(),
                });
            }
            observations.push(obs);
            if let (Some(stride), Some(rows)) = (keep_map, map.as_mut()) {
                rows.push(states[0].psi.iter().step_by(stride.max(1)).map(|v| v.norm_sqr()).collect());
            }
            Ok(())
        },
    )?;
    Ok((
        Record {
            realization: r,
            observations,
        },
        map,
    ))
}

pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Outcomes of realizations `range`, in index order. Numerical failures
/// become drops; any other error aborts.
pub fn run_outcomes(
    plan: &ExperimentPlan,
    range: std::ops::Range<usize>,
    workers: usize,
) -> Result<(Vec<Outcome>, Option<Vec<Vec<f64>>>)> {
    plan.validate()?;
    let results: Vec<Result<(Outcome, Option<Vec<Vec<f64>>>)>> = with_workers(workers, || {
        range
            .into_par_iter()
            .map(|r| match run_realization(plan, r) {
                Ok((rec, map)) => Ok((Outcome::Kept(rec), map)),
                Err(Error::NumericalFailure { step, z, detail }) => Ok((
                    Outcome::Dropped {
                        realization: r,
                        reason: format!("step {step}, z = {z}: {detail}"),
                    },
                    None,
                )),
                Err(e) => Err(e),
            })
            .collect()
    })?;
    let mut outcomes = Vec::with_capacity(results.len());
    let mut map = None;
    for res in results {
        let (o, m) = res?;
        if m.is_some() {
            map = m;
        }
        outcomes.push(o);
    }
    Ok((outcomes, map))
}

/// Runs the plan for any regime.
pub fn run_experiment(plan: &ExperimentPlan, workers: usize) -> Result<EnsembleResult> {
    let start = std::time::Instant::now();
    let (outcomes, map) = run_outcomes(plan, 0..plan.n_medium, workers)?;
    let acc: Accumulator = accumulate(&outcomes)?;
    let mut result = EnsembleResult::from_accumulator(plan, &acc)?;
    result.intensity_map = map;
    log::info!(
        "{} regime: {} realizations in {:.1} s",
        plan.regime.name(),
        result.realizations,
        start.elapsed().as_secs_f64()
    );
    Ok(result)
}

fn require(plan: &ExperimentPlan, regime: CurveRegime) -> Result<()> {
    if plan.regime != regime {
        return Err(Error::InvalidParameter(format!(
            "plan regime is {}, expected {}",
            plan.regime.name(),
            regime.name()
        )));
    }
    Ok(())
}

pub fn run_coherent_plane(plan: &ExperimentPlan, workers: usize) -> Result<EnsembleResult> {
    require(plan, CurveRegime::Plane)?;
    run_experiment(plan, workers)
}

pub fn run_speckle_c(plan: &ExperimentPlan, workers: usize) -> Result<EnsembleResult> {
    require(plan, CurveRegime::C)?;
    run_experiment(plan, workers)
}

pub fn run_speckle_pc(plan: &ExperimentPlan, workers: usize) -> Result<EnsembleResult> {
    require(plan, CurveRegime::Pc)?;
    run_experiment(plan, workers)
}

/// Field-correlation curves of the plan at its output distances.
pub fn field_correlation(plan: &ExperimentPlan, workers: usize) -> Result<Vec<FieldSeries>> {
    Ok(run_experiment(plan, workers)?.field)
}
