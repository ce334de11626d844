use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial averages of one realization at one distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Mean of the (speckle-averaged) intensity over the window.
    pub m1: f64,
    /// Mean of its square.
    pub m2: f64,
    /// `m2` minus the within-medium variance over `M` (equal to `m2` when
    /// `M = 1`).
    pub m2_corrected: f64,
    /// First speckle alone.
    pub m1_single: f64,
    pub m2_single: f64,
    /// `<I(x) I(x + l dx)>_x` for the stored lags.
    pub lag: Vec<f64>,
    pub lag_corrected: Vec<f64>,
    /// Sum over all lags of `lag`, i.e. `nx m1^2`.
    pub lag_total: f64,
    /// `<psi(x + l dx) conj(psi(x))>_x`, averaged over speckles.
    pub field: Vec<Complex64>,
}

impl Observation {
    pub fn is_finite(&self) -> bool {
        self.channels().all(|v| v.is_finite())
    }

    fn channels(&self) -> impl Iterator<Item = f64> + '_ {
        [self.m1, self.m2, self.m2_corrected, self.m1_single, self.m2_single, self.lag_total]
            .into_iter()
            .chain(self.lag.iter().copied())
            .chain(self.lag_corrected.iter().copied())
            .chain(self.field.iter().map(|c| c.re))
            .chain(self.field.iter().map(|c| c.im))
    }
}

/// All observations of one realization, one per output distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub realization: usize,
    pub observations: Vec<Observation>,
}

/// Channel indices within the flattened observation.
const M1: usize = 0;
const M1_SINGLE: usize = 3;
const M2_SINGLE: usize = 4;
const SCALARS: usize = 6;

/// Streaming sums `sum v`, `sum v^2` and `sum v d` per channel, where `d` is
/// the channel's normalizing mean (`m1`, or `m1_single` for the
/// single-speckle channels).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelSums {
    pub count: usize,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub sum_den: Vec<f64>,
}

impl ChannelSums {
    fn add(&mut self, obs: &Observation) {
        let values: Vec<f64> = obs.channels().collect();
        if self.sum.is_empty() {
            self.sum = vec![0.0; values.len()];
            self.sum_sq = vec![0.0; values.len()];
            self.sum_den = vec![0.0; values.len()];
        }
        for (i, v) in values.iter().enumerate() {
            let d = if i == M1_SINGLE || i == M2_SINGLE { values[M1_SINGLE] } else { values[M1] };
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
            self.sum_den[i] += v * d;
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &ChannelSums) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
            self.sum_den[i] += other.sum_den[i];
        }
        self.count += other.count;
    }

    fn den_index(i: usize) -> usize {
        if i == M1_SINGLE || i == M2_SINGLE {
            M1_SINGLE
        } else {
            M1
        }
    }

    /// Mean of channel `i` and its standard error.
    pub fn mean(&self, i: usize) -> (f64, f64) {
        let n = self.count as f64;
        let m = self.sum[i] / n;
        let var = if self.count > 1 { ((self.sum_sq[i] - n * m * m) / (n - 1.0)).max(0.0) } else { f64::NAN };
        (m, (var / n).sqrt())
    }

    /// `mean(a) / mean(d)^2 - 1` with a delta-method standard error, `d`
    /// being the channel's normalizing mean.
    pub fn normalized(&self, i: usize) -> (f64, f64) {
        let d = Self::den_index(i);
        let n = self.count as f64;
        let a = self.sum[i] / n;
        let b = self.sum[d] / n;
        let value = a / (b * b) - 1.0;
        if self.count < 2 {
            return (value, f64::NAN);
        }
        let var_a = (self.sum_sq[i] - n * a * a) / (n - 1.0);
        let var_b = (self.sum_sq[d] - n * b * b) / (n - 1.0);
        let cov = (self.sum_den[i] - n * a * b) / (n - 1.0);
        let g1 = 1.0 / (b * b);
        let g2 = -2.0 * a / (b * b * b);
        let var = (g1 * g1 * var_a + g2 * g2 * var_b + 2.0 * g1 * g2 * cov).max(0.0);
        (value, (var / n).sqrt())
    }
}

/// Channel layout helpers for an observation with `lags + 1` intensity lags
/// and `field + 1` field lags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub lags: usize,
    pub field: usize,
}

impl Layout {
    pub const M1: usize = M1;
    pub const M2: usize = 1;
    pub const M2_CORRECTED: usize = 2;
    pub const M1_SINGLE: usize = M1_SINGLE;
    pub const M2_SINGLE: usize = M2_SINGLE;
    pub const LAG_TOTAL: usize = 5;

    pub fn lag(&self, l: usize) -> usize {
        SCALARS + l
    }

    pub fn lag_corrected(&self, l: usize) -> usize {
        SCALARS + self.lags + 1 + l
    }

    pub fn field_re(&self, l: usize) -> usize {
        SCALARS + 2 * (self.lags + 1) + l
    }

    pub fn field_im(&self, l: usize) -> usize {
        SCALARS + 2 * (self.lags + 1) + self.field + 1 + l
    }
}

/// Per-distance sums over realizations, folded in realization order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub per_z: Vec<ChannelSums>,
    pub dropped: Vec<usize>,
}

impl Accumulator {
    pub fn add(&mut self, record: &Record) {
        if self.per_z.len() < record.observations.len() {
            self.per_z.resize(record.observations.len(), ChannelSums::default());
        }
        for (s, o) in self.per_z.iter_mut().zip(&record.observations) {
            s.add(o);
        }
    }

    /// `self` followed by `other`. Floating-point sums depend on the order
    /// of merges, so callers fix it.
    pub fn merge(mut self, other: &Accumulator) -> Accumulator {
        if self.per_z.len() < other.per_z.len() {
            self.per_z.resize(other.per_z.len(), ChannelSums::default());
        }
        for (s, o) in self.per_z.iter_mut().zip(&other.per_z) {
            s.merge(o);
        }
        self.dropped.extend_from_slice(&other.dropped);
        self
    }

    pub fn realizations(&self) -> usize {
        self.per_z.first().map_or(0, |s| s.count)
    }
}

/// Outcome of one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Kept(Record),
    Dropped { realization: usize, reason: String },
}

/// Largest tolerated fraction of dropped realizations.
pub const MAX_DROP_FRACTION: f64 = 0.01;

/// Folds outcomes in the given order, applying the drop policy: dropped
/// realizations are logged and skipped, and more than 1% of drops aborts.
pub fn accumulate(outcomes: &[Outcome]) -> Result<Accumulator> {
    let mut acc = Accumulator::default();
    for o in outcomes {
        match o {
            Outcome::Kept(r) => acc.add(r),
            Outcome::Dropped { realization, reason } => {
                log::warn!("realization {realization} dropped: {reason}");
                acc.dropped.push(*realization);
            }
        }
    }
    let total = outcomes.len();
    if acc.dropped.len() as f64 > MAX_DROP_FRACTION * total as f64 {
        return Err(Error::TooManyDrops {
            dropped: acc.dropped.len(),
            total,
        });
    }
    if acc.realizations() == 0 {
        return Err(Error::InsufficientData("no realization survived".into()));
    }
    Ok(acc)
}
