//! Error metrics, evaluation of a table against a dataset, and
//! one-parameter sensitivity sweeps.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::dataset::Dataset;
use crate::math;
use crate::params::{IntTable, ParamFamily};
use crate::sim::{SimError, Simulator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} actuals")]
    LengthMismatch(usize, usize),
    #[error("non-positive actual value {0}")]
    NonPositiveActual(f64),
    #[error("need at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("simulating block {block_id:?}: {source}")]
    Simulation { block_id: String, source: SimError },
    #[error("{parameter} value {value} is out of bounds")]
    OutOfBounds { parameter: &'static str, value: u32 },
    #[error("sweep parameter must be dispatch_width or reorder_buffer_size")]
    NotSweepable,
    #[error("empty dataset")]
    Empty,
}

/// Mean absolute percentage error, as a fraction (1.0 = 100%).
pub fn mape(predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricsError> {
    if predictions.len() != actuals.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), actuals.len()));
    }
    if actuals.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for (&p, &a) in predictions.iter().zip(actuals) {
        if !(a > 0.0) {
            return Err(MetricsError::NonPositiveActual(a));
        }
        total += math::abs(p - a) / a;
    }
    Ok(total / actuals.len() as f64)
}

/// Counts of a pairwise comparison, used by both tau variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub pairs: u64,
    /// Pairs tied on predictions (including joint ties).
    pub ties_pred: u64,
    /// Pairs tied on actuals (including joint ties).
    pub ties_actual: u64,
    pub ties_joint: u64,
    pub discordant: u64,
}

impl PairCounts {
    pub fn concordant(&self) -> u64 {
        self.pairs - self.ties_pred - self.ties_actual + self.ties_joint - self.discordant
    }
}

fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Number of pairs within runs of consecutive equal items.
fn tied_pairs<T>(v: &[T], same: impl Fn(&T, &T) -> bool) -> u64 {
    let mut total = 0;
    let mut start = 0;
    for i in 1..=v.len() {
        if i == v.len() || !same(&v[start], &v[i]) {
            let r = (i - start) as u64;
            total += r * (r - 1) / 2;
            start = i;
        }
    }
    total
}

/// Sorts `v` by the second component, returning the number of inversions.
fn merge_count(v: &mut [(f64, f64)], buf: &mut Vec<(f64, f64)>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if cmp(v[j].1, v[i].1) == Ordering::Less {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Pair statistics in O(n log n) (Knight's algorithm).
pub fn pair_counts(predictions: &[f64], actuals: &[f64]) -> Result<PairCounts, MetricsError> {
    if predictions.len() != actuals.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), actuals.len()));
    }
    let n = predictions.len();
    if n < 2 {
        return Err(MetricsError::TooFewPairs(n));
    }
    let mut v: Vec<(f64, f64)> = predictions.iter().copied().zip(actuals.iter().copied()).collect();
    v.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));
    let ties_pred = tied_pairs(&v, |a, b| cmp(a.0, b.0) == Ordering::Equal);
    let ties_joint = tied_pairs(&v, |a, b| {
        cmp(a.0, b.0) == Ordering::Equal && cmp(a.1, b.1) == Ordering::Equal
    });
    let mut buf = Vec::with_capacity(n);
    let discordant = merge_count(&mut v, &mut buf);
    let ties_actual = tied_pairs(&v, |a, b| cmp(a.1, b.1) == Ordering::Equal);
    Ok(PairCounts {
        pairs: (n as u64) * (n as u64 - 1) / 2,
        ties_pred,
        ties_actual,
        ties_joint,
        discordant,
    })
}

/// Kendall's tau-a: (concordant − discordant) / all pairs; tied pairs count
/// as neither.
pub fn kendall_tau(predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricsError> {
    let c = pair_counts(predictions, actuals)?;
    Ok((c.concordant() as f64 - c.discordant as f64) / c.pairs as f64)
}

/// Kendall's tau-b, which normalizes by the untied pairs of each side.
/// Zero when either side is constant.
pub fn kendall_tau_b(predictions: &[f64], actuals: &[f64]) -> Result<f64, MetricsError> {
    let c = pair_counts(predictions, actuals)?;
    let denom = ((c.pairs - c.ties_pred) as f64) * ((c.pairs - c.ties_actual) as f64);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((c.concordant() as f64 - c.discordant as f64) / math::sqrt(denom))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub predictor: String,
    pub mape: f64,
    pub kendall_tau: f64,
    pub kendall_tau_b: f64,
    pub n: usize,
    pub seed: Option<u64>,
}

/// Simulated timing of every measurement's block under `table`.
pub fn predict_all<S: Simulator + ?Sized>(sim: &S, table: &IntTable, dataset: &Dataset) -> Result<Vec<f64>, MetricsError> {
    dataset
        .examples()
        .map(|(block, _)| {
            sim.simulate(table, block)
                .map(|r| r.cycles_per_iteration)
                .map_err(|source| MetricsError::Simulation {
                    block_id: block.id.clone(),
                    source,
                })
        })
        .collect()
}

/// MAPE and Kendall's tau of the simulator under `table` against the
/// dataset's measurements.
pub fn evaluate<S: Simulator + ?Sized>(
    sim: &S,
    table: &IntTable,
    dataset: &Dataset,
    dataset_name: &str,
    predictor: &str,
) -> Result<EvalReport, MetricsError> {
    let preds = predict_all(sim, table, dataset)?;
    report_from(&preds, dataset, dataset_name, predictor)
}

/// Builds a report from precomputed predictions.
pub fn report_from(preds: &[f64], dataset: &Dataset, dataset_name: &str, predictor: &str) -> Result<EvalReport, MetricsError> {
    let actuals: Vec<f64> = dataset.measurements().iter().map(|m| m.timing).collect();
    let mape = mape(preds, &actuals)?;
    let (kendall_tau, kendall_tau_b) = if actuals.len() >= 2 {
        (kendall_tau(preds, &actuals)?, kendall_tau_b(preds, &actuals)?)
    } else {
        (0.0, 0.0)
    };
    Ok(EvalReport {
        dataset: dataset_name.into(),
        predictor: predictor.into(),
        mape,
        kendall_tau,
        kendall_tau_b,
        n: actuals.len(),
        seed: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub parameter: ParamFamily,
    /// `(value, mape)`, values strictly increasing.
    pub points: Vec<(u32, f64)>,
}

/// MAPE as one global parameter takes each of `values`, everything else
/// fixed. Values are sorted and deduplicated.
pub fn sensitivity_sweep<S: Simulator + ?Sized>(
    sim: &S,
    table: &IntTable,
    dataset: &Dataset,
    parameter: ParamFamily,
    values: &[u32],
) -> Result<SweepResult, MetricsError> {
    if !matches!(parameter, ParamFamily::DispatchWidth | ParamFamily::ReorderBufferSize) {
        return Err(MetricsError::NotSweepable);
    }
    let mut values = values.to_vec();
    values.sort_unstable();
    values.dedup();
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        if v < parameter.lower_bound() {
            return Err(MetricsError::OutOfBounds {
                parameter: parameter.name(),
                value: v,
            });
        }
        let mut t = table.clone();
        match parameter {
            ParamFamily::DispatchWidth => t.dispatch_width = v,
            _ => t.reorder_buffer_size = v,
        }
        let r = evaluate(sim, &t, dataset, "", "")?;
        points.push((v, r.mape));
    }
    Ok(SweepResult { parameter, points })
}
