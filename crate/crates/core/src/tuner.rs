//! Filter-gain scoring and tuning.
//!
//! A gain candidate is scored on a ground-truth-aligned dataset by three
//! penalties: peak-location delay of the vertical position, high-frequency
//! content of the position increment (noise), and integrated Euclidean
//! tracking error. The score `J` is the negated penalty sum; tuning
//! minimizes the penalty sum (equivalently maximizes `J`) with PSO over the
//! bounded gain box, warm-started at the shipped gains so the tuned result
//! never scores worse than them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::chain::{Pose2D, SegmentChain};
use crate::dataset::AlignedDataset;
use crate::error::{Error, Result};
use crate::estimator::{estimate_traces, JointEstimateTraces};
use crate::filter::FilterGains;
use crate::pipeline::{filter_joint_traces, poses_from_joint_columns};
use crate::pso::{pso_optimize, PsoConfig, PsoResult};
use crate::real::Real;

/// Penalty weights and shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights<T = f64> {
    pub k_delay: T,
    pub k_noise: T,
    pub k_error: T,
    /// First-order high-pass cutoff applied inside the noise penalty.
    pub hpf_cutoff_hz: T,
    /// Sliding peak-buffer length in samples for the delay penalty.
    pub peak_buffer: usize,
}

impl<T: Real> Default for CostWeights<T> {
    fn default() -> Self {
        Self {
            k_delay: T::of(200.0),
            k_noise: T::of(5.0e6),
            k_error: T::of(1.0),
            hpf_cutoff_hz: T::of(5.0),
            peak_buffer: 1000,
        }
    }
}

/// Score decomposition for one gain candidate. Each penalty is
/// non-negative; `total_j` is their negated sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<T = f64> {
    pub delay_penalty: T,
    pub noise_penalty: T,
    pub error_penalty: T,
    pub total_j: T,
}

impl<T: Real> CostBreakdown<T> {
    fn from_penalties(delay: T, noise: T, error: T) -> Self {
        Self {
            delay_penalty: delay,
            noise_penalty: noise,
            error_penalty: error,
            total_j: -(delay + noise + error),
        }
    }

    pub fn penalty_sum(&self) -> T {
        self.delay_penalty + self.noise_penalty + self.error_penalty
    }
}

/// A window is "flat" (carries no peak) when its range is below this.
const FLAT_WINDOW_RANGE: f64 = 1e-6;

/// Sliding-window extrema tracker: monotone deques give the index of the
/// first maximum and the window's value range in O(1) amortized per push.
struct WindowExtrema {
    window: usize,
    maxq: VecDeque<usize>,
    minq: VecDeque<usize>,
}

impl WindowExtrema {
    fn new(window: usize) -> Self {
        Self {
            window,
            maxq: VecDeque::new(),
            minq: VecDeque::new(),
        }
    }

    fn push<T: Real>(&mut self, k: usize, values: &[T]) {
        while self
            .maxq
            .back()
            .is_some_and(|&b| values[b] < values[k])
        {
            self.maxq.pop_back();
        }
        self.maxq.push_back(k);
        while self
            .minq
            .back()
            .is_some_and(|&b| values[b] > values[k])
        {
            self.minq.pop_back();
        }
        self.minq.push_back(k);
        let cutoff = k + 1 - self.window.min(k + 1);
        while self.maxq.front().is_some_and(|&f| f < cutoff) {
            self.maxq.pop_front();
        }
        while self.minq.front().is_some_and(|&f| f < cutoff) {
            self.minq.pop_front();
        }
    }

    fn argmax(&self) -> usize {
        *self.maxq.front().expect("non-empty window")
    }

    fn range<T: Real>(&self, values: &[T]) -> T {
        values[self.argmax()] - values[*self.minq.front().expect("non-empty window")]
    }
}

/// Temporal-misalignment penalty: per sample, the distance in samples
/// between the peak locations of the estimated and true traces inside a
/// trailing buffer of `peak_buffer` samples, times the sample period,
/// summed and scaled by `k_delay`. Flat windows contribute nothing.
pub fn delay_penalty<T: Real>(
    est: &[T],
    gt: &[T],
    weights: &CostWeights<T>,
    sample_period: T,
) -> Result<T> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "delay traces",
            expected: gt.len(),
            got: est.len(),
        });
    }
    let w = weights.peak_buffer;
    if w == 0 || est.len() < w {
        return Err(Error::InvalidArgument(format!(
            "trace of {} samples shorter than the {w}-sample peak buffer",
            est.len()
        )));
    }
    let flat = T::of(FLAT_WINDOW_RANGE);
    let mut est_win = WindowExtrema::new(w);
    let mut gt_win = WindowExtrema::new(w);
    let mut mismatch_samples = T::zero();
    for k in 0..est.len() {
        est_win.push(k, est);
        gt_win.push(k, gt);
        if k + 1 < w {
            continue;
        }
        if est_win.range(est) < flat || gt_win.range(gt) < flat {
            continue;
        }
        let d = est_win.argmax().abs_diff(gt_win.argmax());
        mismatch_samples += T::from_usize(d).expect("sample distance");
    }
    Ok(weights.k_delay * sample_period * mismatch_samples)
}

/// High-frequency-content penalty of the planar position magnitude:
/// first difference of `sqrt(y^2 + z^2)`, first-order high-pass at the
/// configured cutoff, absolute value integrated at the sample period and
/// scaled by `k_noise`. Traces shorter than two samples score zero.
pub fn noise_penalty<T: Real>(
    est_y: &[T],
    est_z: &[T],
    weights: &CostWeights<T>,
    sample_period: T,
) -> T {
    let n = est_y.len().min(est_z.len());
    if n < 2 {
        return T::zero();
    }
    let rc = T::one() / (T::of(core::f64::consts::TAU) * weights.hpf_cutoff_hz);
    let alpha = rc / (rc + sample_period);
    let p = |k: usize| est_y[k].hypot(est_z[k]);
    let mut prev_p = p(0);
    let mut prev_dp: Option<T> = None;
    let mut hp = T::zero();
    let mut acc = T::zero();
    for k in 1..n {
        let cur = p(k);
        let dp = cur - prev_p;
        prev_p = cur;
        if let Some(x_prev) = prev_dp {
            hp = alpha * (hp + dp - x_prev);
        }
        prev_dp = Some(dp);
        acc += hp.abs();
    }
    weights.k_noise * acc * sample_period
}

/// Integrated Euclidean distance between estimated and true planar
/// positions, rectangle rule at the sample period, scaled by `k_error`.
pub fn error_penalty<T: Real>(
    est: &[Pose2D<T>],
    gt: &[Pose2D<T>],
    weights: &CostWeights<T>,
    sample_period: T,
) -> Result<T> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "error traces",
            expected: gt.len(),
            got: est.len(),
        });
    }
    let mut acc = T::zero();
    for (e, g) in est.iter().zip(gt) {
        acc += (e.y - g.y).hypot(e.z - g.z);
    }
    Ok(weights.k_error * acc * sample_period)
}

/// Scores a gain candidate against already-computed raw joint measurements.
pub fn evaluate_prepared<T: Real>(
    gains: &FilterGains<T>,
    raw: &JointEstimateTraces<T>,
    chain: &SegmentChain<T>,
    gt_pose: &[Pose2D<T>],
    weights: &CostWeights<T>,
) -> Result<CostBreakdown<T>> {
    let ts = raw.sample_period;
    let filtered = filter_joint_traces(gains, raw)?;
    let poses = poses_from_joint_columns(chain, &filtered)?;
    let est_z: Vec<T> = poses.iter().map(|p| p.z).collect();
    let gt_z: Vec<T> = gt_pose.iter().map(|p| p.z).collect();
    let est_y: Vec<T> = poses.iter().map(|p| p.y).collect();
    let delay = delay_penalty(&est_z, &gt_z, weights, ts)?;
    let noise = noise_penalty(&est_y, &est_z, weights, ts);
    let error = error_penalty(&poses, gt_pose, weights, ts)?;
    Ok(CostBreakdown::from_penalties(delay, noise, error))
}

/// Runs the full estimation pipeline on the dataset at the given gains and
/// scores the result. Pure in its inputs: identical calls produce identical
/// breakdowns.
pub fn evaluate_gains<T: Real>(
    gains: &FilterGains<T>,
    dataset: &AlignedDataset<T>,
    chain: &SegmentChain<T>,
    weights: &CostWeights<T>,
) -> Result<CostBreakdown<T>> {
    let raw = estimate_traces(chain, &dataset.imu_traces)?;
    evaluate_prepared(gains, &raw, chain, &dataset.gt_pose, weights)
}

/// Tuning outcome: best gains, their score, and the optimizer trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome<T = f64> {
    pub gains: FilterGains<T>,
    pub breakdown: CostBreakdown<T>,
    /// Best penalty sum after initialization and after each iteration.
    pub convergence: Vec<T>,
    pub evaluations: usize,
}

/// Optimizes `(k_p, k_i)` on the dataset with PSO.
///
/// Raw joint measurements are computed once and shared by every candidate.
/// When the config carries no warm starts, the shipped gains are injected
/// as one, which guarantees the tuned score never exceeds theirs.
pub fn tune_gains<T: Real>(
    dataset: &AlignedDataset<T>,
    chain: &SegmentChain<T>,
    weights: &CostWeights<T>,
    pso: &PsoConfig<T>,
) -> Result<TuneOutcome<T>> {
    if pso.bounds.len() != 2 {
        return Err(Error::InvalidArgument(
            "gain tuning needs exactly two bounded dimensions (k_p, k_i)".into(),
        ));
    }
    let raw = estimate_traces(chain, &dataset.imu_traces)?;
    let mut config = pso.clone();
    if config.initial_guesses.is_empty() {
        let shipped = FilterGains::<T>::shipped();
        config.initial_guesses = vec![vec![shipped.k_p, shipped.k_i]];
    }
    let gt = &dataset.gt_pose;
    let objective = |x: &[T]| -> T {
        let Ok(gains) = FilterGains::new(x[0], x[1]) else {
            return T::infinity();
        };
        match evaluate_prepared(&gains, &raw, chain, gt, weights) {
            Ok(b) => b.penalty_sum(),
            Err(_) => T::infinity(),
        }
    };
    let PsoResult {
        best_position,
        convergence,
        evaluations,
        ..
    } = pso_optimize(&config, objective)?;
    let gains = FilterGains::new(best_position[0], best_position[1])?;
    let breakdown = evaluate_prepared(&gains, &raw, chain, gt, weights)?;
    Ok(TuneOutcome {
        gains,
        breakdown,
        convergence,
        evaluations,
    })
}
