//! The estimation pipeline: raw joint recovery from IMU traces,
//! complementary filtering per joint, and forward kinematics of both the
//! raw and the filtered joint angles.

use crate::chain::{forward_kinematics, Pose2D, SegmentChain};
use crate::error::{Error, Result};
use crate::estimator::{estimate_traces, JointEstimateTraces};
use crate::filter::{filter_trace, FilterGains};
use crate::real::Real;
use crate::synth::ImuTrace;

/// Everything one estimation pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun<T = f64> {
    pub sample_period: T,
    pub raw: JointEstimateTraces<T>,
    /// Filtered joint angles, `[joint][sample]`.
    pub filtered_joints: Vec<Vec<T>>,
    /// Forward kinematics of the raw joint measurements.
    pub raw_pose: Vec<Pose2D<T>>,
    /// Forward kinematics of the filtered joint angles.
    pub filtered_pose: Vec<Pose2D<T>>,
}

/// Applies the complementary filter to every joint's raw traces.
pub fn filter_joint_traces<T: Real>(
    gains: &FilterGains<T>,
    raw: &JointEstimateTraces<T>,
) -> Result<Vec<Vec<T>>> {
    raw.theta_meas
        .iter()
        .zip(&raw.theta_dot_meas)
        .enumerate()
        .map(|(j, (theta, rate))| {
            filter_trace(gains, theta, rate, raw.sample_period).map_err(|e| match e {
                Error::NonFinite { what } => Error::NonFinite {
                    what: format!("joint {j}: {what}"),
                },
                other => other,
            })
        })
        .collect()
}

/// Forward kinematics of per-joint angle columns, sample by sample.
pub fn poses_from_joint_columns<T: Real>(
    chain: &SegmentChain<T>,
    joints: &[Vec<T>],
) -> Result<Vec<Pose2D<T>>> {
    if joints.len() != chain.segment_count() {
        return Err(Error::LengthMismatch {
            what: "joint columns",
            expected: chain.segment_count(),
            got: joints.len(),
        });
    }
    let n = joints.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(n);
    let mut angles = vec![T::zero(); joints.len()];
    for k in 0..n {
        for (j, col) in joints.iter().enumerate() {
            angles[j] = col[k];
        }
        out.push(forward_kinematics(chain, &angles)?);
    }
    Ok(out)
}

/// Full pass: estimate raw joint measurements from the traces, filter them,
/// and map both through forward kinematics.
pub fn run_estimation<T: Real>(
    chain: &SegmentChain<T>,
    traces: &[ImuTrace<T>],
    gains: &FilterGains<T>,
) -> Result<EstimationRun<T>> {
    let raw = estimate_traces(chain, traces)?;
    let filtered_joints = filter_joint_traces(gains, &raw)?;
    let raw_pose = poses_from_joint_columns(chain, &raw.theta_meas)?;
    let filtered_pose = poses_from_joint_columns(chain, &filtered_joints)?;
    Ok(EstimationRun {
        sample_period: raw.sample_period,
        raw,
        filtered_joints,
        raw_pose,
        filtered_pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use crate::metrics::pose_metrics;
    use crate::synth::{simulate, ImuErrorModel, JointTrajectory, SimScenario};

    fn noisy_models(n: usize, seed: u64) -> Vec<ImuErrorModel<f64>> {
        (0..n)
            .map(|i| ImuErrorModel {
                gyro_bias: Vec3::new(0.001 * i as f64, 0.0, 0.0),
                accel_bias: Vec3::zero(),
                gyro_noise_std: 0.002,
                accel_noise_std: 0.02,
                seed: seed + i as u64,
            })
            .collect()
    }

    fn scenario(duration: f64) -> SimScenario<f64> {
        SimScenario {
            joints: vec![
                JointTrajectory::sinusoid(0.3, 0.2),
                JointTrajectory::sinusoid(0.2, 0.2),
                JointTrajectory::sinusoid(0.15, 0.2),
                JointTrajectory::sinusoid(0.1, 0.2),
            ],
            duration,
            sample_period: 0.001,
            payload_tag: "pipe".into(),
            ripple: None,
        }
    }

    #[test]
    fn filtering_zero_noise_data_never_hurts() {
        let chain = SegmentChain::<f64>::default_link();
        let out = simulate(&chain, &scenario(10.0), &vec![ImuErrorModel::ideal(); 5]).unwrap();
        let run = run_estimation(&chain, &out.traces, &FilterGains::shipped()).unwrap();
        let raw = pose_metrics(&run.raw_pose, &out.gt_pose).unwrap();
        let filt = pose_metrics(&run.filtered_pose, &out.gt_pose).unwrap();
        assert!(
            filt.y.rmse <= raw.y.rmse && filt.z.rmse <= raw.z.rmse,
            "filtered ({:.3e}, {:.3e}) vs raw ({:.3e}, {:.3e})",
            filt.y.rmse,
            filt.z.rmse,
            raw.y.rmse,
            raw.z.rmse
        );
    }

    #[test]
    fn filtering_suppresses_noise() {
        let chain = SegmentChain::<f64>::default_link();
        let out = simulate(&chain, &scenario(20.0), &noisy_models(5, 31)).unwrap();
        let run = run_estimation(&chain, &out.traces, &FilterGains::shipped()).unwrap();
        let raw = pose_metrics(&run.raw_pose, &out.gt_pose).unwrap();
        let filt = pose_metrics(&run.filtered_pose, &out.gt_pose).unwrap();
        assert!(filt.y.rmse < raw.y.rmse);
        assert!(filt.z.rmse < raw.z.rmse);
        assert!(filt.theta.rmse < raw.theta.rmse);
    }
}
