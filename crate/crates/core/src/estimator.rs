//! Gravity-referenced joint-angle and joint-rate recovery from adjacent IMU
//! pairs.
//!
//! For each joint, the previous IMU's specific force and the distal IMU's
//! specific force (corrected by the relative acceleration between the two
//! mounting points) differ by exactly the joint's x-rotation; the angle is
//! recovered with atan2 from the y/z components, and the rate is the
//! x-component of the relative angular velocity. Angular accelerations,
//! which the relative-acceleration term needs, are produced by a causal
//! backward difference of the gyro signal followed by a two-sample moving
//! average — the dominant noise source of the raw estimate, absorbed
//! downstream by the complementary filter.

use serde::{Deserialize, Serialize};

use crate::chain::{relative_rotation, SegmentChain};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::real::Real;
use crate::synth::{ImuSample, ImuTrace};

/// Raw per-joint measurement derived from one IMU pair at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMeasurement<T = f64> {
    pub theta_meas: T,
    pub theta_dot_meas: T,
    /// Magnitude of the atan2 operand pair; near zero the gravity reference
    /// carries no information (free fall) and the angle is unusable.
    pub quality: T,
}

/// Quality threshold below which the angle solve is declared degenerate.
pub const DEGENERATE_QUALITY: f64 = 1e-3;

/// Causal angular-acceleration estimator for one IMU: backward difference at
/// the sample period, then a two-sample moving average.
#[derive(Debug, Clone)]
pub struct GyroDifferentiator<T = f64> {
    sample_period: T,
    prev_gyro: Option<Vec3<T>>,
    prev_diff: Vec3<T>,
}

impl<T: Real> GyroDifferentiator<T> {
    pub fn new(sample_period: T) -> Self {
        Self {
            sample_period,
            prev_gyro: None,
            prev_diff: Vec3::zero(),
        }
    }

    /// Feeds one gyro sample and returns the smoothed rate derivative.
    /// The first call returns zero (no history yet).
    pub fn next(&mut self, gyro: Vec3<T>) -> Vec3<T> {
        let diff = match self.prev_gyro {
            Some(prev) => (gyro - prev).scale(T::one() / self.sample_period),
            None => Vec3::zero(),
        };
        let smoothed = (diff + self.prev_diff).scale(T::of(0.5));
        self.prev_gyro = Some(gyro);
        self.prev_diff = diff;
        smoothed
    }
}

/// Acceleration of the distal IMU point relative to the previous IMU point,
/// from angular rates/accelerations and the constant mounting vectors:
/// Euler + centripetal terms of the distal mount minus those of the previous
/// mount, each written in its own body frame.
pub fn relative_accel_term<T: Real>(
    r_prev: Vec3<T>,
    r_curr: Vec3<T>,
    omega_prev: Vec3<T>,
    omega_curr: Vec3<T>,
    omega_dot_prev: Vec3<T>,
    omega_dot_curr: Vec3<T>,
) -> Vec3<T> {
    let curr = omega_dot_curr.cross(r_curr) + omega_curr.cross(omega_curr.cross(r_curr));
    let prev = omega_dot_prev.cross(r_prev) + omega_prev.cross(omega_prev.cross(r_prev));
    curr - prev
}

/// Joint angle from the gravity-bearing specific forces of an IMU pair.
///
/// `accel_curr` is the distal IMU reading, `rel_accel` the relative
/// acceleration of the distal mounting point. Returns the angle and the
/// operand magnitude (`quality`); fails when both effective accelerations
/// vanish and the solve degenerates to 0/0.
pub fn estimate_joint_angle<T: Real>(
    accel_prev: Vec3<T>,
    accel_curr: Vec3<T>,
    rel_accel: Vec3<T>,
) -> Result<(T, T)> {
    if !accel_prev.is_finite() || !accel_curr.is_finite() || !rel_accel.is_finite() {
        return Err(Error::NonFinite {
            what: "joint angle inputs".into(),
        });
    }
    let u = accel_curr - rel_accel;
    let v = accel_prev;
    let a = v.z * u.y - v.y * u.z;
    let b = v.y * u.y + v.z * u.z;
    let quality = a.hypot(b);
    if quality < T::of(DEGENERATE_QUALITY) {
        return Err(Error::DegenerateGeometry {
            quality: quality.as_f64(),
        });
    }
    Ok((a.atan2(b), quality))
}

/// Joint angular rate: x-component of the relative angular velocity
/// `omega_curr - R(theta)^T omega_prev`.
pub fn estimate_joint_rate<T: Real>(gyro_prev: Vec3<T>, gyro_curr: Vec3<T>, theta: T) -> T {
    let rel = gyro_curr - relative_rotation(theta).transpose_mul_vec(gyro_prev);
    rel.x
}

/// Streaming estimator holding one differentiator per IMU and the last
/// accepted angle per joint for the gyro-integration fallback.
#[derive(Debug, Clone)]
pub struct JointEstimator<T = f64> {
    chain: SegmentChain<T>,
    sample_period: T,
    differentiators: Vec<GyroDifferentiator<T>>,
    last_theta: Vec<T>,
}

impl<T: Real> JointEstimator<T> {
    pub fn new(chain: SegmentChain<T>, sample_period: T) -> Result<Self> {
        if !(sample_period > T::zero()) || !sample_period.is_finite() {
            return Err(Error::InvalidArgument(
                "sample period must be positive and finite".into(),
            ));
        }
        let differentiators = (0..chain.imu_count())
            .map(|_| GyroDifferentiator::new(sample_period))
            .collect();
        let last_theta = vec![T::zero(); chain.segment_count()];
        Ok(Self {
            chain,
            sample_period,
            differentiators,
            last_theta,
        })
    }

    /// Processes one aligned set of IMU samples (one per IMU, base first).
    ///
    /// A degenerate gravity reference falls back to integrating the joint
    /// rate from the last accepted angle.
    pub fn process(&mut self, samples: &[ImuSample<T>]) -> Result<Vec<JointMeasurement<T>>> {
        if samples.len() != self.chain.imu_count() {
            return Err(Error::LengthMismatch {
                what: "imu samples",
                expected: self.chain.imu_count(),
                got: samples.len(),
            });
        }
        let omega_dots: Vec<Vec3<T>> = samples
            .iter()
            .zip(self.differentiators.iter_mut())
            .map(|(s, d)| d.next(s.gyro))
            .collect();

        let mut out = Vec::with_capacity(self.chain.segment_count());
        for j in 0..self.chain.segment_count() {
            let (r_prev, r_curr) = self.chain.joint_mount_vectors(j);
            let prev = &samples[j];
            let curr = &samples[j + 1];
            let rel = relative_accel_term(
                r_prev,
                r_curr,
                prev.gyro,
                curr.gyro,
                omega_dots[j],
                omega_dots[j + 1],
            );
            let (theta, quality) = match estimate_joint_angle(prev.accel, curr.accel, rel) {
                Ok(pair) => pair,
                Err(Error::DegenerateGeometry { quality }) => {
                    let rate = estimate_joint_rate(prev.gyro, curr.gyro, self.last_theta[j]);
                    let theta = self.last_theta[j] + rate * self.sample_period;
                    log::debug!(
                        "joint {j}: degenerate gravity reference (|A,B| = {quality:.3e}); \
                         integrating gyro rate"
                    );
                    (theta, T::of(quality))
                }
                Err(e) => return Err(e),
            };
            let theta_dot = estimate_joint_rate(prev.gyro, curr.gyro, theta);
            self.last_theta[j] = theta;
            out.push(JointMeasurement {
                theta_meas: theta,
                theta_dot_meas: theta_dot,
                quality,
            });
        }
        Ok(out)
    }
}

/// Per-joint raw measurement columns over a whole trace set.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimateTraces<T = f64> {
    pub sample_period: T,
    /// `theta_meas[joint][sample]`
    pub theta_meas: Vec<Vec<T>>,
    pub theta_dot_meas: Vec<Vec<T>>,
    pub quality: Vec<Vec<T>>,
}

impl<T: Real> JointEstimateTraces<T> {
    pub fn len(&self) -> usize {
        self.theta_meas.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the streaming estimator over aligned IMU traces.
pub fn estimate_traces<T: Real>(
    chain: &SegmentChain<T>,
    traces: &[ImuTrace<T>],
) -> Result<JointEstimateTraces<T>> {
    if traces.len() != chain.imu_count() {
        return Err(Error::LengthMismatch {
            what: "imu traces",
            expected: chain.imu_count(),
            got: traces.len(),
        });
    }
    let len = traces[0].len();
    if len < 2 {
        return Err(Error::InvalidArgument(
            "need at least two samples per trace".into(),
        ));
    }
    for tr in traces {
        if tr.len() != len {
            return Err(Error::LengthMismatch {
                what: "imu trace length",
                expected: len,
                got: tr.len(),
            });
        }
    }
    let ts = traces[0].samples[1].t - traces[0].samples[0].t;
    let n = chain.segment_count();
    let mut est = JointEstimator::new(chain.clone(), ts)?;
    let mut out = JointEstimateTraces {
        sample_period: ts,
        theta_meas: vec![Vec::with_capacity(len); n],
        theta_dot_meas: vec![Vec::with_capacity(len); n],
        quality: vec![Vec::with_capacity(len); n],
    };
    let mut row = Vec::with_capacity(traces.len());
    for k in 0..len {
        row.clear();
        row.extend(traces.iter().map(|tr| tr.samples[k]));
        let measurements = est.process(&row)?;
        for (j, m) in measurements.iter().enumerate() {
            out.theta_meas[j].push(m.theta_meas);
            out.theta_dot_meas[j].push(m.theta_dot_meas);
            out.quality[j].push(m.quality);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{propagate_imu_kinematics, BaseMotion, JointState};
    use crate::synth::{simulate, ImuErrorModel, JointTrajectory, SimScenario};
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_2;

    #[test]
    fn relative_term_vanishes_at_rest() {
        let r = relative_accel_term(
            Vec3::new(0.0, -0.3, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::zero(),
            Vec3::zero(),
            Vec3::zero(),
            Vec3::zero(),
        );
        assert_abs_diff_eq!(r.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn relative_term_pure_centripetal() {
        let w = 0.7;
        let r = relative_accel_term(
            Vec3::zero(),
            Vec3::new(0.0, 1.25, 0.0),
            Vec3::zero(),
            Vec3::new(w, 0.0, 0.0),
            Vec3::zero(),
            Vec3::zero(),
        );
        assert_abs_diff_eq!(r.y, -w * w * 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.z, 0.0, epsilon = 1e-15);
    }

    fn sim_scenario(n: usize, duration: f64) -> SimScenario<f64> {
        let amps = [0.3, -0.2, 0.15, 0.1];
        let joints = (0..n)
            .map(|j| JointTrajectory {
                amplitude: amps[j % 4],
                omega: 0.9 + 0.3 * j as f64,
                phase: 0.0,
                offset: 0.1 * j as f64 - 0.05,
                rate_offset: 0.0,
            })
            .collect();
        SimScenario {
            joints,
            duration,
            sample_period: 0.001,
            payload_tag: "est-test".into(),
            ripple: None,
        }
    }

    /// True relative acceleration from the simulator's rigid-body route:
    /// distal local acceleration minus the rotated previous one.
    #[test]
    fn relative_term_matches_simulator_truth() {
        let chain = SegmentChain::new(vec![1.2, 0.8], Vec3::from_f64([0.0, 0.0, -9.81])).unwrap();
        let sc = sim_scenario(2, 0.2);
        let out = simulate(&chain, &sc, &vec![ImuErrorModel::ideal(); 3]).unwrap();
        for k in [3usize, 57, 120] {
            let angles: Vec<f64> = (0..2).map(|j| out.gt_joints.angles[j][k]).collect();
            let rates: Vec<f64> = (0..2).map(|j| out.gt_joints.rates[j][k]).collect();
            let accels: Vec<f64> = (0..2).map(|j| out.gt_joints.accels[j][k]).collect();
            let state =
                JointState::new(angles.clone(), rates.clone(), Some(accels.clone())).unwrap();
            let kin = propagate_imu_kinematics(&chain, &state, &BaseMotion::default()).unwrap();

            for j in 0..2 {
                let rot = relative_rotation(angles[j]);
                let truth = kin[j + 1].accel_local
                    - rot.transpose_mul_vec(kin[j].accel_local);

                let cum = |upto: usize, xs: &[f64]| xs.iter().take(upto).sum::<f64>();
                let (r_prev, r_curr) = chain.joint_mount_vectors(j);
                let got = relative_accel_term(
                    r_prev,
                    r_curr,
                    Vec3::new(cum(j, &rates), 0.0, 0.0),
                    Vec3::new(cum(j + 1, &rates), 0.0, 0.0),
                    Vec3::new(cum(j, &accels), 0.0, 0.0),
                    Vec3::new(cum(j + 1, &accels), 0.0, 0.0),
                );
                assert!((got - truth).norm() < 1e-9, "joint {j} sample {k}");
            }
        }
    }

    #[test]
    fn static_aligned_pair_reads_zero_angle() {
        let g = Vec3::new(0.0, 0.0, 9.81);
        let (theta, quality) = estimate_joint_angle(g, g, Vec3::zero()).unwrap();
        assert_abs_diff_eq!(theta, 0.0, epsilon = 1e-15);
        assert!(quality > 0.5);
    }

    #[test]
    fn static_quarter_pitch_reads_right_angle() {
        let prev = Vec3::new(0.0, 0.0, 9.81);
        let curr = relative_rotation(FRAC_PI_2).transpose_mul_vec(prev);
        let (theta, _) = estimate_joint_angle(prev, curr, Vec3::zero()).unwrap();
        assert_abs_diff_eq!(theta, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn free_fall_is_degenerate() {
        let err = estimate_joint_angle::<f64>(Vec3::zero(), Vec3::zero(), Vec3::zero());
        assert!(matches!(err, Err(Error::DegenerateGeometry { .. })));
    }

    #[test]
    fn swapping_the_pair_negates_the_angle() {
        for theta in [-2.3, -0.7, 0.0, 0.4, 1.9] {
            let prev = Vec3::new(0.0, 1.3, 9.5);
            let curr = relative_rotation(theta).transpose_mul_vec(prev);
            let (fwd, _) = estimate_joint_angle(prev, curr, Vec3::zero()).unwrap();
            let (bwd, _) = estimate_joint_angle(curr, prev, Vec3::zero()).unwrap();
            assert_abs_diff_eq!(fwd, theta, epsilon = 1e-12);
            assert_abs_diff_eq!(bwd, -theta, epsilon = 1e-12);
        }
    }

    #[test]
    fn rate_is_exactly_invariant_to_theta() {
        let prev = Vec3::new(0.2, 0.05, -0.01);
        let curr = Vec3::new(0.5, -0.02, 0.03);
        let a: f64 = estimate_joint_rate(prev, curr, 0.4);
        let b: f64 = estimate_joint_rate(prev, curr, 0.4 + 0.123);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_abs_diff_eq!(a, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn rate_of_silent_gyros_is_zero() {
        assert_eq!(estimate_joint_rate::<f64>(Vec3::zero(), Vec3::zero(), 0.7), 0.0);
    }

    #[test]
    fn noise_free_traces_recover_truth() {
        let chain = SegmentChain::<f64>::default_link();
        let sc = SimScenario {
            joints: vec![
                JointTrajectory::sinusoid(0.3, 0.1),
                JointTrajectory::sinusoid(0.2, 0.1),
                JointTrajectory::sinusoid(0.15, 0.1),
                JointTrajectory::sinusoid(0.1, 0.1),
            ],
            duration: 5.0,
            sample_period: 0.001,
            payload_tag: "clean".into(),
            ripple: None,
        };
        let out = simulate(&chain, &sc, &vec![ImuErrorModel::ideal(); 5]).unwrap();
        let est = estimate_traces(&chain, &out.traces).unwrap();
        for j in 0..4 {
            for k in 0..est.len() {
                let angle_err = (est.theta_meas[j][k] - out.gt_joints.angles[j][k]).abs();
                assert!(
                    angle_err < 1e-6,
                    "joint {j} sample {k}: angle error {angle_err:.3e}"
                );
                let rate_err = (est.theta_dot_meas[j][k] - out.gt_joints.rates[j][k]).abs();
                assert!(
                    rate_err < 1e-9,
                    "joint {j} sample {k}: rate error {rate_err:.3e}"
                );
                assert!(est.quality[j][k] > 0.5);
            }
        }
    }

    #[test]
    fn trace_count_mismatch_rejected() {
        let chain = SegmentChain::<f64>::default_link();
        assert!(matches!(
            estimate_traces(&chain, &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
