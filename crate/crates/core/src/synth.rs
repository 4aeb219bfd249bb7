//! Synthetic flexible-link motion and IMU measurement generation.
//!
//! A rigid chain is driven by prescribed joint trajectories (sinusoid plus
//! optional constant-rate ramp and a high-frequency ripple emulating link
//! flexibility). True per-IMU kinematics come from the rigid-body
//! propagation; measurements add the sensor error model
//! `gyro = omega + b_w + n_w`, `accel = a - R^T g + b_a + n_a`
//! with i.i.d. Gaussian noise from a per-IMU seeded generator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chain::{
    forward_kinematics, imu_world_rotation, propagate_imu_kinematics, BaseMotion, JointState,
    Pose2D, SegmentChain,
};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::real::Real;

/// Constant-bias plus white-noise sensor error model for one IMU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuErrorModel<T = f64> {
    pub gyro_bias: Vec3<T>,
    pub accel_bias: Vec3<T>,
    pub gyro_noise_std: T,
    pub accel_noise_std: T,
    pub seed: u64,
}

impl<T: Real> ImuErrorModel<T> {
    /// All error terms zero.
    pub fn ideal() -> Self {
        Self {
            gyro_bias: Vec3::zero(),
            accel_bias: Vec3::zero(),
            gyro_noise_std: T::zero(),
            accel_noise_std: T::zero(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.gyro_noise_std < T::zero() || self.accel_noise_std < T::zero() {
            return Err(Error::InvalidArgument(
                "noise standard deviations must be non-negative".into(),
            ));
        }
        if !self.gyro_bias.is_finite() || !self.accel_bias.is_finite() {
            return Err(Error::NonFinite {
                what: "imu bias".into(),
            });
        }
        Ok(())
    }
}

/// One timestamped IMU reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample<T = f64> {
    pub t: T,
    pub gyro: Vec3<T>,
    pub accel: Vec3<T>,
}

/// Time-ordered readings of a single IMU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuTrace<T = f64> {
    pub imu_id: usize,
    pub samples: Vec<ImuSample<T>>,
}

impl<T: Real> ImuTrace<T> {
    pub fn new(imu_id: usize, samples: Vec<ImuSample<T>>) -> Result<Self> {
        for pair in samples.windows(2) {
            if !(pair[1].t > pair[0].t) {
                return Err(Error::InvalidArgument(format!(
                    "imu {imu_id}: timestamps must be strictly increasing"
                )));
            }
        }
        if samples
            .iter()
            .any(|s| !s.t.is_finite() || !s.gyro.is_finite() || !s.accel.is_finite())
        {
            return Err(Error::NonFinite {
                what: format!("imu {imu_id} trace"),
            });
        }
        Ok(Self { imu_id, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Prescribed motion of one joint:
/// `theta(t) = offset + rate_offset*t + amplitude*sin(omega*t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory<T = f64> {
    pub amplitude: T,
    pub omega: T,
    pub phase: T,
    pub offset: T,
    pub rate_offset: T,
}

impl<T: Real> JointTrajectory<T> {
    pub fn sinusoid(amplitude: T, omega: T) -> Self {
        Self {
            amplitude,
            omega,
            phase: T::zero(),
            offset: T::zero(),
            rate_offset: T::zero(),
        }
    }

    fn sample(&self, t: T) -> (T, T, T) {
        let arg = self.omega * t + self.phase;
        let (s, c) = arg.sin_cos();
        let angle = self.offset + self.rate_offset * t + self.amplitude * s;
        let rate = self.rate_offset + self.amplitude * self.omega * c;
        let accel = -self.amplitude * self.omega * self.omega * s;
        (angle, rate, accel)
    }
}

/// Small high-frequency angle perturbation on every joint, emulating
/// flexibility of the physical link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ripple<T = f64> {
    pub amplitude: T,
    pub frequency_hz: T,
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario<T = f64> {
    pub joints: Vec<JointTrajectory<T>>,
    pub duration: T,
    pub sample_period: T,
    pub payload_tag: String,
    pub ripple: Option<Ripple<T>>,
}

impl<T: Real> SimScenario<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_period > T::zero()) || !self.sample_period.is_finite() {
            return Err(Error::InvalidArgument(
                "sample period must be positive and finite".into(),
            ));
        }
        if self.duration < self.sample_period * T::of(10.0) {
            return Err(Error::InvalidArgument(
                "duration must be at least 10 sample periods".into(),
            ));
        }
        if self.joints.is_empty() {
            return Err(Error::InvalidArgument(
                "scenario needs at least one joint trajectory".into(),
            ));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.sample_period).round().as_f64() as usize
    }

    /// Joint angle, rate, and acceleration of joint `j` at time `t`,
    /// including the ripple term.
    pub fn joint_motion(&self, j: usize, t: T) -> (T, T, T) {
        let (mut angle, mut rate, mut accel) = self.joints[j].sample(t);
        if let Some(r) = self.ripple {
            // golden-angle phase offset decorrelates the joints
            let w = T::of(core::f64::consts::TAU) * r.frequency_hz;
            let phase = T::of(2.399_963_229_728_653) * T::from_usize(j).expect("joint index");
            let (s, c) = (w * t + phase).sin_cos();
            angle += r.amplitude * s;
            rate += r.amplitude * w * c;
            accel -= r.amplitude * w * w * s;
        }
        (angle, rate, accel)
    }
}

/// Per-joint ground-truth motion columns, one inner vector per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTruth<T = f64> {
    pub angles: Vec<Vec<T>>,
    pub rates: Vec<Vec<T>>,
    pub accels: Vec<Vec<T>>,
}

/// Everything `simulate` produces: measured traces plus aligned ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput<T = f64> {
    pub sample_period: T,
    pub traces: Vec<ImuTrace<T>>,
    pub gt_pose: Vec<Pose2D<T>>,
    pub gt_joints: JointTruth<T>,
}

fn gaussian<T: Real>(rng: &mut ChaCha8Rng, std: T) -> Vec3<T> {
    let mut draw = || T::of(rng.sample::<f64, _>(StandardNormal));
    Vec3::new(draw() * std, draw() * std, draw() * std)
}

/// Simulates the chain through `scenario` and synthesizes measurements for
/// all `n + 1` IMUs (one error model each). Ground truth is sampled at the
/// same instants. Identical inputs and seeds give bit-identical output.
pub fn simulate<T: Real>(
    chain: &SegmentChain<T>,
    scenario: &SimScenario<T>,
    errors: &[ImuErrorModel<T>],
) -> Result<SimOutput<T>> {
    scenario.validate()?;
    let n = chain.segment_count();
    if scenario.joints.len() != n {
        return Err(Error::LengthMismatch {
            what: "joint trajectories",
            expected: n,
            got: scenario.joints.len(),
        });
    }
    if errors.len() != chain.imu_count() {
        return Err(Error::LengthMismatch {
            what: "imu error models",
            expected: chain.imu_count(),
            got: errors.len(),
        });
    }
    for e in errors {
        e.validate()?;
    }

    let steps = scenario.sample_count();
    let ts = scenario.sample_period;
    let base = BaseMotion::default();
    let gravity = chain.gravity();

    let mut rngs: Vec<ChaCha8Rng> = errors
        .iter()
        .map(|e| ChaCha8Rng::seed_from_u64(e.seed))
        .collect();
    let mut samples: Vec<Vec<ImuSample<T>>> = vec![Vec::with_capacity(steps); chain.imu_count()];
    let mut gt_pose = Vec::with_capacity(steps);
    let mut gt_joints = JointTruth {
        angles: vec![Vec::with_capacity(steps); n],
        rates: vec![Vec::with_capacity(steps); n],
        accels: vec![Vec::with_capacity(steps); n],
    };

    for k in 0..steps {
        let t = T::from_usize(k).expect("sample index") * ts;
        let mut angles = Vec::with_capacity(n);
        let mut rates = Vec::with_capacity(n);
        let mut accels = Vec::with_capacity(n);
        for j in 0..n {
            let (a, r, al) = scenario.joint_motion(j, t);
            angles.push(a);
            rates.push(r);
            accels.push(al);
        }
        let state = JointState::new(angles, rates, Some(accels))?;
        let kin = propagate_imu_kinematics(chain, &state, &base)?;

        for (i, k_i) in kin.iter().enumerate() {
            let rot = imu_world_rotation(base.angle, &state.angles, i);
            let model = &errors[i];
            let rng = &mut rngs[i];
            let gyro =
                k_i.omega_local + model.gyro_bias + gaussian(rng, model.gyro_noise_std);
            let accel = k_i.accel_local - rot.transpose_mul_vec(gravity)
                + model.accel_bias
                + gaussian(rng, model.accel_noise_std);
            samples[i].push(ImuSample { t, gyro, accel });
        }

        gt_pose.push(forward_kinematics(chain, &state.angles)?);
        for j in 0..n {
            gt_joints.angles[j].push(state.angles[j]);
            gt_joints.rates[j].push(state.rates[j]);
            gt_joints.accels[j].push(state.accels.as_ref().expect("populated")[j]);
        }
    }

    let traces = samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| ImuTrace::new(i, s))
        .collect::<Result<Vec<_>>>()?;

    Ok(SimOutput {
        sample_period: ts,
        traces,
        gt_pose,
        gt_joints,
    })
}

/// Rigid tip extension whose droop angle depends on the carrying segment's
/// absolute orientation: `delta = droop + droop_gain * cos(theta)`.
///
/// Applying this to a ground-truth pose trace models a link whose true
/// end-effector lies beyond the last sensed frame — a structured,
/// pose-dependent mismatch between the sensed chain and the real tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipDeflection<T = f64> {
    pub length: T,
    pub droop: T,
    pub droop_gain: T,
}

impl<T: Real> TipDeflection<T> {
    pub fn apply(&self, pose: Pose2D<T>) -> Pose2D<T> {
        let delta = self.droop + self.droop_gain * pose.theta.cos();
        let tip_angle = pose.theta + delta;
        let (s, c) = tip_angle.sin_cos();
        Pose2D::new(
            pose.y + self.length * c,
            pose.z + self.length * s,
            tip_angle,
        )
    }

    pub fn apply_trace(&self, poses: &mut [Pose2D<T>]) {
        for p in poses.iter_mut() {
            *p = self.apply(*p);
        }
    }
}

/// SplitMix64 step, used to derive per-stage and per-IMU seeds from a master
/// seed so that independent streams never alias.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E3779B97F4A7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_joint_chain() -> SegmentChain<f64> {
        SegmentChain::new(vec![1.0], Vec3::from_f64([0.0, 0.0, -9.81])).unwrap()
    }

    fn scenario(joints: Vec<JointTrajectory<f64>>, duration: f64) -> SimScenario<f64> {
        SimScenario {
            joints,
            duration,
            sample_period: 0.001,
            payload_tag: "test".into(),
            ripple: None,
        }
    }

    #[test]
    fn static_chain_reads_rotated_gravity() {
        let chain = SegmentChain::<f64>::default_link();
        let mut traj = Vec::new();
        for offset in [0.4, -0.2, 0.1, 0.3] {
            traj.push(JointTrajectory {
                amplitude: 0.0,
                omega: 0.1,
                phase: 0.0,
                offset,
                rate_offset: 0.0,
            });
        }
        let out = simulate(
            &chain,
            &scenario(traj, 0.05),
            &vec![ImuErrorModel::ideal(); 5],
        )
        .unwrap();
        for trace in &out.traces {
            for s in &trace.samples {
                assert_abs_diff_eq!(s.gyro.norm(), 0.0, epsilon = 1e-15);
                assert_abs_diff_eq!(s.accel.norm(), 9.81, epsilon = 1e-12);
            }
        }
        // the base IMU sits at zero base angle: -R^T g = (0, 0, +9.81)
        let s0 = &out.traces[0].samples[0];
        assert_abs_diff_eq!(s0.accel.z, 9.81, epsilon = 1e-12);
    }

    #[test]
    fn zero_gravity_constant_rate_gyro_reads_rate() {
        let chain = one_joint_chain().with_gravity_override(Vec3::zero());
        let traj = JointTrajectory {
            amplitude: 0.0,
            omega: 1.0,
            phase: 0.0,
            offset: 0.0,
            rate_offset: 0.25,
        };
        let out = simulate(
            &chain,
            &scenario(vec![traj], 0.1),
            &vec![ImuErrorModel::ideal(); 2],
        )
        .unwrap();
        for s in &out.traces[1].samples {
            assert_eq!(s.gyro.x, 0.25);
            assert_eq!(s.gyro.y, 0.0);
            assert_eq!(s.gyro.z, 0.0);
        }
    }

    #[test]
    fn identical_seeds_give_bit_identical_traces() {
        let chain = one_joint_chain();
        let errors = vec![
            ImuErrorModel {
                gyro_bias: Vec3::from_f64([0.01, 0.0, -0.002]),
                accel_bias: Vec3::from_f64([0.0, 0.05, 0.0]),
                gyro_noise_std: 0.002,
                accel_noise_std: 0.02,
                seed: 7,
            };
            2
        ];
        let sc = scenario(vec![JointTrajectory::sinusoid(0.3, 0.5)], 0.2);
        let a = simulate(&chain, &sc, &errors).unwrap();
        let b = simulate(&chain, &sc, &errors).unwrap();
        for (ta, tb) in a.traces.iter().zip(&b.traces) {
            for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
                assert_eq!(sa.gyro.x.to_bits(), sb.gyro.x.to_bits());
                assert_eq!(sa.accel.z.to_bits(), sb.accel.z.to_bits());
            }
        }
    }

    #[test]
    fn sample_mean_converges_to_bias() {
        let chain = one_joint_chain();
        let gyro_bias = 0.01;
        let accel_bias = 0.05;
        let gyro_std = 0.002;
        let accel_std = 0.02;
        let errors = vec![
            ImuErrorModel::ideal(),
            ImuErrorModel {
                gyro_bias: Vec3::new(gyro_bias, 0.0, 0.0),
                accel_bias: Vec3::new(0.0, accel_bias, 0.0),
                gyro_noise_std: gyro_std,
                accel_noise_std: accel_std,
                seed: 99,
            },
        ];
        let sc = scenario(vec![JointTrajectory::sinusoid(0.2, 0.5)], 20.0);
        let noisy = simulate(&chain, &sc, &errors).unwrap();
        let clean = simulate(&chain, &sc, &[ImuErrorModel::ideal(), ImuErrorModel::ideal()])
            .unwrap();

        let n = noisy.traces[1].len() as f64;
        let mut gyro_sum = 0.0;
        let mut accel_sum = 0.0;
        for (s, c) in noisy.traces[1].samples.iter().zip(&clean.traces[1].samples) {
            gyro_sum += s.gyro.x - c.gyro.x;
            accel_sum += s.accel.y - c.accel.y;
        }
        let bound_g = 3.0 * gyro_std / n.sqrt();
        let bound_a = 3.0 * accel_std / n.sqrt();
        assert!((gyro_sum / n - gyro_bias).abs() < bound_g);
        assert!((accel_sum / n - accel_bias).abs() < bound_a);
    }

    #[test]
    fn ground_truth_pose_is_fk_of_ground_truth_joints() {
        let chain = SegmentChain::<f64>::default_link();
        let traj = vec![
            JointTrajectory::sinusoid(0.3, 0.2),
            JointTrajectory::sinusoid(0.15, 0.2),
            JointTrajectory::sinusoid(0.1, 0.2),
            JointTrajectory::sinusoid(0.05, 0.2),
        ];
        let mut sc = scenario(traj, 0.5);
        sc.ripple = Some(Ripple {
            amplitude: 0.002,
            frequency_hz: 8.0,
        });
        let out = simulate(&chain, &sc, &vec![ImuErrorModel::ideal(); 5]).unwrap();
        for (k, pose) in out.gt_pose.iter().enumerate() {
            let angles: Vec<f64> = (0..4).map(|j| out.gt_joints.angles[j][k]).collect();
            let fk = forward_kinematics(&chain, &angles).unwrap();
            assert_eq!(pose.y.to_bits(), fk.y.to_bits());
            assert_eq!(pose.z.to_bits(), fk.z.to_bits());
            assert_eq!(pose.theta.to_bits(), fk.theta.to_bits());
        }
    }

    #[test]
    fn error_model_count_must_match() {
        let chain = one_joint_chain();
        let sc = scenario(vec![JointTrajectory::sinusoid(0.1, 0.5)], 0.1);
        assert!(simulate(&chain, &sc, &[ImuErrorModel::ideal()]).is_err());
    }

    #[test]
    fn tip_deflection_is_a_pure_pose_function() {
        let tip = TipDeflection {
            length: 0.12,
            droop: 0.03,
            droop_gain: 0.06,
        };
        let p = Pose2D::new(4.2, 0.8, 0.25);
        let a = tip.apply(p);
        let b = tip.apply(p);
        assert_eq!(a, b);
        let delta = 0.03 + 0.06 * 0.25f64.cos();
        assert_abs_diff_eq!(a.theta, 0.25 + delta, epsilon = 1e-15);
        assert_abs_diff_eq!(a.y, 4.2 + 0.12 * (0.25 + delta).cos(), epsilon = 1e-15);
    }

    #[test]
    fn derive_seed_spreads_streams() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }
}
