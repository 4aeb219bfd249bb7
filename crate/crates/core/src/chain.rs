//! Planar rigid-segment chain: geometry, forward kinematics, and rigid-body
//! acceleration propagation.
//!
//! A flexible link is approximated as `n` rigid segments joined by revolute
//! joints about the x-axis, so all motion lives in the y-z plane. Frames are
//! chained as follows: the base frame sits at joint 0; segment `s` spans
//! joint `s` to joint `s+1`, carries a body frame whose orientation is the
//! x-rotation by the accumulated joint angle, and extends along that frame's
//! +y axis. One IMU is attached to the base and one to each segment; mounting
//! vectors are constant in the carrying body's frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::real::{wrap_angle, Real};

/// Geometry of the rigid-segment approximation.
///
/// `imu_mounts[0]` is the base IMU position relative to the base joint,
/// expressed in the base frame. `imu_mounts[k]` for `k >= 1` is the position
/// of the IMU on segment `k-1` relative to that segment's proximal joint,
/// expressed in the segment's body frame. Mounting vectors are constant over
/// time by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentChain<T = f64> {
    lengths: Vec<T>,
    imu_mounts: Vec<Vec3<T>>,
    gravity: Vec3<T>,
}

impl<T: Real> SegmentChain<T> {
    /// Chain with the default IMU placement: base IMU at the base joint,
    /// each segment IMU at the segment's distal end.
    pub fn new(lengths: Vec<T>, gravity: Vec3<T>) -> Result<Self> {
        let mut mounts = Vec::with_capacity(lengths.len() + 1);
        mounts.push(Vec3::zero());
        for &l in &lengths {
            mounts.push(Vec3::new(T::zero(), l, T::zero()));
        }
        Self::with_imu_mounts(lengths, mounts, gravity)
    }

    /// Chain with explicit IMU mounting vectors (`n + 1` of them).
    pub fn with_imu_mounts(
        lengths: Vec<T>,
        imu_mounts: Vec<Vec3<T>>,
        gravity: Vec3<T>,
    ) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidArgument(
                "chain needs at least one segment".into(),
            ));
        }
        if lengths.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidArgument(
                "segment lengths must be strictly positive and finite".into(),
            ));
        }
        if imu_mounts.len() != lengths.len() + 1 {
            return Err(Error::LengthMismatch {
                what: "imu mounting vectors",
                expected: lengths.len() + 1,
                got: imu_mounts.len(),
            });
        }
        if imu_mounts.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument(
                "imu mounting vectors must be finite".into(),
            ));
        }
        let g = gravity.norm().as_f64();
        if !(9.0..=10.5).contains(&g) {
            return Err(Error::InvalidArgument(format!(
                "gravity magnitude {g:.3} outside [9.0, 10.5] m/s^2; \
                 use with_gravity_override for non-terrestrial setups"
            )));
        }
        Ok(Self {
            lengths,
            imu_mounts,
            gravity,
        })
    }

    /// Default chain: four equal 1.125 m segments (4.5 m total), standard
    /// gravity, endpoint IMU mounting.
    pub fn default_link() -> Self {
        let l = T::of(1.125);
        Self::new(vec![l; 4], Vec3::from_f64([0.0, 0.0, -9.81])).expect("valid default chain")
    }

    /// Replaces gravity without the magnitude check (zero-g tests and the
    /// like).
    pub fn with_gravity_override(mut self, gravity: Vec3<T>) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn segment_count(&self) -> usize {
        self.lengths.len()
    }

    pub fn imu_count(&self) -> usize {
        self.lengths.len() + 1
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn imu_mounts(&self) -> &[Vec3<T>] {
        &self.imu_mounts
    }

    pub fn gravity(&self) -> Vec3<T> {
        self.gravity
    }

    pub fn total_length(&self) -> T {
        self.lengths.iter().fold(T::zero(), |acc, &l| acc + l)
    }

    /// Mounting vectors entering the relative-acceleration term of joint `j`
    /// (0-based): the previous IMU relative to the joint in the previous
    /// body's frame, and the distal IMU relative to the joint in the distal
    /// body's frame.
    pub fn joint_mount_vectors(&self, joint: usize) -> (Vec3<T>, Vec3<T>) {
        let r_curr = self.imu_mounts[joint + 1];
        let r_prev = if joint == 0 {
            self.imu_mounts[0]
        } else {
            self.imu_mounts[joint] - Vec3::new(T::zero(), self.lengths[joint - 1], T::zero())
        };
        (r_prev, r_curr)
    }
}

/// Joint-space state of the chain at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState<T = f64> {
    /// Joint angles, wrapped to `(-pi, pi]`.
    pub angles: Vec<T>,
    /// Joint angular rates.
    pub rates: Vec<T>,
    /// Joint angular accelerations, when known.
    pub accels: Option<Vec<T>>,
}

impl<T: Real> JointState<T> {
    pub fn new(angles: Vec<T>, rates: Vec<T>, accels: Option<Vec<T>>) -> Result<Self> {
        if rates.len() != angles.len() {
            return Err(Error::LengthMismatch {
                what: "joint rates",
                expected: angles.len(),
                got: rates.len(),
            });
        }
        if let Some(a) = &accels {
            if a.len() != angles.len() {
                return Err(Error::LengthMismatch {
                    what: "joint accelerations",
                    expected: angles.len(),
                    got: a.len(),
                });
            }
        }
        Ok(Self {
            angles: angles.into_iter().map(wrap_angle).collect(),
            rates,
            accels,
        })
    }
}

/// End-effector position and orientation in the y-z plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D<T = f64> {
    pub y: T,
    pub z: T,
    pub theta: T,
}

impl<T: Real> Pose2D<T> {
    /// Builds a pose, wrapping the orientation to `(-pi, pi]`.
    pub fn new(y: T, z: T, theta: T) -> Self {
        Self {
            y,
            z,
            theta: wrap_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.z.is_finite() && self.theta.is_finite()
    }
}

/// End-effector pose from joint angles:
/// `y = sum l_i cos(phi_i)`, `z = sum l_i sin(phi_i)`, `theta = sum theta_i`,
/// with `phi_i` the accumulated angle of segment `i`.
pub fn forward_kinematics<T: Real>(chain: &SegmentChain<T>, angles: &[T]) -> Result<Pose2D<T>> {
    if angles.len() != chain.segment_count() {
        return Err(Error::LengthMismatch {
            what: "joint angles",
            expected: chain.segment_count(),
            got: angles.len(),
        });
    }
    let mut y = T::zero();
    let mut z = T::zero();
    let mut phi = T::zero();
    for (&l, &theta) in chain.lengths().iter().zip(angles) {
        phi += theta;
        let (s, c) = phi.sin_cos();
        y += l * c;
        z += l * s;
    }
    Ok(Pose2D::new(y, z, phi))
}

/// Rotation of a distal frame relative to its proximal neighbour: a pure
/// x-axis rotation by the joint angle.
pub fn relative_rotation<T: Real>(theta: T) -> Mat3<T> {
    Mat3::rot_x(theta)
}

/// Motion of the base frame (world frame of joint 0). Defaults to rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseMotion<T = f64> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    pub acceleration: Vec3<T>,
    /// Base orientation about the x-axis.
    pub angle: T,
    pub rate: T,
    pub angular_accel: T,
}

impl<T: Real> Default for BaseMotion<T> {
    fn default() -> Self {
        Self {
            position: Vec3::zero(),
            velocity: Vec3::zero(),
            acceleration: Vec3::zero(),
            angle: T::zero(),
            rate: T::zero(),
            angular_accel: T::zero(),
        }
    }
}

impl<T: Real> BaseMotion<T> {
    pub fn is_finite(&self) -> bool {
        self.position.is_finite()
            && self.velocity.is_finite()
            && self.acceleration.is_finite()
            && self.angle.is_finite()
            && self.rate.is_finite()
            && self.angular_accel.is_finite()
    }
}

/// True kinematics of one IMU frame, expressed in that frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuKinematics<T = f64> {
    /// Instantaneous linear acceleration of the IMU point (gravity-free).
    pub accel_local: Vec3<T>,
    /// Angular velocity of the carrying body.
    pub omega_local: Vec3<T>,
}

fn x_axis<T: Real>() -> Vec3<T> {
    Vec3::new(T::one(), T::zero(), T::zero())
}

/// Euler + centripetal acceleration of a point at constant body-frame offset
/// `r` on a body spinning about x with rate `omega` and acceleration `alpha`,
/// expressed in the body frame.
fn rigid_point_accel<T: Real>(omega: T, alpha: T, r: Vec3<T>) -> Vec3<T> {
    let w = x_axis::<T>().scale(omega);
    let a = x_axis::<T>().scale(alpha);
    a.cross(r) + w.cross(w.cross(r))
}

/// Propagates base motion and joint-space state outward along the chain,
/// returning each IMU's local-frame acceleration and angular velocity.
///
/// Per IMU the acceleration is the carried acceleration of the proximal
/// joint plus the Euler and centripetal terms of the constant mounting
/// offset. Gravity is not included here; it enters only the measurement
/// model.
pub fn propagate_imu_kinematics<T: Real>(
    chain: &SegmentChain<T>,
    state: &JointState<T>,
    base: &BaseMotion<T>,
) -> Result<Vec<ImuKinematics<T>>> {
    let n = chain.segment_count();
    if state.angles.len() != n {
        return Err(Error::LengthMismatch {
            what: "joint angles",
            expected: n,
            got: state.angles.len(),
        });
    }
    let accels = state.accels.as_ref().ok_or_else(|| {
        Error::InvalidArgument("propagation needs joint accelerations".into())
    })?;
    if !base.is_finite() {
        return Err(Error::NonFinite {
            what: "base motion".into(),
        });
    }

    let mut out = Vec::with_capacity(chain.imu_count());

    // Base IMU: carried base acceleration plus rigid-body terms of its mount.
    let r_base = Mat3::rot_x(base.angle);
    let base_local = r_base.transpose_mul_vec(base.acceleration)
        + rigid_point_accel(base.rate, base.angular_accel, chain.imu_mounts()[0]);
    out.push(ImuKinematics {
        accel_local: base_local,
        omega_local: x_axis::<T>().scale(base.rate),
    });

    // Walk outward, carrying the world-frame acceleration of each joint.
    let mut phi = base.angle;
    let mut omega = base.rate;
    let mut alpha = base.angular_accel;
    let mut joint_accel_world = base.acceleration;
    for s in 0..n {
        phi += state.angles[s];
        omega += state.rates[s];
        alpha += accels[s];
        let rot = Mat3::rot_x(phi);

        let mount = chain.imu_mounts()[s + 1];
        let local = rot.transpose_mul_vec(joint_accel_world)
            + rigid_point_accel(omega, alpha, mount);
        out.push(ImuKinematics {
            accel_local: local,
            omega_local: x_axis::<T>().scale(omega),
        });

        let link = Vec3::new(T::zero(), chain.lengths()[s], T::zero());
        joint_accel_world =
            joint_accel_world + rot.mul_vec(rigid_point_accel(omega, alpha, link));
    }
    Ok(out)
}

/// World-frame rotation of the body carrying IMU `imu` (base for `imu = 0`).
pub fn imu_world_rotation<T: Real>(base_angle: T, angles: &[T], imu: usize) -> Mat3<T> {
    let mut phi = base_angle;
    for &a in angles.iter().take(imu) {
        phi += a;
    }
    Mat3::rot_x(phi)
}

/// World-frame position of IMU `imu` for the given configuration; pure
/// geometry, independent of the acceleration propagation above.
pub fn imu_world_position<T: Real>(
    chain: &SegmentChain<T>,
    base: &BaseMotion<T>,
    angles: &[T],
    imu: usize,
) -> Result<Vec3<T>> {
    if angles.len() != chain.segment_count() {
        return Err(Error::LengthMismatch {
            what: "joint angles",
            expected: chain.segment_count(),
            got: angles.len(),
        });
    }
    if imu >= chain.imu_count() {
        return Err(Error::InvalidArgument(format!(
            "imu index {imu} out of range ({} imus)",
            chain.imu_count()
        )));
    }
    if imu == 0 {
        let r = Mat3::rot_x(base.angle);
        return Ok(base.position + r.mul_vec(chain.imu_mounts()[0]));
    }
    let mut phi = base.angle;
    let mut joint = base.position;
    for s in 0..imu - 1 {
        phi += angles[s];
        let rot = Mat3::rot_x(phi);
        joint = joint + rot.mul_vec(Vec3::new(T::zero(), chain.lengths()[s], T::zero()));
    }
    phi += angles[imu - 1];
    let rot = Mat3::rot_x(phi);
    Ok(joint + rot.mul_vec(chain.imu_mounts()[imu]))
}
