//! Multi-IMU kinematic estimation for flexible manipulators.
//!
//! The crate models a flexible link as a planar chain of rigid segments,
//! recovers joint angles from adjacent IMU pairs using the shared gravity
//! reference, fuses angle and rate measurements with a PI-form complementary
//! filter (gains tunable by particle swarm optimization against a
//! delay/noise/error cost), and compensates the remaining systematic pose
//! error with a small radial-basis-function network. A built-in simulator
//! provides measurements and aligned ground truth for tuning, training, and
//! evaluation.
//!
//! All numeric code is generic over the scalar type via [`Real`]
//! (`f32`/`f64`); public types default to `f64`.

pub mod chain;
pub mod corrector;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod pso;
pub mod real;
pub mod synth;
pub mod tuner;

pub use chain::{
    forward_kinematics, imu_world_position, imu_world_rotation, propagate_imu_kinematics,
    relative_rotation, BaseMotion, ImuKinematics, JointState, Pose2D, SegmentChain,
};
pub use corrector::{
    apply_correction, train_linear_baseline, train_rbf, LinearModel, RbfConfig, RbfModel,
    ResidualSample,
};
pub use dataset::{
    export_dataset, residual_samples, split_indices, split_samples, AlignedDataset, Provenance,
    SplitMode,
};
pub use error::{Error, Result};
pub use estimator::{
    estimate_joint_angle, estimate_joint_rate, estimate_traces, relative_accel_term,
    GyroDifferentiator, JointEstimateTraces, JointEstimator, JointMeasurement,
};
pub use filter::{filter_trace, FilterGains, FilterState, RationalTf, TransferFunctions};
pub use linalg::{Mat3, Vec3};
pub use metrics::{
    compute_metrics, emit_report, pose_metrics, MethodMetrics, MetricsReport, PoseMetrics,
    VariableMetrics,
};
pub use pipeline::{run_estimation, EstimationRun};
pub use pso::{pso_optimize, PsoConfig, PsoResult};
pub use real::{angle_difference, wrap_angle, Real};
pub use synth::{
    derive_seed, simulate, ImuErrorModel, ImuSample, ImuTrace, JointTrajectory, JointTruth,
    Ripple, SimOutput, SimScenario, TipDeflection,
};
pub use tuner::{
    delay_penalty, error_penalty, evaluate_gains, noise_penalty, tune_gains, CostBreakdown,
    CostWeights, TuneOutcome,
};
