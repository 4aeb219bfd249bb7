//! Residual pose correction: learns the systematic gap between estimated
//! and true end-effector states as a function of the estimate itself.
//!
//! Two models are provided: a Gaussian radial-basis-function network trained
//! by greedy forward center selection with ridge-regularized weight refits,
//! and an ordinary-least-squares affine baseline. Ground truth is consumed
//! only by the trainers; prediction and correction never see it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::Pose2D;
use crate::error::{Error, Result};
use crate::real::{angle_difference, Real};

/// One training pair: estimated state and the residual toward ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample<T = f64> {
    /// `(y_hat, z_hat, theta_hat)`
    pub x_hat: [T; 3],
    /// `(dy, dz, dtheta)` with the angle residual wrapped
    pub delta: [T; 3],
}

impl<T: Real> ResidualSample<T> {
    pub fn from_poses(estimate: Pose2D<T>, truth: Pose2D<T>) -> Self {
        Self {
            x_hat: [estimate.y, estimate.z, estimate.theta],
            delta: [
                truth.y - estimate.y,
                truth.z - estimate.z,
                angle_difference(truth.theta, estimate.theta),
            ],
        }
    }
}

/// Per-dimension z-score normalization fitted on the training inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T = f64> {
    pub mean: [T; 3],
    pub std: [T; 3],
}

impl<T: Real> Normalization<T> {
    fn fit(samples: &[ResidualSample<T>]) -> Result<Self> {
        let n = T::from_usize(samples.len()).expect("sample count");
        let mut mean = [T::zero(); 3];
        for s in samples {
            for d in 0..3 {
                mean[d] += s.x_hat[d];
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        let mut var = [T::zero(); 3];
        for s in samples {
            for d in 0..3 {
                let e = s.x_hat[d] - mean[d];
                var[d] += e * e;
            }
        }
        let floor = T::of(1e-12);
        let mut std = [T::zero(); 3];
        let mut all_flat = true;
        for d in 0..3 {
            let s = (var[d] / n).sqrt();
            if s > floor {
                all_flat = false;
                std[d] = s;
            } else {
                // constant input dimension carries no information; leave it
                // unscaled rather than dividing by ~0
                std[d] = T::one();
            }
        }
        if all_flat {
            return Err(Error::Training(
                "zero variance in all input dimensions".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: [T; 3]) -> [T; 3] {
        [
            (x[0] - self.mean[0]) / self.std[0],
            (x[1] - self.mean[1]) / self.std[1],
            (x[2] - self.mean[2]) / self.std[2],
        ]
    }
}

/// Training configuration for [`train_rbf`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig<T = f64> {
    /// Stop once the training MSE (mean squared residual per component)
    /// drops to this level.
    pub mse_goal: T,
    pub max_neurons: usize,
    /// Shared kernel width in normalized input space; `None` selects the
    /// median pairwise distance of the training inputs.
    pub sigma: Option<T>,
    /// Upper bound on the number of candidate centers considered per step
    /// (an evenly strided subsample of the training inputs).
    pub candidate_pool: usize,
    /// Ridge term on the weight refits.
    pub ridge: T,
}

impl<T: Real> Default for RbfConfig<T> {
    fn default() -> Self {
        Self {
            mse_goal: T::zero(),
            max_neurons: 10,
            sigma: None,
            candidate_pool: 256,
            ridge: T::of(1e-8),
        }
    }
}

/// Training record kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfMetadata<T = f64> {
    pub neuron_count: usize,
    /// Root-mean-square training residual per output component.
    pub training_rmse: [T; 3],
    /// Training MSE after 0, 1, ... neurons.
    pub training_mse_trajectory: Vec<T>,
    /// SHA-256 over the training samples.
    pub dataset_hash: String,
}

/// Trained RBF network mapping estimated pose to a residual correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel<T = f64> {
    /// Centers in normalized input space.
    pub centers: Vec<[T; 3]>,
    /// Shared Gaussian width.
    pub sigma: T,
    /// Output weights, one 3-vector per neuron.
    pub weights: Vec<[T; 3]>,
    pub normalization: Normalization<T>,
    pub metadata: RbfMetadata<T>,
}

impl<T: Real> RbfModel<T> {
    /// Predicted correction `(dy, dz, dtheta)` for an estimated pose.
    /// Far from every center the prediction decays to zero.
    pub fn predict(&self, x_hat: Pose2D<T>) -> [T; 3] {
        let x = self.normalization.apply([x_hat.y, x_hat.z, x_hat.theta]);
        let inv = T::one() / (T::of(2.0) * self.sigma * self.sigma);
        let mut out = [T::zero(); 3];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let mut d2 = T::zero();
            for d in 0..3 {
                let e = x[d] - c[d];
                d2 += e * e;
            }
            let phi = (-d2 * inv).exp();
            for d in 0..3 {
                out[d] += w[d] * phi;
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

/// Affine baseline `delta ~ matrix * x_hat + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T = f64> {
    pub matrix: [[T; 3]; 3],
    pub offset: [T; 3],
}

impl<T: Real> LinearModel<T> {
    pub fn predict(&self, x_hat: Pose2D<T>) -> [T; 3] {
        let x = [x_hat.y, x_hat.z, x_hat.theta];
        let mut out = self.offset;
        for (o, row) in out.iter_mut().zip(&self.matrix) {
            for d in 0..3 {
                *o += row[d] * x[d];
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}

fn save_json<M: Serialize>(model: &M, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, model)
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_json<M: for<'de> Deserialize<'de>>(path: &Path) -> Result<M> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))
}

/// Adds a predicted correction to an estimated pose (orientation wrapped).
pub fn apply_correction<T: Real>(x_hat: Pose2D<T>, delta: [T; 3]) -> Pose2D<T> {
    Pose2D::new(x_hat.y + delta[0], x_hat.z + delta[1], x_hat.theta + delta[2])
}

fn validate_training_samples<T: Real>(samples: &[ResidualSample<T>], min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(Error::Training(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    let bound = T::one();
    for (i, s) in samples.iter().enumerate() {
        let finite = s.x_hat.iter().chain(&s.delta).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Training(format!("sample {i} is not finite")));
        }
        if s.delta.iter().any(|d| d.abs() >= bound) {
            return Err(Error::Training(format!(
                "sample {i}: residual magnitude exceeds the 1 m / 1 rad sanity bound"
            )));
        }
    }
    Ok(())
}

fn hash_samples<T: Real>(samples: &[ResidualSample<T>]) -> String {
    let mut hasher = Sha256::new();
    for s in samples {
        for v in s.x_hat.iter().chain(&s.delta) {
            hasher.update(v.as_f64().to_le_bits_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use core::fmt::Write as _;
        let _ = write!(out, "{b:02x}");
    }
    out
}

trait LeBits {
    fn to_le_bits_bytes(self) -> [u8; 8];
}

impl LeBits for f64 {
    fn to_le_bits_bytes(self) -> [u8; 8] {
        self.to_bits().to_le_bytes()
    }
}

fn median_pairwise_distance<T: Real>(points: &[[T; 3]]) -> T {
    let stride = (points.len() / 256).max(1);
    let sub: Vec<&[T; 3]> = points.iter().step_by(stride).take(256).collect();
    let mut dists = Vec::with_capacity(sub.len() * (sub.len() - 1) / 2);
    for i in 0..sub.len() {
        for j in i + 1..sub.len() {
            let mut d2 = T::zero();
            for d in 0..3 {
                let e = sub[i][d] - sub[j][d];
                d2 += e * e;
            }
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return T::one();
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let m = dists[dists.len() / 2];
    if m > T::of(1e-9) {
        m
    } else {
        T::one()
    }
}

fn kernel_column<T: Real>(inputs: &[[T; 3]], center: &[T; 3], sigma: T) -> Vec<T> {
    let inv = T::one() / (T::of(2.0) * sigma * sigma);
    inputs
        .iter()
        .map(|x| {
            let mut d2 = T::zero();
            for d in 0..3 {
                let e = x[d] - center[d];
                d2 += e * e;
            }
            (-d2 * inv).exp()
        })
        .collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn mse_of<T: Real>(residual: &[[T; 3]]) -> T {
    let mut acc = T::zero();
    for r in residual {
        acc += r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    }
    acc / (T::of(3.0) * T::from_usize(residual.len()).expect("samples"))
}

/// Trains the RBF corrector by incremental greedy center selection.
///
/// Each step scores every candidate center (an evenly strided pool of
/// training inputs) by the training-error reduction of its component
/// orthogonal to the already selected kernel columns, adds the best one,
/// and refits all output weights by ridge-regularized least squares. Stops
/// at `mse_goal` or `max_neurons`.
pub fn train_rbf<T: Real>(
    samples: &[ResidualSample<T>],
    config: &RbfConfig<T>,
) -> Result<RbfModel<T>> {
    validate_training_samples(samples, 2)?;
    if config.max_neurons == 0 {
        return Err(Error::Training("max_neurons must be at least 1".into()));
    }
    let normalization = Normalization::fit(samples)?;
    let inputs: Vec<[T; 3]> = samples
        .iter()
        .map(|s| normalization.apply(s.x_hat))
        .collect();
    let targets: Vec<[T; 3]> = samples.iter().map(|s| s.delta).collect();
    let n = inputs.len();

    let sigma = match config.sigma {
        Some(s) if s > T::zero() => s,
        Some(_) => return Err(Error::Training("sigma must be positive".into())),
        None => median_pairwise_distance(&inputs),
    };

    let stride = n.div_ceil(config.candidate_pool.max(1)).max(1);
    let candidates: Vec<usize> = (0..n).step_by(stride).collect();

    let mut residual = targets.clone();
    let mut mse = mse_of(&residual);
    let mut trajectory = vec![mse];
    let mut selected: Vec<usize> = Vec::new();
    let mut columns: Vec<Vec<T>> = Vec::new();
    let mut ortho: Vec<Vec<T>> = Vec::new();
    let mut weights: Vec<[T; 3]> = Vec::new();

    while selected.len() < config.max_neurons && mse > config.mse_goal {
        let mut best: Option<(usize, T, Vec<T>)> = None;
        for &c in &candidates {
            if selected.contains(&c) {
                continue;
            }
            let col = kernel_column(&inputs, &inputs[c], sigma);
            let mut q = col.clone();
            for basis in &ortho {
                let proj = dot(basis, &col);
                for (qi, bi) in q.iter_mut().zip(basis) {
                    *qi -= proj * *bi;
                }
            }
            let qq = dot(&q, &q);
            // a candidate must contribute a direction that is not already
            // spanned, or the weight solve turns ill-conditioned and the
            // model generalizes wildly
            if qq < T::of(1e-4) * dot(&col, &col) {
                continue;
            }
            let mut score = T::zero();
            for out in 0..3 {
                let mut qr = T::zero();
                for (qi, r) in q.iter().zip(&residual) {
                    qr += *qi * r[out];
                }
                score += qr * qr / qq;
            }
            let better = match &best {
                Some((_, s, _)) => score > *s,
                None => true,
            };
            if better {
                best = Some((c, score, col));
            }
        }
        let Some((chosen, _, col)) = best else {
            break;
        };

        let mut q = col.clone();
        for basis in &ortho {
            let proj = dot(basis, &col);
            for (qi, bi) in q.iter_mut().zip(basis) {
                *qi -= proj * *bi;
            }
        }
        let qn = dot(&q, &q).sqrt();
        for qi in q.iter_mut() {
            *qi = *qi / qn;
        }
        ortho.push(q);
        columns.push(col);
        selected.push(chosen);

        // ridge-regularized refit of all output weights; the ridge scales
        // with the Gram diagonal so its strength is sample-count invariant
        let m = columns.len();
        let mut gram = vec![vec![T::zero(); m]; m];
        let mut rhs = vec![vec![T::zero(); 3]; m];
        let mut diag_scale = T::zero();
        for col in &columns {
            diag_scale += dot(col, col);
        }
        diag_scale = diag_scale / T::from_usize(m).expect("neuron count");
        for i in 0..m {
            for j in i..m {
                let g = dot(&columns[i], &columns[j]);
                gram[i][j] = g;
                gram[j][i] = g;
            }
            gram[i][i] += config.ridge * diag_scale;
            for out in 0..3 {
                let mut acc = T::zero();
                for (ci, t) in columns[i].iter().zip(&targets) {
                    acc += *ci * t[out];
                }
                rhs[i][out] = acc;
            }
        }
        crate::linalg::solve_dense(&mut gram, &mut rhs)?;
        weights = rhs.iter().map(|w| [w[0], w[1], w[2]]).collect();

        for (k, r) in residual.iter_mut().enumerate() {
            *r = targets[k];
            for (col_m, w) in columns.iter().zip(&weights) {
                for out in 0..3 {
                    r[out] -= w[out] * col_m[k];
                }
            }
        }
        mse = mse_of(&residual);
        trajectory.push(mse);
    }

    let nf = T::from_usize(n).expect("samples");
    let mut training_rmse = [T::zero(); 3];
    for out in 0..3 {
        let mut acc = T::zero();
        for r in &residual {
            acc += r[out] * r[out];
        }
        training_rmse[out] = (acc / nf).sqrt();
    }

    Ok(RbfModel {
        centers: selected.iter().map(|&i| inputs[i]).collect(),
        sigma,
        weights,
        normalization,
        metadata: RbfMetadata {
            neuron_count: selected.len(),
            training_rmse,
            training_mse_trajectory: trajectory,
            dataset_hash: hash_samples(samples),
        },
    })
}

/// Ordinary least squares fit of the affine baseline.
pub fn train_linear_baseline<T: Real>(samples: &[ResidualSample<T>]) -> Result<LinearModel<T>> {
    validate_training_samples(samples, 4)?;
    // design row: [1, y, z, theta]
    let mut gram = vec![vec![T::zero(); 4]; 4];
    let mut rhs = vec![vec![T::zero(); 3]; 4];
    for s in samples {
        let row = [T::one(), s.x_hat[0], s.x_hat[1], s.x_hat[2]];
        for i in 0..4 {
            for j in 0..4 {
                gram[i][j] += row[i] * row[j];
            }
            for out in 0..3 {
                rhs[i][out] += row[i] * s.delta[out];
            }
        }
    }
    crate::linalg::solve_dense(&mut gram, &mut rhs).map_err(|e| match e {
        Error::SingularSystem => Error::Training("rank-deficient design".into()),
        other => other,
    })?;
    let offset = [rhs[0][0], rhs[0][1], rhs[0][2]];
    let mut matrix = [[T::zero(); 3]; 3];
    for (out, row) in matrix.iter_mut().enumerate() {
        for d in 0..3 {
            row[d] = rhs[1 + d][out];
        }
    }
    Ok(LinearModel { matrix, offset })
}
