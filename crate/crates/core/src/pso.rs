//! Global-best particle swarm optimization over a bounded continuous box.
//!
//! Velocity update `v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)` with
//! positions clamped to the bounds. Random draws come from a single seeded
//! stream consumed in a fixed order, and candidate objective evaluations are
//! order-independent, so parallel and serial runs produce identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Swarm settings. Defaults: 30 particles, 100 iterations, constriction-
/// equivalent coefficients `w = 0.729`, `c1 = c2 = 1.49445`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig<T = f64> {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: T,
    pub cognitive: T,
    pub social: T,
    /// Per-dimension `(low, high)` search bounds.
    pub bounds: Vec<(T, T)>,
    pub seed: u64,
    /// Optional warm-start positions occupying the first particles.
    pub initial_guesses: Vec<Vec<T>>,
}

impl<T: Real> PsoConfig<T> {
    pub fn with_bounds(bounds: Vec<(T, T)>) -> Self {
        Self {
            swarm_size: 30,
            iterations: 100,
            inertia: T::of(0.729),
            cognitive: T::of(1.49445),
            social: T::of(1.49445),
            bounds,
            seed: 0,
            initial_guesses: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidArgument("swarm size must be >= 2".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("need at least one iteration".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::InvalidArgument("bounds must be non-empty".into()));
        }
        for (lo, hi) in &self.bounds {
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(Error::InvalidArgument(
                    "each bound must be finite with low < high".into(),
                ));
            }
        }
        for g in &self.initial_guesses {
            if g.len() != self.bounds.len() {
                return Err(Error::LengthMismatch {
                    what: "initial guess dimensions",
                    expected: self.bounds.len(),
                    got: g.len(),
                });
            }
        }
        if self.initial_guesses.len() > self.swarm_size {
            return Err(Error::InvalidArgument(
                "more initial guesses than particles".into(),
            ));
        }
        Ok(())
    }
}

/// Optimization outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult<T = f64> {
    pub best_position: Vec<T>,
    pub best_cost: T,
    /// Best-ever cost after initialization and after each iteration;
    /// non-increasing by construction.
    pub convergence: Vec<T>,
    pub evaluations: usize,
}

fn clamp<T: Real>(x: T, lo: T, hi: T) -> T {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

fn sanitize<T: Real>(cost: T, position: &[T]) -> T {
    if cost.is_finite() {
        cost
    } else {
        log::warn!("objective returned non-finite value at {position:?}; rejecting candidate");
        T::infinity()
    }
}

/// Minimizes `objective` over the configured box.
pub fn pso_optimize<T, F>(config: &PsoConfig<T>, objective: F) -> Result<PsoResult<T>>
where
    T: Real,
    F: Fn(&[T]) -> T + Sync,
{
    config.validate()?;
    let dims = config.bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut positions: Vec<Vec<T>> = Vec::with_capacity(config.swarm_size);
    for guess in &config.initial_guesses {
        let clamped: Vec<T> = guess
            .iter()
            .zip(&config.bounds)
            .map(|(&x, &(lo, hi))| clamp(x, lo, hi))
            .collect();
        positions.push(clamped);
    }
    while positions.len() < config.swarm_size {
        let p: Vec<T> = config
            .bounds
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * T::of(rng.gen::<f64>()))
            .collect();
        positions.push(p);
    }
    let mut velocities = vec![vec![T::zero(); dims]; config.swarm_size];

    let evaluate = |positions: &[Vec<T>]| -> Vec<T> {
        positions
            .par_iter()
            .map(|p| sanitize(objective(p), p))
            .collect()
    };

    let mut costs = evaluate(&positions);
    let mut evaluations = positions.len();
    let mut pbest = positions.clone();
    let mut pbest_cost = costs.clone();
    let mut gbest_idx = 0usize;
    for (i, c) in pbest_cost.iter().enumerate() {
        if *c < pbest_cost[gbest_idx] {
            gbest_idx = i;
        }
    }
    let mut gbest = pbest[gbest_idx].clone();
    let mut gbest_cost = pbest_cost[gbest_idx];
    let mut convergence = Vec::with_capacity(config.iterations + 1);
    convergence.push(gbest_cost);

    for _ in 0..config.iterations {
        for i in 0..config.swarm_size {
            for d in 0..dims {
                let r1 = T::of(rng.gen::<f64>());
                let r2 = T::of(rng.gen::<f64>());
                velocities[i][d] = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (pbest[i][d] - positions[i][d])
                    + config.social * r2 * (gbest[d] - positions[i][d]);
                let (lo, hi) = config.bounds[d];
                positions[i][d] = clamp(positions[i][d] + velocities[i][d], lo, hi);
            }
        }
        costs = evaluate(&positions);
        evaluations += positions.len();
        for i in 0..positions.len() {
            if costs[i] < pbest_cost[i] {
                pbest_cost[i] = costs[i];
                pbest[i] = positions[i].clone();
            }
            if costs[i] < gbest_cost {
                gbest_cost = costs[i];
                gbest = positions[i].clone();
            }
        }
        convergence.push(gbest_cost);
    }

    Ok(PsoResult {
        best_position: gbest,
        best_cost: gbest_cost,
        convergence,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        (x[0] - 3.0).powi(2) + (x[1] - 1.0).powi(2)
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn sphere_converges_to_the_optimum() {
        let mut cfg = PsoConfig::with_bounds(vec![(-5.0, 10.0), (-5.0, 10.0)]);
        cfg.seed = 1;
        let res = pso_optimize(&cfg, sphere).unwrap();
        assert!((res.best_position[0] - 3.0).abs() < 1e-3, "{res:?}");
        assert!((res.best_position[1] - 1.0).abs() < 1e-3);
        assert_eq!(res.evaluations, 30 * 101);
    }

    #[test]
    fn rosenbrock_reaches_low_cost() {
        let mut cfg = PsoConfig::with_bounds(vec![(-2.048, 2.048), (-2.048, 2.048)]);
        cfg.swarm_size = 50;
        cfg.iterations = 500;
        cfg.seed = 2;
        let res = pso_optimize(&cfg, rosenbrock).unwrap();
        assert!(res.best_cost < 1e-2, "best cost {}", res.best_cost);
    }

    #[test]
    fn convergence_trace_is_monotone() {
        let mut cfg = PsoConfig::with_bounds(vec![(-5.0, 10.0), (-5.0, 10.0)]);
        cfg.seed = 3;
        let res = pso_optimize(&cfg, sphere).unwrap();
        assert_eq!(res.convergence.len(), cfg.iterations + 1);
        for w in res.convergence.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut cfg = PsoConfig::with_bounds(vec![(-5.0, 10.0), (-5.0, 10.0)]);
        cfg.seed = 4;
        let a = pso_optimize(&cfg, sphere).unwrap();
        let b = pso_optimize(&cfg, sphere).unwrap();
        assert_eq!(a.best_position, b.best_position);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.convergence), bits(&b.convergence));
    }

    #[test]
    fn non_finite_regions_are_rejected_not_fatal() {
        let mut cfg = PsoConfig::with_bounds(vec![(-5.0, 10.0), (-5.0, 10.0)]);
        cfg.seed = 5;
        let res = pso_optimize(&cfg, |x| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                sphere(x)
            }
        })
        .unwrap();
        assert!(res.best_cost.is_finite());
        assert!((res.best_position[0] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn warm_start_is_respected() {
        let mut cfg = PsoConfig::with_bounds(vec![(-5.0, 10.0), (-5.0, 10.0)]);
        cfg.initial_guesses = vec![vec![3.0, 1.0]];
        cfg.iterations = 1;
        cfg.seed = 6;
        let res = pso_optimize(&cfg, sphere).unwrap();
        assert_eq!(res.best_cost, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PsoConfig::<f64>::with_bounds(vec![]);
        assert!(pso_optimize(&cfg, |_| 0.0).is_err());
        cfg = PsoConfig::with_bounds(vec![(1.0, 0.0)]);
        assert!(pso_optimize(&cfg, |_| 0.0).is_err());
        cfg = PsoConfig::with_bounds(vec![(0.0, 1.0)]);
        cfg.swarm_size = 1;
        assert!(pso_optimize(&cfg, |_| 0.0).is_err());
    }
}
