//! Streaming constrained least squares and its batch counterpart.
//!
//! [`SlsState`] consumes `(a, b)` pairs one at a time with a Sherman–Morrison
//! recursion; [`SlsState::finalize`] projects the running iterate onto the unit
//! ball in the `Σ` metric, which yields the same point as solving the
//! ball-constrained ridge problem over all samples at once
//! ([`batch_ridge_constrained`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, FeatureVector, ParamVector, PrecisionMatrix};

/// Default bound on regression targets: rewards in `[0, 1]` plus a bootstrapped
/// value in `[-1, 1]`.
pub const DEFAULT_TARGET_BOUND: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub a: FeatureVector,
    pub b: f64,
}

impl Sample {
    pub fn new(a: FeatureVector, b: f64) -> Self {
        Self { a, b }
    }
}

#[derive(Clone, Debug)]
pub struct SlsState {
    theta: ParamVector,
    inv: PrecisionMatrix,
    count: u64,
    lambda: f64,
    target_bound: f64,
}

impl SlsState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        Self::with_target_bound(dim, lambda, DEFAULT_TARGET_BOUND)
    }

    pub fn with_target_bound(dim: usize, lambda: f64, target_bound: f64) -> Result<Self> {
        let inv = PrecisionMatrix::scaled_identity(dim, lambda)?;
        Ok(Self {
            theta: DVector::zeros(dim),
            inv,
            count: 0,
            lambda,
            target_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// The unprojected running iterate.
    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn inv(&self) -> &PrecisionMatrix {
        &self.inv
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Consumes one sample. Targets outside `[-bound, bound]` are rejected.
    pub fn step(&mut self, a: &FeatureVector, b: f64) -> Result<()> {
        if a.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: a.len(),
            });
        }
        if !b.is_finite() || b.abs() > self.target_bound {
            return Err(Error::Contract(format!(
                "regression target {b} outside [-{0}, {0}]",
                self.target_bound
            )));
        }
        let td = b - a.dot(&self.theta);
        linalg::sm_update_in_place(&mut self.theta, &mut self.inv, a, td)?;
        self.count += 1;
        Ok(())
    }

    pub fn step_sample(&mut self, s: &Sample) -> Result<()> {
        self.step(&s.a, s.b)
    }

    /// Projected snapshot; the state itself is left untouched.
    pub fn finalize(&self) -> Result<ParamVector> {
        if self.theta.norm() <= 1.0 {
            return Ok(self.theta.clone());
        }
        let sigma = self.inv.covariance()?;
        linalg::project_ball(&self.theta, &sigma)
    }
}

/// Solves `min_{‖θ‖≤1} Σᵢ (θᵀaᵢ − bᵢ)² + λ‖θ‖²` from the normal equations.
pub fn batch_ridge_constrained(samples: &[Sample], dim: usize, lambda: f64) -> Result<ParamVector> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("regularization must be positive, got {lambda}")));
    }
    let mut gram = DMatrix::identity(dim, dim) * lambda;
    let mut rhs = DVector::zeros(dim);
    for s in samples {
        if s.a.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: s.a.len(),
            });
        }
        linalg::add_outer(&mut gram, &s.a, 1.0);
        rhs.axpy(s.b, &s.a, 1.0);
    }
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("normal equations not positive definite".into()))?;
    let unconstrained = chol.solve(&rhs);
    // ‖θ − θ_u‖²_G differs from the ridge objective by a constant.
    linalg::project_ball(&unconstrained, &gram)
}

/// Unconstrained ridge solution `(λI + Σ aaᵀ)⁻¹ Σ a b`.
pub fn batch_ridge(samples: &[Sample], dim: usize, lambda: f64) -> Result<ParamVector> {
    let mut gram = DMatrix::identity(dim, dim) * lambda;
    let mut rhs = DVector::zeros(dim);
    for s in samples {
        linalg::add_outer(&mut gram, &s.a, 1.0);
        rhs.axpy(s.b, &s.a, 1.0);
    }
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Degenerate("normal equations not positive definite".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(rng: &mut impl Rng, d: usize, n: usize, target: f64) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let a = if v.norm() > 1.0 { &v / v.norm() } else { v };
                Sample::new(a, rng.random_range(-target..target))
            })
            .collect()
    }

    #[test]
    fn init_examples() {
        let s = SlsState::new(3, 1.0).unwrap();
        assert_eq!(s.theta(), &DVector::zeros(3));
        assert_eq!(s.inv().matrix(), &DMatrix::identity(3, 3));
        assert_eq!(s.count(), 0);
        let s = SlsState::new(1, 4.0).unwrap();
        assert_eq!(s.inv().matrix()[(0, 0)], 0.25);
        assert!(matches!(SlsState::new(2, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn single_step_ridge_closed_form() {
        let mut s = SlsState::new(2, 1.0).unwrap();
        s.step(&dvector![1.0, 0.0], 1.0).unwrap();
        assert!((s.theta() - dvector![0.5, 0.0]).norm() < 1e-15);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn zero_feature_only_counts() {
        let mut s = SlsState::new(2, 1.0).unwrap();
        s.step(&dvector![0.3, 0.1], 0.5).unwrap();
        let before = s.clone();
        s.step(&dvector![0.0, 0.0], 1.5).unwrap();
        assert_eq!(s.theta(), before.theta());
        assert_eq!(s.inv().matrix(), before.inv().matrix());
        assert_eq!(s.count(), 2);
    }

    #[test]
    fn out_of_bound_target_rejected() {
        let mut s = SlsState::new(2, 1.0).unwrap();
        assert!(matches!(s.step(&dvector![1.0, 0.0], 2.5), Err(Error::Contract(_))));
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn streaming_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = random_samples(&mut rng, 4, 100, 1.0);
        let mut s = SlsState::new(4, 1.0).unwrap();
        for x in &samples {
            s.step_sample(x).unwrap();
        }
        let oracle = batch_ridge(&samples, 4, 1.0).unwrap();
        assert!((s.theta() - oracle).norm() <= 1e-9);
    }

    #[test]
    fn finalize_examples() {
        let mut s = SlsState::new(3, 1.0).unwrap();
        for i in 0..3 {
            let mut a = DVector::zeros(3);
            a[i] = 1.0;
            s.step(&a, 0.0).unwrap();
        }
        assert_eq!(s.finalize().unwrap(), DVector::zeros(3));

        let mut s = SlsState::with_target_bound(2, 1.0, 10.0).unwrap();
        s.step(&dvector![1.0, 0.0], 10.0).unwrap();
        assert!((s.theta() - dvector![5.0, 0.0]).norm() < 1e-14);
        let fin = s.finalize().unwrap();
        assert!((fin - dvector![1.0, 0.0]).norm() < 1e-9);
        // snapshot does not consume the state
        assert!((s.theta() - dvector![5.0, 0.0]).norm() < 1e-14);
    }

    #[test]
    fn finalize_matches_batch_d6_n300() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples = random_samples(&mut rng, 6, 300, 2.0);
        let mut s = SlsState::new(6, 1.0).unwrap();
        for x in &samples {
            s.step_sample(x).unwrap();
        }
        let batch = batch_ridge_constrained(&samples, 6, 1.0).unwrap();
        assert!((s.finalize().unwrap() - batch).norm() <= 1e-8);
    }

    #[test]
    fn batch_examples() {
        assert_eq!(batch_ridge_constrained(&[], 3, 1.0).unwrap(), DVector::zeros(3));
        let samples = [Sample::new(dvector![1.0, 0.0], 1.0), Sample::new(dvector![0.0, 1.0], 1.0)];
        let got = batch_ridge_constrained(&samples, 2, 1.0).unwrap();
        assert!((got - dvector![0.5, 0.5]).norm() < 1e-15);
        let samples = [Sample::new(dvector![0.5, 0.1], 0.2)];
        assert_eq!(
            batch_ridge_constrained(&samples, 2, 1.0).unwrap(),
            batch_ridge(&samples, 2, 1.0).unwrap()
        );
    }

    #[test]
    fn order_invariance_of_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut samples = random_samples(&mut rng, 5, 200, 2.0);
        let run = |xs: &[Sample]| {
            let mut s = SlsState::new(5, 1.0).unwrap();
            xs.iter().for_each(|x| s.step_sample(x).unwrap());
            s.theta().clone()
        };
        let first = run(&samples);
        samples.shuffle(&mut rng);
        assert!((run(&samples) - first).norm() <= 1e-9);
    }
}
