//! Small dense symmetric linear algebra.
//!
//! The streaming code never holds the covariance `Σ` itself, only its inverse
//! (the precision matrix), which is updated with rank-one Sherman–Morrison
//! steps in `O(d²)`. `Σ` is rebuilt by a Cholesky inversion only when a
//! parameter has to be projected onto the unit ball.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type FeatureVector = DVector<f64>;
pub type ParamVector = DVector<f64>;

/// Number of rank-one updates between forced re-symmetrizations.
pub const SYMMETRIZE_EVERY: u64 = 1024;

pub const PROJECTION_TOL: f64 = 1e-10;
pub const PROJECTION_MAX_ITERS: usize = 200;

/// Inverse of a regularized covariance matrix, `Σ⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionMatrix {
    inner: DMatrix<f64>,
    updates: u64,
}

impl PrecisionMatrix {
    /// `(1/λ) I`, the inverse of `λ I`.
    pub fn scaled_identity(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("regularization must be positive, got {lambda}")));
        }
        Ok(Self {
            inner: DMatrix::identity(dim, dim) / lambda,
            updates: 0,
        })
    }

    /// Wraps an existing inverse covariance; only symmetry and shape are checked.
    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        if !inner.is_square() {
            return Err(Error::Dimension {
                expected: inner.nrows(),
                got: inner.ncols(),
            });
        }
        let asym = (&inner - inner.transpose()).abs().max();
        if asym > 1e-12 * inner.abs().max().max(1.0) {
            return Err(Error::Degenerate(format!("precision matrix not symmetric (|A - Aᵀ| = {asym:.3e})")));
        }
        Ok(Self { inner, updates: 0 })
    }

    /// Inverts an SPD covariance to obtain its precision matrix.
    pub fn from_covariance(sigma: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            inner: invert_spd(sigma)?,
            updates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Reconstructs the covariance `Σ` by inversion. `O(d³)`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        invert_spd(&self.inner)
    }

    /// `φᵀ Σ⁻¹ φ`, erroring if it is negative beyond rounding.
    pub fn quadratic_form(&self, phi: &FeatureVector) -> Result<f64> {
        check_dim(self.dim(), phi.len())?;
        let q = phi.dot(&(&self.inner * phi));
        let scale = phi.norm_squared() * self.inner.abs().max();
        if !q.is_finite() || q < -1e-13 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Degenerate(format!("negative quadratic form {q:.3e}")));
        }
        Ok(q.max(0.0))
    }

    /// Rank-one update in place. Returns the Sherman–Morrison denominator
    /// `1 + ‖φ‖²_{Σ⁻¹}` and the vector `Σ⁻¹φ` computed before the update.
    fn rank_one_in_place(&mut self, phi: &FeatureVector) -> Result<(f64, DVector<f64>)> {
        check_dim(self.dim(), phi.len())?;
        let u = &self.inner * phi;
        let q = phi.dot(&u);
        if !q.is_finite() || q < 0.0 {
            return Err(Error::Degenerate(format!(
                "precision matrix lost positive definiteness (φᵀΣ⁻¹φ = {q:.3e})"
            )));
        }
        let denom = 1.0 + q;
        self.inner.ger(-1.0 / denom, &u, &u, 1.0);
        self.updates += 1;
        if self.updates % SYMMETRIZE_EVERY == 0 {
            symmetrize(&mut self.inner);
        }
        Ok((denom, u))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Inverse of an SPD matrix via Cholesky.
pub fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("matrix is not positive definite".into()))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `m += w · φ φᵀ`.
pub fn add_outer(m: &mut DMatrix<f64>, phi: &DVector<f64>, w: f64) {
    m.ger(w, phi, phi, 1.0);
}

/// Sherman–Morrison step of the streaming least-squares recursion.
///
/// Returns `θ + Σ⁻¹φ·td / (1 + ‖φ‖²_{Σ⁻¹})` and
/// `Σ⁻¹ − Σ⁻¹φφᵀΣ⁻¹ / (1 + ‖φ‖²_{Σ⁻¹})`, i.e. the inverse of `Σ + φφᵀ`.
pub fn sm_update(
    theta: &ParamVector,
    inv: &PrecisionMatrix,
    phi: &FeatureVector,
    td: f64,
) -> Result<(ParamVector, PrecisionMatrix)> {
    let mut theta = theta.clone();
    let mut inv = inv.clone();
    sm_update_in_place(&mut theta, &mut inv, phi, td)?;
    Ok((theta, inv))
}

/// In-place form of [`sm_update`] used on the per-step path.
pub fn sm_update_in_place(
    theta: &mut ParamVector,
    inv: &mut PrecisionMatrix,
    phi: &FeatureVector,
    td: f64,
) -> Result<()> {
    check_dim(inv.dim(), theta.len())?;
    let (denom, u) = inv.rank_one_in_place(phi)?;
    theta.axpy(td / denom, &u, 1.0);
    Ok(())
}

/// `‖φ‖_{Σ⁻¹} = √(φᵀ Σ⁻¹ φ)`.
pub fn mahalanobis(inv: &PrecisionMatrix, phi: &FeatureVector) -> Result<f64> {
    Ok(inv.quadratic_form(phi)?.sqrt())
}

/// Minimizer of `‖θ − θ̂‖²_Σ` over the Euclidean unit ball.
///
/// Exterior points are mapped to `(Σ + μI)⁻¹ Σ θ̂` where the multiplier
/// `μ > 0` is found by bisection so that the result lies on the sphere.
pub fn project_ball(theta_hat: &ParamVector, sigma: &DMatrix<f64>) -> Result<ParamVector> {
    check_dim(sigma.nrows(), theta_hat.len())?;
    if !theta_hat.iter().all(|x| x.is_finite()) {
        return Err(Error::Degenerate("non-finite parameter passed to projection".into()));
    }
    if theta_hat.norm() <= 1.0 {
        return Ok(theta_hat.clone());
    }

    let eig = SymmetricEigen::new(sigma.clone());
    let evals = eig.eigenvalues;
    let lo_eval = evals.min();
    if !(lo_eval > 0.0) {
        return Err(Error::Degenerate(format!(
            "projection metric not positive definite (min eigenvalue {lo_eval:.3e})"
        )));
    }
    let coords = eig.eigenvectors.transpose() * theta_hat;
    let shrunk = |mu: f64| -> DVector<f64> {
        DVector::from_iterator(
            coords.len(),
            coords.iter().zip(evals.iter()).map(|(c, l)| l * c / (l + mu)),
        )
    };

    // ‖θ(μ)‖ ≤ λ_max‖θ̂‖ / (λ_min + μ), which is < 1 at μ = λ_max‖θ̂‖.
    let mut lo = 0.0;
    let mut hi = evals.max() * theta_hat.norm();
    let mut norm_hi = shrunk(hi).norm();
    for _ in 0..PROJECTION_MAX_ITERS {
        if (norm_hi - 1.0).abs() <= PROJECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let n = shrunk(mid).norm();
        if n > 1.0 {
            lo = mid;
        } else {
            hi = mid;
            norm_hi = n;
        }
    }
    if (norm_hi - 1.0).abs() > PROJECTION_TOL {
        return Err(Error::Convergence {
            iterations: PROJECTION_MAX_ITERS,
            norm: norm_hi,
            lo,
            hi,
        });
    }
    let mut out = &eig.eigenvectors * shrunk(hi);
    // Rotating back can round the norm a few ulps past one.
    while out.norm() > 1.0 {
        out *= 1.0 - f64::EPSILON;
    }
    Ok(out)
}

/// `log det Σ` through a Cholesky factor.
pub fn logdet(sigma: &DMatrix<f64>) -> Result<f64> {
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("log-determinant of a non positive definite matrix".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Squared `M`-norm `xᵀ M x`.
pub fn quad(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}
