//! Linear action-value approximators, optionally lifted by an exploration
//! bonus and clipped at 1.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::Result;
use crate::linalg::{self, FeatureVector, ParamVector, PrecisionMatrix};

/// Per-timestep bonus `b_h(φ) = α_h ‖φ‖_{Σ̂_h⁻¹}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BonusLevel {
    pub alpha: f64,
    pub inv: PrecisionMatrix,
}

impl BonusLevel {
    pub fn eval(&self, phi: &FeatureVector) -> Result<f64> {
        if self.alpha == 0.0 {
            return Ok(0.0);
        }
        Ok(self.alpha * linalg::mahalanobis(&self.inv, phi)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bonus {
    pub levels: Vec<Arc<BonusLevel>>,
}

impl Bonus {
    pub fn new(levels: Vec<BonusLevel>) -> Self {
        Self {
            levels: levels.into_iter().map(Arc::new).collect(),
        }
    }

    /// Bonus with `Σ̂ = λI` at every level.
    pub fn isotropic(horizon: usize, dim: usize, lambda: f64, alpha: f64) -> Result<Self> {
        let inv = PrecisionMatrix::scaled_identity(dim, lambda)?;
        Ok(Self::new(vec![BonusLevel { alpha, inv }; horizon]))
    }

    pub fn horizon(&self) -> usize {
        self.levels.len()
    }

    pub fn eval(&self, h: usize, phi: &FeatureVector) -> Result<f64> {
        self.levels[h].eval(phi)
    }
}

/// One committed level of a [`TargetNetworks`].
#[derive(Clone, Debug, PartialEq)]
pub struct LevelNet {
    pub theta: ParamVector,
    pub bonus: Option<Arc<BonusLevel>>,
    /// Evaluate as `min{1, ⟨φ,θ⟩ + b(φ)}` instead of `⟨φ,θ⟩`.
    pub clip: bool,
}

impl LevelNet {
    pub fn zero(dim: usize) -> Self {
        Self {
            theta: DVector::zeros(dim),
            bonus: None,
            clip: false,
        }
    }

    pub fn eval(&self, phi: &FeatureVector) -> Result<f64> {
        let lin = phi.dot(&self.theta);
        let b = match &self.bonus {
            Some(bonus) => bonus.eval(phi)?,
            None => 0.0,
        };
        Ok(if self.clip { (lin + b).min(1.0) } else { lin + b })
    }
}

/// `Q_1, …, Q_H`; level `H+1` is identically zero and not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNetworks {
    pub levels: Vec<LevelNet>,
}

impl TargetNetworks {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self {
            levels: vec![LevelNet::zero(dim); horizon],
        }
    }

    /// `Q_h = min{1, b_h}` with zero parameters.
    pub fn bonus_only(horizon: usize, dim: usize, bonus: &Bonus) -> Self {
        Self {
            levels: (0..horizon)
                .map(|h| LevelNet {
                    theta: DVector::zeros(dim),
                    bonus: Some(bonus.levels[h].clone()),
                    clip: true,
                })
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.levels.len()
    }

    /// `Q_h(φ)` with `h` zero-based; `h == H` is the terminal level and evaluates to 0.
    pub fn eval(&self, h: usize, phi: &FeatureVector) -> Result<f64> {
        match self.levels.get(h) {
            Some(level) => level.eval(phi),
            None => Ok(0.0),
        }
    }

    pub fn max_theta_norm(&self) -> f64 {
        self.levels.iter().map(|l| l.theta.norm()).fold(0.0, f64::max)
    }
}

/// Projects `θ̂` in the `Σ` metric and installs it as a target level.
pub fn commit_target(
    theta_hat: &ParamVector,
    sigma: &nalgebra::DMatrix<f64>,
    bonus: Option<Arc<BonusLevel>>,
    clip: bool,
) -> Result<LevelNet> {
    let theta = linalg::project_ball(theta_hat, sigma)?;
    Ok(LevelNet { theta, bonus, clip })
}
