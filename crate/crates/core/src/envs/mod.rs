//! Finite-horizon low-rank MDPs, instance generators and exact
//! dynamic-programming oracles.
//!
//! Timesteps are zero-based in code: `h ∈ 0..H`, with the terminal level `H`
//! carrying the zero value function. State-action pairs are flattened as
//! `s * A + a`.

mod dp;
mod format;
mod generate;
mod sample;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{FeatureVector, ParamVector};

pub use dp::{
    bellman_backup, bellman_backup_policy, evaluate_component, evaluate_actions, greedy_actions, occupancy, policy_value,
    value_iteration, QTable, ValueTable,
};
pub use format::{parse_instance, write_instance, FORMAT_VERSION};
pub use generate::{
    gen_divergence_instance, gen_lowrank, gen_tabular, DivergenceSetup, GenOptions, DIVERGENCE_INSTANCE_VERSION,
};
pub use sample::{sample_episode, Trajectory};

pub const FEATURE_NORM_TOL: f64 = 1e-12;
pub const ROW_SUM_TOL: f64 = 1e-10;
pub const NEGATIVE_PROB_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RewardNoise {
    None,
    /// Uniform on `[r − w, r + w]`, with the window shrunk per state-action so
    /// realized rewards stay in `[0, 1]` and keep mean `r`.
    Bounded { half_width: f64 },
}

impl RewardNoise {
    pub fn realize(&self, mean: f64, rng: &mut impl Rng) -> f64 {
        match *self {
            RewardNoise::None => mean,
            RewardNoise::Bounded { half_width } => {
                let w = half_width.min(mean).min(1.0 - mean).max(0.0);
                if w == 0.0 {
                    mean
                } else {
                    mean + rng.random_range(-w..=w)
                }
            }
        }
    }
}

/// Generator provenance and the numerical verification report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstanceMeta {
    pub generator: String,
    pub seed: u64,
    pub entries: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LowRankMdp {
    horizon: usize,
    states: usize,
    actions: usize,
    dim: usize,
    /// `[h][s*A + a]`
    phi: Vec<Vec<FeatureVector>>,
    /// `[h]`, shape `d × S`
    mu: Vec<DMatrix<f64>>,
    reward_w: Vec<ParamVector>,
    start: Vec<f64>,
    noise: RewardNoise,
    pub meta: InstanceMeta,
    // derived
    trans: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
}

/// Raw tables for [`LowRankMdp::new`].
#[derive(Clone, Debug)]
pub struct MdpTables {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    pub dim: usize,
    pub phi: Vec<Vec<FeatureVector>>,
    pub mu: Vec<DMatrix<f64>>,
    pub reward_w: Vec<ParamVector>,
    pub start: Vec<f64>,
    pub noise: RewardNoise,
    pub meta: InstanceMeta,
}

impl LowRankMdp {
    /// Validates the tables and derives transition and reward tables.
    pub fn new(t: MdpTables) -> Result<Self> {
        let MdpTables {
            horizon,
            states,
            actions,
            dim,
            phi,
            mu,
            reward_w,
            start,
            noise,
            meta,
        } = t;
        if horizon == 0 || states == 0 || actions == 0 || dim == 0 {
            return Err(Error::Config("horizon, states, actions and dim must be positive".into()));
        }
        if phi.len() != horizon || mu.len() != horizon || reward_w.len() != horizon {
            return Err(Error::Config("per-timestep tables must have H entries".into()));
        }
        if start.len() != states {
            return Err(Error::Dimension {
                expected: states,
                got: start.len(),
            });
        }
        let start_sum: f64 = start.iter().sum();
        if start.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (start_sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Config(format!("start distribution invalid (sum {start_sum})")));
        }
        if let RewardNoise::Bounded { half_width } = noise {
            if !(half_width >= 0.0 && half_width.is_finite()) {
                return Err(Error::Config(format!("noise half width must be nonnegative, got {half_width}")));
            }
        }

        let mut trans = Vec::with_capacity(horizon);
        let mut reward = Vec::with_capacity(horizon);
        for h in 0..horizon {
            if phi[h].len() != states * actions {
                return Err(Error::Dimension {
                    expected: states * actions,
                    got: phi[h].len(),
                });
            }
            if mu[h].nrows() != dim || mu[h].ncols() != states {
                return Err(Error::Config(format!(
                    "mu[{h}] has shape {}x{}, expected {dim}x{states}",
                    mu[h].nrows(),
                    mu[h].ncols()
                )));
            }
            if reward_w[h].len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: reward_w[h].len(),
                });
            }
            let mut rows = Vec::with_capacity(states * actions);
            let mut rews = Vec::with_capacity(states * actions);
            for (idx, f) in phi[h].iter().enumerate() {
                if f.len() != dim {
                    return Err(Error::Dimension { expected: dim, got: f.len() });
                }
                if !f.iter().all(|x| x.is_finite()) || f.norm() > 1.0 + FEATURE_NORM_TOL {
                    return Err(Error::Config(format!(
                        "feature at h={h}, index {idx} has norm {} > 1",
                        f.norm()
                    )));
                }
                let row = mu[h].tr_mul(f);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Config(format!(
                        "transition row h={h}, index {idx} sums to {sum}"
                    )));
                }
                let mut row: Vec<f64> = row.iter().copied().collect();
                for p in row.iter_mut() {
                    if !p.is_finite() || *p < -NEGATIVE_PROB_TOL {
                        return Err(Error::Config(format!(
                            "negative transition probability {p} at h={h}, index {idx}"
                        )));
                    }
                    if *p < 0.0 {
                        *p = 0.0;
                    }
                }
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= s);
                rows.push(row);
                let r = f.dot(&reward_w[h]);
                if !r.is_finite() {
                    return Err(Error::Config(format!("non-finite reward at h={h}")));
                }
                rews.push(r);
            }
            trans.push(rows);
            reward.push(rews);
        }

        Ok(Self {
            horizon,
            states,
            actions,
            dim,
            phi,
            mu,
            reward_w,
            start,
            noise,
            meta,
            trans,
            reward,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn states(&self) -> usize {
        self.states
    }
    pub fn actions(&self) -> usize {
        self.actions
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn noise(&self) -> RewardNoise {
        self.noise
    }
    pub fn start(&self) -> &[f64] {
        &self.start
    }
    pub fn mu(&self, h: usize) -> &DMatrix<f64> {
        &self.mu[h]
    }
    pub fn reward_weights(&self, h: usize) -> &ParamVector {
        &self.reward_w[h]
    }

    #[inline]
    pub fn sa(&self, s: usize, a: usize) -> usize {
        s * self.actions + a
    }

    pub fn phi(&self, h: usize, s: usize, a: usize) -> &FeatureVector {
        &self.phi[h][self.sa(s, a)]
    }

    /// All features at `h` in `s*A + a` order.
    pub fn features(&self, h: usize) -> &[FeatureVector] {
        &self.phi[h]
    }

    /// `P_h(·|s,a)`.
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.trans[h][self.sa(s, a)]
    }

    /// Mean reward `r_h(s,a) = ⟨φ_h(s,a), θ^r_h⟩`.
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[h][self.sa(s, a)]
    }

    pub fn rewards(&self, h: usize) -> &[f64] {
        &self.reward[h]
    }

    /// Feature matrix at `h` with one row per state-action.
    pub fn feature_matrix(&self, h: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.states * self.actions, self.dim, |i, j| self.phi[h][i][j])
    }

    /// Same instance with every reward weight multiplied by `scale`.
    pub fn with_reward_scale(&self, scale: f64) -> Result<Self> {
        let mut t = self.tables();
        t.reward_w.iter_mut().for_each(|w| *w *= scale);
        LowRankMdp::new(t)
    }

    pub fn with_noise(&self, noise: RewardNoise) -> Result<Self> {
        let mut t = self.tables();
        t.noise = noise;
        LowRankMdp::new(t)
    }

    pub fn tables(&self) -> MdpTables {
        MdpTables {
            horizon: self.horizon,
            states: self.states,
            actions: self.actions,
            dim: self.dim,
            phi: self.phi.clone(),
            mu: self.mu.clone(),
            reward_w: self.reward_w.clone(),
            start: self.start.clone(),
            noise: self.noise,
            meta: self.meta.clone(),
        }
    }

    /// Content hash of the serialized instance (metadata excluded).
    pub fn instance_id(&self) -> String {
        format::content_id(self)
    }

    /// Tabular MDP with one-hot features from explicit tables:
    /// `rewards[h][s][a]`, `transitions[h][s][a][s']`.
    pub fn tabular(
        rewards: &[Vec<Vec<f64>>],
        transitions: &[Vec<Vec<Vec<f64>>>],
        start: Vec<f64>,
    ) -> Result<Self> {
        let horizon = rewards.len();
        if horizon == 0 || transitions.len() != horizon {
            return Err(Error::Config("reward and transition tables need H entries".into()));
        }
        let states = rewards[0].len();
        let actions = rewards[0].first().map(|r| r.len()).unwrap_or(0);
        let dim = states * actions;
        let mut phi = Vec::with_capacity(horizon);
        let mut mu = Vec::with_capacity(horizon);
        let mut reward_w = Vec::with_capacity(horizon);
        for h in 0..horizon {
            phi.push((0..dim).map(|i| one_hot(dim, i)).collect());
            let mut m = DMatrix::zeros(dim, states);
            let mut w = DVector::zeros(dim);
            for s in 0..states {
                for a in 0..actions {
                    let i = s * actions + a;
                    w[i] = rewards[h][s][a];
                    for (sp, p) in transitions[h][s][a].iter().enumerate() {
                        m[(i, sp)] = *p;
                    }
                }
            }
            mu.push(m);
            reward_w.push(w);
        }
        LowRankMdp::new(MdpTables {
            horizon,
            states,
            actions,
            dim,
            phi,
            mu,
            reward_w,
            start,
            noise: RewardNoise::None,
            meta: InstanceMeta {
                generator: "explicit-tabular".into(),
                ..Default::default()
            },
        })
    }

    /// Structural checks every instance must pass; the report lists each
    /// quantity measured.
    pub fn check_structure(&self) -> StructureReport {
        let mut max_feature_norm: f64 = 0.0;
        let mut max_row_err: f64 = 0.0;
        let mut min_prob = f64::INFINITY;
        for h in 0..self.horizon {
            for (i, f) in self.phi[h].iter().enumerate() {
                max_feature_norm = max_feature_norm.max(f.norm());
                let raw = self.mu[h].tr_mul(f);
                max_row_err = max_row_err.max((raw.sum() - 1.0).abs());
                min_prob = min_prob.min(self.trans[h][i].iter().copied().fold(f64::INFINITY, f64::min));
            }
        }
        let (_, v) = value_iteration(self);
        let v1 = &v.values[0];
        let v_min = v1.iter().copied().fold(f64::INFINITY, f64::min);
        let v_max = v1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        StructureReport {
            max_feature_norm,
            max_row_sum_error: max_row_err,
            min_transition_prob: min_prob,
            v_star_min: v_min,
            v_star_max: v_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub max_feature_norm: f64,
    pub max_row_sum_error: f64,
    pub min_transition_prob: f64,
    pub v_star_min: f64,
    pub v_star_max: f64,
}

impl StructureReport {
    pub fn passes(&self) -> bool {
        self.max_feature_norm <= 1.0 + FEATURE_NORM_TOL
            && self.max_row_sum_error <= ROW_SUM_TOL
            && self.min_transition_prob >= 0.0
            && self.v_star_min >= -1e-12
            && self.v_star_max <= 1.0 + 1e-12
    }
}

pub(crate) fn one_hot(dim: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[i] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_single_cell() {
        let mdp = LowRankMdp::tabular(&[vec![vec![0.5]]], &[vec![vec![vec![1.0]]]], vec![1.0]).unwrap();
        assert_eq!(mdp.dim(), 1);
        let (_, v) = value_iteration(&mdp);
        assert_eq!(v.values[0][0], 0.5);
        assert!(mdp.check_structure().passes());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = LowRankMdp::tabular(&[vec![vec![0.5]]], &[vec![vec![vec![0.7]]]], vec![1.0]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn clips_tiny_negative_probabilities() {
        let mdp = LowRankMdp::tabular(
            &[vec![vec![0.1], vec![0.2]]],
            &[vec![vec![vec![1.0 + 5e-13, -5e-13]], vec![vec![0.5, 0.5]]]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(mdp.transition(0, 0, 0)[1], 0.0);
        assert_eq!(mdp.transition(0, 0, 0)[0], 1.0);
    }

    #[test]
    fn noise_stays_in_unit_interval() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let noise = RewardNoise::Bounded { half_width: 0.5 };
        for &mean in &[0.0, 0.1, 0.5, 0.95] {
            for _ in 0..1000 {
                let r = noise.realize(mean, &mut rng);
                assert!((0.0..=1.0).contains(&r));
            }
        }
    }
}
