//! Random instance construction with certified structure.
//!
//! Both generators draw a latent transition measure `μ_h(z)(·)` per feature
//! coordinate, so `P_h = Φ_h μ_h` is row-stochastic whenever every feature row
//! lies on the probability simplex. Rewards are linear in the features and are
//! rescaled by one global factor so that `V*₁ ≤ 1` and every optimal action
//! value `Q*_h` has a parameter inside the unit ball with a margin.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bellman_backup, one_hot, value_iteration, InstanceMeta, LowRankMdp, MdpTables, RewardNoise};
use crate::error::{Error, Result};
use crate::policy::{ActionTable, Policy};

#[derive(Clone, Debug)]
pub struct GenOptions {
    pub noise: RewardNoise,
    /// Number of sampled targets per timestep for the closure checks.
    pub closure_samples: usize,
    /// Optimal action values must have representer norm `≤ 1 − margin`.
    pub closure_margin: f64,
    /// Largest allowed `V*₁(s)` after rescaling.
    pub value_cap: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            noise: RewardNoise::None,
            closure_samples: 50,
            closure_margin: 0.05,
            value_cap: 1.0,
        }
    }
}

pub const REPRESENTATION_TOL: f64 = 1e-8;

fn dirichlet_ones(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn unit_ball(rng: &mut impl Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

/// Tabular instance: one-hot features with `d = S·A`.
pub fn gen_tabular(states: usize, actions: usize, horizon: usize, seed: u64, opts: &GenOptions) -> Result<LowRankMdp> {
    let d = states * actions;
    if d == 0 || horizon == 0 {
        return Err(Error::Config("S, A and H must be positive".into()));
    }
    build(states, actions, horizon, d, seed, opts, "tabular")
}

/// Low-rank instance with simplex features of dimension `d ≤ S·A`.
/// With `d = S·A` the features are one-hot and the result equals
/// [`gen_tabular`] up to the generator label.
pub fn gen_lowrank(
    states: usize,
    actions: usize,
    horizon: usize,
    dim: usize,
    seed: u64,
    opts: &GenOptions,
) -> Result<LowRankMdp> {
    if dim == 0 || dim > states * actions || horizon == 0 {
        return Err(Error::Config(format!(
            "need 1 ≤ d ≤ S·A = {}, got d = {dim}",
            states * actions
        )));
    }
    build(states, actions, horizon, dim, seed, opts, "lowrank")
}

fn build(
    states: usize,
    actions: usize,
    horizon: usize,
    dim: usize,
    seed: u64,
    opts: &GenOptions,
    label: &str,
) -> Result<LowRankMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sa = states * actions;
    let mut phi = Vec::with_capacity(horizon);
    let mut mu = Vec::with_capacity(horizon);
    let mut reward_w = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let feats: Vec<DVector<f64>> = if dim == n_sa {
            (0..n_sa).map(|i| one_hot(dim, i)).collect()
        } else {
            (0..n_sa)
                .map(|_| {
                    let mut v = DVector::from_fn(dim, |_, _| rng.random::<f64>().max(1e-3));
                    v /= v.sum();
                    v
                })
                .collect()
        };
        let mut m = DMatrix::zeros(dim, states);
        for z in 0..dim {
            for (sp, p) in dirichlet_ones(&mut rng, states).into_iter().enumerate() {
                m[(z, sp)] = p;
            }
        }
        let w = DVector::from_fn(dim, |_, _| rng.random::<f64>());
        phi.push(feats);
        mu.push(m);
        reward_w.push(w);
    }
    let start = dirichlet_ones(&mut rng, states);
    let raw = LowRankMdp::new(MdpTables {
        horizon,
        states,
        actions,
        dim,
        phi,
        mu,
        reward_w,
        start,
        noise: opts.noise,
        meta: InstanceMeta {
            generator: label.into(),
            seed,
            ..Default::default()
        },
    })?;
    if dim < n_sa && raw.feature_matrix(0).rank(1e-9) < dim {
        return Err(Error::Generation("feature matrix is rank deficient".into()));
    }
    calibrate(raw, opts, &mut rng)
}

/// Representer of `T_h Q'` given next-state values `v`: `θ^r_h + μ_h v`.
fn backup_representer(mdp: &LowRankMdp, h: usize, vnext: Option<&DVector<f64>>) -> DVector<f64> {
    match vnext {
        Some(v) => mdp.reward_weights(h) + mdp.mu(h) * v,
        None => mdp.reward_weights(h).clone(),
    }
}

fn linear_target_values(mdp: &LowRankMdp, h: usize, theta: &DVector<f64>) -> Vec<f64> {
    mdp.features(h).iter().map(|f| f.dot(theta).min(1.0)).collect()
}

fn state_max(q: &[f64], states: usize, actions: usize) -> DVector<f64> {
    DVector::from_fn(states, |s, _| {
        q[s * actions..(s + 1) * actions].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Representers `θ*_h = θ^r_h + μ_h V*_{h+1}` of the optimal action values.
fn optimal_representers(mdp: &LowRankMdp) -> Vec<DVector<f64>> {
    let (_, v) = value_iteration(mdp);
    (0..mdp.horizon())
        .map(|h| {
            let vnext = (h + 1 < mdp.horizon()).then(|| DVector::from_column_slice(&v.values[h + 1]));
            backup_representer(mdp, h, vnext.as_ref())
        })
        .collect()
}

fn max_norm(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|t| t.norm()).fold(0.0, f64::max)
}

fn calibrate(raw: LowRankMdp, opts: &GenOptions, rng: &mut ChaCha8Rng) -> Result<LowRankMdp> {
    let (h_n, s_n, a_n) = (raw.horizon(), raw.states(), raw.actions());
    let radius = 1.0 - opts.closure_margin;

    // V* and the optimal representers are both linear in the reward scale.
    let (_, v) = value_iteration(&raw);
    let v_max = v.values[0].iter().copied().fold(0.0, f64::max);
    let rep_max = max_norm(&optimal_representers(&raw));
    let mut scale: f64 = 1.0;
    if v_max > 0.0 {
        scale = scale.min(opts.value_cap / v_max);
    }
    if rep_max > 0.0 {
        scale = scale.min(radius / rep_max);
    }
    let mut mdp = raw.with_reward_scale(scale)?;

    let optimal_max = max_norm(&optimal_representers(&mdp));
    if optimal_max > radius + 1e-12 {
        return Err(Error::Generation(format!(
            "closure margin violated after rescale (optimal representer norm {optimal_max:.6}); use a smaller reward scale"
        )));
    }

    // Backups of sampled unit-ball linear targets. Their transition part does
    // not shrink with the reward scale, so this norm is measured, not enforced.
    let mut closure_max: f64 = 0.0;
    for h in 0..h_n {
        closure_max = closure_max.max(backup_representer(&mdp, h, None).norm());
        if h + 1 < h_n {
            for _ in 0..opts.closure_samples {
                let theta = unit_ball(rng, mdp.dim());
                let q = linear_target_values(&mdp, h + 1, &theta);
                let vnext = state_max(&q, s_n, a_n);
                closure_max = closure_max.max(backup_representer(&mdp, h, Some(&vnext)).norm());
            }
        }
    }

    // Low-rank representability of arbitrary bounded next-step functions.
    let mut repr_err: f64 = 0.0;
    let mut all_norm: f64 = 0.0;
    for h in 0..h_n.saturating_sub(1) {
        let feats = mdp.feature_matrix(h);
        for _ in 0..opts.closure_samples {
            let qn: Vec<f64> = (0..s_n * a_n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let exact = bellman_backup(&mdp, h, &qn);
            let theta = backup_representer(&mdp, h, Some(&state_max(&qn, s_n, a_n)));
            let fitted = &feats * &theta;
            for (x, y) in fitted.iter().zip(&exact) {
                repr_err = repr_err.max((x - y).abs());
            }
            all_norm = all_norm.max(theta.norm());
        }
    }
    if repr_err > REPRESENTATION_TOL {
        return Err(Error::Generation(format!(
            "backup of a bounded next-step function is not linear in the features (max error {repr_err:.3e})"
        )));
    }

    let report = mdp.check_structure();
    if !report.passes() {
        return Err(Error::Generation(format!("structural check failed: {report:?}")));
    }
    let e = &mut mdp.meta.entries;
    e.insert("reward_scale".into(), format!("{scale:.17e}"));
    e.insert("v_star_max".into(), format!("{:.17e}", report.v_star_max));
    e.insert("closure_margin".into(), format!("{}", opts.closure_margin));
    e.insert("optimal_representer_max_norm".into(), format!("{optimal_max:.17e}"));
    e.insert("closure_samples".into(), opts.closure_samples.to_string());
    e.insert("linear_target_backup_max_norm".into(), format!("{closure_max:.17e}"));
    e.insert("representation_max_error".into(), format!("{repr_err:.3e}"));
    e.insert("bounded_class_max_norm".into(), format!("{all_norm:.17e}"));
    e.insert("verified".into(), "true".into());
    Ok(mdp)
}

/// Evaluation setup that accompanies the divergence instance.
#[derive(Clone, Debug)]
pub struct DivergenceSetup {
    /// Behavior policy that generates the experience.
    pub behavior: Policy,
    /// One parameter vector shared by every timestep.
    pub tied_parameters: bool,
    pub lr: f64,
    pub steps: u64,
    pub norm_threshold: f64,
}

pub const DIVERGENCE_INSTANCE_VERSION: &str = "divergence-v1";

/// Single-state, two-action, `H = 20` instance with three redundant feature
/// coordinates (`d = 3 > S·A = 2`).
///
/// The behavior policy always plays action 0, whose feature is
/// `(0.3, 0.3, 0.3)`; the bootstrapped target maximizes over action 1 with
/// feature `(0.6, 0.6, 0)`, which scores `4/3` times higher along the only
/// direction ever updated. With a parameter tied across timesteps the
/// first-order update therefore grows geometrically.
pub fn gen_divergence_instance() -> (LowRankMdp, DivergenceSetup) {
    let horizon = 20;
    let f0 = DVector::from_vec(vec![0.3, 0.3, 0.3]);
    let f1 = DVector::from_vec(vec![0.6, 0.6, 0.0]);
    let mu = DMatrix::from_column_slice(3, 1, &[5.0 / 6.0, 5.0 / 6.0, 5.0 / 3.0]);
    let w = DVector::from_vec(vec![0.0, 0.0, 1.0 / 30.0]);
    let mdp = LowRankMdp::new(MdpTables {
        horizon,
        states: 1,
        actions: 2,
        dim: 3,
        phi: vec![vec![f0, f1]; horizon],
        mu: vec![mu; horizon],
        reward_w: vec![w; horizon],
        start: vec![1.0],
        noise: RewardNoise::None,
        meta: InstanceMeta {
            generator: DIVERGENCE_INSTANCE_VERSION.into(),
            seed: 0,
            ..Default::default()
        },
    })
    .expect("divergence instance tables are valid");
    let setup = DivergenceSetup {
        behavior: Policy::Tabular(ActionTable::constant(horizon, 1, 0)),
        tied_parameters: true,
        lr: 0.1,
        steps: 100_000,
        norm_threshold: 1e6,
    };
    (mdp, setup)
}
