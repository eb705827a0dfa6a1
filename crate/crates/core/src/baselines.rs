//! First-order semi-gradient Q-learning without projection, target networks
//! or clipping. It exists to be unstable.

use nalgebra::DVector;
use rand::Rng;

use crate::envs::{occupancy, policy_value, sample_episode, value_iteration, LowRankMdp};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::record::{RunRecord, Source};

#[derive(Clone, Debug, PartialEq)]
pub struct VanillaState {
    /// One vector per timestep, or a single shared vector when `tied`.
    pub theta: Vec<DVector<f64>>,
    pub lr: f64,
    pub tied: bool,
}

impl VanillaState {
    pub fn zeros(horizon: usize, dim: usize, lr: f64, tied: bool) -> Self {
        let n = if tied { 1 } else { horizon };
        Self {
            theta: vec![DVector::zeros(dim); n],
            lr,
            tied,
        }
    }

    #[inline]
    fn slot(&self, h: usize) -> usize {
        if self.tied {
            0
        } else {
            h
        }
    }

    pub fn params(&self, h: usize) -> &DVector<f64> {
        &self.theta[self.slot(h)]
    }

    pub fn max_norm(&self) -> f64 {
        self.theta.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `max_a ⟨φ_{h+1}(s', a), θ_{h+1}⟩`, zero past the horizon.
    pub fn next_max(&self, mdp: &LowRankMdp, h: usize, s_next: usize) -> f64 {
        if h + 1 >= mdp.horizon() {
            return 0.0;
        }
        let th = self.params(h + 1);
        (0..mdp.actions())
            .map(|a| mdp.phi(h + 1, s_next, a).dot(th))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `θ_h ← θ_h − α(⟨φ, θ_h⟩ − r − max_a' ⟨φ', θ_{h+1}⟩) φ`.
/// Returns `false` when the update produced a non-finite parameter.
pub fn vanilla_step(state: &mut VanillaState, mdp: &LowRankMdp, h: usize, s: usize, a: usize, r: f64, s_next: usize) -> bool {
    let phi = mdp.phi(h, s, a);
    let err = phi.dot(state.params(h)) - r - state.next_max(mdp, h, s_next);
    let slot = state.slot(h);
    state.theta[slot].axpy(-state.lr * err, phi, 1.0);
    state.theta[slot].iter().all(|x| x.is_finite())
}

/// Exact expected update at level `h` under the occupancy of `policy`,
/// with every other level held fixed.
pub fn expected_update(state: &VanillaState, mdp: &LowRankMdp, policy: &Policy, h: usize) -> Result<DVector<f64>> {
    let occ = occupancy(mdp, policy)?;
    let mut out = DVector::zeros(mdp.dim());
    for s in 0..mdp.states() {
        for a in 0..mdp.actions() {
            let w = occ[h][mdp.sa(s, a)];
            if w == 0.0 {
                continue;
            }
            let phi = mdp.phi(h, s, a);
            let q = phi.dot(state.params(h));
            for (sp, &p) in mdp.transition(h, s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let err = q - mdp.reward(h, s, a) - state.next_max(mdp, h, sp);
                out.axpy(-state.lr * w * p * err, phi, 1.0);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct DivergenceReport {
    pub steps_run: u64,
    pub episodes_run: u64,
    /// `(step, max_h ‖θ_h‖)` sampled at each episode end.
    pub norm_trace: Vec<(u64, f64)>,
    pub max_norm: f64,
    /// First step after which the norm exceeded the threshold or became non-finite.
    pub first_divergence_step: Option<u64>,
    pub first_divergence_episode: Option<u64>,
    pub nonfinite_step: Option<u64>,
    pub final_state: VanillaState,
    pub record: RunRecord,
}

impl DivergenceReport {
    pub fn diverged(&self) -> bool {
        self.first_divergence_step.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct VanillaConfig {
    pub steps: u64,
    pub lr: f64,
    pub tied: bool,
    pub norm_threshold: f64,
}

/// Rolls `policy` and applies one update per visited `(h, s, a)` until
/// `steps` updates have run. Stops early once parameters turn non-finite.
pub fn run_vanilla(mdp: &LowRankMdp, policy: &Policy, cfg: &VanillaConfig, rng: &mut impl Rng) -> Result<DivergenceReport> {
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let (_, v) = value_iteration(mdp);
    let v_star = v.start_value(mdp);
    let regret = v_star - policy_value(mdp, policy)?;
    let mut state = VanillaState::zeros(mdp.horizon(), mdp.dim(), cfg.lr, cfg.tied);
    let bytes = (state.theta.len() * mdp.dim() * std::mem::size_of::<f64>()) as u64;
    let mut rep = DivergenceReport {
        steps_run: 0,
        episodes_run: 0,
        norm_trace: Vec::new(),
        max_norm: 0.0,
        first_divergence_step: None,
        first_divergence_episode: None,
        nonfinite_step: None,
        final_state: state.clone(),
        record: RunRecord {
            v_star,
            ..Default::default()
        },
    };
    'episodes: while rep.steps_run < cfg.steps {
        let traj = sample_episode(mdp, policy, rng)?;
        rep.episodes_run += 1;
        rep.record.push(0, Source::Baseline, regret, 0, bytes);
        for h in 0..mdp.horizon() {
            if rep.steps_run >= cfg.steps {
                break;
            }
            let s_next = traj.states.get(h + 1).copied().unwrap_or(traj.final_state);
            let finite = vanilla_step(&mut state, mdp, h, traj.states[h], traj.actions[h], traj.rewards[h], s_next);
            rep.steps_run += 1;
            let norm = state.max_norm();
            if !finite || norm > cfg.norm_threshold {
                rep.first_divergence_step.get_or_insert(rep.steps_run);
                rep.first_divergence_episode.get_or_insert(rep.episodes_run);
            }
            if !finite {
                rep.nonfinite_step = Some(rep.steps_run);
                rep.max_norm = f64::INFINITY;
                rep.norm_trace.push((rep.steps_run, f64::INFINITY));
                break 'episodes;
            }
            rep.max_norm = rep.max_norm.max(norm);
        }
        rep.norm_trace.push((rep.steps_run, state.max_norm()));
    }
    rep.final_state = state;
    Ok(rep)
}
