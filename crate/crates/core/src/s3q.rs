//! Stabilized second-order streaming Q-learning under a fixed controller.
//!
//! Epoch `e` spends `2^e` episodes on each level, sweeping levels from the
//! last timestep to the first. Only the active level is regressed: every
//! other level is either already committed for this epoch or will be reset
//! before its turn, so skipping their updates leaves every committed value
//! unchanged.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{sample_episode, LowRankMdp};
use crate::error::Result;
use crate::linalg;
use crate::policy::Policy;
use crate::qfunc::{commit_target, Bonus, TargetNetworks};
use crate::streamls::SlsState;

/// `r + max_a' Q^tar_{h+1}(s', a') − ⟨φ, θ̂⟩`.
#[inline]
pub fn td_error(r: f64, qtar_next_max: f64, phi_dot_theta: f64) -> f64 {
    r + qtar_next_max - phi_dot_theta
}

/// When to stop streaming. Checked before each episode.
#[derive(Clone, Debug, Default)]
pub struct Stop {
    pub budget: Option<u64>,
    pub interrupt: Option<Arc<AtomicBool>>,
}

impl Stop {
    pub fn budget(episodes: u64) -> Self {
        Self {
            budget: Some(episodes),
            interrupt: None,
        }
    }

    pub fn interrupt(flag: Arc<AtomicBool>) -> Self {
        Self {
            budget: None,
            interrupt: Some(flag),
        }
    }

    fn fires(&self, used: u64) -> bool {
        self.budget.is_some_and(|b| used >= b) || self.interrupt.as_ref().is_some_and(|f| f.load(Ordering::Relaxed))
    }
}

/// One regression sample, logged for oracle replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLogEntry {
    pub epoch: u32,
    /// Zero-based timestep.
    pub level: usize,
    pub phi: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct S3qStats {
    /// Fully completed epochs.
    pub epochs_completed: u32,
    /// Samples behind each level of the returned networks.
    pub level_counts: Vec<u64>,
    pub trajectories: u64,
    /// Trajectories folded into the reference covariance.
    pub sigma_ref_count: u64,
    pub commits: u64,
    pub max_committed_norm: f64,
}

impl S3qStats {
    /// `n^ℓ ≥ ⌊K/(4H)⌋` for every level, at the stopping point `K = trajectories`.
    pub fn accounting_holds(&self) -> bool {
        if self.epochs_completed == 0 {
            return false;
        }
        let h = self.level_counts.len() as u64;
        let floor = self.trajectories / (4 * h);
        self.level_counts.iter().all(|&n| n >= floor)
    }

    /// Trajectories a run with `epochs` complete epochs must have consumed.
    pub fn full_epoch_trajectories(horizon: usize, epochs: u32) -> u64 {
        horizon as u64 * ((1u64 << (epochs + 1)) - 2)
    }
}

#[derive(Clone, Debug)]
pub struct S3qOutput {
    pub qbest: TargetNetworks,
    /// `λI + Σ φ_h φ_hᵀ` over every trajectory rolled in this call.
    pub sigma_ref: Vec<DMatrix<f64>>,
    pub stats: S3qStats,
    /// Set when the stop fired before the first epoch completed.
    pub no_full_epoch: bool,
    pub samples: Vec<SampleLogEntry>,
}

#[derive(Clone, Debug, Default)]
pub struct S3qOptions {
    pub log_samples: bool,
}

fn next_max(
    mdp: &LowRankMdp,
    qtar: &TargetNetworks,
    level: usize,
    next_state: usize,
) -> Result<f64> {
    if level + 1 >= mdp.horizon() {
        return Ok(0.0);
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..mdp.actions() {
        best = best.max(qtar.eval(level + 1, mdp.phi(level + 1, next_state, a))?);
    }
    Ok(best)
}

pub fn run_s3q(
    mdp: &LowRankMdp,
    controller: &Policy,
    bonus: Option<&Bonus>,
    stop: &Stop,
    lambda: f64,
    rng: &mut impl Rng,
    opts: &S3qOptions,
) -> Result<S3qOutput> {
    let (h_n, d) = (mdp.horizon(), mdp.dim());
    let zero_epoch = match bonus {
        Some(b) => TargetNetworks::bonus_only(h_n, d, b),
        None => TargetNetworks::zeros(h_n, d),
    };
    let mut qtar = zero_epoch.clone();
    let mut qbest = zero_epoch;
    let mut sigma_ref = vec![DMatrix::identity(d, d) * lambda; h_n];
    let mut stats = S3qStats {
        epochs_completed: 0,
        level_counts: vec![0; h_n],
        trajectories: 0,
        sigma_ref_count: 0,
        commits: 0,
        max_committed_norm: 0.0,
    };
    let mut samples = Vec::new();
    // Validate λ before any rollout.
    SlsState::new(d, lambda)?;

    let mut epoch: u32 = 1;
    'outer: loop {
        let per_level = 1u64 << epoch.min(62);
        for level in (0..h_n).rev() {
            let mut sls = SlsState::new(d, lambda)?;
            for _ in 0..per_level {
                if stop.fires(stats.trajectories) {
                    break 'outer;
                }
                let traj = sample_episode(mdp, controller, rng)?;
                stats.trajectories += 1;
                stats.sigma_ref_count += 1;
                for (h, sig) in sigma_ref.iter_mut().enumerate() {
                    linalg::add_outer(sig, mdp.phi(h, traj.states[h], traj.actions[h]), 1.0);
                }
                let s_next = traj.states.get(level + 1).copied().unwrap_or(traj.final_state);
                let phi = mdp.phi(level, traj.states[level], traj.actions[level]);
                let target = traj.rewards[level] + next_max(mdp, &qtar, level, s_next)?;
                sls.step(phi, target)?;
                if opts.log_samples {
                    samples.push(SampleLogEntry {
                        epoch,
                        level,
                        phi: phi.iter().copied().collect(),
                        target,
                    });
                }
            }
            let sigma = sls.inv().covariance()?;
            let level_bonus = bonus.map(|b| b.levels[level].clone());
            let net = commit_target(sls.theta(), &sigma, level_bonus, bonus.is_some())?;
            stats.commits += 1;
            stats.max_committed_norm = stats.max_committed_norm.max(net.theta.norm());
            qtar.levels[level] = net;
        }
        qbest = qtar.clone();
        stats.epochs_completed = epoch;
        stats.level_counts = vec![per_level; h_n];
        epoch += 1;
    }

    Ok(S3qOutput {
        qbest,
        sigma_ref,
        no_full_epoch: stats.epochs_completed == 0,
        stats,
        samples,
    })
}
