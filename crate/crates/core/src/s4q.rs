//! Exploration by phases: replay a mixture of stored greedy policies, fit
//! optimistic values with [`run_s3q`], then roll the new greedy policy until
//! the accumulated uncertainty in some timestep crosses the trigger.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{policy_value, value_iteration, sample_episode, LowRankMdp};
use crate::error::{Error, Result};
use crate::linalg::{self, PrecisionMatrix};
use crate::policy::Policy;
use crate::qfunc::{Bonus, BonusLevel, LevelNet, TargetNetworks};
use crate::record::{PhaseSummary, RunRecord, Source};
use crate::s3q::{run_s3q, S3qOptions, Stop};

pub use crate::policy::greedy_action;

const SCALAR_BYTES: u64 = std::mem::size_of::<f64>() as u64;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryEntry {
    pub q: TargetNetworks,
    pub m: u64,
    /// Exact `E_ρ V^π₁` of the greedy policy, cached for regret accounting.
    pub value: f64,
}

/// Past greedy policies with the number of episodes each was rolled for.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayMemory {
    pub entries: Vec<MemoryEntry>,
}

impl ReplayMemory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn m_tot(&self) -> u64 {
        self.entries.iter().map(|e| e.m).sum()
    }

    pub fn push(&mut self, q: TargetNetworks, m: u64, value: f64) -> Result<()> {
        if m == 0 {
            return Err(Error::Contract("replay entries need at least one episode".into()));
        }
        self.entries.push(MemoryEntry { q, m, value });
        Ok(())
    }

    /// Episode-level mixture playing entry `j` with probability `m_j / m_tot`.
    pub fn controller(&self) -> Result<Policy> {
        if self.is_empty() {
            return Err(Error::Contract("controller of an empty replay memory".into()));
        }
        Policy::mixture(self.entries.iter().map(|e| (Policy::Greedy(e.q.clone()), e.m as f64)).collect())
    }

    /// Exact value of [`Self::controller`].
    pub fn controller_value(&self) -> f64 {
        let tot = self.m_tot() as f64;
        self.entries.iter().map(|e| e.value * e.m as f64 / tot).sum()
    }

    pub fn to_json(&self) -> String {
        let snap: Vec<EntrySnapshot> = self.entries.iter().map(EntrySnapshot::from_entry).collect();
        serde_json::to_string(&snap).expect("memory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Vec<EntrySnapshot> =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        let mut mem = ReplayMemory::default();
        for s in snap {
            let (q, m, value) = s.into_parts()?;
            mem.push(q, m, value)?;
        }
        Ok(mem)
    }
}

/// Index `j` drawn with probability `m_j / m_tot`.
pub fn mixture_sample(memory: &ReplayMemory, rng: &mut impl Rng) -> Result<usize> {
    let tot = memory.m_tot();
    if tot == 0 {
        return Err(Error::Contract("mixture_sample on an empty replay memory".into()));
    }
    let mut u = rng.random_range(0..tot);
    for (j, e) in memory.entries.iter().enumerate() {
        if u < e.m {
            return Ok(j);
        }
        u -= e.m;
    }
    unreachable!("u < m_tot")
}

#[derive(Serialize, Deserialize)]
struct LevelSnapshot {
    theta: Vec<f64>,
    clip: bool,
    alpha: Option<f64>,
    /// Row-major `d × d` inverse covariance of the bonus.
    bonus_inv: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EntrySnapshot {
    m: u64,
    value: f64,
    levels: Vec<LevelSnapshot>,
}

impl EntrySnapshot {
    fn from_entry(e: &MemoryEntry) -> Self {
        EntrySnapshot {
            m: e.m,
            value: e.value,
            levels: e
                .q
                .levels
                .iter()
                .map(|l| LevelSnapshot {
                    theta: l.theta.iter().copied().collect(),
                    clip: l.clip,
                    alpha: l.bonus.as_ref().map(|b| b.alpha),
                    bonus_inv: l.bonus.as_ref().map(|b| b.inv.matrix().transpose().iter().copied().collect()),
                })
                .collect(),
        }
    }

    fn into_parts(self) -> Result<(TargetNetworks, u64, f64)> {
        let mut levels = Vec::with_capacity(self.levels.len());
        for l in self.levels {
            let d = l.theta.len();
            let bonus = match (l.alpha, l.bonus_inv) {
                (Some(alpha), Some(inv)) => {
                    if inv.len() != d * d {
                        return Err(Error::Dimension { expected: d * d, got: inv.len() });
                    }
                    if !(alpha >= 0.0 && alpha.is_finite()) {
                        return Err(Error::Config("bonus scale must be nonnegative".into()));
                    }
                    let inv = PrecisionMatrix::from_matrix(DMatrix::from_row_slice(d, d, &inv))?;
                    Some(Arc::new(BonusLevel { alpha, inv }))
                }
                (None, None) => None,
                _ => return Err(Error::Config("bonus needs both alpha and matrix".into())),
            };
            levels.push(LevelNet {
                theta: DVector::from_vec(l.theta),
                bonus,
                clip: l.clip,
            });
        }
        Ok((TargetNetworks { levels }, self.m, self.value))
    }
}

/// `c (√(d ln(d p n / δ)) + √λ)`.
pub fn alpha_param(d: usize, p: u64, n_1p: u64, delta: f64, lambda: f64, c_bonus: f64) -> Result<f64> {
    if c_bonus == 0.0 {
        return Ok(0.0);
    }
    if !(delta > 0.0 && lambda > 0.0 && c_bonus > 0.0) || d == 0 || p == 0 || n_1p == 0 {
        return Err(Error::Config("bonus scale arguments must be positive".into()));
    }
    let arg = d as f64 * p as f64 * n_1p as f64 / delta;
    if arg <= 1.0 {
        return Err(Error::Config(format!("bonus log argument {arg} must exceed 1")));
    }
    Ok(c_bonus * ((d as f64 * arg.ln()).sqrt() + lambda.sqrt()))
}

pub fn bonus_eval(bonus: &Bonus, h: usize, phi: &DVector<f64>) -> Result<f64> {
    bonus.eval(h, phi)
}

/// `32·c_sn + 8·c_n` with `c_sn = 2 ln(4/δ')`, `c_n = (7/3) ln(4/δ')` and
/// `δ' = δ / (2 n² p)`.
pub fn trig_threshold(delta: f64, n: u64, p: u64) -> f64 {
    let n = n.max(1) as f64;
    let p = p.max(1) as f64;
    let delta_prime = delta / (2.0 * n * n * p);
    let l = (4.0 / delta_prime).ln();
    32.0 * 2.0 * l + 8.0 * (7.0 / 3.0) * l
}

/// Accumulators of one phase.
#[derive(Clone, Debug)]
pub struct PhaseState {
    pub phase: u64,
    pub t: Vec<f64>,
    pub sigma_hat: Vec<DMatrix<f64>>,
    pub ref_inv: Vec<DMatrix<f64>>,
    pub m: u64,
}

impl PhaseState {
    /// Freezes `Σ^ref` (its inverse is formed once, here).
    pub fn new(phase: u64, sigma_ref: Vec<DMatrix<f64>>) -> Result<Self> {
        let ref_inv = sigma_ref.iter().map(linalg::invert_spd).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            phase,
            t: vec![0.0; sigma_ref.len()],
            sigma_hat: sigma_ref,
            ref_inv,
            m: 0,
        })
    }

    /// `T_h += ‖φ‖²_{(Σ^ref_h)⁻¹}`, `Σ̂_h += φφᵀ`; returns whether `max_h T_h ≥ threshold`.
    pub fn trigger_step(&mut self, h: usize, phi: &DVector<f64>, threshold: f64) -> bool {
        self.t[h] += linalg::quad(&self.ref_inv[h], phi).max(0.0);
        linalg::add_outer(&mut self.sigma_hat[h], phi, 1.0);
        self.max_t() >= threshold
    }

    pub fn max_t(&self) -> f64 {
        self.t.iter().copied().fold(0.0, f64::max)
    }
}

/// Modeled resident bytes: per stored policy `H(d + d² + 1) + 1` scalars
/// (parameters, bonus matrix and scale, count), plus the working state of
/// one phase: per timestep a streaming inverse and iterate, the live and
/// reference covariances, the current bonus, and an accumulator.
pub fn memory_bytes(entries: usize, horizon: usize, dim: usize) -> u64 {
    let (h, d) = (horizon as u64, dim as u64);
    let per_policy = h * (d + d * d + 1) + 1;
    let working = h * ((d * d + d) + 2 * d * d + (d * d + 1) + 1);
    (entries as u64 * per_policy + working) * SCALAR_BYTES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct S4qConfig {
    pub delta: f64,
    /// `None` selects `max(1, ln(4 d K / δ))`.
    pub lambda: Option<f64>,
    pub c_bonus: f64,
    pub c_stop: f64,
}

impl Default for S4qConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            lambda: None,
            c_bonus: 1.0,
            c_stop: 1.0,
        }
    }
}

impl S4qConfig {
    pub fn resolved_lambda(&self, dim: usize, episodes: u64) -> f64 {
        self.lambda
            .unwrap_or_else(|| (4.0 * dim as f64 * episodes.max(1) as f64 / self.delta).ln().max(1.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.c_bonus >= 0.0 && self.c_bonus.is_finite()) {
            return Err(Error::Config("c_bonus must be nonnegative".into()));
        }
        if !(self.c_stop > 0.0 && self.c_stop.is_finite()) {
            return Err(Error::Config("c_stop must be positive".into()));
        }
        Ok(())
    }
}

/// Upper bound on completed phases: `Σ_h d ln(K/(dλ)) / ln(1 + L/8)` with the
/// smallest threshold any phase can fire at.
pub fn phase_count_bound(horizon: usize, dim: usize, episodes: u64, lambda: f64, delta: f64) -> f64 {
    let d = dim as f64;
    let info = d * (episodes as f64 / (d * lambda)).ln();
    horizon as f64 * info / (1.0 + trig_threshold(delta, 1, 1) / 8.0).ln()
}

fn optimistic_start_value(mdp: &LowRankMdp, q: &TargetNetworks) -> Result<f64> {
    let mut total = 0.0;
    for (s, &rho) in mdp.start().iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..mdp.actions() {
            best = best.max(q.eval(0, mdp.phi(0, s, a))?);
        }
        total += rho * best;
    }
    Ok(total)
}

fn bonus_from(sigma_hat: &[DMatrix<f64>], alpha: f64) -> Result<Bonus> {
    let levels = sigma_hat
        .iter()
        .map(|s| Ok(BonusLevel { alpha, inv: PrecisionMatrix::from_covariance(s)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Bonus::new(levels))
}

/// Full exploration loop over exactly `episodes` episodes. Every rolled
/// episode, including those inside the subroutine, is charged its exact
/// regret.
pub fn run_s4q(mdp: &LowRankMdp, episodes: u64, cfg: &S4qConfig, rng: &mut impl Rng) -> Result<RunRecord> {
    cfg.validate()?;
    let (h_n, d) = (mdp.horizon(), mdp.dim());
    let lambda = cfg.resolved_lambda(d, episodes);
    let (_, vstar) = value_iteration(mdp);
    let v_star = vstar.start_value(mdp);
    let mut rec = RunRecord {
        v_star,
        lambda,
        ..Default::default()
    };
    let mut memory = ReplayMemory::default();
    let mut bonus = Bonus::isotropic(h_n, d, lambda, alpha_param(d, 1, 1, cfg.delta, lambda, cfg.c_bonus)?)?;
    let mut used: u64 = 0;
    let mut phase: u64 = 1;

    while used < episodes {
        let bytes = memory_bytes(memory.len(), h_n, d);
        let mut summary = PhaseSummary {
            phase: phase as u32,
            s3q_episodes: 0,
            s3q_epochs: 0,
            main_episodes: 0,
            fired: false,
            trigger_value: 0.0,
            threshold: trig_threshold(cfg.delta, 1, phase),
            optimistic_value: 0.0,
            greedy_value: 0.0,
            controller_value: None,
        };

        let (q, sigma_ref) = if memory.is_empty() {
            (TargetNetworks::bonus_only(h_n, d, &bonus), vec![DMatrix::identity(d, d) * lambda; h_n])
        } else {
            let controller = memory.controller()?;
            let cv = memory.controller_value();
            let want = (cfg.c_stop * h_n as f64 * memory.m_tot() as f64).ceil() as u64;
            let budget = want.min(episodes - used);
            let out = run_s3q(mdp, &controller, Some(&bonus), &Stop::budget(budget), lambda, rng, &S3qOptions::default())?;
            for _ in 0..out.stats.trajectories {
                rec.push(phase as u32, Source::S3qSubroutine, v_star - cv, memory.len(), bytes);
            }
            used += out.stats.trajectories;
            summary.s3q_episodes = out.stats.trajectories;
            summary.s3q_epochs = out.stats.epochs_completed;
            summary.controller_value = Some(cv);
            (out.qbest, out.sigma_ref)
        };
        summary.optimistic_value = optimistic_start_value(mdp, &q)?;
        let greedy = Policy::Greedy(q);
        summary.greedy_value = policy_value(mdp, &greedy)?;
        if used >= episodes {
            rec.phases.push(summary);
            break;
        }

        let mut state = PhaseState::new(phase, sigma_ref)?;
        let regret = v_star - summary.greedy_value;
        while used < episodes {
            let traj = sample_episode(mdp, &greedy, rng)?;
            for h in 0..h_n {
                state.trigger_step(h, mdp.phi(h, traj.states[h], traj.actions[h]), f64::INFINITY);
            }
            state.m += 1;
            used += 1;
            rec.push(phase as u32, Source::S4qMain, regret, memory.len(), bytes);
            let threshold = trig_threshold(cfg.delta, state.m, phase);
            summary.threshold = threshold;
            if state.max_t() >= threshold {
                summary.fired = true;
                break;
            }
        }
        summary.main_episodes = state.m;
        summary.trigger_value = state.max_t();
        let fired = summary.fired;
        rec.phases.push(summary);
        if !fired {
            break;
        }
        let Policy::Greedy(q) = greedy else { unreachable!() };
        memory.push(q, state.m, rec.phases.last().unwrap().greedy_value)?;
        phase += 1;
        let alpha = alpha_param(d, phase, memory.m_tot(), cfg.delta, lambda, cfg.c_bonus)?;
        bonus = bonus_from(&state.sigma_hat, alpha)?;
    }
    Ok(rec)
}
