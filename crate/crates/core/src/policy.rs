use rand::Rng;

use crate::envs::LowRankMdp;
use crate::error::{Error, Result};
use crate::qfunc::TargetNetworks;

/// Deterministic action table `[h][s]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionTable(pub Vec<Vec<usize>>);

impl ActionTable {
    pub fn constant(horizon: usize, states: usize, action: usize) -> Self {
        Self(vec![vec![action; states]; horizon])
    }

    pub fn get(&self, h: usize, s: usize) -> usize {
        self.0[h][s]
    }
}

#[derive(Clone, Debug)]
pub enum Policy {
    Tabular(ActionTable),
    /// Greedy with respect to a (possibly bonus-lifted, clipped) linear Q.
    Greedy(TargetNetworks),
    /// Independent uniform action at every step.
    Uniform,
    /// Episode-level mixture: one component is drawn per episode.
    Mixture(Vec<(Policy, f64)>),
}

/// A non-mixture component after expansion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Component {
    Table(ActionTable),
    Uniform,
}

impl Component {
    /// Probability of `a` at `(h, s)`.
    pub fn prob(&self, h: usize, s: usize, a: usize, actions: usize) -> f64 {
        match self {
            Component::Table(t) => f64::from(u8::from(t.get(h, s) == a)),
            Component::Uniform => 1.0 / actions as f64,
        }
    }
}

impl Policy {
    /// Normalizes positive weights to sum to one.
    pub fn mixture(components: Vec<(Policy, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Contract("mixture needs at least one component".into()));
        }
        if components.iter().any(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Contract("mixture weights must be positive".into()));
        }
        let total: f64 = components.iter().map(|(_, w)| w).sum();
        Ok(Policy::Mixture(components.into_iter().map(|(p, w)| (p, w / total)).collect()))
    }

    /// Draws the component played for a whole episode. Non-mixtures return
    /// themselves without touching the RNG.
    pub fn episode_component<'a>(&'a self, rng: &mut impl Rng) -> &'a Policy {
        match self {
            Policy::Mixture(parts) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, w) in parts {
                    acc += w;
                    if u < acc {
                        return p.episode_component(rng);
                    }
                }
                parts.last().unwrap().0.episode_component(rng)
            }
            other => other,
        }
    }

    /// Action of a non-mixture policy. Ties resolve to the lowest index.
    pub fn act(&self, mdp: &LowRankMdp, h: usize, s: usize) -> Result<usize> {
        match self {
            Policy::Tabular(t) => Ok(t.get(h, s)),
            Policy::Greedy(q) => greedy_action(q, mdp, h, s),
            Policy::Uniform | Policy::Mixture(_) => Err(Error::Contract(
                "randomized policies act through act_random".into(),
            )),
        }
    }

    /// Like `act`, but also serves the uniform policy.
    pub fn act_random(&self, mdp: &LowRankMdp, h: usize, s: usize, rng: &mut impl Rng) -> Result<usize> {
        match self {
            Policy::Uniform => Ok(rng.random_range(0..mdp.actions())),
            other => other.act(mdp, h, s),
        }
    }

    /// Expands into weighted components.
    pub fn resolve(&self, mdp: &LowRankMdp) -> Result<Vec<(f64, Component)>> {
        match self {
            Policy::Tabular(t) => {
                check_table(t, mdp)?;
                Ok(vec![(1.0, Component::Table(t.clone()))])
            }
            Policy::Greedy(q) => Ok(vec![(1.0, Component::Table(greedy_table(q, mdp)?))]),
            Policy::Uniform => Ok(vec![(1.0, Component::Uniform)]),
            Policy::Mixture(parts) => {
                let mut out = Vec::new();
                for (p, w) in parts {
                    for (w2, t) in p.resolve(mdp)? {
                        out.push((w * w2, t));
                    }
                }
                Ok(out)
            }
        }
    }
}

fn check_table(t: &ActionTable, mdp: &LowRankMdp) -> Result<()> {
    if t.0.len() != mdp.horizon() || t.0.iter().any(|row| row.len() != mdp.states()) {
        return Err(Error::Contract("action table shape does not match instance".into()));
    }
    if t.0.iter().flatten().any(|&a| a >= mdp.actions()) {
        return Err(Error::Contract("action index out of range".into()));
    }
    Ok(())
}

/// `argmax_a Q_h(s, a)`, lowest index on ties.
pub fn greedy_action(q: &TargetNetworks, mdp: &LowRankMdp, h: usize, s: usize) -> Result<usize> {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for a in 0..mdp.actions() {
        let v = q.eval(h, mdp.phi(h, s, a))?;
        if v > best_v {
            best_v = v;
            best = a;
        }
    }
    Ok(best)
}

pub fn greedy_table(q: &TargetNetworks, mdp: &LowRankMdp) -> Result<ActionTable> {
    let mut table = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let mut row = Vec::with_capacity(mdp.states());
        for s in 0..mdp.states() {
            row.push(greedy_action(q, mdp, h, s)?);
        }
        table.push(row);
    }
    Ok(ActionTable(table))
}
