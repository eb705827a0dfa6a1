use super::LowRankMdp;
use crate::error::Result;
use crate::policy::{ActionTable, Component, Policy};

/// `Q_h(s,a)` for `h ∈ 0..=H`, flattened `s*A + a`; level `H` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub values: Vec<Vec<f64>>,
    pub actions: usize,
}

impl QTable {
    pub fn zeros(mdp: &LowRankMdp) -> Self {
        Self {
            values: vec![vec![0.0; mdp.states() * mdp.actions()]; mdp.horizon() + 1],
            actions: mdp.actions(),
        }
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[h][s * self.actions + a]
    }

    pub fn state_max(&self, h: usize, s: usize) -> f64 {
        self.values[h][s * self.actions..(s + 1) * self.actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `V_h(s)` for `h ∈ 0..=H`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    pub values: Vec<Vec<f64>>,
}

impl ValueTable {
    /// `E_{s∼ρ} V_1(s)`.
    pub fn start_value(&self, mdp: &LowRankMdp) -> f64 {
        mdp.start().iter().zip(&self.values[0]).map(|(p, v)| p * v).sum()
    }
}

fn next_state_max(qnext: &[f64], actions: usize, s: usize) -> f64 {
    qnext[s * actions..(s + 1) * actions]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(T_h Q')(s,a) = r_h(s,a) + Σ_{s'} P_h(s'|s,a) max_{a'} Q'(s',a')`.
///
/// `qnext` is indexed `s*A + a` at level `h+1`; at the last timestep it is
/// ignored (the terminal value is zero).
pub fn bellman_backup(mdp: &LowRankMdp, h: usize, qnext: &[f64]) -> Vec<f64> {
    let terminal = h + 1 == mdp.horizon();
    let a_n = mdp.actions();
    let vnext: Vec<f64> = if terminal {
        vec![0.0; mdp.states()]
    } else {
        (0..mdp.states()).map(|s| next_state_max(qnext, a_n, s)).collect()
    };
    backup_with_values(mdp, h, &vnext)
}

/// Policy-evaluation backup: the next action is `next_actions[s']` instead of the max.
pub fn bellman_backup_policy(mdp: &LowRankMdp, h: usize, qnext: &[f64], next_actions: &[usize]) -> Vec<f64> {
    let terminal = h + 1 == mdp.horizon();
    let a_n = mdp.actions();
    let vnext: Vec<f64> = if terminal {
        vec![0.0; mdp.states()]
    } else {
        (0..mdp.states()).map(|s| qnext[s * a_n + next_actions[s]]).collect()
    };
    backup_with_values(mdp, h, &vnext)
}

fn backup_with_values(mdp: &LowRankMdp, h: usize, vnext: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(mdp.states() * mdp.actions());
    for s in 0..mdp.states() {
        for a in 0..mdp.actions() {
            let p = mdp.transition(h, s, a);
            let ev: f64 = p.iter().zip(vnext).map(|(p, v)| p * v).sum();
            out.push(mdp.reward(h, s, a) + ev);
        }
    }
    out
}

/// Exact backward induction for `Q*` and `V*`.
pub fn value_iteration(mdp: &LowRankMdp) -> (QTable, ValueTable) {
    let mut q = QTable::zeros(mdp);
    let mut v = vec![vec![0.0; mdp.states()]; mdp.horizon() + 1];
    for h in (0..mdp.horizon()).rev() {
        q.values[h] = backup_with_values(mdp, h, &v[h + 1]);
        for s in 0..mdp.states() {
            v[h][s] = q.state_max(h, s);
        }
    }
    (q, ValueTable { values: v })
}

/// Greedy table of a Q table, lowest action index on ties.
pub fn greedy_actions(mdp: &LowRankMdp, q: &QTable) -> ActionTable {
    ActionTable(
        (0..mdp.horizon())
            .map(|h| {
                (0..mdp.states())
                    .map(|s| {
                        let mut best = 0;
                        for a in 1..mdp.actions() {
                            if q.get(h, s, a) > q.get(h, s, best) {
                                best = a;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect(),
    )
}

/// `Q^π`, `V^π` of a deterministic action table.
pub fn evaluate_actions(mdp: &LowRankMdp, table: &ActionTable) -> (QTable, ValueTable) {
    let mut q = QTable::zeros(mdp);
    let mut v = vec![vec![0.0; mdp.states()]; mdp.horizon() + 1];
    for h in (0..mdp.horizon()).rev() {
        q.values[h] = backup_with_values(mdp, h, &v[h + 1]);
        for s in 0..mdp.states() {
            v[h][s] = q.get(h, s, table.get(h, s));
        }
    }
    (q, ValueTable { values: v })
}

/// `Q^π`, `V^π` of one expanded component.
pub fn evaluate_component(mdp: &LowRankMdp, c: &Component) -> (QTable, ValueTable) {
    match c {
        Component::Table(t) => evaluate_actions(mdp, t),
        Component::Uniform => {
            let mut q = QTable::zeros(mdp);
            let mut v = vec![vec![0.0; mdp.states()]; mdp.horizon() + 1];
            let a_n = mdp.actions();
            for h in (0..mdp.horizon()).rev() {
                q.values[h] = backup_with_values(mdp, h, &v[h + 1]);
                for s in 0..mdp.states() {
                    v[h][s] = q.values[h][s * a_n..(s + 1) * a_n].iter().sum::<f64>() / a_n as f64;
                }
            }
            (q, ValueTable { values: v })
        }
    }
}

/// `E_{s₁∼ρ} V^π_1(s₁)`; mixtures are averaged component by component.
pub fn policy_value(mdp: &LowRankMdp, policy: &Policy) -> Result<f64> {
    Ok(policy
        .resolve(mdp)?
        .iter()
        .map(|(w, c)| w * evaluate_component(mdp, c).1.start_value(mdp))
        .sum())
}

/// State-action visitation distribution `[h][s*A + a]` from `ρ` under `π`.
pub fn occupancy(mdp: &LowRankMdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    let n = mdp.states() * mdp.actions();
    let mut total = vec![vec![0.0; n]; mdp.horizon()];
    let a_n = mdp.actions();
    for (w, comp) in policy.resolve(mdp)? {
        let mut dist = mdp.start().to_vec();
        for h in 0..mdp.horizon() {
            let mut next = vec![0.0; mdp.states()];
            for s in 0..mdp.states() {
                if dist[s] == 0.0 {
                    continue;
                }
                for a in 0..a_n {
                    let pa = comp.prob(h, s, a, a_n);
                    if pa == 0.0 {
                        continue;
                    }
                    let mass = dist[s] * pa;
                    total[h][mdp.sa(s, a)] += w * mass;
                    for (sp, p) in mdp.transition(h, s, a).iter().enumerate() {
                        next[sp] += mass * p;
                    }
                }
            }
            dist = next;
        }
    }
    Ok(total)
}
