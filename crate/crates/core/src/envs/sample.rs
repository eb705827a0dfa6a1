use rand::Rng;

use super::LowRankMdp;
use crate::error::Result;
use crate::policy::Policy;

/// One rolled episode: `states[h]`, `actions[h]`, `rewards[h]` for `h ∈ 0..H`,
/// plus the state reached after the last step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub final_state: usize,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

fn draw(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `u` above the cumulative sum; take the last supported index.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Rolls one episode. A mixture draws its component once, up front.
pub fn sample_episode(mdp: &LowRankMdp, policy: &Policy, rng: &mut impl Rng) -> Result<Trajectory> {
    let component = policy.episode_component(rng);
    let h_n = mdp.horizon();
    let mut states = Vec::with_capacity(h_n);
    let mut actions = Vec::with_capacity(h_n);
    let mut rewards = Vec::with_capacity(h_n);
    let mut s = draw(mdp.start(), rng);
    for h in 0..h_n {
        let a = component.act_random(mdp, h, s, rng)?;
        let r = mdp.noise().realize(mdp.reward(h, s, a), rng);
        states.push(s);
        actions.push(a);
        rewards.push(r);
        s = draw(mdp.transition(h, s, a), rng);
    }
    Ok(Trajectory {
        states,
        actions,
        rewards,
        final_state: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{gen_tabular, policy_value, GenOptions};
    use crate::policy::ActionTable;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empirical_return_matches_policy_value() {
        let mdp = gen_tabular(3, 2, 3, 5, &GenOptions::default()).unwrap();
        let pi = Policy::Tabular(ActionTable::constant(3, 3, 1));
        let exact = policy_value(&mdp, &pi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40_000;
        let mut total = 0.0;
        for _ in 0..n {
            total += sample_episode(&mdp, &pi, &mut rng).unwrap().total_reward();
        }
        assert!((total / n as f64 - exact).abs() < 0.01);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let mdp = gen_tabular(4, 3, 4, 2, &GenOptions::default()).unwrap();
        let pi = Policy::Tabular(ActionTable::constant(4, 4, 2));
        let a = sample_episode(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_episode(&mdp, &pi, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
