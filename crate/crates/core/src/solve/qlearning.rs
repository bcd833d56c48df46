//! Tabular Q-learning with DQN-style targets.
//!
//! An online table plays the learned network and a frozen table, refreshed
//! every `target_sync_period` steps, plays the target network. The agent
//! follows an epsilon-greedy trajectory on the online table as a single
//! continuing task.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_first, estimation_bias, exact_q_star, QTable, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::operators::{max_of, OperatorSpec};

/// Steps between entries of the bias trace.
pub const BIAS_TRACE_PERIOD: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetRule {
    /// `r + gamma * max_a' frozen(s', a')`
    MaxTarget,
    /// `r + gamma * frozen(s', argmax_a' online(s', a'))`
    DoubleTarget,
    MellowmaxTarget {
        omega: f64,
    },
    Sm2Target {
        alpha: f64,
        omega: f64,
    },
}

impl TargetRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TargetRule::MaxTarget | TargetRule::DoubleTarget => Ok(()),
            TargetRule::MellowmaxTarget { omega } => OperatorSpec::Mellowmax { omega }.validate(),
            TargetRule::Sm2Target { alpha, omega } => OperatorSpec::Sm2 { alpha, omega }.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetRule::MaxTarget => "max_target",
            TargetRule::DoubleTarget => "double_target",
            TargetRule::MellowmaxTarget { .. } => "mellowmax_target",
            TargetRule::Sm2Target { .. } => "sm2_target",
        }
    }

    fn bootstrap(&self, frozen_row: &[f64], online_row: &[f64]) -> f64 {
        match *self {
            TargetRule::MaxTarget => max_of(frozen_row),
            TargetRule::DoubleTarget => frozen_row[argmax_first(online_row)],
            TargetRule::MellowmaxTarget { omega } => {
                OperatorSpec::Mellowmax { omega }.eval(frozen_row)
            }
            TargetRule::Sm2Target { alpha, omega } => {
                OperatorSpec::Sm2 { alpha, omega }.eval(frozen_row)
            }
        }
    }
}

/// Linear decay from `start` to `end` over `decay_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            end: epsilon,
            decay_steps: 0,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    pub steps: u64,
    pub lr: f64,
    pub epsilon: EpsilonSchedule,
    pub target_sync_period: u64,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            steps: 200_000,
            lr: 0.1,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.1,
                decay_steps: 50_000,
            },
            target_sync_period: 100,
            seed: 0,
        }
    }
}

impl QLearningConfig {
    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::param("steps", 0.0, "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return Err(Error::param("lr", self.lr, "must lie in (0, 1]"));
        }
        for (name, e) in [
            ("epsilon_start", self.epsilon.start),
            ("epsilon_end", self.epsilon.end),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::param(name, e, "must lie in [0, 1]"));
            }
        }
        if self.target_sync_period == 0 {
            return Err(Error::param("target_sync_period", 0.0, "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QLearningResult {
    pub q: QTable,
    /// `(step, mean over (s, a) of q - Q*)`, every [`BIAS_TRACE_PERIOD`] steps.
    pub bias_trace: Vec<(u64, f64)>,
    /// Mean bias after the last step.
    pub final_mean_bias: f64,
}

/// Runs Q-learning and measures bias against `Q*` computed on the fly.
pub fn q_learning(
    m: &TabularMdp,
    rule: &TargetRule,
    cfg: &QLearningConfig,
) -> Result<QLearningResult> {
    let q_star = exact_q_star(m, DEFAULT_TOL)?;
    q_learning_with_reference(m, rule, cfg, &q_star)
}

/// [`q_learning`] with a precomputed `Q*`.
pub fn q_learning_with_reference(
    m: &TabularMdp,
    rule: &TargetRule,
    cfg: &QLearningConfig,
    q_star: &QTable,
) -> Result<QLearningResult> {
    rule.validate()?;
    cfg.validate()?;
    if q_star.n_states() != m.n_states() || q_star.n_actions() != m.n_actions() {
        return Err(Error::Shape("Q* does not match the MDP".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("unit interval");
    let n_actions = m.n_actions();
    let gamma = m.gamma();

    let mut online = QTable::zeros_like(m);
    let mut frozen = online.clone();
    let mut bias_trace = Vec::with_capacity((cfg.steps / BIAS_TRACE_PERIOD) as usize);
    let mut s = sample_index(m.initial_dist(), unit.sample(&mut rng));

    for t in 0..cfg.steps {
        let a = if unit.sample(&mut rng) < cfg.epsilon.at(t) {
            rng.random_range(0..n_actions)
        } else {
            argmax_first(online.row(s))
        };
        let next = sample_index(m.transition_row(s, a), unit.sample(&mut rng));
        let target = m.reward(s, a) + gamma * rule.bootstrap(frozen.row(next), online.row(next));
        let old = online.get(s, a);
        online.set(s, a, old + cfg.lr * (target - old));
        s = next;

        let done = t + 1;
        if done % cfg.target_sync_period == 0 {
            frozen.clone_from(&online);
        }
        if done % BIAS_TRACE_PERIOD == 0 {
            bias_trace.push((done, estimation_bias(&online, q_star)?.mean));
        }
    }
    let final_mean_bias = estimation_bias(&online, q_star)?.mean;
    Ok(QLearningResult {
        q: online,
        bias_trace,
        final_mean_bias,
    })
}

/// Inverse-CDF draw from a discrete distribution given `u` in `[0, 1)`.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let e = EpsilonSchedule {
            start: 1.0,
            end: 0.2,
            decay_steps: 100,
        };
        assert_eq!(e.at(0), 1.0);
        assert!((e.at(50) - 0.6).abs() < 1e-15);
        assert_eq!(e.at(100), 0.2);
        assert_eq!(e.at(10_000), 0.2);
        assert_eq!(EpsilonSchedule::constant(0.3).at(7), 0.3);
    }

    #[test]
    fn sample_index_walks_the_cdf() {
        let p = [0.0, 0.25, 0.0, 0.75];
        assert_eq!(sample_index(&p, 0.0), 1);
        assert_eq!(sample_index(&p, 0.2499), 1);
        assert_eq!(sample_index(&p, 0.25), 3);
        assert_eq!(sample_index(&p, 0.999_999_999), 3);
    }

    #[test]
    fn one_step_targets_with_zero_discount() {
        // Deterministic cycle: action a moves s to s + a + 1 (mod 3). With
        // gamma = 0 and lr = 1 a single visit writes the reward.
        let mut transition = vec![0.0; 3 * 2 * 3];
        for s in 0..3 {
            for a in 0..2 {
                transition[(s * 2 + a) * 3 + (s + a + 1) % 3] = 1.0;
            }
        }
        let reward = vec![0.5, -0.25, 1.0, 0.0, -1.0, 0.75];
        let m =
            TabularMdp::checked(3, 2, transition, reward, 0.0, 1.0, vec![1.0, 0.0, 0.0]).unwrap();
        let cfg = QLearningConfig {
            steps: 5_000,
            lr: 1.0,
            epsilon: EpsilonSchedule::constant(1.0),
            target_sync_period: 10,
            seed: 2,
        };
        let r = q_learning(&m, &TargetRule::MaxTarget, &cfg).unwrap();
        assert_eq!(r.q.values(), m.rewards());
        assert_eq!(r.final_mean_bias, 0.0);
        assert_eq!(r.bias_trace.len(), 5);
        assert_eq!(r.bias_trace[0].0, 1000);
    }

    #[test]
    fn sm2_with_zero_alpha_reproduces_mellowmax_target() {
        let m = random_mdp(6, 3, 2, 8, 0.9, 1.0).unwrap();
        let cfg = QLearningConfig {
            steps: 20_000,
            seed: 4,
            ..QLearningConfig::default()
        };
        let a = q_learning(
            &m,
            &TargetRule::Sm2Target {
                alpha: 0.0,
                omega: 5.0,
            },
            &cfg,
        )
        .unwrap();
        let b = q_learning(&m, &TargetRule::MellowmaxTarget { omega: 5.0 }, &cfg).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.bias_trace, b.bias_trace);
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let m = random_mdp(6, 3, 2, 8, 0.9, 1.0).unwrap();
        let cfg = QLearningConfig {
            steps: 10_000,
            seed: 77,
            ..QLearningConfig::default()
        };
        for rule in [
            TargetRule::MaxTarget,
            TargetRule::DoubleTarget,
            TargetRule::Sm2Target {
                alpha: 10.0,
                omega: 5.0,
            },
        ] {
            let a = q_learning(&m, &rule, &cfg).unwrap();
            let b = q_learning(&m, &rule, &cfg).unwrap();
            assert_eq!(a.bias_trace, b.bias_trace);
        }
    }

    #[test]
    fn parameter_errors() {
        let m = random_mdp(3, 2, 1, 0, 0.9, 1.0).unwrap();
        let base = QLearningConfig::default();
        let bad = [
            QLearningConfig { steps: 0, ..base },
            QLearningConfig { lr: 0.0, ..base },
            QLearningConfig { lr: 1.5, ..base },
            QLearningConfig {
                target_sync_period: 0,
                ..base
            },
            QLearningConfig {
                epsilon: EpsilonSchedule::constant(1.2),
                ..base
            },
        ];
        for cfg in bad {
            assert!(q_learning(&m, &TargetRule::MaxTarget, &cfg).is_err());
        }
        assert!(q_learning(&m, &TargetRule::MellowmaxTarget { omega: 0.0 }, &base).is_err());
    }
}
