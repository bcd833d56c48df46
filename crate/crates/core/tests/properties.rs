use proptest::collection::vec;
use proptest::prelude::*;

use smx::mdp::{chain_mdp, random_mdp, TabularMdp};
use smx::operators::{
    boltzmann_value, log_sum_exp_scaled, mellowmax, soft_mellowmax, OperatorSpec, QVector,
};
use smx::overestimation::{marl_paired_reduction, paired_theta_reduction, ErrorModel, MixerSpec};
use smx::solve::{
    exact_q_star, generalized_backup, greedy_policy, policy_evaluation, solve_fixed_point,
    BellmanIteration, QTable,
};
use smx::theory::{
    alpha_contraction_range, gradient_ratio_max, mellowmax_bounds, xi_and_performance_bounds,
};
use smx::Policy;

const EPS: f64 = 1e-9;

fn qv(v: &[f64]) -> QVector {
    QVector::new(v.to_vec()).unwrap()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn values(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    vec(-10.0f64..10.0, n)
}

fn small_mdp() -> impl Strategy<Value = TabularMdp> {
    (2usize..8, 2usize..5, 1usize..4, any::<u64>(), 0.5f64..0.95)
        .prop_map(|(s, a, b, seed, gamma)| random_mdp(s, a, b.min(s), seed, gamma, 1.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn shift_invariance(q in values(1..12), c in -100.0f64..100.0,
                        alpha in 0.0f64..15.0, omega in 0.1f64..15.0) {
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let a = soft_mellowmax(&qv(&q), alpha, omega).unwrap();
        let b = soft_mellowmax(&qv(&shifted), alpha, omega).unwrap();
        prop_assert!((b - (a + c)).abs() <= EPS * (1.0 + c.abs() + a.abs()));
        let a = mellowmax(&qv(&q), omega).unwrap();
        let b = mellowmax(&qv(&shifted), omega).unwrap();
        prop_assert!((b - (a + c)).abs() <= EPS * (1.0 + c.abs() + a.abs()));
    }

    #[test]
    fn operator_ordering(q in values(1..12), alpha in 0.0f64..15.0, omega in 0.1f64..15.0) {
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let mm = mellowmax(&qv(&q), omega).unwrap();
        let sm = soft_mellowmax(&qv(&q), alpha, omega).unwrap();
        let mx = max(&q);
        prop_assert!(mean <= mm + EPS, "mean {mean} > mm {mm}");
        prop_assert!(mm <= sm + EPS, "mm {mm} > sm {sm}");
        prop_assert!(sm <= mx + EPS, "sm {sm} > max {mx}");
        let bz = boltzmann_value(&qv(&q), omega).unwrap();
        prop_assert!(mean - EPS <= bz && bz <= mx + EPS);
    }

    #[test]
    fn monotone_in_alpha_and_omega(q in values(2..10), a1 in 0.0f64..15.0, a2 in 0.0f64..15.0,
                                    w1 in 0.1f64..15.0, w2 in 0.1f64..15.0) {
        let (alo, ahi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let (wlo, whi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        let q = qv(&q);
        prop_assert!(soft_mellowmax(&q, alo, wlo).unwrap() <= soft_mellowmax(&q, ahi, wlo).unwrap() + EPS);
        prop_assert!(soft_mellowmax(&q, alo, wlo).unwrap() <= soft_mellowmax(&q, alo, whi).unwrap() + EPS);
    }

    #[test]
    fn monotone_in_values(q in values(1..10), bump in vec(0.0f64..3.0, 10),
                          alpha in -0.5f64..15.0, omega in 0.1f64..15.0) {
        let raised: Vec<f64> = q.iter().zip(&bump).map(|(v, d)| v + d).collect();
        let lo = soft_mellowmax(&qv(&q), alpha, omega).unwrap();
        let hi = soft_mellowmax(&qv(&raised), alpha, omega).unwrap();
        prop_assert!(lo <= hi + EPS);
    }

    #[test]
    fn gap_to_max_within_xi(q in values(1..20), alpha in 0.0f64..20.0, omega in 0.1f64..20.0) {
        let n = q.len();
        let sm = soft_mellowmax(&qv(&q), alpha, omega).unwrap();
        let xi = xi_and_performance_bounds(alpha, omega, 0.5, n).unwrap().xi_bound;
        prop_assert!(max(&q) - sm <= xi + EPS);
        let mm = mellowmax(&qv(&q), omega).unwrap();
        let xi_mm = mellowmax_bounds(omega, 0.5, n).unwrap().xi_bound;
        prop_assert!(max(&q) - mm <= xi_mm + EPS);
    }

    #[test]
    fn log_sum_exp_matches_literal(q in vec(-5.0f64..5.0, 1..10), beta in -5.0f64..5.0) {
        let literal = q.iter().map(|v| (beta * v).exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp_scaled(&q, beta) - literal).abs() <= 1e-12 * (1.0 + literal.abs()));
    }

    #[test]
    fn sm2_matches_literal_formula(q in vec(-3.0f64..3.0, 1..8), alpha in -2.0f64..5.0,
                                   omega in 0.2f64..5.0) {
        let lse = |b: f64| q.iter().map(|v| (b * v).exp()).sum::<f64>().ln();
        let literal = (lse(alpha + omega) - lse(alpha)) / omega;
        let got = soft_mellowmax(&qv(&q), alpha, omega).unwrap();
        prop_assert!((got - literal).abs() <= 1e-9, "{got} vs {literal}");
    }

    #[test]
    fn gradient_ratio_bound_dominates_grid(alpha in 0.0f64..20.0, omega in 0.1f64..20.0) {
        let f = |x: f64| (omega * x).exp() / (((omega + alpha) * x).exp() + 1.0);
        let numeric = (0..=4000).map(|i| f(i as f64 * 0.005)).fold(0.0, f64::max);
        prop_assert!(numeric <= gradient_ratio_max(alpha, omega).unwrap() + EPS);
    }

    #[test]
    fn xi_monotone(alpha in 0.0f64..20.0, d_alpha in 0.0f64..5.0, omega in 0.1f64..20.0,
                   d_omega in 0.0f64..5.0, n in 1usize..60) {
        let xi = |a: f64, w: f64, n: usize| xi_and_performance_bounds(a, w, 0.9, n).unwrap().xi_bound;
        let base = xi(alpha, omega, n);
        prop_assert!(xi(alpha + d_alpha, omega, n) <= base + 1e-12);
        prop_assert!(xi(alpha, omega + d_omega, n) <= base + 1e-12);
        prop_assert!(xi(alpha, omega, n + 1) >= base - 1e-12);
        prop_assert!(base <= mellowmax_bounds(omega, 0.9, n).unwrap().xi_bound + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iterates_stay_in_value_box(m in small_mdp(), omega in 0.5f64..10.0, alpha in 0.0f64..10.0) {
        let limit = m.r_max() / (1.0 - m.gamma());
        let mut it = BellmanIteration::new(&m, OperatorSpec::Sm2 { alpha, omega }, QTable::zeros_like(&m)).unwrap();
        for _ in 0..60 {
            it.next();
            prop_assert!(it.current().max_abs() <= limit + 1e-12);
        }
    }

    #[test]
    fn residuals_contract_inside_alpha_range(m in small_mdp(), omega in 0.5f64..10.0, frac in 0.0f64..=1.0) {
        let range = alpha_contraction_range(omega, m.r_max(), m.gamma()).unwrap();
        for alpha in [0.0, frac * range.alpha_max] {
            let spec = OperatorSpec::Sm2 { alpha, omega };
            let mut it = BellmanIteration::new(&m, spec, QTable::zeros_like(&m)).unwrap();
            let mut prev = it.next().unwrap();
            for r in it.take(50) {
                prop_assert!(r <= m.gamma() * prev * (1.0 + 1e-9) + 1e-15, "{r} > gamma * {prev}");
                prev = r;
            }
        }
    }

    #[test]
    fn backup_is_gamma_lipschitz_for_mellowmax(m in small_mdp(), omega in 0.5f64..10.0, seed in any::<u64>()) {
        let other = random_mdp(m.n_states(), m.n_actions(), 1, seed, m.gamma(), 1.0).unwrap();
        let q1 = QTable::zeros_like(&m);
        let q2 = QTable::from_rows(
            (0..m.n_states()).map(|s| (0..m.n_actions()).map(|a| other.reward(s, a)).collect()).collect(),
        ).unwrap();
        let spec = OperatorSpec::Mellowmax { omega };
        let d_in = q1.sup_distance(&q2).unwrap();
        let d_out = generalized_backup(&m, &q1, &spec).unwrap()
            .sup_distance(&generalized_backup(&m, &q2, &spec).unwrap()).unwrap();
        prop_assert!(d_out <= m.gamma() * d_in + 1e-12);
    }

    #[test]
    fn fixed_point_gap_and_ordering(m in small_mdp(), alpha in 0.0f64..15.0, omega in 0.5f64..15.0) {
        let q_max = exact_q_star(&m, 1e-11).unwrap();
        let sm = solve_fixed_point(&m, &OperatorSpec::Sm2 { alpha, omega }).unwrap();
        let mm = solve_fixed_point(&m, &OperatorSpec::Mellowmax { omega }).unwrap();
        prop_assert!(sm.converged && mm.converged);
        let bound = xi_and_performance_bounds(alpha, omega, m.gamma(), m.n_actions()).unwrap().performance_bound;
        prop_assert!(q_max.sup_distance(&sm.q).unwrap() <= bound + 1e-8);
        let slack = 1e-8;
        for ((a, b), c) in mm.q.values().iter().zip(sm.q.values()).zip(q_max.values()) {
            prop_assert!(a <= &(b + slack) && b <= &(c + slack));
        }
    }

    #[test]
    fn crn_reduction_monotone(alpha in 0.0f64..10.0, d in 0.1f64..5.0, omega in 0.5f64..10.0,
                              n in 2usize..12, seed in any::<u64>()) {
        let model = ErrorModel { n, epsilon: 1.0, samples: 2000, seed };
        let lo = paired_theta_reduction(&model, &OperatorSpec::Sm2 { alpha, omega }).unwrap();
        let hi = paired_theta_reduction(&model, &OperatorSpec::Sm2 { alpha: alpha + d, omega }).unwrap();
        prop_assert!(hi.reduction_mean <= lo.reduction_mean + 1e-12);
        let wider = paired_theta_reduction(&model, &OperatorSpec::Sm2 { alpha, omega: omega + d }).unwrap();
        prop_assert!(wider.reduction_mean <= lo.reduction_mean + 1e-12);
    }

    #[test]
    fn single_agent_mixer_scales_reduction(w in 0.1f64..4.0, n in 2usize..10, seed in any::<u64>()) {
        let model = ErrorModel { n, epsilon: 1.0, samples: 3000, seed };
        let spec = OperatorSpec::Sm2 { alpha: 10.0, omega: 5.0 };
        let single = paired_theta_reduction(&model, &spec).unwrap();
        let mixed = marl_paired_reduction(&model, &MixerSpec::new(vec![w]).unwrap(), &spec).unwrap();
        prop_assert!((mixed.reduction_mean - w * single.reduction_mean).abs() <= 1e-12 * (1.0 + mixed.reduction_mean.abs()));
        prop_assert!((mixed.bound - w * single.bound).abs() <= 1e-12);
    }
}

fn all_policies(n_states: usize, n_actions: usize) -> impl Iterator<Item = Policy> {
    let total = n_actions.pow(n_states as u32);
    (0..total).map(move |mut code| {
        let mut action_index = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            action_index.push(code % n_actions);
            code /= n_actions;
        }
        Policy { action_index }
    })
}

#[test]
fn greedy_policy_is_optimal_by_enumeration() {
    for (length, slip, gamma) in [(4, 0.0, 0.9), (5, 0.2, 0.95), (6, 0.1, 0.8)] {
        let m = chain_mdp(length, slip, gamma).unwrap();
        let q_star = exact_q_star(&m, 1e-12).unwrap();
        let greedy = greedy_policy(&q_star);
        let value = |p: &Policy| {
            let q = policy_evaluation(&m, p, 1e-12).unwrap();
            (0..length)
                .map(|s| q.get(s, p.action_index[s]))
                .collect::<Vec<_>>()
        };
        let v_greedy = value(&greedy);
        for p in all_policies(length, 2) {
            for (a, b) in value(&p).iter().zip(&v_greedy) {
                assert!(*a <= b + 1e-9, "policy {:?} beats greedy", p.action_index);
            }
        }
    }
}

#[test]
fn policy_evaluation_matches_two_state_solve() {
    // Two states, one action each: V = r + gamma P V solved by Cramer's rule.
    let (p01, p10, gamma) = (0.3, 0.6, 0.9);
    let transition = vec![1.0 - p01, p01, p10, 1.0 - p10];
    let reward = vec![1.0, -0.5];
    let m =
        TabularMdp::checked(2, 1, transition, reward.clone(), gamma, 1.0, vec![0.5, 0.5]).unwrap();
    let q = policy_evaluation(
        &m,
        &Policy {
            action_index: vec![0, 0],
        },
        1e-13,
    )
    .unwrap();

    let (a, b) = (1.0 - gamma * (1.0 - p01), -gamma * p01);
    let (c, d) = (-gamma * p10, 1.0 - gamma * (1.0 - p10));
    let det = a * d - b * c;
    let v0 = (reward[0] * d - b * reward[1]) / det;
    let v1 = (a * reward[1] - c * reward[0]) / det;
    assert!((q.get(0, 0) - v0).abs() < 1e-11, "{} vs {v0}", q.get(0, 0));
    assert!((q.get(1, 0) - v1).abs() < 1e-11, "{} vs {v1}", q.get(1, 0));
}
