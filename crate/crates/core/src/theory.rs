//! Closed-form constants and bounds for the SM2 operator, plus an empirical
//! contraction scanner.
//!
//! The bound routines assume `alpha >= 0`; the contraction range and the
//! scanner accept negative `alpha` as well.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OperatorSpec;
use crate::sampling;

/// Ratios above `1 + SCAN_TOLERANCE` count as expansions.
pub const SCAN_TOLERANCE: f64 = 1e-9;

/// Pairs whose sup-norm distance falls below this are redrawn.
pub const SCAN_MIN_DENOMINATOR: f64 = 1e-12;

/// Interval of `alpha` for which the SM2 backup is a `gamma`-contraction on
/// value functions whose per-state spread is at most `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionRange {
    pub c: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl ContractionRange {
    pub fn contains(&self, alpha: f64) -> bool {
        self.alpha_min <= alpha && alpha <= self.alpha_max
    }
}

pub fn alpha_contraction_range(omega: f64, r_max: f64, gamma: f64) -> Result<ContractionRange> {
    check_gamma(gamma)?;
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::param("r_max", r_max, "must be finite and > 0"));
    }
    contraction_range_for_spread(omega, 2.0 * r_max / (1.0 - gamma))
}

/// Same interval, parameterised directly by the value spread `c`.
pub fn contraction_range_for_spread(omega: f64, c: f64) -> Result<ContractionRange> {
    check_omega(omega)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param("c", c, "must be finite and > 0"));
    }
    let cw = c * omega;
    Ok(ContractionRange {
        c,
        alpha_min: -omega / -(-cw).exp_m1(),
        alpha_max: omega / cw.exp_m1(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRegime {
    AlphaGeOmega,
    AlphaLtOmega,
}

impl BoundRegime {
    pub fn of(alpha: f64, omega: f64) -> Self {
        if alpha >= omega {
            BoundRegime::AlphaGeOmega
        } else {
            BoundRegime::AlphaLtOmega
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundRegime::AlphaGeOmega => "alpha_ge_omega",
            BoundRegime::AlphaLtOmega => "alpha_lt_omega",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub regime: BoundRegime,
    /// Supremum over value vectors of `max(q) - op(q)`.
    pub xi_bound: f64,
    /// Bound on the limiting sup-norm gap to `Q*`.
    pub performance_bound: f64,
    /// Upper end of the expected overestimation reduction.
    pub reduction_bound: f64,
}

impl BoundReport {
    fn from_xi(regime: BoundRegime, xi: f64, gamma: f64) -> Self {
        BoundReport {
            regime,
            xi_bound: xi,
            performance_bound: gamma * xi / (1.0 - gamma),
            reduction_bound: xi,
        }
    }
}

/// The log-term inside the SM2 gap bound, before the `1/omega` factor.
pub fn sm2_log_term(alpha: f64, omega: f64, n: usize) -> f64 {
    let n = n as f64;
    match BoundRegime::of(alpha, omega) {
        BoundRegime::AlphaGeOmega => ((1.0 + n) / 2.0).ln(),
        BoundRegime::AlphaLtOmega => (n - alpha * (n - 1.0) / (alpha + omega)).ln(),
    }
}

pub fn xi_and_performance_bounds(
    alpha: f64,
    omega: f64,
    gamma: f64,
    n: usize,
) -> Result<BoundReport> {
    check_alpha_nonneg(alpha)?;
    check_omega(omega)?;
    check_gamma(gamma)?;
    check_n(n)?;
    let regime = BoundRegime::of(alpha, omega);
    let xi = sm2_log_term(alpha, omega, n) / omega;
    Ok(BoundReport::from_xi(regime, xi, gamma))
}

pub fn mellowmax_bounds(omega: f64, gamma: f64, n: usize) -> Result<BoundReport> {
    check_omega(omega)?;
    check_gamma(gamma)?;
    check_n(n)?;
    let xi = (n as f64).ln() / omega;
    Ok(BoundReport::from_xi(BoundRegime::AlphaLtOmega, xi, gamma))
}

/// Bounds for whichever operator `spec` names. `max` has zero gap; `mean` and
/// `boltzmann` have no closed-form bound and yield `None`.
pub fn bounds_for_operator(
    spec: &OperatorSpec,
    gamma: f64,
    n: usize,
) -> Result<Option<BoundReport>> {
    match *spec {
        OperatorSpec::Max => {
            check_gamma(gamma)?;
            Ok(Some(BoundReport::from_xi(
                BoundRegime::AlphaGeOmega,
                0.0,
                gamma,
            )))
        }
        OperatorSpec::Mellowmax { omega } => mellowmax_bounds(omega, gamma, n).map(Some),
        OperatorSpec::Sm2 { alpha, omega } => {
            xi_and_performance_bounds(alpha, omega, gamma, n).map(Some)
        }
        OperatorSpec::Mean | OperatorSpec::Boltzmann { .. } => Ok(None),
    }
}

/// Upper bound on `sup_{x >= 0} exp(omega x) / (exp((omega + alpha) x) + 1)`:
/// `omega / (alpha + omega)` when `alpha < omega`, else the value `1/2` at `x = 0`.
pub fn gradient_ratio_max(alpha: f64, omega: f64) -> Result<f64> {
    check_alpha_nonneg(alpha)?;
    check_omega(omega)?;
    Ok(if alpha < omega {
        omega / (alpha + omega)
    } else {
        0.5
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarlBoundReport {
    pub theta1_low: f64,
    pub theta1_high: f64,
    pub reduction_high: f64,
    pub n_agents: usize,
    pub n_actions: usize,
    pub l: f64,
    pub big_l: f64,
    pub epsilon: f64,
}

/// Overestimation interval under monotone mixing with gradient bounds
/// `[l, big_l]`, and the upper end of the SM2 reduction.
#[allow(clippy::too_many_arguments)]
pub fn marl_bounds(
    epsilon: f64,
    l: f64,
    big_l: f64,
    n_agents: usize,
    n_actions: usize,
    alpha: f64,
    omega: f64,
) -> Result<MarlBoundReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param("epsilon", epsilon, "must be finite and > 0"));
    }
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::param("l", l, "must be finite and >= 0"));
    }
    if !(big_l.is_finite() && big_l > 0.0) {
        return Err(Error::param("L", big_l, "must be finite and > 0"));
    }
    if big_l < l {
        return Err(Error::param("L", big_l, "must be >= l"));
    }
    if n_agents == 0 {
        return Err(Error::param("N", 0.0, "must be >= 1"));
    }
    check_n(n_actions)?;
    check_alpha_nonneg(alpha)?;
    check_omega(omega)?;

    let n = n_actions as f64;
    let agents = n_agents as f64;
    let factor = (n - 1.0) / (n + 1.0);
    Ok(MarlBoundReport {
        theta1_low: epsilon * l * agents * factor,
        theta1_high: epsilon * big_l * agents * factor,
        reduction_high: big_l * agents * sm2_log_term(alpha, omega, n_actions) / omega,
        n_agents,
        n_actions,
        l,
        big_l,
        epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub violations: u64,
    pub worst_ratio: f64,
    /// Pairs evaluated, including injected ones.
    pub pairs: u64,
}

/// Samples `trials` pairs uniformly from `[-c/2, c/2]^n` and measures how
/// much the SM2 operator can stretch their sup-norm distance.
pub fn contraction_scan(
    alpha: f64,
    omega: f64,
    c: f64,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<ScanReport> {
    contraction_scan_with_pairs(alpha, omega, c, n, trials, seed, &[])
}

/// [`contraction_scan`] with extra fixed pairs evaluated ahead of the random
/// ones. Injected pairs may lie outside the sampling box.
pub fn contraction_scan_with_pairs(
    alpha: f64,
    omega: f64,
    c: f64,
    n: usize,
    trials: u64,
    seed: u64,
    injected: &[(Vec<f64>, Vec<f64>)],
) -> Result<ScanReport> {
    let spec = OperatorSpec::Sm2 { alpha, omega };
    spec.validate()?;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param("c", c, "must be finite and > 0"));
    }
    if n < 2 {
        return Err(Error::param("n", n as f64, "must be >= 2"));
    }
    if trials == 0 {
        return Err(Error::param("trials", 0.0, "must be >= 1"));
    }

    let mut report = ScanReport {
        violations: 0,
        worst_ratio: 0.0,
        pairs: 0,
    };
    for (q1, q2) in injected {
        if q1.len() != q2.len() || q1.is_empty() {
            return Err(Error::Shape(format!(
                "injected pair has lengths {} and {}",
                q1.len(),
                q2.len()
            )));
        }
        if q1.iter().chain(q2).any(|v| !v.is_finite()) {
            return Err(Error::Domain("injected pair has a non-finite entry".into()));
        }
        if let Some(ratio) = expansion_ratio(&spec, q1, q2) {
            report.absorb(ratio);
        }
    }

    let half = c / 2.0;
    let dist = Uniform::new_inclusive(-half, half)
        .map_err(|_| Error::param("c", c, "degenerate sampling box"))?;
    let chunks = sampling::map_chunks(seed, trials, |rng, len| {
        let mut part = ScanReport {
            violations: 0,
            worst_ratio: 0.0,
            pairs: 0,
        };
        let mut q1 = vec![0.0; n];
        let mut q2 = vec![0.0; n];
        for _ in 0..len {
            loop {
                q1.iter_mut().for_each(|v| *v = dist.sample(rng));
                q2.iter_mut().for_each(|v| *v = dist.sample(rng));
                if let Some(ratio) = expansion_ratio(&spec, &q1, &q2) {
                    part.absorb(ratio);
                    break;
                }
            }
        }
        part
    });
    for part in chunks {
        report.violations += part.violations;
        report.pairs += part.pairs;
        report.worst_ratio = report.worst_ratio.max(part.worst_ratio);
    }
    Ok(report)
}

impl ScanReport {
    fn absorb(&mut self, ratio: f64) {
        self.pairs += 1;
        if ratio > 1.0 + SCAN_TOLERANCE {
            self.violations += 1;
        }
        self.worst_ratio = self.worst_ratio.max(ratio);
    }
}

fn expansion_ratio(spec: &OperatorSpec, q1: &[f64], q2: &[f64]) -> Option<f64> {
    let denom = q1
        .iter()
        .zip(q2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if denom < SCAN_MIN_DENOMINATOR {
        return None;
    }
    Some((spec.eval(q1) - spec.eval(q2)).abs() / denom)
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(Error::param("omega", omega, "must be finite and > 0"))
    }
}

fn check_alpha_nonneg(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            "alpha",
            alpha,
            "bounds are only defined for finite alpha >= 0",
        ))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::param("gamma", gamma, "must lie in [0, 1)"))
    }
}

fn check_n(n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::param("n", 0.0, "must be >= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn contraction_range_examples() {
        let r = alpha_contraction_range(1.0, 1.0, 0.5).unwrap();
        assert_eq!(r.c, 4.0);
        assert_abs_diff_eq!(r.alpha_max, 0.018_657_360_363_774_05, epsilon = 1e-15);
        assert_abs_diff_eq!(r.alpha_min, -1.018_657_360_363_774, epsilon = 1e-14);

        let r = contraction_range_for_spread(1.0, 0.01).unwrap();
        assert_abs_diff_eq!(r.alpha_max, 99.500_833_331_944_45, epsilon = 1e-10);
        assert!(r.alpha_min < 0.0 && 0.0 < r.alpha_max);
    }

    #[test]
    fn unrestricted_alpha_falls_outside_range() {
        // [50, 1] vs [5, 1] needs a spread of at least 49.
        let r = contraction_range_for_spread(1.0, 49.0).unwrap();
        assert!(!r.contains(1.0));
        assert!(r.contains(0.0));
    }

    #[test]
    fn contraction_range_rejects_bad_parameters() {
        assert!(alpha_contraction_range(1.0, 1.0, 1.0).is_err());
        assert!(alpha_contraction_range(0.0, 1.0, 0.5).is_err());
        assert!(alpha_contraction_range(1.0, -1.0, 0.5).is_err());
    }

    #[test]
    fn performance_bound_examples() {
        let b = xi_and_performance_bounds(10.0, 5.0, 0.9, 10).unwrap();
        assert_eq!(b.regime, BoundRegime::AlphaGeOmega);
        assert_abs_diff_eq!(b.performance_bound, 3.068_546_566_029_165, epsilon = 1e-12);
        assert_abs_diff_eq!(b.reduction_bound, 0.340_949_618_447_685, epsilon = 1e-14);

        let b = xi_and_performance_bounds(5.0, 10.0, 0.9, 5).unwrap();
        assert_eq!(b.regime, BoundRegime::AlphaLtOmega);
        assert_abs_diff_eq!(b.xi_bound, 0.129_928_298_413_026_1, epsilon = 1e-14);

        for (a, w, g) in [(0.0, 1.0, 0.0), (3.0, 1.0, 0.99), (1.0, 7.0, 0.5)] {
            let b = xi_and_performance_bounds(a, w, g, 1).unwrap();
            assert_eq!(b.xi_bound, 0.0);
            assert_eq!(b.performance_bound, 0.0);
        }
        assert!(xi_and_performance_bounds(-0.1, 1.0, 0.9, 3).is_err());
    }

    #[test]
    fn mellowmax_bound_examples() {
        let b = mellowmax_bounds(5.0, 0.9, 10).unwrap();
        assert_abs_diff_eq!(b.performance_bound, 4.144_653_167_389_282, epsilon = 1e-12);
        assert_eq!(
            mellowmax_bounds(5.0, 0.9, 1).unwrap().performance_bound,
            0.0
        );
        for alpha in [0.1, 1.0, 5.0, 50.0] {
            let sm = xi_and_performance_bounds(alpha, 5.0, 0.9, 10).unwrap();
            assert!(sm.performance_bound < b.performance_bound);
        }
        let zero = xi_and_performance_bounds(0.0, 5.0, 0.9, 10).unwrap();
        assert_abs_diff_eq!(zero.xi_bound, b.xi_bound, epsilon = 1e-15);
    }

    #[test]
    fn regimes_agree_at_alpha_equals_omega() {
        for n in [1usize, 2, 3, 10, 100] {
            for w in [0.5, 1.0, 5.0] {
                let n_f = n as f64;
                let ge = ((1.0 + n_f) / 2.0).ln() / w;
                let lt = (n_f - w * (n_f - 1.0) / (w + w)).ln() / w;
                assert_abs_diff_eq!(ge, lt, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradient_ratio_examples() {
        assert_eq!(gradient_ratio_max(3.0, 3.0).unwrap(), 0.5);
        assert_eq!(gradient_ratio_max(0.0, 4.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            gradient_ratio_max(5.0, 10.0).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn marl_bound_examples() {
        let b = marl_bounds(1.0, 1.0, 1.0, 3, 2, 10.0, 5.0).unwrap();
        assert_abs_diff_eq!(b.theta1_low, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.theta1_high, 1.0, epsilon = 1e-15);

        let single = marl_bounds(0.7, 1.0, 1.0, 1, 6, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(single.theta1_low, 0.7 * 5.0 / 7.0, epsilon = 1e-15);

        let b = marl_bounds(2.0, 0.5, 2.0, 4, 1, 3.0, 1.0).unwrap();
        assert_eq!(
            (b.theta1_low, b.theta1_high, b.reduction_high),
            (0.0, 0.0, 0.0)
        );

        let b = marl_bounds(1.0, 0.5, 2.0, 4, 10, 10.0, 5.0).unwrap();
        assert_abs_diff_eq!(b.reduction_high, 8.0 * 5.5f64.ln() / 5.0, epsilon = 1e-14);
        assert!(marl_bounds(1.0, 2.0, 1.0, 4, 10, 10.0, 5.0).is_err());
    }

    #[test]
    fn scan_flags_the_unrestricted_pair() {
        let pair = (vec![50.0, 1.0], vec![5.0, 1.0]);
        let r = contraction_scan_with_pairs(1.0, 1.0, 4.0, 2, 100, 0, &[pair]).unwrap();
        assert!(r.violations >= 1);
        assert!(r.worst_ratio >= 45.0178 / 45.0);
        assert_eq!(r.pairs, 101);
    }

    #[test]
    fn scan_is_seed_deterministic() {
        let a = contraction_scan(2.0, 1.0, 4.0, 3, 20_000, 11).unwrap();
        let b = contraction_scan(2.0, 1.0, 4.0, 3, 20_000, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pairs, 20_000);
    }

    #[test]
    fn mellowmax_scan_has_no_violations() {
        for w in [0.5, 2.0, 20.0] {
            let r = contraction_scan(0.0, w, 10.0, 4, 10_000, 3).unwrap();
            assert_eq!(r.violations, 0, "omega={w}: {r:?}");
        }
    }

    #[test]
    fn scan_rejects_bad_arguments() {
        assert!(contraction_scan(0.0, 1.0, 1.0, 1, 10, 0).is_err());
        assert!(contraction_scan(0.0, 1.0, 1.0, 2, 0, 0).is_err());
        assert!(contraction_scan(0.0, 0.0, 1.0, 2, 10, 0).is_err());
        assert!(contraction_scan(0.0, 1.0, -1.0, 2, 10, 0).is_err());
    }
}
