//! Backup operators on a single state's action-value vector.
//!
//! Every soft operator here is evaluated through log-sum-exp with the row
//! maximum factored out. Soft Mellowmax in particular is computed as
//!
//! ```text
//! sm(q; alpha, omega) = (LSE_{alpha+omega}(q) - LSE_alpha(q)) / omega
//! ```
//!
//! where `LSE_b(q) = log sum_i exp(b * q_i)`. The literal weighted-sum form
//! overflows as soon as `omega * q` reaches a few hundred.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Action values at one state. Non-empty, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct QVector(Vec<f64>);

impl QVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("action-value vector is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "action value {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for QVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl TryFrom<&[f64]> for QVector {
    type Error = Error;

    fn try_from(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }
}

/// Which aggregate of the next-state action values a backup uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Max,
    Mean,
    /// Expected value under `softmax(omega * q)`.
    Boltzmann {
        omega: f64,
    },
    Mellowmax {
        omega: f64,
    },
    /// Soft Mellowmax (SM2).
    Sm2 {
        alpha: f64,
        omega: f64,
    },
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OperatorSpec::Max | OperatorSpec::Mean => Ok(()),
            OperatorSpec::Boltzmann { omega } => check_omega_nonneg(omega),
            OperatorSpec::Mellowmax { omega } => check_omega_pos(omega),
            OperatorSpec::Sm2 { alpha, omega } => {
                check_omega_pos(omega)?;
                check_alpha(alpha)
            }
        }
    }

    /// Evaluates the operator on a row already known to be finite and
    /// non-empty. The spec must have passed [`OperatorSpec::validate`].
    pub fn eval(&self, q: &[f64]) -> f64 {
        debug_assert!(!q.is_empty());
        match *self {
            OperatorSpec::Max => max_of(q),
            OperatorSpec::Mean => mean_of(q),
            OperatorSpec::Boltzmann { omega } => boltzmann_raw(q, omega),
            OperatorSpec::Mellowmax { omega } => sm2_raw(q, 0.0, omega),
            OperatorSpec::Sm2 { alpha, omega } => sm2_raw(q, alpha, omega),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OperatorSpec::Max => "max",
            OperatorSpec::Mean => "mean",
            OperatorSpec::Boltzmann { .. } => "boltzmann",
            OperatorSpec::Mellowmax { .. } => "mellowmax",
            OperatorSpec::Sm2 { .. } => "sm2",
        }
    }

    pub fn omega(&self) -> Option<f64> {
        match *self {
            OperatorSpec::Boltzmann { omega }
            | OperatorSpec::Mellowmax { omega }
            | OperatorSpec::Sm2 { omega, .. } => Some(omega),
            _ => None,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            OperatorSpec::Sm2 { alpha, .. } => Some(alpha),
            _ => None,
        }
    }
}

impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            OperatorSpec::Max => write!(f, "max"),
            OperatorSpec::Mean => write!(f, "mean"),
            OperatorSpec::Boltzmann { omega } => write!(f, "boltzmann(omega={omega})"),
            OperatorSpec::Mellowmax { omega } => write!(f, "mellowmax(omega={omega})"),
            OperatorSpec::Sm2 { alpha, omega } => write!(f, "sm2(alpha={alpha},omega={omega})"),
        }
    }
}

fn check_omega_pos(omega: f64) -> Result<()> {
    if omega.is_finite() && omega > 0.0 {
        Ok(())
    } else {
        Err(Error::param("omega", omega, "must be finite and > 0"))
    }
}

fn check_omega_nonneg(omega: f64) -> Result<()> {
    if omega.is_finite() && omega >= 0.0 {
        Ok(())
    } else {
        Err(Error::param("omega", omega, "must be finite and >= 0"))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::param("alpha", alpha, "must be finite"))
    }
}

/// `softmax(alpha * q)`.
pub fn softmax_weights(q: &QVector, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let q = q.as_slice();
    let m = q
        .iter()
        .map(|&v| alpha * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = q.iter().map(|&v| (alpha * v - m).exp()).collect();
    let z: f64 = w.iter().sum();
    for x in &mut w {
        *x /= z;
    }
    Ok(w)
}

pub fn mellowmax(q: &QVector, omega: f64) -> Result<f64> {
    check_omega_pos(omega)?;
    Ok(sm2_raw(q.as_slice(), 0.0, omega))
}

pub fn soft_mellowmax(q: &QVector, alpha: f64, omega: f64) -> Result<f64> {
    check_omega_pos(omega)?;
    check_alpha(alpha)?;
    Ok(sm2_raw(q.as_slice(), alpha, omega))
}

pub fn boltzmann_value(q: &QVector, omega: f64) -> Result<f64> {
    check_omega_nonneg(omega)?;
    Ok(boltzmann_raw(q.as_slice(), omega))
}

pub fn apply_operator(q: &QVector, spec: &OperatorSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.eval(q.as_slice()))
}

/// `log sum_i exp(beta * q_i)`, with the largest term factored out.
pub fn log_sum_exp_scaled(q: &[f64], beta: f64) -> f64 {
    let (k, m) = argmax_scaled(q, beta);
    let rest: f64 = q
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &v)| (beta * v - m).exp())
        .sum();
    m + rest.ln_1p()
}

fn argmax_scaled(q: &[f64], beta: f64) -> (usize, f64) {
    let mut k = 0;
    let mut m = beta * q[0];
    for (i, &v) in q.iter().enumerate().skip(1) {
        if beta * v > m {
            k = i;
            m = beta * v;
        }
    }
    (k, m)
}

pub(crate) fn max_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::INFINITY, f64::min)
}

fn mean_of(q: &[f64]) -> f64 {
    q.iter().sum::<f64>() / q.len() as f64
}

/// Spread below `1e-15 * max(1, |q|_inf)` counts as a constant row.
fn near_constant(hi: f64, lo: f64) -> bool {
    let scale = hi.abs().max(lo.abs()).max(1.0);
    hi - lo < 1e-15 * scale
}

fn sm2_raw(q: &[f64], alpha: f64, omega: f64) -> f64 {
    let hi = max_of(q);
    let lo = min_of(q);
    if near_constant(hi, lo) {
        return hi;
    }
    // Shift so the largest entry is 0; both LSE terms then stay in [0, log n]
    // for alpha >= 0.
    let mut upper_rest = 0.0;
    let mut lower = 0.0;
    if alpha >= 0.0 {
        let mut seen_max = false;
        for &v in q {
            let d = v - hi;
            if d == 0.0 && !seen_max {
                seen_max = true;
                continue;
            }
            upper_rest += ((alpha + omega) * d).exp();
            lower += (alpha * d).exp();
        }
        let gap = (upper_rest.ln_1p() - lower.ln_1p()) / omega;
        return (hi + gap).min(hi);
    }
    let shifted: Vec<f64> = q.iter().map(|&v| v - hi).collect();
    upper_rest = log_sum_exp_scaled(&shifted, alpha + omega);
    lower = log_sum_exp_scaled(&shifted, alpha);
    hi + (upper_rest - lower) / omega
}

fn boltzmann_raw(q: &[f64], omega: f64) -> f64 {
    let hi = max_of(q);
    let lo = min_of(q);
    if near_constant(hi, lo) {
        return hi;
    }
    let mut z = 0.0;
    let mut acc = 0.0;
    for &v in q {
        let w = (omega * (v - hi)).exp();
        z += w;
        acc += w * (v - hi);
    }
    (hi + acc / z).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn qv(v: &[f64]) -> QVector {
        QVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(QVector::new(vec![]), Err(Error::Domain(_))));
        assert!(matches!(
            QVector::new(vec![1.0, f64::NAN]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            QVector::new(vec![f64::INFINITY]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&qv(&[1.0, 1.0, 1.0]), 7.0).unwrap();
        for x in w {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(
            softmax_weights(&qv(&[0.0, 1.0]), 0.0).unwrap(),
            vec![0.5, 0.5]
        );
        let w = softmax_weights(&qv(&[0.0, 1.0]), 1.0).unwrap();
        assert_abs_diff_eq!(w[0], 0.268_941_421_369_995_1, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.731_058_578_630_004_9, epsilon = 1e-15);
        assert!(softmax_weights(&qv(&[0.0]), f64::NAN).is_err());
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let w = softmax_weights(&qv(&[1e6, -1e6, 1e6 - 1.0]), 100.0).unwrap();
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn mellowmax_examples() {
        for c in [-3.5, 0.0, 0.1, 1e5] {
            assert_eq!(mellowmax(&qv(&[c, c, c]), 2.0).unwrap(), c);
        }
        // log((e + e^2) / 2)
        assert_abs_diff_eq!(
            mellowmax(&qv(&[1.0, 2.0]), 1.0).unwrap(),
            1.620_114_506_958_277_5,
            epsilon = 1e-14
        );
        let v = mellowmax(&qv(&[0.0, 1.0]), 100.0).unwrap();
        assert!((1.0 - v).abs() < 0.01);
        assert_abs_diff_eq!(v, 0.993_068_528_194_400_5, epsilon = 1e-14);
    }

    #[test]
    fn mellowmax_rejects_bad_omega() {
        for w in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                mellowmax(&qv(&[0.0, 1.0]), w),
                Err(Error::Parameter { name: "omega", .. })
            ));
        }
    }

    #[test]
    fn sm2_examples() {
        let a = soft_mellowmax(&qv(&[50.0, 1.0]), 1.0, 1.0).unwrap();
        let b = soft_mellowmax(&qv(&[5.0, 1.0]), 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(b, 4.982_185_478_455_086, epsilon = 1e-13);
        assert_abs_diff_eq!(a - b, 45.017_814_521_544_91, epsilon = 1e-12);
        assert_abs_diff_eq!(
            soft_mellowmax(&qv(&[0.0, 1.0]), 1.0, 1.0).unwrap(),
            0.813_666_323_524_749_7,
            epsilon = 1e-14
        );
        let spec = OperatorSpec::Sm2 {
            alpha: 1.0,
            omega: 1.0,
        };
        let v = apply_operator(&qv(&[50.0, 1.0]), &spec).unwrap();
        assert_abs_diff_eq!(v, 50.0, epsilon = 1e-9);
        assert!(v <= 50.0);
    }

    #[test]
    fn sm2_with_zero_alpha_is_mellowmax_bitwise() {
        let q = qv(&[0.3, -2.0, 7.5, 7.4]);
        for w in [0.1, 1.0, 5.0, 50.0] {
            assert_eq!(
                soft_mellowmax(&q, 0.0, w).unwrap(),
                mellowmax(&q, w).unwrap()
            );
        }
    }

    #[test]
    fn boltzmann_examples() {
        assert_eq!(boltzmann_value(&qv(&[2.5, 2.5]), 3.0).unwrap(), 2.5);
        assert_eq!(boltzmann_value(&qv(&[0.0, 1.0]), 0.0).unwrap(), 0.5);
        assert_abs_diff_eq!(
            boltzmann_value(&qv(&[0.0, 1.0]), 1.0).unwrap(),
            0.731_058_578_630_004_9,
            epsilon = 1e-15
        );
        assert!(boltzmann_value(&qv(&[0.0]), -0.1).is_err());
    }

    #[test]
    fn dispatch() {
        let q = qv(&[3.0, 1.0]);
        assert_eq!(apply_operator(&q, &OperatorSpec::Max).unwrap(), 3.0);
        assert_eq!(apply_operator(&q, &OperatorSpec::Mean).unwrap(), 2.0);
        assert!(apply_operator(&q, &OperatorSpec::Mellowmax { omega: 0.0 }).is_err());
        assert!(apply_operator(
            &q,
            &OperatorSpec::Sm2 {
                alpha: f64::INFINITY,
                omega: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn single_entry_returns_entry() {
        let q = qv(&[-4.25]);
        for spec in [
            OperatorSpec::Max,
            OperatorSpec::Mean,
            OperatorSpec::Boltzmann { omega: 3.0 },
            OperatorSpec::Mellowmax { omega: 3.0 },
            OperatorSpec::Sm2 {
                alpha: -2.0,
                omega: 3.0,
            },
        ] {
            assert_eq!(apply_operator(&q, &spec).unwrap(), -4.25, "{spec}");
        }
    }

    #[test]
    fn negative_alpha_is_evaluated() {
        // alpha = -omega makes the lower LSE uniform-weighted on the negative side.
        let q = qv(&[0.0, 1.0, 2.0]);
        let v = soft_mellowmax(&q, -3.0, 1.0).unwrap();
        let literal = {
            let s = softmax_weights(&q, -3.0).unwrap();
            s.iter()
                .zip(q.as_slice())
                .map(|(w, x)| w * x.exp())
                .sum::<f64>()
                .ln()
        };
        assert_abs_diff_eq!(v, literal, epsilon = 1e-13);
    }

    #[test]
    fn no_overflow_at_large_magnitudes() {
        let q = qv(&[1e6, -1e6, 999_999.5]);
        for spec in [
            OperatorSpec::Boltzmann { omega: 100.0 },
            OperatorSpec::Mellowmax { omega: 100.0 },
            OperatorSpec::Sm2 {
                alpha: 100.0,
                omega: 100.0,
            },
            OperatorSpec::Sm2 {
                alpha: -100.0,
                omega: 100.0,
            },
        ] {
            let v = apply_operator(&q, &spec).unwrap();
            assert!(v.is_finite(), "{spec}");
            assert!((-1e6..=1e6).contains(&v), "{spec}: {v}");
        }
    }

    #[test]
    fn spec_serde_shape() {
        let s = serde_json::to_string(&OperatorSpec::Sm2 {
            alpha: 10.0,
            omega: 5.0,
        })
        .unwrap();
        assert_eq!(s, r#"{"kind":"sm2","alpha":10.0,"omega":5.0}"#);
    }
}
