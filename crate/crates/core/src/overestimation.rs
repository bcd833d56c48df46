//! Monte Carlo estimates of overestimation under i.i.d. uniform value errors.
//!
//! All operators are shift invariant, so the true values are normalized to
//! zero and each estimate reduces to `E[op(Z)]` with `Z ~ U[-eps, eps]^n`.
//! Paired quantities reuse the same draws for both terms.

use rand::distr::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{max_of, OperatorSpec};
use crate::sampling::{self, merge_moments, Moments};
use crate::theory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Actions per agent.
    pub n: usize,
    /// Errors are uniform on `[-epsilon, epsilon]`.
    pub epsilon: f64,
    pub samples: u64,
    pub seed: u64,
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", 0.0, "must be >= 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::param(
                "epsilon",
                self.epsilon,
                "must be finite and > 0",
            ));
        }
        if self.samples == 0 {
            return Err(Error::param("samples", 0.0, "must be >= 1"));
        }
        Ok(())
    }

    fn dist(&self) -> Uniform<f64> {
        Uniform::new_inclusive(-self.epsilon, self.epsilon).expect("epsilon > 0")
    }
}

/// Linear mixer `Q_tot = sum_i w_i Q_i`, whose partial derivatives are the
/// weights themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerSpec {
    weights: Vec<f64>,
}

impl MixerSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::param("weights", 0.0, "need at least one agent"));
        }
        if let Some(&w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::param("weights", w, "must be finite and >= 0"));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::param("weights", 0.0, "largest weight must be > 0"));
        }
        Ok(Self { weights })
    }

    /// `n_agents` agents sharing weight `w`.
    pub fn uniform(n_agents: usize, w: f64) -> Result<Self> {
        Self::new(vec![w; n_agents])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_agents(&self) -> usize {
        self.weights.len()
    }

    /// Smallest mixing gradient.
    pub fn l(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest mixing gradient.
    pub fn big_l(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mix(&self, per_agent: &[f64]) -> f64 {
        self.weights.iter().zip(per_agent).map(|(w, q)| w * q).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl ThetaEstimate {
    fn from_moments(m: &Moments) -> Self {
        Self {
            mean: m.mean(),
            std_error: m.std_error(),
            samples: m.count,
        }
    }

    /// Whether `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionEstimate {
    pub reduction_mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `0 < reduction_mean <= bound + 3 std_error`; true by convention for a
    /// single action, where the reduction is identically zero.
    pub within_bound: bool,
}

/// `E[max of n i.i.d. U[-eps, eps]] = eps (n - 1) / (n + 1)`.
pub fn analytic_theta_max(n: usize, epsilon: f64) -> f64 {
    let n = n as f64;
    epsilon * (n - 1.0) / (n + 1.0)
}

/// Draws `samples` error blocks of `rows x n` and accumulates `f(block)`.
fn sample_blocks<F>(model: &ErrorModel, rows: usize, f: F) -> Moments
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dist = model.dist();
    let width = rows * model.n;
    let parts = sampling::map_chunks(model.seed, model.samples, |rng: &mut ChaCha8Rng, len| {
        let mut block = vec![0.0; width];
        let mut acc = Moments::default();
        for _ in 0..len {
            block.iter_mut().for_each(|z| *z = dist.sample(rng));
            acc.push(f(&block));
        }
        acc
    });
    merge_moments(&parts)
}

/// Estimates `E[op(Z)]`, the overestimation of `spec` at a state whose true
/// action values are all equal.
pub fn sample_theta(model: &ErrorModel, spec: &OperatorSpec) -> Result<ThetaEstimate> {
    model.validate()?;
    spec.validate()?;
    let m = sample_blocks(model, 1, |z| spec.eval(z));
    Ok(ThetaEstimate::from_moments(&m))
}

fn check_reduction_spec(spec: &OperatorSpec) -> Result<()> {
    spec.validate()?;
    match *spec {
        OperatorSpec::Sm2 { alpha, .. } if alpha < 0.0 => Err(Error::param(
            "alpha",
            alpha,
            "reduction bounds need alpha >= 0",
        )),
        OperatorSpec::Sm2 { .. } | OperatorSpec::Mellowmax { .. } => Ok(()),
        _ => Err(Error::Config(format!(
            "overestimation reduction is defined for sm2 or mellowmax, not {}",
            spec.name()
        ))),
    }
}

/// `(1/omega) * log-term` for sm2, `(1/omega) log n` for mellowmax.
fn single_agent_reduction_bound(spec: &OperatorSpec, n: usize) -> Result<f64> {
    Ok(theory::bounds_for_operator(spec, 0.0, n)?
        .expect("reduction specs have closed-form bounds")
        .reduction_bound)
}

fn reduction_from(m: &Moments, bound: f64, n: usize) -> ReductionEstimate {
    let reduction_mean = m.mean();
    let std_error = m.std_error();
    let within_bound = if n == 1 {
        true
    } else {
        reduction_mean > 0.0 && reduction_mean <= bound + 3.0 * std_error
    };
    ReductionEstimate {
        reduction_mean,
        std_error,
        bound,
        within_bound,
    }
}

/// Estimates `E[max(Z) - op(Z)]` from shared draws.
pub fn paired_theta_reduction(
    model: &ErrorModel,
    spec: &OperatorSpec,
) -> Result<ReductionEstimate> {
    model.validate()?;
    check_reduction_spec(spec)?;
    let bound = single_agent_reduction_bound(spec, model.n)?;
    let m = sample_blocks(model, 1, |z| max_of(z) - spec.eval(z));
    Ok(reduction_from(&m, bound, model.n))
}

/// Estimates `E[sum_i w_i op(Z_i)]` with one independent error vector per agent.
pub fn marl_sample_theta(
    model: &ErrorModel,
    mixer: &MixerSpec,
    spec: &OperatorSpec,
) -> Result<ThetaEstimate> {
    model.validate()?;
    spec.validate()?;
    let n = model.n;
    let m = sample_blocks(model, mixer.n_agents(), |z| {
        z.chunks(n)
            .zip(mixer.weights())
            .map(|(zi, w)| w * spec.eval(zi))
            .sum()
    });
    Ok(ThetaEstimate::from_moments(&m))
}

/// Estimates `Theta^1 - Theta^1_op` from shared draws, with the bound
/// `(L N / omega) * log-term`.
pub fn marl_paired_reduction(
    model: &ErrorModel,
    mixer: &MixerSpec,
    spec: &OperatorSpec,
) -> Result<ReductionEstimate> {
    model.validate()?;
    check_reduction_spec(spec)?;
    let n = model.n;
    let bound = mixer.big_l() * mixer.n_agents() as f64 * single_agent_reduction_bound(spec, n)?;
    let m = sample_blocks(model, mixer.n_agents(), |z| {
        z.chunks(n)
            .zip(mixer.weights())
            .map(|(zi, w)| w * (max_of(zi) - spec.eval(zi)))
            .sum()
    });
    Ok(reduction_from(&m, bound, n))
}
