//! Generalized Bellman backups, fixed-point iteration and policy utilities.

mod qlearning;

pub use qlearning::{
    q_learning, q_learning_with_reference, EpsilonSchedule, QLearningConfig, QLearningResult,
    TargetRule, BIAS_TRACE_PERIOD,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::operators::OperatorSpec;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 200_000;

/// An `n_states x n_actions` table of action values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn zeros_like(m: &TabularMdp) -> Self {
        Self::zeros(m.n_states(), m.n_actions())
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape(
                "Q-table needs at least one row and column".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::Shape("Q-table rows have different lengths".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Q-table entry is not finite".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_actions)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + c` entrywise.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v += c);
        out
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// `max |self - other|`.
    pub fn sup_distance(&self, other: &QTable) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn check_shape(&self, other: &QTable) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "Q-tables are {}x{} and {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )))
        }
    }

    fn check_mdp(&self, m: &TabularMdp) -> Result<()> {
        if self.n_states == m.n_states() && self.n_actions == m.n_actions() {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "Q-table is {}x{} but the MDP is {}x{}",
                self.n_states,
                self.n_actions,
                m.n_states(),
                m.n_actions()
            )))
        }
    }
}

/// `R + gamma * P v` for a per-state next-value vector `v`.
fn backup_with_values(m: &TabularMdp, next_values: &[f64], out: &mut QTable) {
    let gamma = m.gamma();
    for s in 0..m.n_states() {
        for a in 0..m.n_actions() {
            let expected: f64 = m
                .transition_row(s, a)
                .iter()
                .zip(next_values)
                .map(|(p, v)| p * v)
                .sum();
            out.set(s, a, m.reward(s, a) + gamma * expected);
        }
    }
}

fn state_values(q: &QTable, spec: &OperatorSpec) -> Vec<f64> {
    q.rows().map(|row| spec.eval(row)).collect()
}

/// One synchronous backup `R + gamma * P op(q)`.
pub fn generalized_backup(m: &TabularMdp, q: &QTable, spec: &OperatorSpec) -> Result<QTable> {
    spec.validate()?;
    q.check_mdp(m)?;
    let mut out = QTable::zeros_like(m);
    backup_with_values(m, &state_values(q, spec), &mut out);
    Ok(out)
}

/// Step-by-step Jacobi iteration of a generalized Bellman operator.
///
/// Each call to `next` applies one backup and yields the sup-norm residual
/// `|Q^{k+1} - Q^k|_inf`; `current` exposes the latest iterate.
pub struct BellmanIteration<'a> {
    mdp: &'a TabularMdp,
    spec: OperatorSpec,
    current: QTable,
    scratch: QTable,
    values: Vec<f64>,
    steps: usize,
}

impl<'a> BellmanIteration<'a> {
    pub fn new(mdp: &'a TabularMdp, spec: OperatorSpec, q0: QTable) -> Result<Self> {
        spec.validate()?;
        q0.check_mdp(mdp)?;
        let scratch = q0.clone();
        Ok(Self {
            mdp,
            spec,
            current: q0,
            scratch,
            values: vec![0.0; mdp.n_states()],
            steps: 0,
        })
    }

    pub fn current(&self) -> &QTable {
        &self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn into_current(self) -> QTable {
        self.current
    }
}

impl Iterator for BellmanIteration<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        for (v, row) in self.values.iter_mut().zip(self.current.rows()) {
            *v = self.spec.eval(row);
        }
        backup_with_values(self.mdp, &self.values, &mut self.scratch);
        std::mem::swap(&mut self.current, &mut self.scratch);
        self.steps += 1;
        Some(
            self.current
                .sup_distance(&self.scratch)
                .expect("iterates share a shape"),
        )
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub q: QTable,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        self.residual_history
            .last()
            .copied()
            .unwrap_or(f64::INFINITY)
    }
}

/// Iterates the backup for `spec` from `q0` until the sup-norm residual is at
/// most `tol` or `max_iters` backups have run. Running out of iterations is
/// reported through `converged`, not as an error.
pub fn value_iteration(
    m: &TabularMdp,
    spec: &OperatorSpec,
    tol: f64,
    max_iters: usize,
    q0: &QTable,
) -> Result<SolveResult> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::param("tol", tol, "must be finite and > 0"));
    }
    q0.check_mdp(m)?;
    if let Some(v) = q0
        .values()
        .iter()
        .find(|v| !(-m.r_max()..=m.r_max()).contains(*v))
    {
        return Err(Error::param(
            "q0",
            *v,
            "initial values must lie in [-r_max, r_max]",
        ));
    }
    let mut iter = BellmanIteration::new(m, *spec, q0.clone())?;
    let mut residual_history = Vec::new();
    let mut converged = false;
    for residual in iter.by_ref().take(max_iters) {
        if !residual.is_finite() {
            return Err(Error::Numerical(format!(
                "{spec} iteration produced a non-finite residual"
            )));
        }
        residual_history.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        iterations: iter.steps(),
        q: iter.into_current(),
        residual_history,
        converged,
    })
}

/// Fixed point of `spec` from a zero start with the default tolerance.
pub fn solve_fixed_point(m: &TabularMdp, spec: &OperatorSpec) -> Result<SolveResult> {
    value_iteration(
        m,
        spec,
        DEFAULT_TOL,
        DEFAULT_MAX_ITERS,
        &QTable::zeros_like(m),
    )
}

/// Enough iterations for a `gamma`-contraction started at zero to reach `tol`,
/// with headroom.
fn iteration_budget(m: &TabularMdp, tol: f64) -> usize {
    let gamma = m.gamma();
    if gamma == 0.0 {
        return 4;
    }
    let scale = m.r_max() / (1.0 - gamma);
    let k = ((tol * (1.0 - gamma)) / scale).ln() / gamma.ln();
    (2.0 * k.max(1.0)).ceil() as usize + 100
}

/// The optimal action values, by value iteration with the max operator.
pub fn exact_q_star(m: &TabularMdp, tol: f64) -> Result<QTable> {
    let r = value_iteration(
        m,
        &OperatorSpec::Max,
        tol,
        iteration_budget(m, tol),
        &QTable::zeros_like(m),
    )?;
    if !r.converged {
        return Err(Error::Numerical(format!(
            "Q* iteration stalled at residual {:e} after {} steps",
            r.final_residual(),
            r.iterations
        )));
    }
    Ok(r.q)
}

/// Lowest-index maximizing action in each state.
pub fn greedy_policy(q: &QTable) -> Policy {
    Policy {
        action_index: q.rows().map(argmax_first).collect(),
    }
}

pub(crate) fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `Q^pi` for a deterministic policy, iterated to `tol`.
pub fn policy_evaluation(m: &TabularMdp, p: &Policy, tol: f64) -> Result<QTable> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::param("tol", tol, "must be finite and > 0"));
    }
    if p.action_index.len() != m.n_states() {
        return Err(Error::Shape(format!(
            "policy covers {} states, MDP has {}",
            p.action_index.len(),
            m.n_states()
        )));
    }
    if let Some(&a) = p.action_index.iter().find(|&&a| a >= m.n_actions()) {
        return Err(Error::Shape(format!("policy action {a} out of range")));
    }
    let mut q = QTable::zeros_like(m);
    let mut next = q.clone();
    let mut values = vec![0.0; m.n_states()];
    for _ in 0..iteration_budget(m, tol) {
        for (s, v) in values.iter_mut().enumerate() {
            *v = q.get(s, p.action_index[s]);
        }
        backup_with_values(m, &values, &mut next);
        std::mem::swap(&mut q, &mut next);
        if q.sup_distance(&next)? <= tol {
            return Ok(q);
        }
    }
    Err(Error::Numerical(
        "policy evaluation did not converge".into(),
    ))
}

#[derive(Debug, Clone)]
pub struct BiasSummary {
    pub mean: f64,
    pub max: f64,
    /// `q - q_star` entrywise.
    pub per_state_action: QTable,
}

pub fn estimation_bias(q: &QTable, q_star: &QTable) -> Result<BiasSummary> {
    q.check_shape(q_star)?;
    let diff: Vec<f64> = q
        .values
        .iter()
        .zip(&q_star.values)
        .map(|(a, b)| a - b)
        .collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    let max = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BiasSummary {
        mean,
        max,
        per_state_action: QTable {
            n_states: q.n_states,
            n_actions: q.n_actions,
            values: diff,
        },
    })
}
