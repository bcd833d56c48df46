//! Finite MDPs: data model, validation, generators and the JSON file format.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::distr::{Distribution, Open01, Uniform};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;
const PROBABILITY_FLOOR: f64 = 1e-15;

/// A finite discounted MDP with dense transition and reward tables.
///
/// Immutable once built. Values are not checked on construction; call
/// [`TabularMdp::validate`] (the loader and generators always do).
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    r_max: f64,
    initial_dist: Vec<f64>,
}

/// A deterministic policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub action_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Gamma {
        gamma: f64,
    },
    RMax {
        r_max: f64,
    },
    Probability {
        s: usize,
        a: usize,
        next: usize,
        p: f64,
    },
    RowSum {
        s: usize,
        a: usize,
        sum: f64,
    },
    RewardBound {
        s: usize,
        a: usize,
        reward: f64,
        r_max: f64,
    },
    InitialProbability {
        s: usize,
        p: f64,
    },
    InitialSum {
        sum: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::Gamma { gamma } => write!(f, "gamma {gamma} not in [0, 1)"),
            Violation::RMax { r_max } => write!(f, "r_max {r_max} must be finite and > 0"),
            Violation::Probability { s, a, next, p } => {
                write!(f, "P[{s}][{a}][{next}] = {p} not in [0, 1]")
            }
            Violation::RowSum { s, a, sum } => {
                write!(f, "transition row ({s}, {a}) sums to {sum}")
            }
            Violation::RewardBound {
                s,
                a,
                reward,
                r_max,
            } => {
                write!(f, "|R[{s}][{a}]| = |{reward}| exceeds r_max {r_max}")
            }
            Violation::InitialProbability { s, p } => {
                write!(f, "initial_dist[{s}] = {p} not in [0, 1]")
            }
            Violation::InitialSum { sum } => write!(f, "initial_dist sums to {sum}"),
        }
    }
}

impl TabularMdp {
    /// Assembles an MDP from row-major tables, checking only that the shapes
    /// agree.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        r_max: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape(format!(
                "need at least one state and one action, got {n_states}x{n_actions}"
            )));
        }
        let expect = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::Shape(format!(
                    "{what} has {got} entries, expected {want}"
                )))
            }
        };
        expect(
            "transition",
            transition.len(),
            n_states * n_actions * n_states,
        )?;
        expect("reward", reward.len(), n_states * n_actions)?;
        expect("initial_dist", initial_dist.len(), n_states)?;
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            r_max,
            initial_dist,
        })
    }

    /// [`TabularMdp::new`] followed by [`TabularMdp::validate`].
    pub fn checked(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        r_max: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let m = Self::new(
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            r_max,
            initial_dist,
        )?;
        m.into_valid()
    }

    fn into_valid(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidMdp(violations))
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// `P(. | s, a)` over next states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Reports every invariant breach. An empty list means the MDP is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(0.0..1.0).contains(&self.gamma) {
            out.push(Violation::Gamma { gamma: self.gamma });
        }
        if !(self.r_max.is_finite() && self.r_max > 0.0) {
            out.push(Violation::RMax { r_max: self.r_max });
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                for (next, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        out.push(Violation::Probability { s, a, next, p });
                    }
                }
                let sum: f64 = row.iter().sum();
                if !(1.0 - SUM_TOLERANCE..=1.0 + SUM_TOLERANCE).contains(&sum) {
                    out.push(Violation::RowSum { s, a, sum });
                }
                let reward = self.reward(s, a);
                if !(-self.r_max..=self.r_max).contains(&reward) {
                    out.push(Violation::RewardBound {
                        s,
                        a,
                        reward,
                        r_max: self.r_max,
                    });
                }
            }
        }
        for (s, &p) in self.initial_dist.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                out.push(Violation::InitialProbability { s, p });
            }
        }
        let sum: f64 = self.initial_dist.iter().sum();
        if !(1.0 - SUM_TOLERANCE..=1.0 + SUM_TOLERANCE).contains(&sum) {
            out.push(Violation::InitialSum { sum });
        }
        out
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::param("gamma", gamma, "must lie in [0, 1)"))
    }
}

fn uniform_dist(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Normalizes `row` to sum to one, zeroing entries that end up below
/// `1e-15` and renormalizing once more.
fn normalize_row(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    let mut clamped = false;
    for p in row.iter_mut() {
        if *p > 0.0 && *p < PROBABILITY_FLOOR {
            *p = 0.0;
            clamped = true;
        }
    }
    if clamped {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
}

/// GARNET-style random MDP: each `(s, a)` reaches `branching` distinct
/// successors with flat-Dirichlet probabilities; rewards are uniform in
/// `[-r_max, r_max]`.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    seed: u64,
    gamma: f64,
    r_max: f64,
) -> Result<TabularMdp> {
    if n_states == 0 {
        return Err(Error::param("n_states", 0.0, "must be >= 1"));
    }
    if n_actions == 0 {
        return Err(Error::param("n_actions", 0.0, "must be >= 1"));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::param(
            "branching",
            branching as f64,
            "must lie in [1, n_states]",
        ));
    }
    check_gamma(gamma)?;
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::param("r_max", r_max, "must be finite and > 0"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = Uniform::new_inclusive(-r_max, r_max).expect("r_max > 0");

    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    for sa in 0..n_states * n_actions {
        let row = &mut transition[sa * n_states..(sa + 1) * n_states];
        for next in index::sample(&mut rng, n_states, branching) {
            // -ln(u) is Exp(1); normalized exponentials are uniform on the simplex.
            let u: f64 = Open01.sample(&mut rng);
            row[next] = -u.ln();
        }
        normalize_row(row);
        reward[sa] = rewards.sample(&mut rng);
    }
    TabularMdp::checked(
        n_states,
        n_actions,
        transition,
        reward,
        gamma,
        r_max,
        uniform_dist(n_states),
    )
}

pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_RIGHT: usize = 1;

/// A chain of `length` states. `right` moves up one state with probability
/// `1 - slip` (down otherwise), `left` is mirrored, and the ends reflect.
/// Reward 1 is paid only for `right` at the last state.
pub fn chain_mdp(length: usize, slip: f64, gamma: f64) -> Result<TabularMdp> {
    if length < 2 {
        return Err(Error::param("length", length as f64, "must be >= 2"));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(Error::param("slip", slip, "must lie in [0, 1)"));
    }
    check_gamma(gamma)?;

    let n = length;
    let mut transition = vec![0.0; n * 2 * n];
    let mut reward = vec![0.0; n * 2];
    for s in 0..n {
        let up = (s + 1).min(n - 1);
        let down = s.saturating_sub(1);
        for (a, (intended, slipped)) in [(CHAIN_LEFT, (down, up)), (CHAIN_RIGHT, (up, down))] {
            let row = &mut transition[(s * 2 + a) * n..(s * 2 + a + 1) * n];
            row[intended] += 1.0 - slip;
            row[slipped] += slip;
        }
    }
    reward[(n - 1) * 2 + CHAIN_RIGHT] = 1.0;
    TabularMdp::checked(n, 2, transition, reward, gamma, 1.0, uniform_dist(n))
}

/// On-disk layout of an MDP.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    r_max: f64,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
    initial_dist: Vec<f64>,
}

/// Writes floats as `d.dddddddddddddddde±x` (17 significant digits), which
/// round-trips every `f64` exactly.
struct PreciseFloats;

impl serde_json::ser::Formatter for PreciseFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

impl TabularMdp {
    fn to_document(&self) -> MdpDocument {
        let (ns, na) = (self.n_states, self.n_actions);
        MdpDocument {
            n_states: ns,
            n_actions: na,
            gamma: self.gamma,
            r_max: self.r_max,
            reward: self.reward.chunks(na).map(<[f64]>::to_vec).collect(),
            transition: (0..ns)
                .map(|s| {
                    (0..na)
                        .map(|a| self.transition_row(s, a).to_vec())
                        .collect()
                })
                .collect(),
            initial_dist: self.initial_dist.clone(),
        }
    }

    fn from_document(doc: MdpDocument) -> Result<Self> {
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.reward.len() != ns || doc.reward.iter().any(|r| r.len() != na) {
            return Err(Error::Shape(format!("reward must be {ns}x{na}")));
        }
        if doc.transition.len() != ns
            || doc
                .transition
                .iter()
                .any(|t| t.len() != na || t.iter().any(|row| row.len() != ns))
        {
            return Err(Error::Shape(format!("transition must be {ns}x{na}x{ns}")));
        }
        let reward = doc.reward.into_iter().flatten().collect();
        let transition = doc.transition.into_iter().flatten().flatten().collect();
        Self::checked(
            ns,
            na,
            transition,
            reward,
            doc.gamma,
            doc.r_max,
            doc.initial_dist,
        )
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, PreciseFloats);
        self.to_document()
            .serialize(&mut ser)
            .expect("in-memory serialization");
        buf.push(b'\n');
        String::from_utf8(buf).expect("JSON output is UTF-8")
    }

    /// Parses and validates an MDP document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDocument =
            serde_json::from_str(text).map_err(|e| Error::Domain(format!("MDP document: {e}")))?;
        Self::from_document(doc)
    }
}

pub fn save_mdp(m: &TabularMdp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<TabularMdp> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: MdpDocument = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    TabularMdp::from_document(doc)
}
