//! Command dispatch.
//!
//! | command        | metrics                                                               |
//! |----------------|-----------------------------------------------------------------------|
//! | `bounds`       | `c`, `alpha_min`, `alpha_max`, `alpha_in_contraction_range`, `xi_bound`, `performance_bound`, `reduction_bound`, `gradient_ratio_max` |
//! | `contract`     | `violations` (checked), `worst_ratio`, `pairs`                        |
//! | `plan`         | `iterations`, `final_residual`, `converged`, `gap_to_q_star` (checked against `performance_bound`), `mean_bias`, `greedy_policy_loss` |
//! | `qlearn`       | `final_mean_bias`, `final_max_bias`                                   |
//! | `overest`      | `theta_max` (checked against the analytic value), `theta_op`, `theta_reduction` (checked) |
//! | `marl-overest` | `theta1_max` (checked against its interval), `theta1_op`, `theta1_reduction` (checked) |
//! | `sweep`        | the target command's metrics at every grid point                      |

use std::time::Instant;

use rayon::prelude::*;

use super::config::{Command, ExperimentConfig, MdpSource, SweepGrid};
use super::output::ResultRecord;
use super::svg::Series;
use crate::error::{Error, Result};
use crate::mdp::{chain_mdp, load_mdp, random_mdp, TabularMdp};
use crate::operators::OperatorSpec;
use crate::overestimation::{
    analytic_theta_max, marl_paired_reduction, marl_sample_theta, paired_theta_reduction,
    sample_theta, ErrorModel, MixerSpec,
};
use crate::solve::{
    estimation_bias, exact_q_star, greedy_policy, policy_evaluation, q_learning_with_reference,
    value_iteration, QTable,
};
use crate::theory;

/// Standard errors of slack granted to Monte Carlo checks.
pub const MC_SIGMAS: f64 = 3.0;

/// Records plus any curves the command produced.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub curves: Option<Curves>,
}

#[derive(Debug, Clone)]
pub struct Curves {
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

pub fn run(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    run_experiment(config).map(|o| o.records)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let mut out = match config.command {
        Command::Sweep => run_sweep(config)?,
        _ => run_single(config, &[])?,
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    for r in &mut out.records {
        r.wall_time_ms = ms;
    }
    Ok(out)
}

type Params = Vec<(String, String)>;

/// Shortest round-tripping text for a float, plain or exponent form.
fn param_float(x: f64) -> String {
    let plain = x.to_string();
    let exp = format!("{x:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

trait ParamValue {
    fn param(&self) -> String;
}

impl ParamValue for f64 {
    fn param(&self) -> String {
        param_float(*self)
    }
}

macro_rules! display_param {
    ($($t:ty),*) => {
        $(impl ParamValue for $t {
            fn param(&self) -> String {
                self.to_string()
            }
        })*
    };
}

display_param!(usize, u64, &str, String, std::path::Display<'_>);

impl<T: ParamValue> ParamValue for &T {
    fn param(&self) -> String {
        (**self).param()
    }
}

fn kv(k: &str, v: impl ParamValue) -> (String, String) {
    (k.to_string(), v.param())
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .copied()
        .map(param_float)
        .collect::<Vec<_>>()
        .join("|")
}

fn operator_params(spec: &OperatorSpec) -> Params {
    let mut p = vec![kv("operator", spec.name())];
    if let Some(a) = spec.alpha() {
        p.push(kv("alpha", a));
    }
    if let Some(w) = spec.omega() {
        p.push(kv("omega", w));
    }
    p
}

fn mdp_params(cfg: &ExperimentConfig) -> Params {
    match &cfg.mdp {
        MdpSource::File(path) => vec![kv("mdp", path.display())],
        MdpSource::Random {
            n_states,
            branching,
            seed,
        } => vec![
            kv("mdp", "random"),
            kv("n_states", n_states),
            kv("n_actions", cfg.model.n_actions),
            kv("branching", branching),
            kv("mdp_seed", seed),
            kv("gamma", cfg.model.gamma),
            kv("r_max", cfg.model.r_max),
        ],
        MdpSource::Chain { length, slip } => vec![
            kv("mdp", "chain"),
            kv("length", length),
            kv("slip", slip),
            kv("gamma", cfg.model.gamma),
        ],
    }
}

pub fn build_mdp(cfg: &ExperimentConfig) -> Result<TabularMdp> {
    let m = &cfg.model;
    match &cfg.mdp {
        MdpSource::File(path) => load_mdp(path),
        MdpSource::Random {
            n_states,
            branching,
            seed,
        } => random_mdp(*n_states, m.n_actions, *branching, *seed, m.gamma, m.r_max),
        MdpSource::Chain { length, slip } => chain_mdp(*length, *slip, m.gamma),
    }
}

fn mixer(cfg: &ExperimentConfig) -> Result<MixerSpec> {
    match &cfg.model.weights {
        Some(w) => MixerSpec::new(w.clone()),
        None => MixerSpec::uniform(cfg.model.n_agents, 1.0),
    }
}

fn run_single(cfg: &ExperimentConfig, extra: &[(String, String)]) -> Result<RunOutput> {
    let mut out = match cfg.command {
        Command::Bounds => run_bounds(cfg),
        Command::Contract => run_contract(cfg),
        Command::Plan => run_plan(cfg),
        Command::Qlearn => run_qlearn(cfg),
        Command::Overest => run_overest(cfg),
        Command::MarlOverest => run_marl_overest(cfg),
        Command::Sweep => Err(Error::Config("nested sweeps are not supported".into())),
    }?;
    if !extra.is_empty() {
        for r in &mut out.records {
            r.params.splice(0..0, extra.iter().cloned());
        }
    }
    Ok(out)
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let spec = &cfg.operator;
    let m = &cfg.model;
    let mut params = operator_params(spec);
    params.extend([
        kv("gamma", m.gamma),
        kv("r_max", m.r_max),
        kv("n_actions", m.n_actions),
    ]);
    let cmd = Command::Bounds.as_str();
    let rec = |metric: &str, v: f64| ResultRecord::new(cmd, &params, metric, v);
    let mut records = Vec::new();

    let soft = match *spec {
        OperatorSpec::Sm2 { alpha, omega } => Some((alpha, omega)),
        OperatorSpec::Mellowmax { omega } => Some((0.0, omega)),
        _ => None,
    };
    if let Some((alpha, omega)) = soft {
        let range = theory::alpha_contraction_range(omega, m.r_max, m.gamma)?;
        records.push(rec("c", range.c));
        records.push(rec("alpha_min", range.alpha_min));
        records.push(rec("alpha_max", range.alpha_max));
        records.push(rec(
            "alpha_in_contraction_range",
            if range.contains(alpha) { 1.0 } else { 0.0 },
        ));
    }
    match theory::bounds_for_operator(spec, m.gamma, m.n_actions)? {
        Some(b) => {
            records.push(rec("xi_bound", b.xi_bound));
            records.push(rec("performance_bound", b.performance_bound));
            records.push(rec("reduction_bound", b.reduction_bound));
        }
        None => {
            return Err(Error::Config(format!(
                "no closed-form bounds for operator {}",
                spec.name()
            )))
        }
    }
    if let OperatorSpec::Sm2 { alpha, omega } = *spec {
        if alpha >= 0.0 {
            records.push(rec(
                "gradient_ratio_max",
                theory::gradient_ratio_max(alpha, omega)?,
            ));
        }
    }
    Ok(RunOutput {
        records,
        curves: None,
    })
}

fn run_contract(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (alpha, omega) = match cfg.operator {
        OperatorSpec::Sm2 { alpha, omega } => (alpha, omega),
        OperatorSpec::Mellowmax { omega } => (0.0, omega),
        other => {
            return Err(Error::Config(format!(
                "contract needs an sm2 or mellowmax operator, got {}",
                other.name()
            )))
        }
    };
    let m = &cfg.model;
    let c = match cfg.contract.c {
        Some(c) => c,
        None => theory::alpha_contraction_range(omega, m.r_max, m.gamma)?.c,
    };
    let injected: Vec<_> = cfg.contract.injected.iter().cloned().collect();
    if let Some((q1, _)) = injected.first() {
        if q1.len() != m.n_actions {
            return Err(Error::Config(format!(
                "injected pairs have {} entries but model.n_actions = {}",
                q1.len(),
                m.n_actions
            )));
        }
    }
    let report = theory::contraction_scan_with_pairs(
        alpha,
        omega,
        c,
        m.n_actions,
        cfg.contract.trials,
        cfg.seed,
        &injected,
    )?;
    let range = theory::contraction_range_for_spread(omega, c)?;

    let mut params = operator_params(&cfg.operator);
    params.extend([
        kv("c", c),
        kv("n_actions", m.n_actions),
        kv("trials", cfg.contract.trials),
        kv("seed", cfg.seed),
    ]);
    if let Some((q1, q2)) = &cfg.contract.injected {
        params.push(kv("inject_q1", join_floats(q1)));
        params.push(kv("inject_q2", join_floats(q2)));
    }
    let cmd = Command::Contract.as_str();
    let records = vec![
        ResultRecord::new(cmd, &params, "violations", report.violations as f64)
            .with_bound(0.0)
            .with_pass(report.violations == 0),
        ResultRecord::new(cmd, &params, "worst_ratio", report.worst_ratio).with_bound(1.0),
        ResultRecord::new(cmd, &params, "pairs", report.pairs as f64),
        ResultRecord::new(
            cmd,
            &params,
            "alpha_in_contraction_range",
            if range.contains(alpha) { 1.0 } else { 0.0 },
        ),
    ];
    Ok(RunOutput {
        records,
        curves: None,
    })
}

fn greedy_policy_loss(mdp: &TabularMdp, q: &QTable, q_star: &QTable, tol: f64) -> Result<f64> {
    let policy = greedy_policy(q);
    let q_pi = policy_evaluation(mdp, &policy, tol)?;
    Ok((0..mdp.n_states())
        .map(|s| {
            let v_star = q_star
                .row(s)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            v_star - q_pi.get(s, policy.action_index[s])
        })
        .fold(0.0, f64::max))
}

fn run_plan(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mdp = build_mdp(cfg)?;
    let spec = &cfg.operator;
    let solved = value_iteration(
        &mdp,
        spec,
        cfg.tol,
        cfg.max_iters,
        &QTable::zeros_like(&mdp),
    )?;
    let q_star = exact_q_star(&mdp, cfg.tol)?;
    let gap = solved.q.sup_distance(&q_star)?;
    let bias = estimation_bias(&solved.q, &q_star)?;
    let loss = greedy_policy_loss(&mdp, &solved.q, &q_star, cfg.tol)?;

    let mut params = operator_params(spec);
    params.extend(mdp_params(cfg));
    params.extend([kv("tol", cfg.tol), kv("max_iters", cfg.max_iters)]);
    let cmd = Command::Plan.as_str();
    let rec = |metric: &str, v: f64| ResultRecord::new(cmd, &params, metric, v);

    let mut gap_rec = rec("gap_to_q_star", gap);
    if let Some(b) = theory::bounds_for_operator(spec, mdp.gamma(), mdp.n_actions())? {
        // Both fixed points are only known to within gamma tol / (1 - gamma).
        let slack = 2.0 * cfg.tol / (1.0 - mdp.gamma());
        gap_rec = gap_rec
            .with_bound(b.performance_bound)
            .with_pass(solved.converged && gap <= b.performance_bound + slack);
    }
    let records = vec![
        rec("iterations", solved.iterations as f64),
        rec("final_residual", solved.final_residual()),
        rec("converged", if solved.converged { 1.0 } else { 0.0 }),
        gap_rec,
        rec("mean_bias", bias.mean),
        rec("greedy_policy_loss", loss),
    ];
    let points: Vec<(f64, f64)> = solved
        .residual_history
        .iter()
        .enumerate()
        .map(|(i, r)| ((i + 1) as f64, r.max(f64::MIN_POSITIVE).log10()))
        .collect();
    let curves = (points.len() >= 2).then(|| Curves {
        x_label: "iteration".into(),
        y_label: "log10 sup-norm residual".into(),
        series: vec![Series::new(spec.to_string(), points)],
    });
    Ok(RunOutput { records, curves })
}

fn run_qlearn(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mdp = build_mdp(cfg)?;
    let rule = cfg.target_rule()?;
    let q_star = exact_q_star(&mdp, cfg.tol)?;
    let ql = &cfg.qlearn.config;
    let result = q_learning_with_reference(&mdp, &rule, ql, &q_star)?;
    let bias = estimation_bias(&result.q, &q_star)?;

    let mut params = vec![kv("target", rule.name())];
    params.extend(operator_params(&cfg.operator).into_iter().skip(1));
    params.extend(mdp_params(cfg));
    params.extend([
        kv("steps", ql.steps),
        kv("lr", ql.lr),
        kv("epsilon_start", ql.epsilon.start),
        kv("epsilon_end", ql.epsilon.end),
        kv("epsilon_decay_steps", ql.epsilon.decay_steps),
        kv("sync_period", ql.target_sync_period),
        kv("seed", ql.seed),
    ]);
    let cmd = Command::Qlearn.as_str();
    let records = vec![
        ResultRecord::new(cmd, &params, "final_mean_bias", result.final_mean_bias),
        ResultRecord::new(cmd, &params, "final_max_bias", bias.max),
    ];
    let points: Vec<(f64, f64)> = result
        .bias_trace
        .iter()
        .map(|&(t, b)| (t as f64, b))
        .collect();
    let curves = (points.len() >= 2).then(|| Curves {
        x_label: "step".into(),
        y_label: "mean estimation bias".into(),
        series: vec![Series::new(rule.name(), points)],
    });
    Ok(RunOutput { records, curves })
}

fn error_model(cfg: &ExperimentConfig) -> ErrorModel {
    ErrorModel {
        n: cfg.model.n_actions,
        epsilon: cfg.model.epsilon,
        samples: cfg.samples,
        seed: cfg.seed,
    }
}

fn has_reduction(spec: &OperatorSpec) -> bool {
    match *spec {
        OperatorSpec::Sm2 { alpha, .. } => alpha >= 0.0,
        OperatorSpec::Mellowmax { .. } => true,
        _ => false,
    }
}

fn run_overest(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = error_model(cfg);
    let spec = &cfg.operator;
    let mut params = operator_params(spec);
    params.extend([
        kv("n_actions", model.n),
        kv("epsilon", model.epsilon),
        kv("samples", model.samples),
        kv("seed", model.seed),
    ]);
    let cmd = Command::Overest.as_str();

    let theta_max = sample_theta(&model, &OperatorSpec::Max)?;
    let analytic = analytic_theta_max(model.n, model.epsilon);
    let mut records = vec![ResultRecord::new(cmd, &params, "theta_max", theta_max.mean)
        .with_std_error(theta_max.std_error)
        .with_bound(analytic)
        .with_pass(theta_max.agrees_with(analytic, MC_SIGMAS))];
    if *spec != OperatorSpec::Max {
        let theta_op = sample_theta(&model, spec)?;
        records.push(
            ResultRecord::new(cmd, &params, "theta_op", theta_op.mean)
                .with_std_error(theta_op.std_error),
        );
    }
    if has_reduction(spec) {
        let red = paired_theta_reduction(&model, spec)?;
        records.push(
            ResultRecord::new(cmd, &params, "theta_reduction", red.reduction_mean)
                .with_std_error(red.std_error)
                .with_bound(red.bound)
                .with_pass(red.within_bound),
        );
    }
    Ok(RunOutput {
        records,
        curves: None,
    })
}

fn run_marl_overest(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = error_model(cfg);
    let mixer = mixer(cfg)?;
    let spec = &cfg.operator;
    let mut params = operator_params(spec);
    params.extend([
        kv("n_actions", model.n),
        kv("n_agents", mixer.n_agents()),
        kv("weights", join_floats(mixer.weights())),
        kv("epsilon", model.epsilon),
        kv("samples", model.samples),
        kv("seed", model.seed),
    ]);
    let cmd = Command::MarlOverest.as_str();

    let single = analytic_theta_max(model.n, model.epsilon);
    let agents = mixer.n_agents() as f64;
    let (low, high) = (single * mixer.l() * agents, single * mixer.big_l() * agents);
    let theta = marl_sample_theta(&model, &mixer, &OperatorSpec::Max)?;
    let slack = MC_SIGMAS * theta.std_error;
    let mut records = vec![
        ResultRecord::new(cmd, &params, "theta1_max", theta.mean)
            .with_std_error(theta.std_error)
            .with_bound(high)
            .with_pass(theta.mean >= low - slack && theta.mean <= high + slack),
        ResultRecord::new(cmd, &params, "theta1_low", low),
        ResultRecord::new(cmd, &params, "theta1_high", high),
    ];
    if *spec != OperatorSpec::Max {
        let op = marl_sample_theta(&model, &mixer, spec)?;
        records.push(
            ResultRecord::new(cmd, &params, "theta1_op", op.mean).with_std_error(op.std_error),
        );
    }
    if has_reduction(spec) {
        let red = marl_paired_reduction(&model, &mixer, spec)?;
        records.push(
            ResultRecord::new(cmd, &params, "theta1_reduction", red.reduction_mean)
                .with_std_error(red.std_error)
                .with_bound(red.bound)
                .with_pass(red.within_bound),
        );
    }
    Ok(RunOutput {
        records,
        curves: None,
    })
}

/// One sweep grid point: the values it overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub alpha: Option<f64>,
    pub omega: Option<f64>,
    pub n_actions: Option<usize>,
    pub n_agents: Option<usize>,
}

impl GridPoint {
    fn params(&self) -> Params {
        let mut p = Vec::new();
        if let Some(a) = self.alpha {
            p.push(kv("grid_alpha", a));
        }
        if let Some(w) = self.omega {
            p.push(kv("grid_omega", w));
        }
        if let Some(n) = self.n_actions {
            p.push(kv("grid_n_actions", n));
        }
        if let Some(k) = self.n_agents {
            p.push(kv("grid_n_agents", k));
        }
        p
    }

    fn describe(&self) -> String {
        self.params()
            .iter()
            .map(|(k, v)| format!("{}={v}", k.trim_start_matches("grid_")))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn apply(&self, base: &ExperimentConfig, target: Command) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        cfg.command = target;
        cfg.sweep = None;
        if self.alpha.is_some() || self.omega.is_some() {
            let omega = self
                .omega
                .or(base.operator.omega())
                .ok_or_else(|| Error::Config("sweeping alpha needs operator.omega".into()))?;
            cfg.operator = match self.alpha.or(base.operator.alpha()) {
                Some(alpha) => OperatorSpec::Sm2 { alpha, omega },
                None => OperatorSpec::Mellowmax { omega },
            };
            cfg.operator.validate()?;
        }
        if let Some(n) = self.n_actions {
            if n == 0 {
                return Err(Error::param("n_actions", 0.0, "must be >= 1"));
            }
            cfg.model.n_actions = n;
        }
        if let Some(k) = self.n_agents {
            if k == 0 {
                return Err(Error::param("n_agents", 0.0, "must be >= 1"));
            }
            cfg.model.n_agents = k;
            cfg.model.weights = None;
        }
        Ok(cfg)
    }
}

/// Grid points in row-major order over alpha, omega, n_actions, n_agents.
pub fn grid_points(grid: &SweepGrid) -> Vec<GridPoint> {
    fn axis<T: Copy>(v: &Option<Vec<T>>) -> Vec<Option<T>> {
        match v {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![None],
        }
    }
    let mut points = Vec::new();
    for &alpha in &axis(&grid.alpha) {
        for &omega in &axis(&grid.omega) {
            for &n_actions in &axis(&grid.n_actions) {
                for &n_agents in &axis(&grid.n_agents) {
                    points.push(GridPoint {
                        alpha,
                        omega,
                        n_actions,
                        n_agents,
                    });
                }
            }
        }
    }
    points
}

fn run_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep command without a [sweep] grid".into()))?;
    let points = grid_points(grid);
    let outputs: Vec<Result<RunOutput>> = points
        .par_iter()
        .map(|p| {
            p.apply(cfg, grid.target)
                .and_then(|c| run_single(&c, &p.params()))
                .map_err(|e| Error::GridPoint {
                    point: p.describe(),
                    source: Box::new(e),
                })
        })
        .collect();
    let mut records = Vec::new();
    for o in outputs {
        let mut o = o?;
        for r in &mut o.records {
            r.command = format!("sweep:{}", r.command);
        }
        records.extend(o.records);
    }
    Ok(RunOutput {
        records,
        curves: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn find<'a>(recs: &'a [ResultRecord], metric: &str) -> &'a ResultRecord {
        recs.iter().find(|r| r.metric == metric).unwrap()
    }

    #[test]
    fn bounds_reports_performance_bound() {
        let cfg = parse_config(
            "[run]\ncommand = bounds\n[operator]\nalpha = 10\nomega = 5\n[model]\ngamma = 0.9\nn_actions = 10\nr_max = 1\n",
        )
        .unwrap();
        let recs = run(&cfg).unwrap();
        let pb = find(&recs, "performance_bound").value;
        assert!((pb - 3.068546566029165).abs() < 1e-12, "{pb}");
        assert!((find(&recs, "c").value - 20.0).abs() < 1e-12);
        assert_eq!(recs[0].param("alpha"), Some("10"));
    }

    #[test]
    fn contract_with_injected_counterexample_fails() {
        let cfg = parse_config(
            "[run]\ncommand = contract\nsamples = 2000\n[operator]\nalpha = 1\nomega = 1\n[model]\nn_actions = 2\n[contract]\nc = 4\ninject_q1 = 50, 1\ninject_q2 = 5, 1\n",
        )
        .unwrap();
        let recs = run(&cfg).unwrap();
        let v = find(&recs, "violations");
        assert_eq!(v.pass, Some(false));
        assert!(v.value >= 1.0);
        assert!(find(&recs, "worst_ratio").value > 1.0);
    }

    #[test]
    fn plan_gap_respects_bound_on_chain() {
        let cfg = parse_config(
            "[run]\ncommand = plan\n[operator]\nalpha = 10\nomega = 5\n[mdp]\ngenerator = chain\nlength = 6\nslip = 0.1\n",
        )
        .unwrap();
        let out = run_experiment(&cfg).unwrap();
        let gap = find(&out.records, "gap_to_q_star");
        assert_eq!(gap.pass, Some(true));
        assert!(gap.value <= gap.bound.unwrap());
        assert!(out.curves.is_some());
    }

    #[test]
    fn sweep_keeps_grid_order_and_tags_failures() {
        let cfg = parse_config(
            "[run]\ncommand = sweep\nsamples = 1000\n[operator]\nomega = 5\n[sweep]\ntarget = overest\nalpha = 1, 10\nn_actions = 2, 5\n",
        )
        .unwrap();
        let recs = run(&cfg).unwrap();
        let order: Vec<(&str, &str)> = recs
            .iter()
            .filter(|r| r.metric == "theta_max")
            .map(|r| {
                (
                    r.param("grid_alpha").unwrap(),
                    r.param("grid_n_actions").unwrap(),
                )
            })
            .collect();
        assert_eq!(order, [("1", "2"), ("1", "5"), ("10", "2"), ("10", "5")]);
        assert!(recs.iter().all(|r| r.command == "sweep:overest"));

        let bad = parse_config("[run]\ncommand = sweep\nsamples = 100\n[sweep]\nomega = 5, -1\n")
            .unwrap();
        let err = run(&bad).unwrap_err();
        assert!(err.to_string().contains("omega=-1"), "{err}");
    }

    #[test]
    fn reruns_are_identical() {
        let cfg = parse_config(
            "[run]\ncommand = marl-overest\nsamples = 5000\nseed = 3\n[operator]\nalpha = 10\nomega = 5\n[model]\nweights = 0.5, 2\n",
        )
        .unwrap();
        let strip = |mut v: Vec<ResultRecord>| {
            v.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
            v
        };
        assert_eq!(strip(run(&cfg).unwrap()), strip(run(&cfg).unwrap()));
    }
}
