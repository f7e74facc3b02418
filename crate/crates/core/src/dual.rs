//! Lagrangian bisection for the joint chance constraint.
//!
//! [`solve`] checks feasibility and triviality, brackets the multiplier
//! between `0` and an upper bound whose λ-optimal policy is known to be
//! `α`-safe, and halves the bracket until the certificate `δ` falls below the
//! target. The two bracketing deterministic policies are mixed so that the
//! mixture is exactly `α`-safe. [`solve_boole`] runs the same driver with the
//! per-step penalty recursion as inner solver.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, initial_aug_state, AugState};
use crate::dp::{
    boole_recursion, boole_safety_bound, cheapest_max_safety_policy, evaluate_at,
    max_safety_recursion, safest_min_cost_policy, LambdaSolver, MarkovPolicy,
};
use crate::error::{Error, Result};
use crate::model::GriddedMdp;
use crate::numfmt::fmt_f64;

/// Default iteration cap; enough to exhaust double-precision bisection.
pub const DEFAULT_MAX_ITERS: usize = 60;

/// How often the upper multiplier of the per-step penalty baseline may be
/// doubled before the problem is declared infeasible under that baseline.
const MAX_DOUBLINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Infeasible,
    Trivial,
    Solved,
    MaxIters,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Infeasible => "infeasible",
            Status::Trivial => "trivial",
            Status::Solved => "solved",
            Status::MaxIters => "max-iters",
        })
    }
}

/// Safety evaluation used for the per-step penalty baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BooleEval {
    /// Exact joint safety probability.
    #[default]
    Exact,
    /// `1 − Σ_k P(x_k ∉ A)`.
    Bound,
}

impl FromStr for BooleEval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(BooleEval::Exact),
            "bound" => Ok(BooleEval::Bound),
            _ => Err(Error::arg(
                "boole-eval",
                format!("expected exact or bound, got {s}"),
            )),
        }
    }
}

/// Inner recursion and safety evaluation of a solve or sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    BoolePolicyExactEval,
    BoolePolicyBooleEval,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::Exact,
        Method::BoolePolicyExactEval,
        Method::BoolePolicyBooleEval,
    ];

    pub fn boole(eval: BooleEval) -> Self {
        match eval {
            BooleEval::Exact => Method::BoolePolicyExactEval,
            BooleEval::Bound => Method::BoolePolicyBooleEval,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::BoolePolicyExactEval => "boole-policy-exact-eval",
            Method::BoolePolicyBooleEval => "boole-policy-boole-eval",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Max-safety and min-cost figures at the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorderValues {
    /// Cost of the cheapest max-safety policy.
    pub c_high: f64,
    /// Maximum safety.
    pub v_high: f64,
    /// Minimum cost.
    pub c_low: f64,
    /// Safety of the safest min-cost policy.
    pub v_low: f64,
}

#[derive(Debug, Clone)]
pub enum BorderCase {
    Infeasible {
        max_safety: f64,
        policy: MarkovPolicy,
    },
    Trivial {
        policy: MarkovPolicy,
        cost: f64,
        safety: f64,
    },
    Proceed {
        values: BorderValues,
        high: MarkovPolicy,
        low: MarkovPolicy,
    },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::arg(
            "alpha",
            format!("must lie in [0, 1], got {alpha}"),
        ))
    }
}

/// Infeasible iff `V̄ < α`, trivial iff `V_ ≥ α`, otherwise the four border values.
pub fn check_border_cases(mdp: &GriddedMdp, x0: usize, alpha: f64) -> Result<BorderCase> {
    check_alpha(alpha)?;
    let s0 = initial_aug_state(mdp, x0)?;
    let low = safest_min_cost_policy(mdp);
    let (c_low, v_low) = evaluate_at(mdp, &low, s0)?;
    if v_low >= alpha {
        return Ok(BorderCase::Trivial {
            policy: low,
            cost: c_low,
            safety: v_low,
        });
    }
    let (vstar, _) = max_safety_recursion(mdp);
    let high = cheapest_max_safety_policy(mdp);
    let (c_high, v_eval) = evaluate_at(mdp, &high, s0)?;
    let v_high = vstar.at(0, s0).max(v_eval);
    if v_high < alpha {
        return Ok(BorderCase::Infeasible {
            max_safety: v_high,
            policy: high,
        });
    }
    Ok(BorderCase::Proceed {
        values: BorderValues {
            c_high,
            v_high,
            c_low,
            v_low,
        },
        high,
        low,
    })
}

/// `(λ(V^π − V_), (C̄ − C^π)/λ)`: bounds on the cost excess over the
/// minimum and the safety shortfall from the maximum of a λ-optimal policy.
pub fn border_case_bounds(
    lambda: f64,
    c_pi: f64,
    v_pi: f64,
    _c_low: f64,
    v_low: f64,
    c_high: f64,
    _v_high: f64,
) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::arg(
            "lambda",
            format!("must be positive, got {lambda}"),
        ));
    }
    if !c_high.is_finite() {
        return Err(Error::arg("c_high", "must be finite"));
    }
    Ok((lambda * (v_pi - v_low), (c_high - c_pi) / lambda))
}

/// `(0, (C̄ − C_)/(V̄ − α))`.
pub fn initial_lambda_bounds(
    c_high: f64,
    c_low: f64,
    v_high: f64,
    alpha: f64,
) -> Result<(f64, f64)> {
    if !(v_high > alpha) {
        return Err(Error::Unattainable {
            alpha,
            best: v_high,
        });
    }
    if !c_high.is_finite() {
        return Err(Error::arg("c_high", "must be finite"));
    }
    Ok((0.0, (c_high - c_low) / (v_high - alpha)))
}

/// `p = (α − V_under)/(V_over − V_under)`, clamped to `[0, 1]`.
pub fn mixing_probability(v_under: f64, v_over: f64, alpha: f64) -> Result<f64> {
    if !(v_over > v_under) {
        return Err(Error::arg(
            "v_over",
            format!("degenerate bracket: {v_over} is not above {v_under}"),
        ));
    }
    Ok(((alpha - v_under) / (v_over - v_under)).clamp(0.0, 1.0))
}

/// `δ = p(1−p)(λ̄ − λ_)(V_over − V_under)`.
pub fn suboptimality_certificate(
    p: f64,
    lambda_lower: f64,
    lambda_upper: f64,
    v_under: f64,
    v_over: f64,
) -> f64 {
    p * (1.0 - p) * (lambda_upper - lambda_lower) * (v_over - v_under)
}

/// Two deterministic policies, one of which is drawn once per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPolicy {
    pub pi_over: MarkovPolicy,
    pub pi_under: MarkovPolicy,
    /// Probability of following `pi_over`.
    pub p_over: f64,
}

/// Which member of a [`MixedPolicy`] an episode follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTag {
    Deterministic,
    Over,
    Under,
}

impl PolicyTag {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyTag::Deterministic => "deterministic",
            PolicyTag::Over => "over",
            PolicyTag::Under => "under",
        }
    }
}

impl MixedPolicy {
    pub fn deterministic(policy: MarkovPolicy) -> Self {
        MixedPolicy {
            pi_over: policy.clone(),
            pi_under: policy,
            p_over: 1.0,
        }
    }

    /// Draws the member to follow; consumes exactly one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (PolicyTag, &MarkovPolicy) {
        let u: f64 = rng.random();
        if u < self.p_over {
            (PolicyTag::Over, &self.pi_over)
        } else {
            (PolicyTag::Under, &self.pi_under)
        }
    }
}

/// A deterministic policy of the bracket with its multiplier and performance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketPoint {
    pub lambda: f64,
    pub cost: f64,
    pub safety: f64,
}

/// One bisection step. Iteration 0 is the initial upper multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda: f64,
    pub safety: f64,
    pub cost: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    /// `λ̄ − λ_`, tracked exactly so that it halves bit-for-bit.
    pub lambda_width: f64,
    /// Certificate of the bracket after this step.
    pub delta: f64,
}

/// Files a front-end wrote for the report's policies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyFiles {
    pub pi_over: String,
    pub pi_under: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: Status,
    pub method: Method,
    pub alpha: f64,
    pub delta_target: f64,
    pub initial_state: usize,
    pub initial_flag: bool,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub lambda_upper_init: f64,
    pub iterations: usize,
    pub p_over: f64,
    /// Mixed expected cost `p·C_over + (1−p)·C_under`.
    pub cost: f64,
    /// Mixed safety under the method's evaluation.
    pub safety: f64,
    pub delta: f64,
    /// Total reward for models whose costs are shifted rewards.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub border: Option<BorderValues>,
    pub over: Option<BracketPoint>,
    pub under: Option<BracketPoint>,
    pub history: Vec<IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_files: Option<PolicyFiles>,
    #[serde(skip)]
    pub policy: Option<MixedPolicy>,
}

impl SolveReport {
    /// `status cost safety delta iters`.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.status,
            fmt_f64(self.cost),
            fmt_f64(self.safety),
            fmt_f64(self.delta),
            self.iterations
        )
    }
}

/// Deterministic policy with its multiplier and `(cost, safety)`.
#[derive(Debug, Clone)]
struct Evaluated {
    lambda: f64,
    policy: MarkovPolicy,
    cost: f64,
    safety: f64,
}

impl Evaluated {
    fn point(&self) -> BracketPoint {
        BracketPoint {
            lambda: self.lambda,
            cost: self.cost,
            safety: self.safety,
        }
    }
}

/// Inner solve at a fixed multiplier plus the evaluation the bracket uses.
trait Inner: Sync {
    fn solve(&self, lambda: f64) -> Result<Evaluated>;
}

struct ExactInner<'a> {
    mdp: &'a GriddedMdp,
    solver: LambdaSolver<'a>,
    s0: AugState,
}

impl Inner for ExactInner<'_> {
    fn solve(&self, lambda: f64) -> Result<Evaluated> {
        let (_, policy) = self.solver.solve(lambda)?;
        evaluate(self.mdp, policy, lambda, self.s0, None)
    }
}

struct BooleInner<'a> {
    mdp: &'a GriddedMdp,
    s0: AugState,
    eval: BooleEval,
}

impl Inner for BooleInner<'_> {
    fn solve(&self, lambda: f64) -> Result<Evaluated> {
        let (_, policy) = boole_recursion(self.mdp, lambda)?;
        evaluate(self.mdp, policy, lambda, self.s0, Some(self.eval))
    }
}

fn evaluate(
    mdp: &GriddedMdp,
    policy: MarkovPolicy,
    lambda: f64,
    s0: AugState,
    boole: Option<BooleEval>,
) -> Result<Evaluated> {
    let (cost, mut safety) = evaluate_at(mdp, &policy, s0)?;
    if boole == Some(BooleEval::Bound) {
        safety = boole_safety_bound(mdp, &policy, s0.state)?;
    }
    Ok(Evaluated {
        lambda,
        policy,
        cost,
        safety,
    })
}

fn check_options(delta_target: f64, max_iters: usize) -> Result<()> {
    if !(delta_target > 0.0) {
        return Err(Error::arg(
            "delta",
            format!("must be positive, got {delta_target}"),
        ));
    }
    if max_iters == 0 {
        return Err(Error::arg("max_iters", "must be at least 1"));
    }
    Ok(())
}

struct Common {
    method: Method,
    alpha: f64,
    delta_target: f64,
    s0: AugState,
    border: Option<BorderValues>,
}

impl Common {
    fn report(&self, mdp: &GriddedMdp, status: Status) -> SolveReport {
        SolveReport {
            status,
            method: self.method,
            alpha: self.alpha,
            delta_target: self.delta_target,
            initial_state: self.s0.state,
            initial_flag: self.s0.safe,
            lambda_lower: 0.0,
            lambda_upper: 0.0,
            lambda_upper_init: 0.0,
            iterations: 0,
            p_over: 0.0,
            cost: f64::NAN,
            safety: f64::NAN,
            delta: 0.0,
            reward: None,
            border: self.border,
            over: None,
            under: None,
            history: Vec::new(),
            policy_files: None,
            policy: None,
        }
        .with_reward(mdp)
    }

    /// Report for a single deterministic policy.
    fn single(&self, mdp: &GriddedMdp, status: Status, e: Evaluated) -> SolveReport {
        let mut r = self.report(mdp, status);
        r.p_over = 1.0;
        r.cost = e.cost;
        r.safety = e.safety;
        r.lambda_lower = e.lambda;
        r.lambda_upper = e.lambda;
        r.over = Some(e.point());
        r.under = Some(e.point());
        r.policy = Some(MixedPolicy::deterministic(e.policy));
        r.with_reward(mdp)
    }
}

impl SolveReport {
    fn with_reward(mut self, mdp: &GriddedMdp) -> Self {
        self.reward = if self.cost.is_finite() {
            mdp.reward_from_cost(self.cost)
        } else {
            None
        };
        self
    }
}

/// Mixes a bracket of the given width; a degenerate bracket keeps the
/// cheaper member.
fn mix(under: &Evaluated, over: &Evaluated, width: f64, alpha: f64) -> (f64, f64) {
    if over.safety > under.safety {
        let p = mixing_probability(under.safety, over.safety, alpha).expect("non-degenerate");
        let delta = suboptimality_certificate(p, 0.0, width, under.safety, over.safety);
        (p, delta)
    } else if over.cost <= under.cost {
        (1.0, 0.0)
    } else {
        (0.0, 0.0)
    }
}

/// Bisection on `[λ_, λ̄]` starting from evaluated bracket ends.
fn bisect(
    mdp: &GriddedMdp,
    inner: &dyn Inner,
    common: &Common,
    mut under: Evaluated,
    mut over: Evaluated,
    max_iters: usize,
) -> Result<SolveReport> {
    let alpha = common.alpha;
    let lambda_upper_init = over.lambda;
    let mut width = over.lambda - under.lambda;
    let mut history = vec![IterationRecord {
        iteration: 0,
        lambda: over.lambda,
        safety: over.safety,
        cost: over.cost,
        lambda_lower: under.lambda,
        lambda_upper: over.lambda,
        lambda_width: width,
        delta: mix(&under, &over, width, alpha).1,
    }];
    let mut iterations = 0;
    let status = loop {
        let (_, delta) = mix(&under, &over, width, alpha);
        if delta <= common.delta_target {
            break Status::Solved;
        }
        if iterations >= max_iters {
            break Status::MaxIters;
        }
        width *= 0.5;
        let lambda = under.lambda + width;
        let e = inner.solve(lambda)?;
        let (safety, cost) = (e.safety, e.cost);
        if e.safety <= alpha {
            under = e;
        } else {
            over = e;
        }
        iterations += 1;
        history.push(IterationRecord {
            iteration: iterations,
            lambda,
            safety,
            cost,
            lambda_lower: under.lambda,
            lambda_upper: over.lambda,
            lambda_width: width,
            delta: mix(&under, &over, width, alpha).1,
        });
    };
    let (p, delta) = mix(&under, &over, width, alpha);
    let mut r = common.report(mdp, status);
    r.lambda_lower = under.lambda;
    r.lambda_upper = over.lambda;
    r.lambda_upper_init = lambda_upper_init;
    r.iterations = iterations;
    r.p_over = p;
    r.cost = p * over.cost + (1.0 - p) * under.cost;
    r.safety = p * over.safety + (1.0 - p) * under.safety;
    r.delta = delta;
    r.over = Some(over.point());
    r.under = Some(under.point());
    r.history = history;
    r.policy = Some(MixedPolicy {
        pi_over: over.policy,
        pi_under: under.policy,
        p_over: p,
    });
    Ok(r.with_reward(mdp))
}

/// Minimizes expected cost subject to `P(x_{0:N} ∈ A) ≥ α` from state `x0`.
pub fn solve(
    mdp: &GriddedMdp,
    x0: usize,
    alpha: f64,
    delta_target: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    check_options(delta_target, max_iters)?;
    let (values, high, low) = match check_border_cases(mdp, x0, alpha)? {
        BorderCase::Infeasible { max_safety, policy } => {
            let s0 = initial_aug_state(mdp, x0)?;
            let common = Common {
                method: Method::Exact,
                alpha,
                delta_target,
                s0,
                border: None,
            };
            let (cost, _) = evaluate_at(mdp, &policy, s0)?;
            let e = Evaluated {
                lambda: f64::INFINITY,
                policy,
                cost,
                safety: max_safety,
            };
            let mut r = common.single(mdp, Status::Infeasible, e);
            r.lambda_upper = f64::INFINITY;
            return Ok(r);
        }
        BorderCase::Trivial {
            policy,
            cost,
            safety,
        } => {
            let common = Common {
                method: Method::Exact,
                alpha,
                delta_target,
                s0: initial_aug_state(mdp, x0)?,
                border: None,
            };
            let e = Evaluated {
                lambda: 0.0,
                policy,
                cost,
                safety,
            };
            return Ok(common.single(mdp, Status::Trivial, e));
        }
        BorderCase::Proceed { values, high, low } => (values, high, low),
    };
    let s0 = initial_aug_state(mdp, x0)?;
    let common = Common {
        method: Method::Exact,
        alpha,
        delta_target,
        s0,
        border: Some(values),
    };
    if values.v_high <= alpha {
        let e = evaluate(mdp, high, f64::INFINITY, s0, None)?;
        return Ok(common.single(mdp, Status::Solved, e));
    }
    let (_, lambda_hi) = initial_lambda_bounds(values.c_high, values.c_low, values.v_high, alpha)?;
    let inner = ExactInner {
        mdp,
        solver: LambdaSolver::new(augment(mdp)),
        s0,
    };
    let under = evaluate(mdp, low, 0.0, s0, None)?;
    let mut over = inner.solve(lambda_hi)?;
    if over.safety < alpha {
        // rounding can break the guarantee when safeties nearly tie
        over = evaluate(mdp, high, lambda_hi, s0, None)?;
    }
    bisect(mdp, &inner, &common, under, over, max_iters)
}

/// [`solve`] with the per-step penalty recursion as inner solver; safety is
/// evaluated exactly or through the union bound according to `eval`.
pub fn solve_boole(
    mdp: &GriddedMdp,
    x0: usize,
    alpha: f64,
    delta_target: f64,
    max_iters: usize,
    eval: BooleEval,
) -> Result<SolveReport> {
    check_options(delta_target, max_iters)?;
    check_alpha(alpha)?;
    let s0 = initial_aug_state(mdp, x0)?;
    let inner = BooleInner { mdp, s0, eval };
    let mut common = Common {
        method: Method::boole(eval),
        alpha,
        delta_target,
        s0,
        border: None,
    };
    let under = inner.solve(0.0)?;
    if under.safety >= alpha {
        return Ok(common.single(mdp, Status::Trivial, under));
    }
    let values = match check_border_cases(mdp, x0, alpha)? {
        BorderCase::Infeasible { max_safety, policy } => {
            let e = evaluate(mdp, policy, f64::INFINITY, s0, Some(eval))?;
            let mut r = common.single(mdp, Status::Infeasible, e);
            r.safety = r.safety.min(max_safety);
            return Ok(r);
        }
        BorderCase::Trivial { cost, safety, .. } => BorderValues {
            c_high: cost,
            v_high: safety,
            c_low: under.cost,
            v_low: under.safety,
        },
        BorderCase::Proceed { values, .. } => values,
    };
    common.border = Some(values);
    let mut lambda_hi = if values.v_high > alpha {
        initial_lambda_bounds(values.c_high, values.c_low, values.v_high, alpha)?.1
    } else {
        0.0
    };
    if !(lambda_hi > 0.0) {
        lambda_hi = 1.0;
    }
    let mut over = inner.solve(lambda_hi)?;
    let mut doublings = 0;
    while over.safety < alpha {
        if doublings == MAX_DOUBLINGS {
            let mut r = common.single(mdp, Status::Infeasible, over);
            r.lambda_upper = f64::INFINITY;
            return Ok(r);
        }
        lambda_hi *= 2.0;
        over = inner.solve(lambda_hi)?;
        doublings += 1;
    }
    bisect(mdp, &inner, &common, under, over, max_iters)
}

/// Performance of the deterministic policy of one multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub safety: f64,
    pub cost: f64,
    pub method: Method,
}

/// `(λ, V_0, C_0)` of the λ-optimal policy of `method` for every multiplier,
/// sorted by `λ`.
pub fn pareto_sweep(
    mdp: &GriddedMdp,
    x0: usize,
    lambdas: &[f64],
    method: Method,
) -> Result<Vec<ParetoPoint>> {
    if lambdas.is_empty() {
        return Err(Error::arg("lambdas", "need at least one multiplier"));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::arg(
            "lambdas",
            format!("must be finite and non-negative, got {bad}"),
        ));
    }
    let s0 = initial_aug_state(mdp, x0)?;
    let inner: Box<dyn Inner> = match method {
        Method::Exact => Box::new(ExactInner {
            mdp,
            solver: LambdaSolver::new(augment(mdp)),
            s0,
        }),
        Method::BoolePolicyExactEval => Box::new(BooleInner {
            mdp,
            s0,
            eval: BooleEval::Exact,
        }),
        Method::BoolePolicyBooleEval => Box::new(BooleInner {
            mdp,
            s0,
            eval: BooleEval::Bound,
        }),
    };
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .par_iter()
        .map(|&lambda| {
            let e = inner.solve(lambda)?;
            Ok(ParetoPoint {
                lambda,
                safety: e.safety,
                cost: e.cost,
                method,
            })
        })
        .collect()
}

/// CSV with header `lambda,safety,cost,method`.
pub fn pareto_to_csv(points: &[ParetoPoint]) -> String {
    let mut out = String::from("lambda,safety,cost,method\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.lambda),
            fmt_f64(p.safety),
            fmt_f64(p.cost),
            p.method
        ));
    }
    out
}

/// `n` multipliers spaced evenly in log scale over `[lo, hi]`.
pub fn log_range(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && n >= 1) {
        return Err(Error::arg(
            "lambdas",
            "log range needs 0 < lo <= hi and n >= 1",
        ));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_mdp, RandomMdpParams, StageCost, TransitionKernel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(safe: Vec<bool>) -> GriddedMdp {
        let k = TransitionKernel::from_rows(2, 1, vec![vec![(0, 0.7), (1, 0.3)], vec![(1, 1.0)]])
            .unwrap();
        GriddedMdp::new(
            2,
            k,
            StageCost::Stationary(vec![1.0; 2]),
            vec![0.0; 2],
            safe,
        )
        .unwrap()
    }

    /// Stay put safely at cost 1, or take a free but risky step.
    fn two_way() -> GriddedMdp {
        let k = TransitionKernel::from_rows(
            2,
            2,
            vec![
                vec![(0, 1.0)],
                vec![(0, 0.5), (1, 0.5)],
                vec![(1, 1.0)],
                vec![(1, 1.0)],
            ],
        )
        .unwrap();
        GriddedMdp::new(
            1,
            k,
            StageCost::Stationary(vec![1.0, 0.0, 0.0, 0.0]),
            vec![0.0; 2],
            vec![true, false],
        )
        .unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(
            initial_lambda_bounds(10.0, 2.0, 1.0, 0.6).unwrap().1,
            8.0 / 0.4
        );
        assert_eq!(initial_lambda_bounds(3.0, 3.0, 1.0, 0.6).unwrap().1, 0.0);
        assert!(initial_lambda_bounds(3.0, 1.0, 0.5, 0.5).is_err());
        assert_eq!(mixing_probability(0.5, 1.0, 0.75).unwrap(), 0.5);
        assert_eq!(mixing_probability(0.5, 1.0, 0.5).unwrap(), 0.0);
        assert_eq!(mixing_probability(0.5, 1.0, 1.0).unwrap(), 1.0);
        assert!(mixing_probability(0.5, 0.5, 0.5).is_err());
        assert_eq!(suboptimality_certificate(0.5, 0.0, 4.0, 0.5, 1.0), 0.5);
        assert_eq!(suboptimality_certificate(0.0, 0.0, 4.0, 0.5, 1.0), 0.0);
        assert_eq!(suboptimality_certificate(1.0, 0.0, 4.0, 0.5, 1.0), 0.0);
    }

    #[test]
    fn border_bound_limits() {
        let (_, safety_gap) = border_case_bounds(1e12, 5.0, 0.9, 1.0, 0.1, 10.0, 1.0).unwrap();
        assert!(safety_gap < 1e-10);
        let (cost_gap, _) = border_case_bounds(1e-12, 5.0, 0.9, 1.0, 0.1, 10.0, 1.0).unwrap();
        assert!(cost_gap < 1e-11);
        assert!(border_case_bounds(0.0, 5.0, 0.9, 1.0, 0.1, 10.0, 1.0).is_err());
    }

    #[test]
    fn border_cases_on_toy_models() {
        assert!(matches!(
            check_border_cases(&chain(vec![true, true]), 0, 0.5).unwrap(),
            BorderCase::Trivial { safety, .. } if safety == 1.0
        ));
        assert!(matches!(
            check_border_cases(&chain(vec![false, false]), 0, 0.5).unwrap(),
            BorderCase::Infeasible { max_safety, .. } if max_safety == 0.0
        ));
        assert!(check_border_cases(&chain(vec![true, true]), 0, 1.5).is_err());
    }

    #[test]
    fn mixes_to_exact_alpha() {
        let m = two_way();
        let r = solve(&m, 0, 0.75, 1e-9, 60).unwrap();
        assert_eq!(r.status, Status::Solved);
        assert!((r.safety - 0.75).abs() < 1e-12);
        // mixing "stay" (cost 1) and "risk" (cost 0, safety 0.5) at p = 0.5
        assert!((r.cost - 0.5).abs() < 1e-9 + r.delta);
        assert!(r.delta <= 1e-9);
    }

    #[test]
    fn infeasible_and_trivial_statuses() {
        let m = two_way();
        assert_eq!(
            solve(&m, 1, 0.1, 1e-6, 60).unwrap().status,
            Status::Infeasible
        );
        assert_eq!(solve(&m, 0, 0.4, 1e-6, 60).unwrap().status, Status::Trivial);
        assert_eq!(solve(&m, 0, 1.0, 1e-6, 60).unwrap().status, Status::Solved);
        assert!(solve(&m, 0, 0.5, 0.0, 60).is_err());
    }

    #[test]
    fn max_iters_keeps_bracket() {
        let m = two_way();
        let r = solve(&m, 0, 0.75, 1e-300, 3).unwrap();
        assert_eq!(r.status, Status::MaxIters);
        assert_eq!(r.iterations, 3);
        assert!(r.under.unwrap().safety <= 0.75 && r.over.unwrap().safety >= 0.75);
    }

    #[test]
    fn bracket_halves_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut solved = 0;
        for _ in 0..100 {
            let m = random_mdp(&mut rng, RandomMdpParams::default());
            let alpha = rng.random::<f64>();
            let r = solve(&m, 0, alpha, 1e-9, 60).unwrap();
            if r.status != Status::Solved || r.iterations == 0 {
                continue;
            }
            solved += 1;
            assert!(r.safety >= alpha - 1e-12);
            for w in r.history.windows(2) {
                assert_eq!(w[1].lambda_width, w[0].lambda_width / 2.0);
                let gap = w[1].lambda_upper - w[1].lambda_lower;
                assert!((gap - w[1].lambda_width).abs() <= 1e-12 * w[0].lambda_upper);
            }
        }
        assert!(solved >= 5, "{solved}");
    }

    #[test]
    fn boole_at_zero_is_min_cost() {
        let m = two_way();
        let r = solve_boole(&m, 0, 0.4, 1e-6, 30, BooleEval::Exact).unwrap();
        assert_eq!(r.status, Status::Trivial);
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn sweep_sorted_and_csv() {
        let m = two_way();
        let pts = pareto_sweep(&m, 0, &[4.0, 0.0, 1.0], Method::Exact).unwrap();
        assert_eq!(
            pts.iter().map(|p| p.lambda).collect::<Vec<_>>(),
            vec![0.0, 1.0, 4.0]
        );
        assert_eq!(pts[0].cost, 0.0);
        let csv = pareto_to_csv(&pts);
        assert!(csv.starts_with("lambda,safety,cost,method\n0.0000000000000000e0,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",exact"));
    }

    #[test]
    fn log_range_endpoints() {
        let v = log_range(100.0, 1e6, 5).unwrap();
        assert_eq!((v[0], v[4]), (100.0, 1e6));
        assert!((v[1] - 1000.0).abs() < 1e-9);
        assert!(log_range(0.0, 1.0, 3).is_err());
    }
}
