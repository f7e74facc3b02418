//! Backward recursions and policy evaluation.
//!
//! Base recursions ([`min_cost_recursion`], [`max_safety_recursion`],
//! [`boole_recursion`]) work on the un-augmented model; their policies are
//! stored for both flag values so that every [`MarkovPolicy`] can be evaluated
//! on the augmented model. [`lambda_recursion`] minimizes `C − λ·V` over the
//! augmented model.
//!
//! Within a time step states are processed in parallel, but each state's
//! expectation is summed sequentially in ascending next-state order, so
//! results do not depend on the thread count. Ties go to the lowest action.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugState, AugmentedMdp};
use crate::error::{Error, Result};
use crate::model::GriddedMdp;
use crate::numfmt::{fmt_f64, to_json_vec};
use crate::util::write_atomic;

const PAR_MIN_STATES: usize = 64;

/// What a [`ValueTable`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Cost,
    Safety,
    Lambda,
    Boole,
}

/// Values for `k = 0..=N`, either per base state (one block) or per
/// augmented state (two blocks, `b = 0` first).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    kind: ValueKind,
    horizon: usize,
    num_states: usize,
    blocks: usize,
    values: Vec<f64>,
}

impl ValueTable {
    /// Builds a table from per-step layers, `layers[k]` holding
    /// `blocks * num_states` values.
    fn from_layers(
        kind: ValueKind,
        num_states: usize,
        blocks: usize,
        layers: Vec<Vec<f64>>,
    ) -> Self {
        debug_assert!(layers.iter().all(|l| l.len() == blocks * num_states));
        ValueTable {
            kind,
            horizon: layers.len() - 1,
            num_states,
            blocks,
            values: layers.concat(),
        }
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn is_augmented(&self) -> bool {
        self.blocks == 2
    }

    /// Value at time `k`. The flag is ignored for base tables.
    #[inline]
    pub fn get(&self, k: usize, state: usize, safe: bool) -> f64 {
        let b = if self.blocks == 2 { safe as usize } else { 0 };
        self.values[(k * self.blocks + b) * self.num_states + state]
    }

    pub fn at(&self, k: usize, s: AugState) -> f64 {
        self.get(k, s.state, s.safe)
    }

    /// All values at time `k` for one flag value.
    pub fn layer(&self, k: usize, safe: bool) -> &[f64] {
        let b = if self.blocks == 2 { safe as usize } else { 0 };
        let start = (k * self.blocks + b) * self.num_states;
        &self.values[start..start + self.num_states]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV with header `k,state,b,value`; base tables leave `b` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,state,b,value\n");
        for k in 0..=self.horizon {
            for b in (0..self.blocks).rev() {
                for x in 0..self.num_states {
                    let v = self.values[(k * self.blocks + b) * self.num_states + x];
                    let flag = if self.blocks == 2 {
                        b.to_string()
                    } else {
                        String::new()
                    };
                    out.push_str(&format!("{k},{x},{flag},{}\n", fmt_f64(v)));
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Which recursion produced a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionKind {
    MinCost,
    MaxSafety,
    Lambda,
    Boole,
    /// Maximum safety, ties broken by lower cost.
    CheapestMaxSafety,
    /// Minimum cost, ties broken by higher safety.
    SafestMinCost,
    /// Loaded or assembled by hand.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub recursion: RecursionKind,
    #[serde(default)]
    pub lambda: Option<f64>,
}

/// Deterministic Markov policy on the augmented state space.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    /// Indexed `[(k * 2 + b) * num_states + state]`.
    actions: Vec<u32>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    provenance: Provenance,
    /// `[k][state]` actions while the trajectory is still safe.
    b1: Vec<Vec<u32>>,
    /// `[k][state]` actions after the trajectory has left the safe set.
    b0: Vec<Vec<u32>>,
}

impl MarkovPolicy {
    /// Policy from per-step action arrays for each flag value.
    pub fn from_blocks(
        num_actions: usize,
        b1: Vec<Vec<u32>>,
        b0: Vec<Vec<u32>>,
        provenance: Provenance,
    ) -> Result<Self> {
        let horizon = b1.len();
        if horizon == 0 || b0.len() != horizon {
            return Err(Error::ShapeMismatch(
                "policy needs the same non-zero number of steps in both blocks".into(),
            ));
        }
        let num_states = b1[0].len();
        let mut actions = Vec::with_capacity(2 * horizon * num_states);
        for (lo, hi) in b0.iter().zip(&b1) {
            if lo.len() != num_states || hi.len() != num_states {
                return Err(Error::ShapeMismatch("ragged policy arrays".into()));
            }
            actions.extend_from_slice(lo);
            actions.extend_from_slice(hi);
        }
        if let Some(&bad) = actions.iter().find(|&&u| u as usize >= num_actions) {
            return Err(Error::ShapeMismatch(format!(
                "action {bad} out of range for {num_actions} actions"
            )));
        }
        Ok(MarkovPolicy {
            horizon,
            num_states,
            num_actions,
            actions,
            provenance,
        })
    }

    /// A base-state policy used regardless of the flag.
    pub fn from_base(
        num_actions: usize,
        per_step: Vec<Vec<u32>>,
        provenance: Provenance,
    ) -> Result<Self> {
        Self::from_blocks(num_actions, per_step.clone(), per_step, provenance)
    }

    /// The same action everywhere.
    pub fn constant(mdp: &GriddedMdp, action: usize) -> Result<Self> {
        let row = vec![action as u32; mdp.num_states()];
        Self::from_base(
            mdp.num_actions(),
            vec![row; mdp.horizon()],
            Provenance {
                recursion: RecursionKind::External,
                lambda: None,
            },
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    #[inline]
    pub fn action(&self, k: usize, state: usize, safe: bool) -> usize {
        self.actions[(k * 2 + safe as usize) * self.num_states + state] as usize
    }

    pub fn action_at(&self, k: usize, s: AugState) -> usize {
        self.action(k, s.state, s.safe)
    }

    /// Actions at time `k` for one flag value.
    pub fn block(&self, k: usize, safe: bool) -> &[u32] {
        let start = (k * 2 + safe as usize) * self.num_states;
        &self.actions[start..start + self.num_states]
    }

    pub fn check_compatible(&self, mdp: &GriddedMdp) -> Result<()> {
        if self.horizon != mdp.horizon()
            || self.num_states != mdp.num_states()
            || self.num_actions != mdp.num_actions()
        {
            return Err(Error::ShapeMismatch(format!(
                "policy is {}x{}x{} (horizon x states x actions), model is {}x{}x{}",
                self.horizon,
                self.num_states,
                self.num_actions,
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let split = |safe| {
            (0..self.horizon)
                .map(|k| self.block(k, safe).to_vec())
                .collect()
        };
        let file = PolicyFile {
            horizon: self.horizon,
            num_states: self.num_states,
            num_actions: self.num_actions,
            provenance: self.provenance,
            b1: split(true),
            b0: split(false),
        };
        Ok(to_json_vec(&file)?)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let file: PolicyFile = serde_json::from_slice(bytes)?;
        let policy = Self::from_blocks(file.num_actions, file.b1, file.b0, file.provenance)?;
        if policy.horizon != file.horizon || policy.num_states != file.num_states {
            return Err(Error::ShapeMismatch(
                "policy arrays disagree with the declared horizon or state count".into(),
            ));
        }
        Ok(policy)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_slice(&std::fs::read(path)?)
    }
}

/// For every state, the action whose `eval` is best under `better`
/// (strict, so the lowest index wins ties).
fn pick<T, E, B>(num_states: usize, num_actions: usize, eval: E, better: B) -> (Vec<T>, Vec<u32>)
where
    T: Copy + Send,
    E: Fn(usize, usize) -> T + Sync,
    B: Fn(&T, &T) -> bool + Sync,
{
    (0..num_states)
        .into_par_iter()
        .with_min_len(PAR_MIN_STATES)
        .map(|x| {
            let mut best = eval(x, 0);
            let mut arg = 0u32;
            for u in 1..num_actions {
                let v = eval(x, u);
                if better(&v, &best) {
                    best = v;
                    arg = u as u32;
                }
            }
            (best, arg)
        })
        .unzip()
}

fn less(a: &f64, b: &f64) -> bool {
    a < b
}

fn greater(a: &f64, b: &f64) -> bool {
    a > b
}

fn provenance(recursion: RecursionKind, lambda: Option<f64>) -> Provenance {
    Provenance { recursion, lambda }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(
            "lambda",
            format!("must be finite and non-negative, got {lambda}"),
        ))
    }
}

/// Base min-cost recursion with an extra state-dependent penalty; returns
/// per-step values and actions.
fn base_min_cost(
    mdp: &GriddedMdp,
    penalty: impl Fn(usize) -> f64 + Sync,
) -> (Vec<Vec<f64>>, Vec<Vec<u32>>) {
    let (n, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut values = vec![Vec::new(); horizon + 1];
    let mut actions = vec![Vec::new(); horizon];
    values[horizon] = (0..n).map(|x| mdp.terminal_cost(x) + penalty(x)).collect();
    for k in (0..horizon).rev() {
        let next = &values[k + 1];
        let eval = |x: usize, u: usize| {
            mdp.stage_cost(k, x, u) + penalty(x) + mdp.kernel().row(x, u).expect(next)
        };
        let (v, pi) = pick(n, a, eval, less);
        values[k] = v;
        actions[k] = pi;
    }
    (values, actions)
}

/// `C*_k(x) = min_u ℓ_k(x,u) + E[C*_{k+1}(x')]`, `C*_N = ℓ_N`.
pub fn min_cost_recursion(mdp: &GriddedMdp) -> (ValueTable, MarkovPolicy) {
    let (values, actions) = base_min_cost(mdp, |_| 0.0);
    (
        ValueTable::from_layers(ValueKind::Cost, mdp.num_states(), 1, values),
        MarkovPolicy::from_base(
            mdp.num_actions(),
            actions,
            provenance(RecursionKind::MinCost, None),
        )
        .expect("recursion output is well formed"),
    )
}

/// `V*_k(x) = max_u 1_A(x) E[V*_{k+1}(x')]`, `V*_N = 1_A`. Unsafe states
/// take action 0.
pub fn max_safety_recursion(mdp: &GriddedMdp) -> (ValueTable, MarkovPolicy) {
    let (n, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let indicator = |x: usize| if mdp.is_safe(x) { 1.0 } else { 0.0 };
    let mut values = vec![Vec::new(); horizon + 1];
    let mut actions = vec![Vec::new(); horizon];
    values[horizon] = (0..n).map(indicator).collect();
    for k in (0..horizon).rev() {
        let next = &values[k + 1];
        let eval = |x: usize, u: usize| indicator(x) * mdp.kernel().row(x, u).expect(next);
        let (v, pi) = pick(n, a, eval, greater);
        values[k] = v;
        actions[k] = pi;
    }
    (
        ValueTable::from_layers(ValueKind::Safety, n, 1, values),
        MarkovPolicy::from_base(a, actions, provenance(RecursionKind::MaxSafety, None))
            .expect("recursion output is well formed"),
    )
}

/// Min-cost recursion with `λ` added at every step (including `N`) spent
/// outside the safe set.
pub fn boole_recursion(mdp: &GriddedMdp, lambda: f64) -> Result<(ValueTable, MarkovPolicy)> {
    check_lambda(lambda)?;
    let (values, actions) = base_min_cost(mdp, |x| if mdp.is_safe(x) { 0.0 } else { lambda });
    Ok((
        ValueTable::from_layers(ValueKind::Boole, mdp.num_states(), 1, values),
        MarkovPolicy::from_base(
            mdp.num_actions(),
            actions,
            provenance(RecursionKind::Boole, Some(lambda)),
        )?,
    ))
}

/// Concatenates `b = 0` and `b = 1` layers.
fn stack(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(lo.len() + hi.len());
    v.extend_from_slice(lo);
    v.extend_from_slice(hi);
    v
}

/// `E[v(x', b')]` from `(x, b = 1)`, where `b' = 1_A(x')`.
#[inline]
fn expect_flagged(mdp: &GriddedMdp, x: usize, u: usize, lo: &[f64], hi: &[f64]) -> f64 {
    mdp.kernel()
        .row(x, u)
        .expect_with(|j| if mdp.is_safe(j) { hi[j] } else { lo[j] })
}

/// λ-penalized recursion on the augmented model with the λ-independent
/// `b = 0` block computed once.
#[derive(Debug, Clone)]
pub struct LambdaSolver<'a> {
    aug: AugmentedMdp<'a>,
    min_cost: ValueTable,
    min_cost_policy: MarkovPolicy,
}

impl<'a> LambdaSolver<'a> {
    pub fn new(aug: AugmentedMdp<'a>) -> Self {
        let (min_cost, min_cost_policy) = min_cost_recursion(aug.base());
        LambdaSolver {
            aug,
            min_cost,
            min_cost_policy,
        }
    }

    pub fn min_cost(&self) -> (&ValueTable, &MarkovPolicy) {
        (&self.min_cost, &self.min_cost_policy)
    }

    /// `J_N(x,b) = ℓ_N(x) − λb`, `J_k(x,b) = min_u ℓ_k(x,u) + E[J_{k+1}(x',b')]`.
    pub fn solve(&self, lambda: f64) -> Result<(ValueTable, MarkovPolicy)> {
        check_lambda(lambda)?;
        let mdp = self.aug.base();
        let (n, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let mut hi: Vec<Vec<f64>> = vec![Vec::new(); horizon + 1];
        let mut b1 = vec![Vec::new(); horizon];
        hi[horizon] = (0..n).map(|x| mdp.terminal_cost(x) - lambda).collect();
        for k in (0..horizon).rev() {
            let lo_next = self.min_cost.layer(k + 1, false);
            let hi_next = &hi[k + 1];
            let eval = |x: usize, u: usize| {
                mdp.stage_cost(k, x, u) + expect_flagged(mdp, x, u, lo_next, hi_next)
            };
            let (v, pi) = pick(n, a, eval, less);
            hi[k] = v;
            b1[k] = pi;
        }
        let layers = (0..=horizon)
            .map(|k| stack(self.min_cost.layer(k, false), &hi[k]))
            .collect();
        let b0 = (0..horizon)
            .map(|k| self.min_cost_policy.block(k, false).to_vec())
            .collect();
        Ok((
            ValueTable::from_layers(ValueKind::Lambda, n, 2, layers),
            MarkovPolicy::from_blocks(a, b1, b0, provenance(RecursionKind::Lambda, Some(lambda)))?,
        ))
    }
}

pub fn lambda_recursion(aug: AugmentedMdp<'_>, lambda: f64) -> Result<(ValueTable, MarkovPolicy)> {
    check_lambda(lambda)?;
    LambdaSolver::new(aug).solve(lambda)
}

/// Relative tolerance under which two primary values count as tied.
/// Sums of the same probabilities in different orders differ by a few ulps.
const TIE_TOL: f64 = 1e-12;

fn lexicographic(a: &(f64, f64), b: &(f64, f64), first_min: bool, second_min: bool) -> bool {
    let (p, q) = if first_min { (b.0, a.0) } else { (a.0, b.0) };
    if (p - q).abs() > TIE_TOL * p.abs().max(q.abs()).max(1.0) {
        return p > q;
    }
    if second_min {
        a.1 < b.1
    } else {
        a.1 > b.1
    }
}

/// Max-safety policy with ties (equal safety up to rounding) broken by the lowest
/// augmented cost-to-go; the `b = 0` block is min-cost.
pub fn cheapest_max_safety_policy(mdp: &GriddedMdp) -> MarkovPolicy {
    let (min_cost, min_policy) = min_cost_recursion(mdp);
    let (n, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let indicator = |x: usize| if mdp.is_safe(x) { 1.0 } else { 0.0 };
    let mut safety: Vec<f64> = (0..n).map(indicator).collect();
    let mut cost: Vec<f64> = mdp.terminal_costs().to_vec();
    let mut b1 = vec![Vec::new(); horizon];
    for k in (0..horizon).rev() {
        let lo = min_cost.layer(k + 1, false);
        let eval = |x: usize, u: usize| {
            let row = mdp.kernel().row(x, u);
            (
                indicator(x) * row.expect(&safety),
                mdp.stage_cost(k, x, u) + expect_flagged(mdp, x, u, lo, &cost),
            )
        };
        let (v, pi) = pick(n, a, eval, |p, q| lexicographic(p, q, false, true));
        safety = v.iter().map(|e| e.0).collect();
        cost = v.iter().map(|e| e.1).collect();
        b1[k] = pi;
    }
    let b0 = (0..horizon)
        .map(|k| min_policy.block(k, false).to_vec())
        .collect();
    MarkovPolicy::from_blocks(
        a,
        b1,
        b0,
        provenance(RecursionKind::CheapestMaxSafety, None),
    )
    .expect("recursion output is well formed")
}

/// Min-cost policy with ties (equal cost up to rounding) broken by the highest
/// augmented safety-to-go.
pub fn safest_min_cost_policy(mdp: &GriddedMdp) -> MarkovPolicy {
    let (n, a, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let indicator = |x: usize| if mdp.is_safe(x) { 1.0 } else { 0.0 };
    let (min_cost, min_policy) = min_cost_recursion(mdp);
    let mut safety: Vec<f64> = (0..n).map(indicator).collect();
    let mut b1 = vec![Vec::new(); horizon];
    for k in (0..horizon).rev() {
        let next_cost = min_cost.layer(k + 1, false);
        let eval = |x: usize, u: usize| {
            let row = mdp.kernel().row(x, u);
            (
                mdp.stage_cost(k, x, u) + row.expect(next_cost),
                indicator(x) * row.expect_with(|j| if mdp.is_safe(j) { safety[j] } else { 0.0 }),
            )
        };
        let (v, pi) = pick(n, a, eval, |p, q| lexicographic(p, q, true, false));
        safety = v.iter().map(|e| e.1).collect();
        b1[k] = pi;
    }
    let b0 = (0..horizon)
        .map(|k| min_policy.block(k, false).to_vec())
        .collect();
    MarkovPolicy::from_blocks(a, b1, b0, provenance(RecursionKind::SafestMinCost, None))
        .expect("recursion output is well formed")
}

/// Expected cost-to-go of a fixed policy, per augmented state.
pub fn evaluate_policy_cost(mdp: &GriddedMdp, policy: &MarkovPolicy) -> Result<ValueTable> {
    policy.check_compatible(mdp)?;
    let (n, horizon) = (mdp.num_states(), mdp.horizon());
    let mut layers = vec![Vec::new(); horizon + 1];
    let terminal = mdp.terminal_costs();
    layers[horizon] = stack(terminal, terminal);
    for k in (0..horizon).rev() {
        let (lo, hi) = layers[k + 1].split_at(n);
        let layer: Vec<f64> = (0..2 * n)
            .into_par_iter()
            .with_min_len(PAR_MIN_STATES)
            .map(|i| {
                let (x, safe) = (i % n, i >= n);
                let u = policy.action(k, x, safe);
                let future = if safe {
                    expect_flagged(mdp, x, u, lo, hi)
                } else {
                    mdp.kernel().row(x, u).expect(lo)
                };
                mdp.stage_cost(k, x, u) + future
            })
            .collect();
        layers[k] = layer;
    }
    Ok(ValueTable::from_layers(ValueKind::Cost, n, 2, layers))
}

/// `E[b_N]` under a fixed policy, per augmented state: `V_N(x,b) = b·1_A(x)`
/// and `V_k(x,b) = b·1_A(x)·E[V_{k+1}(x', 1_A(x'))]`.
pub fn evaluate_policy_safety(mdp: &GriddedMdp, policy: &MarkovPolicy) -> Result<ValueTable> {
    policy.check_compatible(mdp)?;
    let (n, horizon) = (mdp.num_states(), mdp.horizon());
    let indicator = |x: usize| if mdp.is_safe(x) { 1.0 } else { 0.0 };
    let zeros = vec![0.0; n];
    let mut layers = vec![Vec::new(); horizon + 1];
    layers[horizon] = stack(&zeros, &(0..n).map(indicator).collect::<Vec<_>>());
    for k in (0..horizon).rev() {
        let hi_next = &layers[k + 1][n..];
        let hi: Vec<f64> = (0..n)
            .into_par_iter()
            .with_min_len(PAR_MIN_STATES)
            .map(|x| {
                let u = policy.action(k, x, true);
                indicator(x) * expect_flagged(mdp, x, u, &zeros, hi_next)
            })
            .collect();
        layers[k] = stack(&zeros, &hi);
    }
    Ok(ValueTable::from_layers(ValueKind::Safety, n, 2, layers))
}

/// `(C_0, V_0)` of a policy from an augmented initial state.
pub fn evaluate_at(mdp: &GriddedMdp, policy: &MarkovPolicy, x0: AugState) -> Result<(f64, f64)> {
    let cost = evaluate_policy_cost(mdp, policy)?;
    let safety = evaluate_policy_safety(mdp, policy)?;
    Ok((cost.at(0, x0), safety.at(0, x0)))
}

/// Distribution over augmented states at each `k = 0..=N`, each entry
/// `[b = 0 block, b = 1 block]`, starting from `(x0, 1_A(x0))`.
pub fn forward_distribution_augmented(
    mdp: &GriddedMdp,
    policy: &MarkovPolicy,
    x0: usize,
) -> Result<Vec<Vec<f64>>> {
    policy.check_compatible(mdp)?;
    mdp.check_state(x0)?;
    let n = mdp.num_states();
    let mut current = vec![0.0; 2 * n];
    current[if mdp.is_safe(x0) { n + x0 } else { x0 }] = 1.0;
    let mut out = Vec::with_capacity(mdp.horizon() + 1);
    for k in 0..mdp.horizon() {
        let mut next = vec![0.0; 2 * n];
        for (i, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let (x, safe) = (i % n, i >= n);
            for (j, p) in mdp.kernel().row(x, policy.action(k, x, safe)).iter() {
                let flag = safe && mdp.is_safe(j);
                next[if flag { n + j } else { j }] += mass * p;
            }
        }
        out.push(current);
        current = next;
    }
    out.push(current);
    Ok(out)
}

/// Marginal state distribution at each `k = 0..=N` under `policy` from `x0`.
pub fn forward_distribution(
    mdp: &GriddedMdp,
    policy: &MarkovPolicy,
    x0: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = mdp.num_states();
    Ok(forward_distribution_augmented(mdp, policy, x0)?
        .into_iter()
        .map(|d| (0..n).map(|x| d[x] + d[n + x]).collect())
        .collect())
}

/// Lower bound `1 − Σ_{k=0}^{N} P(x_k ∉ A)` on the probability of a safe trajectory.
pub fn boole_safety_bound(mdp: &GriddedMdp, policy: &MarkovPolicy, x0: usize) -> Result<f64> {
    let dists = forward_distribution(mdp, policy, x0)?;
    let mut unsafe_mass = 0.0;
    for d in &dists {
        for (x, p) in d.iter().enumerate() {
            if !mdp.is_safe(x) {
                unsafe_mass += p;
            }
        }
    }
    Ok(1.0 - unsafe_mass)
}
