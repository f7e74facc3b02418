//! Test oracles that share no code with the recursions: trajectory-tree
//! expansion and brute-force policy enumeration.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use jcc_core::dp::{MarkovPolicy, Provenance, RecursionKind};
use jcc_core::model::{random_mdp, GriddedMdp, RandomMdpParams};
use rand::Rng;

/// Totals of one policy, accumulated over the full trajectory tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct TreeTotals {
    pub cost: f64,
    /// Probability that every visited state is safe.
    pub safety: f64,
    /// `Σ_k P(x_k ∉ A)` over `k = 0..=N`.
    pub unsafe_visits: f64,
}

/// Expands every trajectory of length `N` from `x0` under `policy(k, x, b)`,
/// where `b` is whether the path so far stayed safe.
pub fn tree_eval<F>(mdp: &GriddedMdp, x0: usize, policy: F) -> TreeTotals
where
    F: Fn(usize, usize, bool) -> usize,
{
    let mut totals = TreeTotals::default();
    walk(mdp, &policy, 0, x0, mdp.is_safe(x0), 1.0, &mut totals);
    totals
}

fn walk<F>(mdp: &GriddedMdp, policy: &F, k: usize, x: usize, safe: bool, p: f64, t: &mut TreeTotals)
where
    F: Fn(usize, usize, bool) -> usize,
{
    if !mdp.is_safe(x) {
        t.unsafe_visits += p;
    }
    if k == mdp.horizon() {
        t.cost += p * mdp.terminal_cost(x);
        if safe {
            t.safety += p;
        }
        return;
    }
    let u = policy(k, x, safe);
    t.cost += p * mdp.stage_cost(k, x, u);
    for (y, q) in mdp.kernel().row(x, u).iter() {
        if q > 0.0 {
            walk(mdp, policy, k + 1, y, safe && mdp.is_safe(y), p * q, t);
        }
    }
}

/// Decision points `(k, x, b)` reachable from `x0` for some policy.
pub fn reachable_points(mdp: &GriddedMdp, x0: usize) -> Vec<(usize, usize, bool)> {
    let mut layer: BTreeSet<(usize, bool)> = BTreeSet::from([(x0, mdp.is_safe(x0))]);
    let mut out = Vec::new();
    for k in 0..mdp.horizon() {
        let mut next = BTreeSet::new();
        for &(x, b) in &layer {
            out.push((k, x, b));
            for u in 0..mdp.num_actions() {
                for (y, q) in mdp.kernel().row(x, u).iter() {
                    if q > 0.0 {
                        next.insert((y, b && mdp.is_safe(y)));
                    }
                }
            }
        }
        layer = next;
    }
    out
}

pub fn policy_count(mdp: &GriddedMdp, x0: usize) -> f64 {
    (mdp.num_actions() as f64).powi(reachable_points(mdp, x0).len() as i32)
}

/// `(cost, safety)` of every deterministic augmented Markov policy.
pub fn enumerate_policies(mdp: &GriddedMdp, x0: usize) -> Vec<(f64, f64)> {
    let points = reachable_points(mdp, x0);
    let index: HashMap<(usize, usize, bool), usize> =
        points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let a = mdp.num_actions();
    let mut choice = vec![0usize; points.len()];
    let mut out = Vec::new();
    loop {
        let t = tree_eval(mdp, x0, |k, x, b| choice[index[&(k, x, b)]]);
        out.push((t.cost, t.safety));
        // mixed-radix increment
        let mut i = 0;
        loop {
            if i == choice.len() {
                return out;
            }
            choice[i] += 1;
            if choice[i] < a {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Cheapest expected cost of a randomization over `points` with safety at
/// least `alpha`, or `None` when no point is safe enough.
pub fn best_mixed_cost(points: &[(f64, f64)], alpha: f64) -> Option<f64> {
    // A point that another point beats in both coordinates never helps.
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut front: Vec<(f64, f64)> = Vec::new();
    for p in sorted {
        if front.last().is_none_or(|q| p.0 < q.0) {
            front.push(p);
        }
    }
    let mut best: Option<f64> = None;
    let mut take = |c: f64| best = Some(best.map_or(c, |b: f64| b.min(c)));
    for &(c, v) in &front {
        if v >= alpha {
            take(c);
        }
    }
    for &(ci, vi) in &front {
        for &(cj, vj) in &front {
            if vi < alpha && alpha < vj {
                let w = (alpha - vi) / (vj - vi);
                take((1.0 - w) * ci + w * cj);
            }
        }
    }
    best
}

/// A random instance with at most `max_states` states, `max_actions` actions
/// and horizon at most `max_horizon`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    max_states: usize,
    max_actions: usize,
    max_horizon: usize,
) -> GriddedMdp {
    let params = RandomMdpParams {
        num_states: rng.random_range(1..=max_states),
        num_actions: rng.random_range(1..=max_actions),
        horizon: rng.random_range(1..=max_horizon),
        zero_fraction: rng.random_range(0.0..0.6),
        safe_fraction: rng.random_range(0.3..1.0),
        max_cost: 10.0,
    };
    random_mdp(rng, params)
}

/// A random action table `[(k * 2 + b) * S + x]`.
pub fn random_table<R: Rng>(rng: &mut R, mdp: &GriddedMdp) -> Vec<usize> {
    (0..mdp.horizon() * 2 * mdp.num_states())
        .map(|_| rng.random_range(0..mdp.num_actions()))
        .collect()
}

pub fn table_action(mdp: &GriddedMdp, table: &[usize], k: usize, x: usize, b: bool) -> usize {
    table[(k * 2 + b as usize) * mdp.num_states() + x]
}

/// The same action table as a library policy.
pub fn table_policy(mdp: &GriddedMdp, table: &[usize]) -> MarkovPolicy {
    let block = |b: bool| -> Vec<Vec<u32>> {
        (0..mdp.horizon())
            .map(|k| {
                (0..mdp.num_states())
                    .map(|x| table_action(mdp, table, k, x, b) as u32)
                    .collect()
            })
            .collect()
    };
    let provenance = Provenance {
        recursion: RecursionKind::External,
        lambda: None,
    };
    MarkovPolicy::from_blocks(mdp.num_actions(), block(true), block(false), provenance).unwrap()
}
