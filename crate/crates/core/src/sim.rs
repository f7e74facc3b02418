//! Monte-Carlo rollouts and the brute-force oracle.
//!
//! Rollout `i` of a batch draws from its own ChaCha stream `(seed, i)`, so
//! batches are reproducible and independent of the thread count. A mixed
//! policy consumes one variate to pick its member before any transition is
//! sampled.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, initial_aug_state, AugState};
use crate::dp::{evaluate_at, MarkovPolicy, Provenance, RecursionKind};
use crate::dual::{MixedPolicy, PolicyTag};
use crate::error::{Error, Result};
use crate::model::{ContinuousSystemSpec, GriddedMdp, KernelRow};
use crate::numfmt::fmt_f64;
use crate::util::write_atomic;

/// Upper limit on the number of policies [`brute_force_performance_set`] enumerates.
pub const ENUMERATION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub id: usize,
    pub tag: PolicyTag,
    /// Visited cells `x_0, ..., x_N`.
    pub states: Vec<usize>,
    pub cost: f64,
    /// Every visited state is safe.
    pub safe: bool,
    /// The augmented flag `b_N` tracked along the trajectory.
    pub final_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub num_rollouts: usize,
    pub seed: u64,
    pub rollouts: Vec<Rollout>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub num_rollouts: usize,
    pub mean_cost: f64,
    pub safety: f64,
    /// Binomial standard error `sqrt(f(1 − f)/n)` of the safety fraction.
    pub std_error: f64,
    /// Fraction of rollouts that followed the over-safe member.
    pub over_fraction: f64,
}

fn stream(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Samples a successor from a kernel row by inversion.
fn sample_row<R: Rng + ?Sized>(row: KernelRow<'_>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in row.iter() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.next[row.len() - 1] as usize
}

fn run_one(
    mdp: &GriddedMdp,
    mixed: Option<&MixedPolicy>,
    plain: Option<&MarkovPolicy>,
    x0: usize,
    seed: u64,
    id: usize,
) -> Rollout {
    let mut rng = stream(seed, id);
    let (tag, policy) = match (mixed, plain) {
        (Some(m), _) => m.sample(&mut rng),
        (None, Some(p)) => (PolicyTag::Deterministic, p),
        (None, None) => unreachable!(),
    };
    let mut x = x0;
    let mut flag = mdp.is_safe(x0);
    let mut safe = flag;
    let mut cost = 0.0;
    let mut states = Vec::with_capacity(mdp.horizon() + 1);
    states.push(x);
    for k in 0..mdp.horizon() {
        let u = policy.action(k, x, flag);
        cost += mdp.stage_cost(k, x, u);
        x = sample_row(mdp.kernel().row(x, u), &mut rng);
        flag = flag && mdp.is_safe(x);
        safe &= mdp.is_safe(x);
        states.push(x);
    }
    cost += mdp.terminal_cost(x);
    Rollout {
        id,
        tag,
        states,
        cost,
        safe,
        final_flag: flag,
    }
}

fn batch(
    mdp: &GriddedMdp,
    mixed: Option<&MixedPolicy>,
    plain: Option<&MarkovPolicy>,
    x0: usize,
    num_rollouts: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    mdp.check_state(x0)?;
    for p in mixed
        .iter()
        .flat_map(|m| [&m.pi_over, &m.pi_under])
        .chain(plain)
    {
        p.check_compatible(mdp)?;
    }
    let rollouts = (0..num_rollouts)
        .into_par_iter()
        .map(|i| run_one(mdp, mixed, plain, x0, seed, i))
        .collect();
    Ok(RolloutBatch {
        num_rollouts,
        seed,
        rollouts,
    })
}

/// Rolls out a mixed policy on the gridded model.
pub fn rollout(
    mdp: &GriddedMdp,
    policy: &MixedPolicy,
    x0: usize,
    num_rollouts: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    batch(mdp, Some(policy), None, x0, num_rollouts, seed)
}

/// Rolls out a deterministic policy; rollouts are tagged `deterministic`.
pub fn rollout_deterministic(
    mdp: &GriddedMdp,
    policy: &MarkovPolicy,
    x0: usize,
    num_rollouts: usize,
    seed: u64,
) -> Result<RolloutBatch> {
    batch(mdp, None, Some(policy), x0, num_rollouts, seed)
}

pub fn empirical_stats(batch: &RolloutBatch) -> Result<EmpiricalStats> {
    let n = batch.rollouts.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let nf = n as f64;
    let mean_cost = batch.rollouts.iter().map(|r| r.cost).sum::<f64>() / nf;
    let safety = batch.rollouts.iter().filter(|r| r.safe).count() as f64 / nf;
    let over = batch
        .rollouts
        .iter()
        .filter(|r| r.tag == PolicyTag::Over)
        .count() as f64
        / nf;
    Ok(EmpiricalStats {
        num_rollouts: n,
        mean_cost,
        safety,
        std_error: (safety * (1.0 - safety) / nf).sqrt(),
        over_fraction: over,
    })
}

impl RolloutBatch {
    /// CSV `rollout_id,sampled_policy,safe,cost,trajectory` with the
    /// trajectory as `;`-separated cell indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rollout_id,sampled_policy,safe,cost,trajectory\n");
        for r in &self.rollouts {
            let path: Vec<String> = r.states.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.id,
                r.tag.name(),
                r.safe as u8,
                fmt_f64(r.cost),
                path.join(";")
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Rollout of the continuous system under a gridded policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousRollout {
    pub id: usize,
    pub tag: PolicyTag,
    pub points: Vec<Vec<f64>>,
    /// Gridded costs of the visited cells and chosen actions.
    pub cost: f64,
    /// Total realized catch for harvesting dynamics, zero otherwise.
    pub catch: f64,
    pub safe: bool,
}

/// Simulates the continuous dynamics from `x0`, choosing actions from the
/// policy at the cell containing the current point.
pub fn rollout_continuous(
    spec: &ContinuousSystemSpec,
    mdp: &GriddedMdp,
    policy: &MixedPolicy,
    x0: &[f64],
    num_rollouts: usize,
    seed: u64,
) -> Result<Vec<ContinuousRollout>> {
    let grid = mdp
        .grid()
        .ok_or_else(|| Error::InvalidModel("continuous rollouts need grid metadata".into()))?;
    if x0.len() != grid.dimension() {
        return Err(Error::arg(
            "x0",
            format!("expected {} coordinates", grid.dimension()),
        ));
    }
    policy.pi_over.check_compatible(mdp)?;
    policy.pi_under.check_compatible(mdp)?;
    Ok((0..num_rollouts)
        .into_par_iter()
        .map(|id| {
            let mut rng = stream(seed, id);
            let (tag, pi) = policy.sample(&mut rng);
            let mut x = x0.to_vec();
            let mut cell = grid.cell_of(&x);
            let mut flag = mdp.is_safe(cell);
            let mut safe = spec.safe_set.contains(&x);
            let (mut cost, mut catch) = (0.0, 0.0);
            let mut points = vec![x.clone()];
            for k in 0..mdp.horizon() {
                let u = pi.action(k, cell, flag);
                cost += mdp.stage_cost(k, cell, u);
                let step = spec.sample_step(&x, &spec.actions[u], &mut rng);
                catch += step.catch;
                x = step.next;
                cell = grid.cell_of(&x);
                flag = flag && mdp.is_safe(cell);
                safe &= spec.safe_set.contains(&x);
                points.push(x.clone());
            }
            cost += mdp.terminal_cost(cell);
            ContinuousRollout {
                id,
                tag,
                points,
                cost,
                catch,
                safe,
            }
        })
        .collect())
}

/// CSV of continuous rollouts; coordinates within a point are separated
/// by spaces and points by `;`.
pub fn continuous_to_csv(rollouts: &[ContinuousRollout]) -> String {
    let mut out = String::from("rollout_id,sampled_policy,safe,cost,catch,trajectory\n");
    for r in rollouts {
        let path: Vec<String> = r
            .points
            .iter()
            .map(|p| p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" "))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.id,
            r.tag.name(),
            r.safe as u8,
            fmt_f64(r.cost),
            fmt_f64(r.catch),
            path.join(";")
        ));
    }
    out
}

/// `(C_0, V_0)` of one deterministic policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformancePoint {
    /// Index of the policy in enumeration order.
    pub id: usize,
    pub cost: f64,
    pub safety: f64,
}

/// Augmented decision points `(k, x, b)` reachable from the initial state
/// under some policy.
fn reachable_decisions(mdp: &GriddedMdp, s0: AugState) -> Vec<(usize, AugState)> {
    let aug = augment(mdp);
    let n = mdp.num_states();
    let mut out = Vec::new();
    let mut frontier = vec![false; 2 * n];
    frontier[aug.index(s0)] = true;
    for k in 0..mdp.horizon() {
        let mut next = vec![false; 2 * n];
        for (i, _) in frontier.iter().enumerate().filter(|e| *e.1) {
            let s = AugState::new(i % n, i >= n);
            out.push((k, s));
            for u in 0..mdp.num_actions() {
                for (t, _) in aug.transitions(s, u) {
                    next[aug.index(t)] = true;
                }
            }
        }
        frontier = next;
    }
    out
}

/// Every deterministic Markov policy on the augmented model, evaluated
/// exactly from `x0`.
///
/// Only decisions reachable from `(x0, 1_A(x0))` are enumerated; all others
/// are fixed to action 0 since they cannot affect the initial-state values.
pub fn brute_force_performance_set(mdp: &GriddedMdp, x0: usize) -> Result<Vec<PerformancePoint>> {
    let s0 = initial_aug_state(mdp, x0)?;
    let points = reachable_decisions(mdp, s0);
    let a = mdp.num_actions();
    let count = (a as f64).powi(points.len() as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (n, horizon) = (mdp.num_states(), mdp.horizon());
    (0..count as usize)
        .into_par_iter()
        .map(|id| {
            let mut b1 = vec![vec![0u32; n]; horizon];
            let mut b0 = vec![vec![0u32; n]; horizon];
            let mut code = id;
            for &(k, s) in &points {
                let u = (code % a) as u32;
                code /= a;
                if s.safe {
                    b1[k][s.state] = u;
                } else {
                    b0[k][s.state] = u;
                }
            }
            let policy = MarkovPolicy::from_blocks(
                a,
                b1,
                b0,
                Provenance {
                    recursion: RecursionKind::External,
                    lambda: None,
                },
            )?;
            let (cost, safety) = evaluate_at(mdp, &policy, s0)?;
            Ok(PerformancePoint { id, cost, safety })
        })
        .collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Minimum cost of a mixture of at most two points whose safety is at
/// least `alpha`.
///
/// Evaluated on the lower convex hull of the points in the (safety, cost)
/// plane: the answer is the hull at `alpha` or a hull vertex beyond it.
pub fn lower_convex_envelope(points: &[PerformancePoint], alpha: f64) -> Result<f64> {
    let best = points
        .iter()
        .map(|p| p.safety)
        .fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() || best < alpha {
        return Err(Error::Unattainable { alpha, best });
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.safety, p.cost)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if hull.last().is_some_and(|h| h.0 == p.0) {
            continue;
        }
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let mut answer = f64::INFINITY;
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 < alpha && alpha <= b.0 {
            answer = answer.min(a.1 + (alpha - a.0) / (b.0 - a.0) * (b.1 - a.1));
        }
    }
    for h in &hull {
        if h.0 >= alpha {
            answer = answer.min(h.1);
        }
    }
    Ok(answer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::evaluate_policy_safety;
    use crate::model::{random_mdp, RandomMdpParams, StageCost, TransitionKernel};
    use rand_chacha::ChaCha8Rng;

    fn chain(horizon: usize) -> GriddedMdp {
        let k = TransitionKernel::from_rows(2, 1, vec![vec![(0, 0.7), (1, 0.3)], vec![(1, 1.0)]])
            .unwrap();
        GriddedMdp::new(
            horizon,
            k,
            StageCost::Stationary(vec![1.0, 2.0]),
            vec![0.0; 2],
            vec![true, false],
        )
        .unwrap()
    }

    fn pp(cost: f64, safety: f64) -> PerformancePoint {
        PerformancePoint {
            id: 0,
            cost,
            safety,
        }
    }

    /// Direct definition: every single point and every pair mixed to `alpha`.
    fn pairwise(points: &[PerformancePoint], alpha: f64) -> f64 {
        let mut best = f64::INFINITY;
        for p in points {
            if p.safety >= alpha {
                best = best.min(p.cost);
            }
            for q in points {
                if p.safety < alpha && alpha <= q.safety {
                    let t = (alpha - p.safety) / (q.safety - p.safety);
                    best = best.min(p.cost + t * (q.cost - p.cost));
                }
            }
        }
        best
    }

    #[test]
    fn deterministic_chain_rollouts_identical() {
        let k = TransitionKernel::from_rows(2, 1, vec![vec![(1, 1.0)], vec![(0, 1.0)]]).unwrap();
        let m = GriddedMdp::new(
            4,
            k,
            StageCost::Stationary(vec![1.0, 0.5]),
            vec![0.0; 2],
            vec![true; 2],
        )
        .unwrap();
        let pi = MarkovPolicy::constant(&m, 0).unwrap();
        let b = rollout_deterministic(&m, &pi, 0, 5, 1).unwrap();
        assert!(b
            .rollouts
            .iter()
            .all(|r| r.states == vec![0, 1, 0, 1, 0] && r.cost == 3.0));
        assert!(b.rollouts.iter().all(|r| r.tag == PolicyTag::Deterministic));
    }

    #[test]
    fn p_over_one_tags_everything_over() {
        let m = chain(3);
        let mixed = MixedPolicy::deterministic(MarkovPolicy::constant(&m, 0).unwrap());
        let b = rollout(&m, &mixed, 0, 200, 9).unwrap();
        assert!(b.rollouts.iter().all(|r| r.tag == PolicyTag::Over));
        assert!(b.rollouts.iter().all(|r| r.safe == r.final_flag));
    }

    #[test]
    fn chain_safety_matches_evaluation() {
        let m = chain(2);
        let pi = MarkovPolicy::constant(&m, 0).unwrap();
        let v = evaluate_policy_safety(&m, &pi).unwrap().get(0, 0, true);
        let stats =
            empirical_stats(&rollout_deterministic(&m, &pi, 0, 100_000, 4).unwrap()).unwrap();
        assert!(
            (stats.safety - v).abs() <= 3.0 * stats.std_error,
            "{stats:?} vs {v}"
        );
    }

    #[test]
    fn stats_edge_cases() {
        let m = chain(1);
        let pi = MarkovPolicy::constant(&m, 0).unwrap();
        let mut b = rollout_deterministic(&m, &pi, 1, 10, 0).unwrap();
        let s = empirical_stats(&b).unwrap();
        assert_eq!((s.safety, s.std_error, s.mean_cost), (0.0, 0.0, 2.0));
        b.rollouts.clear();
        assert!(matches!(empirical_stats(&b), Err(Error::EmptyBatch)));
    }

    #[test]
    fn batches_are_reproducible() {
        let m = chain(5);
        let pi = MarkovPolicy::constant(&m, 0).unwrap();
        let a = rollout_deterministic(&m, &pi, 0, 50, 77).unwrap();
        let b = rollout_deterministic(&m, &pi, 0, 50, 77).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a
            .to_csv()
            .starts_with("rollout_id,sampled_policy,safe,cost,trajectory\n0,deterministic,"));
    }

    #[test]
    fn enumeration_sizes() {
        let m = chain(2);
        assert_eq!(brute_force_performance_set(&m, 0).unwrap().len(), 1);
        let k = TransitionKernel::from_rows(1, 2, vec![vec![(0, 1.0)]; 2]).unwrap();
        let m = GriddedMdp::new(
            1,
            k,
            StageCost::Stationary(vec![1.0, 2.0]),
            vec![0.0],
            vec![true],
        )
        .unwrap();
        let set = brute_force_performance_set(&m, 0).unwrap();
        assert_eq!(
            set.iter().map(|p| p.cost).collect::<Vec<_>>(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn enumeration_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = RandomMdpParams {
            num_states: 8,
            num_actions: 3,
            horizon: 6,
            zero_fraction: 0.0,
            ..Default::default()
        };
        let m = random_mdp(&mut rng, params);
        assert!(matches!(
            brute_force_performance_set(&m, 0),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(lower_convex_envelope(&[pp(3.0, 0.9)], 0.5).unwrap(), 3.0);
        let two = [pp(0.0, 0.0), pp(1.0, 1.0)];
        assert!((lower_convex_envelope(&two, 0.4).unwrap() - 0.4).abs() < 1e-15);
        assert!(lower_convex_envelope(&[pp(1.0, 0.3)], 0.5).is_err());
    }

    #[test]
    fn envelope_matches_pairwise_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let n = rng.random_range(1..30);
            let pts: Vec<_> = (0..n)
                .map(|_| {
                    let v = if rng.random_bool(0.2) {
                        1.0
                    } else {
                        rng.random::<f64>()
                    };
                    pp(rng.random::<f64>() * 10.0, (v * 8.0).round() / 8.0)
                })
                .collect();
            let alpha = rng.random::<f64>();
            match lower_convex_envelope(&pts, alpha) {
                Ok(c) => assert!((c - pairwise(&pts, alpha)).abs() < 1e-12),
                Err(_) => assert!(pairwise(&pts, alpha).is_infinite()),
            }
        }
    }
}
