use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

use super::spec::{ContinuousSystemSpec, CostSpec, KernelMethod, NoiseParams};
use super::{GridMeta, GriddedMdp, StageCost, TransitionKernel};

/// Grids a continuous system into a finite MDP.
///
/// Cells are uniform over the state box and represented by their centers.
/// Transition mass leaving the box is assigned to the nearest boundary cell.
/// Monte-Carlo kernels draw every `(state, action)` row from its own ChaCha
/// stream, so the result does not depend on the thread count.
pub fn build_mdp_from_spec(spec: &ContinuousSystemSpec) -> Result<GriddedMdp> {
    spec.validate()?;
    let lower: Vec<f64> = spec.bounds.iter().map(|b| b.lower).collect();
    let upper: Vec<f64> = spec.bounds.iter().map(|b| b.upper).collect();
    let grid = GridMeta::uniform(&lower, &upper, &spec.cells_per_dim);
    let num_states = grid.num_cells();
    let num_actions = spec.actions.len();
    let centers: Vec<Vec<f64>> = (0..num_states).map(|s| grid.center(s)).collect();

    let (rows, mean_catch) = match spec.kernel_method {
        KernelMethod::Analytic { prune_below } => {
            let rows = (0..num_states * num_actions)
                .into_par_iter()
                .map(|r| {
                    let (s, a) = (r / num_actions, r % num_actions);
                    analytic_row(spec, &grid, &centers[s], &spec.actions[a], prune_below)
                })
                .collect();
            (rows, None)
        }
        KernelMethod::MonteCarlo { samples, seed } => {
            let (rows, catches): (Vec<_>, Vec<_>) = (0..num_states * num_actions)
                .into_par_iter()
                .map(|r| {
                    let (s, a) = (r / num_actions, r % num_actions);
                    sampled_row(spec, &grid, &centers[s], &spec.actions[a], samples, seed, r)
                })
                .unzip();
            (rows, Some(catches))
        }
    };
    let kernel = TransitionKernel::from_rows(num_states, num_actions, rows)?;

    let quadratic = |s: usize| centers[s].iter().map(|v| v * v).sum::<f64>();
    let mut shift = None;
    let stage: Vec<f64> = match spec.stage_cost {
        CostSpec::Zero => vec![0.0; num_states * num_actions],
        CostSpec::Quadratic => (0..num_states * num_actions)
            .map(|r| quadratic(r / num_actions))
            .collect(),
        CostSpec::ExpectedCatch => {
            let catches = mean_catch.expect("validated: expected catch needs sampling");
            let k = catches.iter().copied().fold(0.0, f64::max);
            shift = Some(k);
            catches.iter().map(|c| k - c).collect()
        }
    };
    let terminal: Vec<f64> = match spec.terminal_cost {
        CostSpec::Quadratic => (0..num_states).map(quadratic).collect(),
        _ => vec![0.0; num_states],
    };
    let safe = centers.iter().map(|c| spec.safe_set.contains(c)).collect();

    let mdp = GriddedMdp::new(
        spec.horizon,
        kernel,
        StageCost::Stationary(stage),
        terminal,
        safe,
    )?
    .with_grid(grid)?;
    match shift {
        Some(k) => mdp.with_reward_shift(k),
        None => Ok(mdp),
    }
}

/// Standard normal upper tail `P(Z > z)`.
fn upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// `P(a < Z ≤ b)` for a standard normal, evaluated on the tail that avoids cancellation.
pub(crate) fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else {
        upper_tail(-b) - upper_tail(-a)
    }
}

/// Probability of each cell along one axis for `N(mean, var)`, with the
/// outermost cells absorbing the tails.
pub(crate) fn axis_masses(grid: &GridMeta, d: usize, mean: f64, var: f64) -> Vec<(usize, f64)> {
    let n = grid.cells_per_dim[d];
    if var == 0.0 {
        return vec![(grid.axis_index(d, mean), 1.0)];
    }
    let sd = var.sqrt();
    let edge = |i: usize| {
        if i == 0 {
            f64::NEG_INFINITY
        } else if i == n {
            f64::INFINITY
        } else {
            (grid.lower[d] + i as f64 * grid.widths[d] - mean) / sd
        }
    };
    (0..n)
        .map(|i| (i, normal_mass(edge(i), edge(i + 1))))
        .filter(|&(_, p)| p > 0.0)
        .collect()
}

fn analytic_row(
    spec: &ContinuousSystemSpec,
    grid: &GridMeta,
    center: &[f64],
    action: &[f64],
    prune_below: f64,
) -> Vec<(usize, f64)> {
    let mean = spec
        .gaussian_mean(center, action)
        .expect("validated: analytic kernels need gaussian dynamics");
    let variance = match &spec.noise {
        NoiseParams::Gaussian { variance, .. } => variance,
        NoiseParams::Fishery { .. } => unreachable!(),
    };
    let dims = grid.dimension();
    let axes: Vec<Vec<(usize, f64)>> = (0..dims)
        .map(|d| axis_masses(grid, d, mean[d], variance[d]))
        .collect();
    // bound on the product of the remaining axes, for pruning partial products
    let mut tail_max = vec![1.0; dims + 1];
    for d in (0..dims).rev() {
        let m = axes[d].iter().map(|e| e.1).fold(0.0, f64::max);
        tail_max[d] = tail_max[d + 1] * m;
    }
    let mut entries = vec![(0usize, 1.0f64)];
    let mut stride = 1;
    for d in 0..dims {
        let mut next = Vec::with_capacity(entries.len() * axes[d].len());
        for &(idx, p) in &entries {
            for &(i, q) in &axes[d] {
                let pq = p * q;
                if pq * tail_max[d + 1] < prune_below {
                    continue;
                }
                next.push((idx + i * stride, pq));
            }
        }
        entries = next;
        stride *= grid.cells_per_dim[d];
    }
    let total: f64 = entries.iter().map(|e| e.1).sum();
    for e in &mut entries {
        e.1 /= total;
    }
    entries
}

fn sampled_row(
    spec: &ContinuousSystemSpec,
    grid: &GridMeta,
    center: &[f64],
    action: &[f64],
    samples: usize,
    seed: u64,
    stream: usize,
) -> (Vec<(usize, f64)>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    let mut counts = vec![0u32; grid.num_cells()];
    let mut catch = 0.0;
    for _ in 0..samples {
        let step = spec.sample_step(center, action, &mut rng);
        counts[grid.cell_of(&step.next)] += 1;
        catch += step.catch;
    }
    let n = samples as f64;
    let row = counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(j, c)| (j, c as f64 / n))
        .collect();
    (row, catch / n)
}
