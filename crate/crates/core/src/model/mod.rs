//! Finite MDP data model and its construction from continuous stochastic systems.
//!
//! A [`GriddedMdp`] holds a time-invariant transition kernel over a finite
//! set of cells, stage and terminal costs, the safe-set mask and the horizon.
//! Models are either built by hand ([`GriddedMdp::new`]), drawn at random for
//! testing ([`random_mdp`]), read from a model file ([`io`]) or produced by
//! gridding a [`ContinuousSystemSpec`] ([`build_mdp_from_spec`]).

mod build;
pub mod io;
mod kernel;
mod spec;
mod systems;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::build_mdp_from_spec;
pub use kernel::{KernelRow, TransitionKernel};
pub use spec::{
    AxisBox, ContinuousSystemSpec, CostSpec, DynamicsKind, FisheryParams, Interval, KernelMethod,
    Moments, NoiseParams, SafeSetSpec, Step,
};
pub use systems::{
    build_fishery, build_unicycle, fishery_catch, fishery_recruitment, sigmoid, unicycle_mean,
    unicycle_safe_set, UnicycleVariant,
};

/// Tolerance on kernel row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Stage cost table `ℓ_k(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StageCost {
    /// One table, indexed `[state * num_actions + action]`, used at every step.
    Stationary(Vec<f64>),
    /// Indexed `[(k * num_states + state) * num_actions + action]`.
    TimeVarying(Vec<f64>),
}

impl StageCost {
    fn values(&self) -> &[f64] {
        match self {
            StageCost::Stationary(v) | StageCost::TimeVarying(v) => v,
        }
    }

    pub fn is_time_varying(&self) -> bool {
        matches!(self, StageCost::TimeVarying(_))
    }
}

/// Cell layout of a gridded model.
///
/// States are numbered with dimension 0 varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells_per_dim: Vec<usize>,
    /// Cell-center coordinates, one vector per dimension.
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
}

impl GridMeta {
    pub fn uniform(lower: &[f64], upper: &[f64], cells_per_dim: &[usize]) -> Self {
        let widths: Vec<f64> = (0..lower.len())
            .map(|d| (upper[d] - lower[d]) / cells_per_dim[d] as f64)
            .collect();
        let centers = (0..lower.len())
            .map(|d| {
                (0..cells_per_dim[d])
                    .map(|i| lower[d] + (i as f64 + 0.5) * widths[d])
                    .collect()
            })
            .collect();
        GridMeta {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            cells_per_dim: cells_per_dim.to_vec(),
            centers,
            widths,
        }
    }

    pub fn dimension(&self) -> usize {
        self.cells_per_dim.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    /// Index of the cell containing coordinate `v` along dimension `d`;
    /// points outside the box land in the nearest boundary cell.
    pub fn axis_index(&self, d: usize, v: f64) -> usize {
        let n = self.cells_per_dim[d];
        let t = ((v - self.lower[d]) / self.widths[d]).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else if t >= n as f64 {
            n - 1
        } else {
            t as usize
        }
    }

    /// Cell containing `point`, clamped to the grid.
    pub fn cell_of(&self, point: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (d, &v) in point.iter().enumerate() {
            idx += self.axis_index(d, v) * stride;
            stride *= self.cells_per_dim[d];
        }
        idx
    }

    /// Per-dimension cell indices of `state`.
    pub fn unravel(&self, mut state: usize) -> Vec<usize> {
        self.cells_per_dim
            .iter()
            .map(|&n| {
                let i = state % n;
                state /= n;
                i
            })
            .collect()
    }

    pub fn center(&self, state: usize) -> Vec<f64> {
        self.unravel(state)
            .into_iter()
            .enumerate()
            .map(|(d, i)| self.centers[d][i])
            .collect()
    }
}

/// A finite-state, finite-action, finite-horizon MDP with a safe set.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    kernel: TransitionKernel,
    stage_cost: StageCost,
    terminal_cost: Vec<f64>,
    safe_mask: Vec<bool>,
    grid: Option<GridMeta>,
    reward_shift: Option<f64>,
}

impl GriddedMdp {
    /// Validates and assembles a model.
    pub fn new(
        horizon: usize,
        kernel: TransitionKernel,
        stage_cost: StageCost,
        terminal_cost: Vec<f64>,
        safe_mask: Vec<bool>,
    ) -> Result<Self> {
        let num_states = kernel.num_states();
        let num_actions = kernel.num_actions();
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be at least 1".into()));
        }
        kernel.validate()?;
        let expected = match &stage_cost {
            StageCost::Stationary(_) => num_states * num_actions,
            StageCost::TimeVarying(_) => horizon * num_states * num_actions,
        };
        if stage_cost.values().len() != expected {
            return Err(Error::InvalidModel(format!(
                "stage cost has {} entries, expected {expected}",
                stage_cost.values().len()
            )));
        }
        if terminal_cost.len() != num_states || safe_mask.len() != num_states {
            return Err(Error::InvalidModel(
                "terminal cost and safe mask need one entry per state".into(),
            ));
        }
        if let Some(bad) = stage_cost
            .values()
            .iter()
            .chain(&terminal_cost)
            .find(|c| !(c.is_finite() && **c >= 0.0))
        {
            return Err(Error::InvalidModel(format!(
                "costs must be finite and non-negative, found {bad}"
            )));
        }
        Ok(GriddedMdp {
            num_states,
            num_actions,
            horizon,
            kernel,
            stage_cost,
            terminal_cost,
            safe_mask,
            grid: None,
            reward_shift: None,
        })
    }

    pub fn with_grid(mut self, grid: GridMeta) -> Result<Self> {
        if grid.num_cells() != self.num_states {
            return Err(Error::InvalidModel(format!(
                "grid has {} cells but model has {} states",
                grid.num_cells(),
                self.num_states
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    /// Records that stage costs are `shift - reward`, so rewards can be recovered
    /// from costs. Requires a zero terminal cost.
    pub fn with_reward_shift(mut self, shift: f64) -> Result<Self> {
        if self.terminal_cost.iter().any(|&c| c != 0.0) {
            return Err(Error::InvalidModel(
                "a reward shift needs a zero terminal cost".into(),
            ));
        }
        self.reward_shift = Some(shift);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }

    pub fn stage_cost_table(&self) -> &StageCost {
        &self.stage_cost
    }

    #[inline]
    pub fn stage_cost(&self, k: usize, state: usize, action: usize) -> f64 {
        match &self.stage_cost {
            StageCost::Stationary(v) => v[state * self.num_actions + action],
            StageCost::TimeVarying(v) => {
                v[(k * self.num_states + state) * self.num_actions + action]
            }
        }
    }

    #[inline]
    pub fn terminal_cost(&self, state: usize) -> f64 {
        self.terminal_cost[state]
    }

    pub fn terminal_costs(&self) -> &[f64] {
        &self.terminal_cost
    }

    #[inline]
    pub fn is_safe(&self, state: usize) -> bool {
        self.safe_mask[state]
    }

    pub fn safe_mask(&self) -> &[bool] {
        &self.safe_mask
    }

    pub fn grid(&self) -> Option<&GridMeta> {
        self.grid.as_ref()
    }

    pub fn reward_shift(&self) -> Option<f64> {
        self.reward_shift
    }

    /// Total reward `Σ_k (shift - ℓ_k)` corresponding to an expected cost.
    pub fn reward_from_cost(&self, cost: f64) -> Option<f64> {
        self.reward_shift.map(|k| k * self.horizon as f64 - cost)
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                index: state,
                num_states: self.num_states,
            })
        }
    }
}

/// Shape parameters for [`random_mdp`].
#[derive(Debug, Clone, Copy)]
pub struct RandomMdpParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Probability that a kernel entry is forced to zero.
    pub zero_fraction: f64,
    /// Probability that a state is safe.
    pub safe_fraction: f64,
    pub max_cost: f64,
}

impl Default for RandomMdpParams {
    fn default() -> Self {
        RandomMdpParams {
            num_states: 3,
            num_actions: 2,
            horizon: 2,
            zero_fraction: 0.3,
            safe_fraction: 0.7,
            max_cost: 10.0,
        }
    }
}

/// Draws a random valid model. Used by the property and acceptance tests.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, params: RandomMdpParams) -> GriddedMdp {
    let RandomMdpParams {
        num_states: s,
        num_actions: a,
        horizon,
        ..
    } = params;
    let mut rows = Vec::with_capacity(s * a);
    for _ in 0..s * a {
        let mut w: Vec<f64> = (0..s)
            .map(|_| {
                if rng.random::<f64>() < params.zero_fraction {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        if w.iter().all(|&x| x == 0.0) {
            w[rng.random_range(0..s)] = 1.0;
        }
        let total: f64 = w.iter().sum();
        rows.push(
            w.into_iter()
                .enumerate()
                .filter(|(_, p)| *p > 0.0)
                .map(|(j, p)| (j, p / total))
                .collect(),
        );
    }
    let kernel = TransitionKernel::from_rows(s, a, rows).expect("random rows are stochastic");
    let stage = (0..s * a)
        .map(|_| rng.random::<f64>() * params.max_cost)
        .collect();
    let terminal = (0..s)
        .map(|_| rng.random::<f64>() * params.max_cost)
        .collect();
    let safe = (0..s)
        .map(|_| rng.random::<f64>() < params.safe_fraction)
        .collect();
    GriddedMdp::new(
        horizon,
        kernel,
        StageCost::Stationary(stage),
        terminal,
        safe,
    )
    .expect("random model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_state() -> TransitionKernel {
        TransitionKernel::from_rows(1, 1, vec![vec![(0, 1.0)]]).unwrap()
    }

    #[test]
    fn rejects_zero_horizon() {
        let err = GriddedMdp::new(
            0,
            one_state(),
            StageCost::Stationary(vec![0.0]),
            vec![0.0],
            vec![true],
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_negative_cost() {
        let err = GriddedMdp::new(
            1,
            one_state(),
            StageCost::Stationary(vec![-1.0]),
            vec![0.0],
            vec![true],
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn time_varying_costs_are_indexed_by_step() {
        let k = TransitionKernel::from_rows(1, 2, vec![vec![(0, 1.0)], vec![(0, 1.0)]]).unwrap();
        let m = GriddedMdp::new(
            2,
            k,
            StageCost::TimeVarying(vec![1.0, 2.0, 3.0, 4.0]),
            vec![0.0],
            vec![true],
        )
        .unwrap();
        assert_eq!(m.stage_cost(0, 0, 1), 2.0);
        assert_eq!(m.stage_cost(1, 0, 0), 3.0);
    }

    #[test]
    fn grid_cells_and_centers() {
        let g = GridMeta::uniform(&[-25.0, -25.0], &[25.0, 25.0], &[50, 50]);
        assert_eq!(g.num_cells(), 2500);
        assert_eq!(g.centers[0][0], -24.5);
        let s = g.cell_of(&[13.2, -0.1]);
        assert_eq!(g.unravel(s), vec![38, 24]);
        assert_eq!(g.center(s), vec![13.5, -0.5]);
        // clamping to the boundary cells
        assert_eq!(g.cell_of(&[100.0, -100.0]), 49);
        assert_eq!(g.axis_index(0, 25.0), 49);
    }

    #[test]
    fn random_models_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_mdp(&mut rng, RandomMdpParams::default());
            for s in 0..m.num_states() {
                for a in 0..m.num_actions() {
                    assert!((m.kernel().row(s, a).sum() - 1.0).abs() < ROW_SUM_TOL);
                }
            }
        }
    }
}
