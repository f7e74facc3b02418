use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::systems::{fishery_catch, fishery_recruitment};

/// Closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        AxisBox { lower, upper }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| lo <= v && v <= hi)
    }
}

/// Geometric description of the safe set, evaluated at cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SafeSetSpec {
    Everything,
    /// Product of one interval per dimension.
    Intervals {
        intervals: Vec<Interval>,
    },
    /// Union of boxes, or its complement when `complement` is set.
    Boxes {
        boxes: Vec<AxisBox>,
        #[serde(default)]
        complement: bool,
    },
}

impl SafeSetSpec {
    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            SafeSetSpec::Everything => true,
            SafeSetSpec::Intervals { intervals } => {
                intervals.iter().zip(p).all(|(iv, &v)| iv.contains(v))
            }
            SafeSetSpec::Boxes { boxes, complement } => {
                boxes.iter().any(|b| b.contains(p)) != *complement
            }
        }
    }
}

/// Fishery model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisheryParams {
    /// Biomass limit of the reservoir `L`.
    pub limit: f64,
    /// Maximum catch `C`.
    pub max_catch: f64,
    /// Recruitment sigmoid midpoint `μ`.
    pub mu: f64,
    /// Recruitment sigmoid scale; the sigmoid argument is `(x - μ) / σ²`.
    pub sigma: f64,
}

/// Built-in dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicsKind {
    /// `x' = x + speed·[cos u, sin u] + w`.
    Unicycle { speed: f64 },
    /// `x' = (1 - v)x + γR(x) - F(x, u)`, floored at zero biomass.
    Fishery(FisheryParams),
    /// `x' = x + u + w` with the action a displacement vector.
    AdditiveGaussian,
}

/// Mean and standard deviation of a scalar normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseParams {
    /// Additive normal noise with diagonal covariance.
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    /// Mortality `v`, recruitment variability `γ` and catch variability `δ`
    /// (the latter redrawn until positive).
    Fishery {
        mortality: Moments,
        recruitment: Moments,
        catch: Moments,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    Zero,
    /// `xᵀx` at the cell center.
    Quadratic,
    /// `K - E[catch(x, u)]` with `K` the largest expected catch on the grid.
    ExpectedCatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelMethod {
    /// Per-dimension normal mass over cells. Joint entries below `prune_below`
    /// are dropped and the row renormalized.
    Analytic {
        #[serde(default)]
        prune_below: f64,
    },
    /// Empirical cell frequencies from `samples` draws per `(state, action)`.
    MonteCarlo { samples: usize, seed: u64 },
}

/// A continuous stochastic system together with its gridding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    pub bounds: Vec<Interval>,
    pub cells_per_dim: Vec<usize>,
    /// Discretized input set; each action is a vector (length 1 for scalar inputs).
    pub actions: Vec<Vec<f64>>,
    pub dynamics: DynamicsKind,
    pub noise: NoiseParams,
    pub safe_set: SafeSetSpec,
    pub kernel_method: KernelMethod,
    pub horizon: usize,
    pub stage_cost: CostSpec,
    pub terminal_cost: CostSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
}

/// One sampled transition of a continuous system.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next: Vec<f64>,
    /// Realized catch; zero for systems without a harvest.
    pub catch: f64,
}

fn normal(m: Moments) -> Normal<f64> {
    Normal::new(m.mean, m.std_dev).expect("validated std_dev")
}

impl ContinuousSystemSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::spec("dimension", "must be at least 1"));
        }
        if self.bounds.len() != d {
            return Err(Error::spec("bounds", format!("need {d} intervals")));
        }
        if let Some(i) = self
            .bounds
            .iter()
            .position(|b| !(b.lower.is_finite() && b.upper.is_finite() && b.lower < b.upper))
        {
            return Err(Error::spec(
                "bounds",
                format!("dimension {i}: lower must be < upper"),
            ));
        }
        if self.cells_per_dim.len() != d || self.cells_per_dim.contains(&0) {
            return Err(Error::spec(
                "cells_per_dim",
                format!("need {d} entries, each at least 1"),
            ));
        }
        if self.actions.is_empty() {
            return Err(Error::spec("actions", "must be non-empty"));
        }
        let action_dim = match self.dynamics {
            DynamicsKind::Unicycle { speed } => {
                if d != 2 {
                    return Err(Error::spec("dimension", "unicycle dynamics are planar"));
                }
                if !speed.is_finite() {
                    return Err(Error::spec("dynamics.speed", "must be finite"));
                }
                1
            }
            DynamicsKind::Fishery(p) => {
                if d != 1 {
                    return Err(Error::spec("dimension", "fishery dynamics are scalar"));
                }
                if !(p.limit > 0.0 && p.sigma > 0.0 && p.max_catch >= 0.0) {
                    return Err(Error::spec(
                        "dynamics",
                        "fishery needs limit > 0, sigma > 0 and max_catch >= 0",
                    ));
                }
                1
            }
            DynamicsKind::AdditiveGaussian => d,
        };
        if let Some(i) = self
            .actions
            .iter()
            .position(|a| a.len() != action_dim || a.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::spec(
                "actions",
                format!("action {i} must be {action_dim} finite values"),
            ));
        }
        match (&self.dynamics, &self.noise) {
            (
                DynamicsKind::Fishery(_),
                NoiseParams::Fishery {
                    mortality,
                    recruitment,
                    catch,
                },
            ) => {
                for (name, m) in [
                    ("mortality", mortality),
                    ("recruitment", recruitment),
                    ("catch", catch),
                ] {
                    if !(m.mean.is_finite() && m.std_dev.is_finite() && m.std_dev >= 0.0) {
                        return Err(Error::spec(format!("noise.{name}"), "bad moments"));
                    }
                }
                if catch.std_dev == 0.0 && catch.mean <= 0.0 {
                    return Err(Error::spec(
                        "noise.catch",
                        "catch variability can never be positive",
                    ));
                }
            }
            (DynamicsKind::Fishery(_), _) => {
                return Err(Error::spec("noise", "fishery dynamics need fishery noise"))
            }
            (_, NoiseParams::Gaussian { mean, variance }) => {
                if mean.len() != d || variance.len() != d {
                    return Err(Error::spec(
                        "noise",
                        format!("need {d} means and variances"),
                    ));
                }
                if variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::spec("noise.variance", "must be finite and >= 0"));
                }
            }
            (_, NoiseParams::Fishery { .. }) => {
                return Err(Error::spec("noise", "fishery noise needs fishery dynamics"))
            }
        }
        match &self.safe_set {
            SafeSetSpec::Everything => {}
            SafeSetSpec::Intervals { intervals } if intervals.len() != d => {
                return Err(Error::spec("safe_set", format!("need {d} intervals")))
            }
            SafeSetSpec::Boxes { boxes, .. }
                if boxes
                    .iter()
                    .any(|b| b.lower.len() != d || b.upper.len() != d) =>
            {
                return Err(Error::spec(
                    "safe_set",
                    format!("boxes must be {d}-dimensional"),
                ))
            }
            _ => {}
        }
        match self.kernel_method {
            KernelMethod::MonteCarlo { samples, .. } if samples == 0 => {
                return Err(Error::spec("kernel_method.samples", "must be at least 1"))
            }
            KernelMethod::Analytic { prune_below } => {
                if !(0.0..1e-3).contains(&prune_below) {
                    return Err(Error::spec(
                        "kernel_method.prune_below",
                        "must be in [0, 1e-3)",
                    ));
                }
                if self
                    .gaussian_mean(&vec![0.0; d], &self.actions[0])
                    .is_none()
                {
                    return Err(Error::spec(
                        "kernel_method",
                        "analytic kernels need additive Gaussian dynamics",
                    ));
                }
            }
            _ => {}
        }
        if self.horizon == 0 {
            return Err(Error::spec("horizon", "must be at least 1"));
        }
        if self.stage_cost == CostSpec::ExpectedCatch
            && !matches!(
                (&self.dynamics, &self.kernel_method),
                (DynamicsKind::Fishery(_), KernelMethod::MonteCarlo { .. })
            )
        {
            return Err(Error::spec(
                "stage_cost",
                "expected catch needs fishery dynamics and a monte-carlo kernel",
            ));
        }
        if self.terminal_cost == CostSpec::ExpectedCatch {
            return Err(Error::spec(
                "terminal_cost",
                "expected catch is a stage cost",
            ));
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != d {
                return Err(Error::spec(
                    "initial_state",
                    format!("need {d} coordinates"),
                ));
            }
        }
        Ok(())
    }

    /// Mean of the next state for additive-Gaussian systems, `None` otherwise.
    pub fn gaussian_mean(&self, x: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        let offset = match &self.noise {
            NoiseParams::Gaussian { mean, .. } => mean,
            NoiseParams::Fishery { .. } => return None,
        };
        let drift = match self.dynamics {
            DynamicsKind::Unicycle { speed } => super::systems::unicycle_mean(x, u[0], speed),
            DynamicsKind::AdditiveGaussian => x.iter().zip(u).map(|(a, b)| a + b).collect(),
            DynamicsKind::Fishery(_) => return None,
        };
        Some(drift.iter().zip(offset).map(|(a, b)| a + b).collect())
    }

    /// Draws one transition from `x` under input `u`.
    pub fn sample_step<R: Rng + ?Sized>(&self, x: &[f64], u: &[f64], rng: &mut R) -> Step {
        match (&self.dynamics, &self.noise) {
            (
                DynamicsKind::Fishery(p),
                NoiseParams::Fishery {
                    mortality,
                    recruitment,
                    catch,
                },
            ) => {
                let v = normal(*mortality).sample(rng);
                let gamma = normal(*recruitment).sample(rng);
                let catch_dist = normal(*catch);
                let delta = loop {
                    let d = catch_dist.sample(rng);
                    if d > 0.0 {
                        break d;
                    }
                };
                let x = x[0];
                let available = ((1.0 - v) * x + gamma * fishery_recruitment(x, p)).max(0.0);
                let caught = fishery_catch(x, u[0], delta, p).min(available);
                Step {
                    next: vec![available - caught],
                    catch: caught,
                }
            }
            (_, NoiseParams::Gaussian { variance, .. }) => {
                let mut next = self
                    .gaussian_mean(x, u)
                    .expect("additive dynamics with gaussian noise");
                for (xi, var) in next.iter_mut().zip(variance) {
                    if *var > 0.0 {
                        *xi += Normal::new(0.0, var.sqrt()).expect("finite").sample(rng);
                    }
                }
                Step { next, catch: 0.0 }
            }
            _ => unreachable!("validated spec pairs dynamics with matching noise"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fishery, build_unicycle, UnicycleVariant};

    #[test]
    fn builtins_validate() {
        build_unicycle(UnicycleVariant::A).validate().unwrap();
        build_unicycle(UnicycleVariant::B).validate().unwrap();
        build_fishery().validate().unwrap();
    }

    #[test]
    fn validation_names_the_field() {
        let mut s = build_unicycle(UnicycleVariant::A);
        s.bounds[1] = Interval::new(3.0, 3.0);
        match s.validate() {
            Err(Error::InvalidSpec { field, .. }) => assert_eq!(field, "bounds"),
            other => panic!("{other:?}"),
        }
        let mut s = build_fishery();
        s.kernel_method = KernelMethod::MonteCarlo {
            samples: 0,
            seed: 0,
        };
        match s.validate() {
            Err(Error::InvalidSpec { field, .. }) => assert_eq!(field, "kernel_method.samples"),
            other => panic!("{other:?}"),
        }
        let mut s = build_fishery();
        s.actions.clear();
        assert!(s.validate().is_err());
        let mut s = build_fishery();
        s.kernel_method = KernelMethod::Analytic { prune_below: 0.0 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn safe_set_geometry() {
        let ring = SafeSetSpec::Boxes {
            boxes: vec![AxisBox::new(vec![-1.0, -1.0], vec![1.0, 1.0])],
            complement: true,
        };
        assert!(!ring.contains(&[0.0, 0.5]));
        assert!(ring.contains(&[2.0, 0.0]));
        let band = SafeSetSpec::Intervals {
            intervals: vec![Interval::new(13.0, 60.0)],
        };
        assert!(band.contains(&[13.0]));
        assert!(!band.contains(&[12.9]));
    }

    #[test]
    fn spec_json_round_trip() {
        let s = build_unicycle(UnicycleVariant::B);
        let text = serde_json::to_string(&s).unwrap();
        let back: ContinuousSystemSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
