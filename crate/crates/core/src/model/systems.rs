//! The two benchmark systems: planar unicycle navigation and fishery management.

use std::f64::consts::PI;

use super::spec::{
    AxisBox, ContinuousSystemSpec, CostSpec, DynamicsKind, FisheryParams, Interval, KernelMethod,
    Moments, NoiseParams, SafeSetSpec,
};

/// Which unicycle scenario to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnicycleVariant {
    /// Start at (13, 13) with an obstacle between start and origin.
    A,
    /// Start at (19, 19) with the cheap region around the origin unsafe.
    B,
}

/// Mean next position `x + speed·[cos θ, sin θ]`.
pub fn unicycle_mean(x: &[f64], heading: f64, speed: f64) -> Vec<f64> {
    vec![x[0] + speed * heading.cos(), x[1] + speed * heading.sin()]
}

/// Default safe-set geometry of each unicycle scenario.
///
/// Variant A blocks the square `[0, 10]²` between start and origin; variant B
/// makes the square `[-16, 16]²` around the origin unsafe. Pass another
/// [`SafeSetSpec`] to change the layout.
pub fn unicycle_safe_set(variant: UnicycleVariant) -> SafeSetSpec {
    let b = |x0: f64, x1: f64, y0: f64, y1: f64| AxisBox::new(vec![x0, y0], vec![x1, y1]);
    let boxes = match variant {
        UnicycleVariant::A => vec![b(0.0, 10.0, 0.0, 10.0)],
        UnicycleVariant::B => vec![b(-16.0, 16.0, -16.0, 16.0)],
    };
    SafeSetSpec::Boxes {
        boxes,
        complement: true,
    }
}

/// Euler-discretized unicycle with speed 3, 50×50 cells and 8 headings.
pub fn build_unicycle(variant: UnicycleVariant) -> ContinuousSystemSpec {
    let x0 = match variant {
        UnicycleVariant::A => vec![13.0, 13.0],
        UnicycleVariant::B => vec![19.0, 19.0],
    };
    ContinuousSystemSpec {
        name: Some(
            match variant {
                UnicycleVariant::A => "unicycle-a",
                UnicycleVariant::B => "unicycle-b",
            }
            .to_string(),
        ),
        dimension: 2,
        bounds: vec![Interval::new(-25.0, 25.0); 2],
        cells_per_dim: vec![50, 50],
        actions: (0..8).map(|i| vec![i as f64 * PI / 4.0]).collect(),
        dynamics: DynamicsKind::Unicycle { speed: 3.0 },
        noise: NoiseParams::Gaussian {
            mean: vec![0.0, 0.0],
            variance: vec![5.0, 5.0],
        },
        safe_set: unicycle_safe_set(variant),
        kernel_method: KernelMethod::Analytic { prune_below: 1e-10 },
        horizon: 20,
        stage_cost: CostSpec::Quadratic,
        terminal_cost: CostSpec::Quadratic,
        initial_state: Some(x0),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Recruitment `R(x) = x (1 - x/L) sgm((x - μ)/σ²)`.
pub fn fishery_recruitment(x: f64, p: &FisheryParams) -> f64 {
    x * (1.0 - x / p.limit) * sigmoid((x - p.mu) / (p.sigma * p.sigma))
}

/// Catch `F(x, u) = max{δuC, δuC·x/L}` for catch variability `delta`.
pub fn fishery_catch(x: f64, effort: f64, delta: f64, p: &FisheryParams) -> f64 {
    let base = delta * effort * p.max_catch;
    base.max(base * x / p.limit)
}

pub const FISHERY_PARAMS: FisheryParams = FisheryParams {
    limit: 40.0,
    max_catch: 10.0,
    mu: 20.0,
    sigma: 5.0,
};

/// Fishery harvesting over 100 steps with the biomass kept at or above 13.
///
/// The 60 cells are centered on the integer biomass levels 1 to 60, and the
/// reservoir starts full at its biomass limit.
pub fn build_fishery() -> ContinuousSystemSpec {
    ContinuousSystemSpec {
        name: Some("fishery".to_string()),
        dimension: 1,
        bounds: vec![Interval::new(0.5, 60.5)],
        cells_per_dim: vec![60],
        actions: (0..6).map(|i| vec![i as f64 / 5.0]).collect(),
        dynamics: DynamicsKind::Fishery(FISHERY_PARAMS),
        noise: NoiseParams::Fishery {
            mortality: Moments {
                mean: 0.2,
                std_dev: 0.01,
            },
            recruitment: Moments {
                mean: 1.0,
                std_dev: 0.36,
            },
            catch: Moments {
                mean: 1.1,
                std_dev: 0.04,
            },
        },
        safe_set: SafeSetSpec::Intervals {
            intervals: vec![Interval::new(13.0, 60.5)],
        },
        kernel_method: KernelMethod::MonteCarlo {
            samples: 10_000,
            seed: 0,
        },
        horizon: 100,
        stage_cost: CostSpec::ExpectedCatch,
        terminal_cost: CostSpec::Zero,
        initial_state: Some(vec![FISHERY_PARAMS.limit]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unicycle_parameters() {
        let a = build_unicycle(UnicycleVariant::A);
        assert_eq!(a.horizon, 20);
        assert_eq!(a.stage_cost, CostSpec::Quadratic);
        assert_eq!(a.initial_state, Some(vec![13.0, 13.0]));
        assert_eq!(a.actions.len(), 8);
        assert_eq!(a.actions[2][0], PI / 2.0);
        let b = build_unicycle(UnicycleVariant::B);
        assert_eq!(b.initial_state, Some(vec![19.0, 19.0]));
    }

    #[test]
    fn unicycle_heading_zero_moves_east() {
        assert_eq!(unicycle_mean(&[0.0, 0.0], 0.0, 3.0), vec![3.0, 0.0]);
        let spec = build_unicycle(UnicycleVariant::A);
        assert_eq!(
            spec.gaussian_mean(&[0.0, 0.0], &[0.0]),
            Some(vec![3.0, 0.0])
        );
    }

    #[test]
    fn fishery_constants() {
        let p = FISHERY_PARAMS;
        assert_eq!(
            (p.limit, p.max_catch, p.mu, p.sigma),
            (40.0, 10.0, 20.0, 5.0)
        );
        assert_eq!(build_fishery().horizon, 100);
    }

    #[test]
    fn recruitment_closed_forms() {
        let p = FISHERY_PARAMS;
        assert_eq!(fishery_recruitment(20.0, &p), 5.0);
        assert_eq!(fishery_recruitment(0.0, &p), 0.0);
        assert_eq!(fishery_recruitment(40.0, &p), 0.0);
        let cases = [
            (10.0, 10.0 * 0.75 / (1.0 + 0.4f64.exp())),
            (30.0, 30.0 * 0.25 / (1.0 + (-0.4f64).exp())),
            (45.0, 45.0 * -0.125 / (1.0 + (-1.0f64).exp())),
            (13.0, 13.0 * (27.0 / 40.0) / (1.0 + 0.28f64.exp())),
        ];
        for (x, want) in cases {
            assert!((fishery_recruitment(x, &p) - want).abs() < 1e-12, "R({x})");
        }
    }

    #[test]
    fn catch_closed_forms() {
        let p = FISHERY_PARAMS;
        assert_eq!(fishery_catch(25.0, 0.0, 1.1, &p), 0.0);
        assert_eq!(fishery_catch(20.0, 1.0, 1.0, &p), 10.0);
        assert_eq!(fishery_catch(40.0, 0.5, 1.0, &p), 5.0);
        assert_eq!(fishery_catch(60.0, 1.0, 1.0, &p), 15.0);
        assert!((fishery_catch(50.0, 0.2, 1.1, &p) - 2.75).abs() < 1e-12);
        assert!((fishery_catch(13.0, 0.4, 1.2, &p) - 4.8).abs() < 1e-12);
    }
}
