//! Binary-state augmentation.
//!
//! The augmented state `(x, b)` carries a flag `b` that is one exactly when
//! every state visited so far lies in the safe set: `b_0 = 1_A(x_0)` and
//! `b_{k+1} = 1_A(x_{k+1}) · b_k`. With it, the probability of a safe
//! trajectory becomes the expectation of the terminal flag `b_N`, which is
//! Markov in the augmented state.
//!
//! The augmented kernel is never materialized. From `b = 0` it is the base
//! kernel with the flag held at zero; from `b = 1` the flag follows the
//! safety of the successor.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::GriddedMdp;

/// Augmented state `(state, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AugState {
    pub state: usize,
    /// The flag `b`: the trajectory has stayed in the safe set so far.
    pub safe: bool,
}

impl AugState {
    pub fn new(state: usize, safe: bool) -> Self {
        AugState { state, safe }
    }

    pub fn flag(&self) -> usize {
        self.safe as usize
    }
}

/// Lazy view of a [`GriddedMdp`] lifted to `X × {0, 1}`.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedMdp<'a> {
    base: &'a GriddedMdp,
}

pub fn augment(base: &GriddedMdp) -> AugmentedMdp<'_> {
    AugmentedMdp { base }
}

/// `(x0, 1_A(x0))`.
pub fn initial_aug_state(base: &GriddedMdp, x0: usize) -> Result<AugState> {
    base.check_state(x0)?;
    Ok(AugState::new(x0, base.is_safe(x0)))
}

impl<'a> AugmentedMdp<'a> {
    pub fn base(&self) -> &'a GriddedMdp {
        self.base
    }

    pub fn num_aug_states(&self) -> usize {
        2 * self.base.num_states()
    }

    /// Flat index `b * num_states + state`.
    pub fn index(&self, s: AugState) -> usize {
        s.flag() * self.base.num_states() + s.state
    }

    pub fn initial_state(&self, x0: usize) -> Result<AugState> {
        initial_aug_state(self.base, x0)
    }

    /// Successors of `from` under `action` with their probabilities.
    pub fn transitions(
        &self,
        from: AugState,
        action: usize,
    ) -> impl Iterator<Item = (AugState, f64)> + 'a {
        let base = self.base;
        base.kernel()
            .row(from.state, action)
            .iter()
            .map(move |(j, p)| (AugState::new(j, from.safe && base.is_safe(j)), p))
    }

    /// `T̃((x', b') | (x, b), u)`.
    pub fn prob(&self, from: AugState, action: usize, to: AugState) -> f64 {
        let t = self.base.kernel().prob(from.state, action, to.state);
        let consistent = if from.safe {
            to.safe == self.base.is_safe(to.state)
        } else {
            !to.safe
        };
        if consistent {
            t
        } else {
            0.0
        }
    }
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
            StageCost::Stationary(vec![0.0; 2]),
            vec![0.0; 2],
            safe,
        )
        .unwrap()
    }

    #[test]
    fn two_state_chain_split() {
        let m = chain(vec![true, false]);
        let aug = augment(&m);
        let out: Vec<_> = aug.transitions(AugState::new(0, true), 0).collect();
        assert_eq!(
            out,
            vec![
                (AugState::new(0, true), 0.7),
                (AugState::new(1, false), 0.3)
            ]
        );
        assert_eq!(
            aug.prob(AugState::new(0, true), 0, AugState::new(1, true)),
            0.0
        );
    }

    #[test]
    fn all_safe_keeps_flag() {
        let m = chain(vec![true, true]);
        let aug = augment(&m);
        assert!(aug
            .transitions(AugState::new(0, true), 0)
            .all(|(s, _)| s.safe));
    }

    #[test]
    fn no_safe_states_drop_flag() {
        let m = chain(vec![false, false]);
        let aug = augment(&m);
        assert!(aug
            .transitions(AugState::new(0, true), 0)
            .all(|(s, _)| !s.safe));
    }

    #[test]
    fn initial_state_flag() {
        let m = chain(vec![true, false]);
        assert_eq!(initial_aug_state(&m, 0).unwrap(), AugState::new(0, true));
        assert_eq!(initial_aug_state(&m, 1).unwrap(), AugState::new(1, false));
        assert!(initial_aug_state(&m, 2).is_err());
    }

    #[test]
    fn augmented_rows_are_stochastic_and_absorbing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m = random_mdp(&mut rng, RandomMdpParams::default());
            let aug = augment(&m);
            for x in 0..m.num_states() {
                for b in [false, true] {
                    for a in 0..m.num_actions() {
                        let from = AugState::new(x, b);
                        let mut total = 0.0;
                        for y in 0..m.num_states() {
                            for c in [false, true] {
                                let p = aug.prob(from, a, AugState::new(y, c));
                                if !b {
                                    assert!(!(c && p > 0.0), "flag revived");
                                }
                                if b && p > 0.0 {
                                    assert_eq!(c, m.is_safe(y));
                                }
                                total += p;
                            }
                        }
                        assert!((total - 1.0).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
