use crate::error::{Error, Result};

use super::ROW_SUM_TOL;

/// Sparse row-stochastic transition kernel `T(x' | x, u)`.
///
/// Rows are stored in compressed form, one row per `(state, action)` pair,
/// with next-state indices strictly ascending. Every expectation over a row
/// is accumulated in that ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    num_states: usize,
    num_actions: usize,
    offsets: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<f64>,
}

/// Borrowed view of one kernel row.
#[derive(Debug, Clone, Copy)]
pub struct KernelRow<'a> {
    pub next: &'a [u32],
    pub prob: &'a [f64],
}

impl<'a> KernelRow<'a> {
    /// `Σ_{x'} T(x'|x,u) · values[x']`, summed in ascending `x'`.
    #[inline]
    pub fn expect(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&j, &p) in self.next.iter().zip(self.prob) {
            acc += p * values[j as usize];
        }
        acc
    }

    /// Expectation of `f(x')`.
    #[inline]
    pub fn expect_with(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for (&j, &p) in self.next.iter().zip(self.prob) {
            acc += p * f(j as usize);
        }
        acc
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.next
            .iter()
            .map(|&j| j as usize)
            .zip(self.prob.iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.prob.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.next.len()
    }

    pub fn is_empty(&self) -> bool {
        self.next.is_empty()
    }
}

impl TransitionKernel {
    /// Builds a kernel from one `(next, prob)` list per `(state, action)` row,
    /// rows ordered `state * num_actions + action`. Entries are sorted, duplicate
    /// next-states merged and zero entries dropped.
    pub fn from_rows(
        num_states: usize,
        num_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if rows.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "{} kernel rows for {num_states} states x {num_actions} actions",
                rows.len()
            )));
        }
        if num_states > u32::MAX as usize {
            return Err(Error::InvalidModel("too many states".into()));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let start = next.len();
            for (j, p) in row {
                if j >= num_states {
                    return Err(Error::StateOutOfRange {
                        index: j,
                        num_states,
                    });
                }
                if p == 0.0 {
                    continue;
                }
                if next.len() > start && *next.last().unwrap() == j as u32 {
                    *prob.last_mut().unwrap() += p;
                } else {
                    next.push(j as u32);
                    prob.push(p);
                }
            }
            offsets.push(next.len());
        }
        let kernel = TransitionKernel {
            num_states,
            num_actions,
            offsets,
            next,
            prob,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    /// Builds a kernel from a dense table indexed `[(s * A + a) * S + s']`.
    pub fn from_dense(num_states: usize, num_actions: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != num_states * num_actions * num_states {
            return Err(Error::ShapeMismatch(format!(
                "dense kernel has {} entries, expected {}",
                dense.len(),
                num_states * num_actions * num_states
            )));
        }
        let rows = dense
            .chunks(num_states)
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        Self::from_rows(num_states, num_actions, rows)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.next.len()
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> KernelRow<'_> {
        let r = state * self.num_actions + action;
        let (lo, hi) = (self.offsets[r], self.offsets[r + 1]);
        KernelRow {
            next: &self.next[lo..hi],
            prob: &self.prob[lo..hi],
        }
    }

    /// Single entry `T(next | state, action)`.
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        let row = self.row(state, action);
        match row.next.binary_search(&(next as u32)) {
            Ok(i) => row.prob[i],
            Err(_) => 0.0,
        }
    }

    /// Dense copy indexed `[(s * A + a) * S + s']`.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states * self.num_actions * self.num_states];
        for r in 0..self.num_states * self.num_actions {
            for i in self.offsets[r]..self.offsets[r + 1] {
                out[r * self.num_states + self.next[i] as usize] = self.prob[i];
            }
        }
        out
    }

    /// Checks entry ranges and row sums.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if row.prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidModel(format!(
                        "kernel row ({s}, {a}) has an entry outside [0, 1]"
                    )));
                }
                let sum = row.sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidModel(format!(
                        "kernel row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_sorts_entries() {
        let k = TransitionKernel::from_rows(
            3,
            1,
            vec![
                vec![(2, 0.25), (0, 0.5), (2, 0.25)],
                vec![(1, 1.0)],
                vec![(0, 0.0), (2, 1.0)],
            ],
        )
        .unwrap();
        let row = k.row(0, 0);
        assert_eq!(row.next, &[0, 2]);
        assert_eq!(row.prob, &[0.5, 0.5]);
        assert_eq!(k.row(2, 0).len(), 1);
        assert_eq!(k.prob(0, 0, 1), 0.0);
        assert_eq!(k.prob(0, 0, 2), 0.5);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TransitionKernel::from_rows(2, 1, vec![vec![(0, 0.5)], vec![(1, 1.0)]]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let err = TransitionKernel::from_rows(1, 1, vec![vec![(3, 1.0)]]);
        assert!(matches!(err, Err(Error::StateOutOfRange { .. })));
    }

    #[test]
    fn dense_round_trip() {
        let dense = vec![0.7, 0.3, 0.0, 1.0];
        let k = TransitionKernel::from_dense(2, 1, &dense).unwrap();
        assert_eq!(k.to_dense(), dense);
        assert_eq!(k.row(0, 0).expect(&[1.0, 2.0]), 0.7 + 0.6);
    }
}
