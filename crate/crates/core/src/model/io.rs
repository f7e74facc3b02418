//! JSON model files.
//!
//! ```json
//! { "num_states": 2, "num_actions": 1, "horizon": 3,
//!   "kernel": { "format": "sparse", "entries": [[0, 0, 0, 0.7], [0, 0, 1, 0.3], [1, 0, 1, 1.0]] },
//!   "stage_cost": { "layout": "stationary", "values": [[1.0], [2.0]] },
//!   "terminal_cost": [0.0, 0.0], "safe_mask": [true, false] }
//! ```
//!
//! The kernel may instead be `{"format": "dense", "data": [[[p(s'|s,a) ...] ...] ...]}`
//! indexed `[s][a][s']`. Time-varying costs use `"layout": "time_varying"` with
//! values indexed `[k][s][a]`. `grid_meta` and `reward_shift` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::to_json_vec;
use crate::util::write_atomic;

use super::{GridMeta, GriddedMdp, StageCost, TransitionKernel};

/// Kernel encoding used when writing a model file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelLayout {
    Dense,
    #[default]
    Sparse,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
enum KernelFile {
    Dense {
        data: Vec<Vec<Vec<f64>>>,
    },
    Sparse {
        entries: Vec<(usize, usize, usize, f64)>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
enum StageCostFile {
    Stationary { values: Vec<Vec<f64>> },
    TimeVarying { values: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    kernel: KernelFile,
    stage_cost: StageCostFile,
    terminal_cost: Vec<f64>,
    safe_mask: Vec<bool>,
    #[serde(default)]
    grid_meta: Option<GridMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward_shift: Option<f64>,
}

fn chunked(values: &[f64], width: usize) -> Vec<Vec<f64>> {
    values.chunks(width).map(<[f64]>::to_vec).collect()
}

pub fn to_json_bytes(mdp: &GriddedMdp, layout: KernelLayout) -> Result<Vec<u8>> {
    let (s, a) = (mdp.num_states(), mdp.num_actions());
    let kernel = match layout {
        KernelLayout::Dense => KernelFile::Dense {
            data: mdp
                .kernel()
                .to_dense()
                .chunks(a * s)
                .map(|per_state| chunked(per_state, s))
                .collect(),
        },
        KernelLayout::Sparse => {
            let mut entries = Vec::with_capacity(mdp.kernel().nnz());
            for x in 0..s {
                for u in 0..a {
                    entries.extend(mdp.kernel().row(x, u).iter().map(|(j, p)| (x, u, j, p)));
                }
            }
            KernelFile::Sparse { entries }
        }
    };
    let stage_cost = match mdp.stage_cost_table() {
        StageCost::Stationary(v) => StageCostFile::Stationary {
            values: chunked(v, a),
        },
        StageCost::TimeVarying(v) => StageCostFile::TimeVarying {
            values: v.chunks(s * a).map(|per_k| chunked(per_k, a)).collect(),
        },
    };
    let file = ModelFile {
        num_states: s,
        num_actions: a,
        horizon: mdp.horizon(),
        kernel,
        stage_cost,
        terminal_cost: mdp.terminal_costs().to_vec(),
        safe_mask: mdp.safe_mask().to_vec(),
        grid_meta: mdp.grid().cloned(),
        reward_shift: mdp.reward_shift(),
    };
    Ok(to_json_vec(&file)?)
}

fn flatten_checked(rows: Vec<Vec<f64>>, width: usize, what: &str) -> Result<Vec<f64>> {
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::ShapeMismatch(format!(
            "{what}: every row needs {width} entries"
        )));
    }
    Ok(rows.into_iter().flatten().collect())
}

pub fn from_json_slice(bytes: &[u8]) -> Result<GriddedMdp> {
    let file: ModelFile = serde_json::from_slice(bytes)?;
    let (s, a) = (file.num_states, file.num_actions);
    let kernel = match file.kernel {
        KernelFile::Dense { data } => {
            if data.len() != s {
                return Err(Error::ShapeMismatch(format!(
                    "dense kernel needs {s} states"
                )));
            }
            let mut flat = Vec::with_capacity(s * a * s);
            for per_state in data {
                flat.extend(flatten_checked(per_state, s, "dense kernel")?);
            }
            TransitionKernel::from_dense(s, a, &flat)?
        }
        KernelFile::Sparse { entries } => {
            let mut rows = vec![Vec::new(); s * a];
            for (x, u, j, p) in entries {
                if x >= s || u >= a {
                    return Err(Error::ShapeMismatch(format!(
                        "kernel entry ({x}, {u}) outside {s} states x {a} actions"
                    )));
                }
                rows[x * a + u].push((j, p));
            }
            TransitionKernel::from_rows(s, a, rows)?
        }
    };
    let stage = match file.stage_cost {
        StageCostFile::Stationary { values } => {
            if values.len() != s {
                return Err(Error::ShapeMismatch(format!("stage cost needs {s} states")));
            }
            StageCost::Stationary(flatten_checked(values, a, "stage cost")?)
        }
        StageCostFile::TimeVarying { values } => {
            if values.len() != file.horizon || values.iter().any(|v| v.len() != s) {
                return Err(Error::ShapeMismatch("time-varying stage cost shape".into()));
            }
            let mut flat = Vec::new();
            for per_k in values {
                flat.extend(flatten_checked(per_k, a, "stage cost")?);
            }
            StageCost::TimeVarying(flat)
        }
    };
    let mut mdp = GriddedMdp::new(
        file.horizon,
        kernel,
        stage,
        file.terminal_cost,
        file.safe_mask,
    )?;
    if let Some(grid) = file.grid_meta {
        mdp = mdp.with_grid(grid)?;
    }
    if let Some(k) = file.reward_shift {
        mdp = mdp.with_reward_shift(k)?;
    }
    Ok(mdp)
}

pub fn write_model(path: &Path, mdp: &GriddedMdp, layout: KernelLayout) -> Result<()> {
    write_atomic(path, &to_json_bytes(mdp, layout)?)
}

pub fn read_model(path: &Path) -> Result<GriddedMdp> {
    from_json_slice(&std::fs::read(path)?)
}
