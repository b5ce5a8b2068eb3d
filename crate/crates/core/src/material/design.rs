use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MaterialGrid, KINDS};
use crate::error::{Error, Result};

/// What happens to one entry of the full nodal vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slot {
    Free(usize),
    Fixed(f64),
}

/// Per-kind choice: identified or held at a known value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSpec {
    Free,
    Fixed(f64),
}

/// Symmetry tying nodal values to shared design variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    /// Mirror symmetry about both mid-lines of the parameter square.
    Quarter,
    /// Values vary along the first direction only.
    AlongU,
}

/// Linear map from the free design vector to the full node-major nodal vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMap {
    slots: Vec<Slot>,
    n_var: usize,
    /// Parameter kind of each design variable.
    var_kind: Vec<usize>,
    /// First full-vector index mapped to each design variable.
    representative: Vec<usize>,
}

impl DesignMap {
    /// Build from a rule assigning each `(node i, node j, kind)` either a
    /// shared group key (`Ok`) or a fixed value (`Err`). Variables are numbered
    /// in order of first appearance in the node-major full vector.
    pub fn build<F>(grid: &MaterialGrid, mut rule: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> std::result::Result<(usize, usize), f64>,
    {
        let mut ids: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut slots = Vec::with_capacity(grid.num_nodes() * KINDS);
        let mut var_kind = Vec::new();
        let mut representative = Vec::new();
        for node in 0..grid.num_nodes() {
            let (i, j) = grid.node_position(node);
            for k in 0..KINDS {
                match rule(i, j, k) {
                    Ok(key) => {
                        let next = ids.len();
                        let id = *ids.entry((key.0, key.1, k)).or_insert(next);
                        if id == next {
                            var_kind.push(k);
                            representative.push(slots.len());
                        }
                        slots.push(Slot::Free(id));
                    }
                    Err(v) => slots.push(Slot::Fixed(v)),
                }
            }
        }
        Self {
            n_var: var_kind.len(),
            slots,
            var_kind,
            representative,
        }
    }

    pub fn new(grid: &MaterialGrid, kinds: [KindSpec; KINDS], symmetry: Symmetry) -> Self {
        let [n1, n2] = grid.nodes_per_dir();
        Self::build(grid, |i, j, k| match kinds[k] {
            KindSpec::Fixed(v) => Err(v),
            KindSpec::Free => Ok(match symmetry {
                Symmetry::None => (i, j),
                Symmetry::Quarter => (i.min(n1 - 1 - i), j.min(n2 - 1 - j)),
                Symmetry::AlongU => (i, 0),
            }),
        })
    }

    pub fn all_free(grid: &MaterialGrid) -> Self {
        Self::new(grid, [KindSpec::Free; KINDS], Symmetry::None)
    }

    pub fn n_var(&self) -> usize {
        self.n_var
    }

    pub fn n_full(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn var_kind(&self, v: usize) -> usize {
        self.var_kind[v]
    }

    /// Node carrying the first occurrence of variable `v`.
    pub fn var_node(&self, v: usize) -> usize {
        self.representative[v] / KINDS
    }

    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_var {
            return Err(Error::InvalidInput(format!(
                "design vector has {} entries, expected {}",
                x.len(),
                self.n_var
            )));
        }
        Ok(self
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Free(v) => x[v],
                Slot::Fixed(c) => c,
            })
            .collect())
    }

    /// Design vector read from the first occurrence of each variable.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.representative.iter().map(|&i| full[i]).collect()
    }

    /// Column-wise reduction `J_x[:, v] = sum over full entries mapped to v of J_q[:, i]`.
    pub fn reduce_columns(&self, jq: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        let mut jx = nalgebra::DMatrix::zeros(jq.nrows(), self.n_var);
        for (i, s) in self.slots.iter().enumerate() {
            if let Slot::Free(v) = *s {
                let col = jq.column(i).into_owned();
                let mut target = jx.column_mut(v);
                target += col;
            }
        }
        jx
    }
}
