use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::V3;
use crate::spline::{Edge, NurbsPatch};

/// Displacement components per control point.
pub const DIM: usize = 3;

/// Where a support acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case")]
pub enum Region {
    /// Control row `layer` counted inward from `edge`.
    Edge {
        edge: Edge,
        #[serde(default)]
        layer: usize,
    },
    /// Every control point.
    All,
}

/// Prescribed displacement components on a region, reached at full load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub region: Region,
    pub dirs: [bool; DIM],
    #[serde(default)]
    pub displacement: [f64; DIM],
}

impl Support {
    pub fn edge(edge: Edge, dirs: [bool; DIM]) -> Self {
        Self {
            region: Region::Edge { edge, layer: 0 },
            dirs,
            displacement: [0.0; DIM],
        }
    }

    pub fn with_displacement(mut self, displacement: [f64; DIM]) -> Self {
        self.displacement = displacement;
        self
    }
}

/// Net reaction in direction `dir` summed over the prescribed dofs of an edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionSpec {
    pub name: String,
    pub edge: Edge,
    pub dir: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionSet {
    pub name: String,
    /// Indices into the prescribed-dof list.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Free(usize),
    Prescribed(usize),
}

/// Free/prescribed partition of the `3 n_no` displacement dofs (`dof = 3 control + dir`).
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    kinds: Vec<DofKind>,
    free: Vec<usize>,
    prescribed: Vec<usize>,
    /// Prescribed displacement at full load, aligned with `prescribed`.
    values: Vec<f64>,
    reactions: Vec<ReactionSet>,
}

impl DofMap {
    /// `fixed` maps global dofs to their full-load displacement; reactions list
    /// global dofs that must all be prescribed.
    pub fn new(n_controls: usize, fixed: &BTreeMap<usize, f64>, reactions: Vec<(String, Vec<usize>)>) -> Result<Self> {
        let n = DIM * n_controls;
        let mut kinds = Vec::with_capacity(n);
        let mut free = Vec::new();
        let mut prescribed = Vec::new();
        let mut values = Vec::new();
        for dof in 0..n {
            match fixed.get(&dof) {
                Some(&v) => {
                    kinds.push(DofKind::Prescribed(prescribed.len()));
                    prescribed.push(dof);
                    values.push(v);
                }
                None => {
                    kinds.push(DofKind::Free(free.len()));
                    free.push(dof);
                }
            }
        }
        if let Some(&bad) = fixed.keys().find(|&&d| d >= n) {
            return Err(Error::InvalidInput(format!("dof {bad} out of range ({n} dofs)")));
        }
        let reactions = reactions
            .into_iter()
            .map(|(name, dofs)| {
                let members = dofs
                    .iter()
                    .map(|&d| match kinds.get(d) {
                        Some(DofKind::Prescribed(p)) => Ok(*p),
                        _ => Err(Error::InvalidInput(format!(
                            "reaction set '{name}' references dof {d}, which is not prescribed"
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ReactionSet { name, members })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kinds,
            free,
            prescribed,
            values,
            reactions,
        })
    }

    pub fn from_supports(patch: &NurbsPatch, supports: &[Support], reactions: &[ReactionSpec]) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        for s in supports {
            let controls: Vec<usize> = match s.region {
                Region::Edge { edge, layer } => {
                    let limit = patch.controls_per_dir()[edge.normal_dir()];
                    if layer >= limit {
                        return Err(Error::InvalidInput(format!("support layer {layer} exceeds {limit} control rows")));
                    }
                    patch.edge_controls(edge, layer)
                }
                Region::All => (0..patch.num_controls()).collect(),
            };
            for c in controls {
                for d in (0..DIM).filter(|&d| s.dirs[d]) {
                    let v = s.displacement[d];
                    if let Some(old) = fixed.insert(DIM * c + d, v) {
                        if old != v {
                            return Err(Error::InvalidInput(format!(
                                "control {c} direction {d} prescribed twice ({old} and {v})"
                            )));
                        }
                    }
                }
            }
        }
        let sets = reactions
            .iter()
            .map(|r| {
                if r.dir >= DIM {
                    return Err(Error::InvalidInput(format!("reaction direction {} out of range", r.dir)));
                }
                let dofs = patch.edge_controls(r.edge, 0).iter().map(|c| DIM * c + r.dir).collect();
                Ok((r.name.clone(), dofs))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(patch.num_controls(), &fixed, sets)
    }

    pub fn n_dofs(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_prescribed(&self) -> usize {
        self.prescribed.len()
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        self.kinds[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn prescribed_dofs(&self) -> &[usize] {
        &self.prescribed
    }

    pub fn prescribed_values(&self) -> &[f64] {
        &self.values
    }

    pub fn reactions(&self) -> &[ReactionSet] {
        &self.reactions
    }

    /// Full displacement vector from free values and the prescribed values at `factor`.
    pub fn expand(&self, u_free: &[f64], factor: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dofs()];
        for (&d, &v) in self.free.iter().zip(u_free) {
            u[d] = v;
        }
        for (&d, &v) in self.prescribed.iter().zip(&self.values) {
            u[d] = factor * v;
        }
        u
    }

    pub fn restrict_free(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    pub fn restrict_prescribed(&self, full: &[f64]) -> Vec<f64> {
        self.prescribed.iter().map(|&d| full[d]).collect()
    }

    /// Net reaction per set from a per-prescribed-dof vector.
    pub fn sum_reactions(&self, per_dof: &[f64]) -> Vec<f64> {
        self.reactions
            .iter()
            .map(|s| s.members.iter().map(|&p| per_dof[p]).sum())
            .collect()
    }
}

/// Current control positions `x = X + u`.
pub fn displaced(reference: &[V3], u_full: &[f64]) -> Vec<V3> {
    reference
        .iter()
        .enumerate()
        .map(|(c, x)| x + V3::new(u_full[DIM * c], u_full[DIM * c + 1], u_full[DIM * c + 2]))
        .collect()
}
