//! Material parameter fields on a bilinear Lagrange mesh over the parametric domain.

mod design;
mod distribution;

pub use design::{DesignMap, KindSpec, Slot, Symmetry};
pub use distribution::{sample_reference, AnalyticMaterial, Axis, ScalarDistribution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::V3;
use crate::spline::NurbsPatch;

/// Number of parameter kinds carried per material node.
pub const KINDS: usize = 2;

const CONFORM_TOL: f64 = 1e-9;

/// Axis-aligned material element edges in the unit parameter square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDoc", into = "GridDoc")]
pub struct MaterialGrid {
    edges: [Vec<f64>; 2],
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    edges_u: Vec<f64>,
    edges_v: Vec<f64>,
}

impl TryFrom<GridDoc> for MaterialGrid {
    type Error = Error;
    fn try_from(d: GridDoc) -> Result<Self> {
        MaterialGrid::new(d.edges_u, d.edges_v)
    }
}

impl From<MaterialGrid> for GridDoc {
    fn from(g: MaterialGrid) -> Self {
        let [edges_u, edges_v] = g.edges;
        GridDoc { edges_u, edges_v }
    }
}

impl MaterialGrid {
    pub fn new(edges_u: Vec<f64>, edges_v: Vec<f64>) -> Result<Self> {
        for e in [&edges_u, &edges_v] {
            if e.len() < 2 {
                return Err(Error::MaterialMapping("need at least one element per direction".into()));
            }
            if (e[0]).abs() > CONFORM_TOL || (e[e.len() - 1] - 1.0).abs() > CONFORM_TOL {
                return Err(Error::MaterialMapping("edges must span [0, 1]".into()));
            }
            if e.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::MaterialMapping("edges must increase strictly".into()));
            }
        }
        Ok(Self {
            edges: [edges_u, edges_v],
        })
    }

    pub fn uniform(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::MaterialMapping("material element counts must be positive".into()));
        }
        let lin = |n: usize| (0..=n).map(|i| i as f64 / n as f64).collect();
        Self::new(lin(n1), lin(n2))
    }

    pub fn edges(&self, dir: usize) -> &[f64] {
        &self.edges[dir]
    }

    pub fn elements_per_dir(&self) -> [usize; 2] {
        [self.edges[0].len() - 1, self.edges[1].len() - 1]
    }

    pub fn nodes_per_dir(&self) -> [usize; 2] {
        [self.edges[0].len(), self.edges[1].len()]
    }

    pub fn num_nodes(&self) -> usize {
        self.edges[0].len() * self.edges[1].len()
    }

    pub fn num_elements(&self) -> usize {
        (self.edges[0].len() - 1) * (self.edges[1].len() - 1)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + self.edges[0].len() * j
    }

    pub fn node_position(&self, node: usize) -> (usize, usize) {
        let n1 = self.edges[0].len();
        (node % n1, node / n1)
    }

    /// Parametric location of a node.
    pub fn node_param(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_position(node);
        [self.edges[0][i], self.edges[1][j]]
    }

    /// Corner nodes of material element `(i, j)` in counter-clockwise order.
    pub fn element_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    /// The four nodes at the corners of the parameter square.
    pub fn corner_nodes(&self) -> [usize; 4] {
        let [n1, n2] = self.nodes_per_dir();
        [
            self.node_index(0, 0),
            self.node_index(n1 - 1, 0),
            self.node_index(n1 - 1, n2 - 1),
            self.node_index(0, n2 - 1),
        ]
    }
}

/// Bilinear shape functions on `[-1, 1]^2`, counter-clockwise from `(-1, -1)`.
pub fn bilinear_shape(xi: [f64; 2]) -> [f64; 4] {
    let (a, b) = (xi[0], xi[1]);
    [
        0.25 * (1.0 - a) * (1.0 - b),
        0.25 * (1.0 + a) * (1.0 - b),
        0.25 * (1.0 + a) * (1.0 + b),
        0.25 * (1.0 - a) * (1.0 + b),
    ]
}

/// Affine map from analysis-element coordinates to material-element
/// coordinates: `xi_bar = (xi + e) / n` per direction.
pub fn map_param(xi: [f64; 2], offsets: [f64; 2], counts: [usize; 2]) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for d in 0..2 {
        if counts[d] == 0 {
            return Err(Error::MaterialMapping("subdivision count must be positive".into()));
        }
        out[d] = (xi[d] + offsets[d]) / counts[d] as f64;
        if out[d].abs() > 1.0 + 1e-12 {
            return Err(Error::MaterialMapping(format!(
                "mapped coordinate {} leaves [-1, 1] (offset {}, count {})",
                out[d], offsets[d], counts[d]
            )));
        }
    }
    Ok(out)
}

/// Placement of one analysis element inside its material element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMap {
    pub material_element: (usize, usize),
    /// `xi_bar = scale * xi + shift` per direction.
    pub scale: [f64; 2],
    pub shift: [f64; 2],
}

impl ElementMap {
    /// Subdivision counts `n_alpha` (exact only for uniform subdivision).
    pub fn counts(&self) -> [f64; 2] {
        [1.0 / self.scale[0], 1.0 / self.scale[1]]
    }

    /// Offsets `e^alpha`.
    pub fn offsets(&self) -> [f64; 2] {
        [self.shift[0] / self.scale[0], self.shift[1] / self.scale[1]]
    }

    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.scale[0] * xi[0] + self.shift[0],
            self.scale[1] * xi[1] + self.shift[1],
        ]
    }
}

/// Conforming relation between the analysis mesh of a patch and a material grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialCoupling {
    grid: MaterialGrid,
    maps: Vec<ElementMap>,
}

impl MaterialCoupling {
    pub fn new(patch: &NurbsPatch, grid: &MaterialGrid) -> Result<Self> {
        let domain = patch.domain();
        let mut per_dir: [Vec<(usize, f64, f64)>; 2] = [Vec::new(), Vec::new()];
        for d in 0..2 {
            let (lo, hi) = domain[d];
            let edges = grid.edges(d);
            for (k, s) in patch.spans(d).iter().enumerate() {
                let a = (s.start - lo) / (hi - lo);
                let b = (s.end - lo) / (hi - lo);
                let m = edges
                    .windows(2)
                    .position(|w| a >= w[0] - CONFORM_TOL && b <= w[1] + CONFORM_TOL)
                    .ok_or_else(|| {
                        Error::MaterialMapping(format!(
                            "analysis element {k} in direction {d} ([{a}, {b}]) straddles a material element boundary"
                        ))
                    })?;
                let (ma, mb) = (edges[m], edges[m + 1]);
                // xi in [-1,1] -> u = mid + xi*half -> xi_bar = (2u - ma - mb)/(mb - ma)
                let scale = (b - a) / (mb - ma);
                let shift = (a + b - ma - mb) / (mb - ma);
                per_dir[d].push((m, scale, shift));
            }
        }
        let mut maps = Vec::with_capacity(patch.num_elements());
        for e in 0..patch.num_elements() {
            let (i, j) = patch.element_position(e);
            let (m1, s1, o1) = per_dir[0][i];
            let (m2, s2, o2) = per_dir[1][j];
            maps.push(ElementMap {
                material_element: (m1, m2),
                scale: [s1, s2],
                shift: [o1, o2],
            });
        }
        Ok(Self {
            grid: grid.clone(),
            maps,
        })
    }

    pub fn grid(&self) -> &MaterialGrid {
        &self.grid
    }

    pub fn element_map(&self, e: usize) -> &ElementMap {
        &self.maps[e]
    }

    /// Material nodes and bilinear weights at a point of analysis element `e`.
    pub fn shape(&self, e: usize, xi: [f64; 2]) -> ([usize; 4], [f64; 4]) {
        let m = &self.maps[e];
        let xb = m.map(xi);
        let (i, j) = m.material_element;
        (self.grid.element_nodes(i, j), bilinear_shape(xb))
    }
}

/// Interpolated parameters at a point with the contributing nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodalInterp {
    pub values: [f64; KINDS],
    pub nodes: [usize; 4],
    pub shape: [f64; 4],
}

/// Nodal parameter values on a material grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialField {
    pub grid: MaterialGrid,
    /// `values[node] = [q_0, q_1]`
    pub values: Vec<[f64; KINDS]>,
}

impl MaterialField {
    pub fn constant(grid: MaterialGrid, value: [f64; KINDS]) -> Self {
        let values = vec![value; grid.num_nodes()];
        Self { grid, values }
    }

    /// Node-major vector `[q_{1,0}, q_{1,1}, q_{2,0}, ...]`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn set_from_vector(&mut self, q: &[f64]) -> Result<()> {
        if q.len() != KINDS * self.values.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} nodal values, got {}",
                KINDS * self.values.len(),
                q.len()
            )));
        }
        for (v, c) in self.values.iter_mut().zip(q.chunks_exact(KINDS)) {
            v.copy_from_slice(c);
        }
        Ok(())
    }

    pub fn check_positive(&self) -> Result<()> {
        if let Some(n) = self.values.iter().position(|v| v.iter().any(|&x| !(x > 0.0 && x.is_finite()))) {
            return Err(Error::InvalidInput(format!("material node {n} has a non-positive parameter")));
        }
        Ok(())
    }
}

/// Bilinear interpolation of the field at a point of analysis element `fe_element`.
pub fn interp(coupling: &MaterialCoupling, field: &MaterialField, fe_element: usize, xi: [f64; 2]) -> NodalInterp {
    let (nodes, shape) = coupling.shape(fe_element, xi);
    let mut values = [0.0; KINDS];
    for (n, s) in nodes.iter().zip(&shape) {
        for k in 0..KINDS {
            values[k] += s * field.values[*n][k];
        }
    }
    NodalInterp { values, nodes, shape }
}

/// Source of pointwise material parameters during assembly.
pub trait MaterialEval: Sync {
    /// Parameters at local point `xi` of analysis element `element`, which lies at
    /// normalized parameter `param` and reference position `position`.
    fn params_at(&self, element: usize, xi: [f64; 2], param: [f64; 2], position: &V3) -> [f64; KINDS];

    /// Bilinear nodal data, if the parameters come from a material mesh.
    fn nodal(&self, _element: usize, _xi: [f64; 2]) -> Option<NodalInterp> {
        None
    }
}

/// A material field together with its coupling to an analysis mesh.
#[derive(Debug, Clone)]
pub struct NodalMaterial {
    pub field: MaterialField,
    pub coupling: MaterialCoupling,
}

impl NodalMaterial {
    pub fn new(patch: &NurbsPatch, field: MaterialField) -> Result<Self> {
        let coupling = MaterialCoupling::new(patch, &field.grid)?;
        Ok(Self { field, coupling })
    }
}

impl MaterialEval for NodalMaterial {
    fn params_at(&self, element: usize, xi: [f64; 2], _param: [f64; 2], _position: &V3) -> [f64; KINDS] {
        interp(&self.coupling, &self.field, element, xi).values
    }

    fn nodal(&self, element: usize, xi: [f64; 2]) -> Option<NodalInterp> {
        Some(interp(&self.coupling, &self.field, element, xi))
    }
}
