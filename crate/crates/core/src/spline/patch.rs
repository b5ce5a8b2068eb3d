use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::knots::{bernstein, bezier_extraction, KnotVector, Span};
use crate::error::{Error, Result};

const PARAM_TOL: f64 = 1e-12;

/// A point given by its element and element-local coordinates in `[-1, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCoord {
    pub element: usize,
    pub xi: [f64; 2],
}

/// Rational basis functions supported on one element, with derivatives taken
/// with respect to the global parametric coordinates.
#[derive(Debug, Clone)]
pub struct BasisValues {
    pub element: usize,
    pub n: Vec<f64>,
    pub dn: Vec<[f64; 2]>,
    pub ddn: Vec<[[f64; 2]; 2]>,
}

impl BasisValues {
    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// `sum_I N_I x_I` together with the first and second parametric derivatives.
    pub fn interpolate(
        &self,
        conn: &[usize],
        values: &[Vector3<f64>],
    ) -> (Vector3<f64>, [Vector3<f64>; 2], [[Vector3<f64>; 2]; 2]) {
        let mut x = Vector3::zeros();
        let mut dx = [Vector3::zeros(); 2];
        let mut ddx = [[Vector3::zeros(); 2]; 2];
        for (a, &g) in conn.iter().enumerate() {
            let v = &values[g];
            x += self.n[a] * v;
            for al in 0..2 {
                dx[al] += self.dn[a][al] * v;
                for be in 0..2 {
                    ddx[al][be] += self.ddn[a][al][be] * v;
                }
            }
        }
        (x, dx, ddx)
    }
}

/// Parametric boundary edges of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    /// `u = u_min`
    West,
    /// `u = u_max`
    East,
    /// `v = v_min`
    South,
    /// `v = v_max`
    North,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::West, Edge::East, Edge::South, Edge::North];

    /// Parametric direction running along the edge.
    pub fn tangent_dir(self) -> usize {
        match self {
            Edge::West | Edge::East => 1,
            Edge::South | Edge::North => 0,
        }
    }

    /// Parametric direction across the edge.
    pub fn normal_dir(self) -> usize {
        1 - self.tangent_dir()
    }

    /// Local element coordinate of the edge in the normal direction.
    pub fn local_position(self) -> f64 {
        match self {
            Edge::West | Edge::South => -1.0,
            Edge::East | Edge::North => 1.0,
        }
    }

    /// Sign of the outward parametric normal.
    pub fn outward_sign(self) -> f64 {
        self.local_position()
    }
}

/// Single-patch tensor-product NURBS surface in 3D.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PatchDocument", into = "PatchDocument")]
pub struct NurbsPatch {
    knots: [KnotVector; 2],
    control_points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    spans: [Vec<Span>; 2],
    extraction: [Vec<DMatrix<f64>>; 2],
    connectivity: Vec<Vec<usize>>,
}

/// Plain-data form of a patch for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchDocument {
    pub knots: [KnotVector; 2],
    pub control_points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TryFrom<PatchDocument> for NurbsPatch {
    type Error = Error;
    fn try_from(doc: PatchDocument) -> Result<Self> {
        let cps = doc
            .control_points
            .iter()
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        NurbsPatch::new(doc.knots, cps, doc.weights)
    }
}

impl From<NurbsPatch> for PatchDocument {
    fn from(p: NurbsPatch) -> Self {
        PatchDocument {
            control_points: p.control_points.iter().map(|c| [c.x, c.y, c.z]).collect(),
            weights: p.weights,
            knots: p.knots,
        }
    }
}

impl NurbsPatch {
    /// Control points are ordered with the first parametric direction running fastest.
    pub fn new(
        knots: [KnotVector; 2],
        control_points: Vec<Vector3<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n1 = knots[0].num_basis();
        let n2 = knots[1].num_basis();
        if control_points.len() != n1 * n2 {
            return Err(Error::InvalidInput(format!(
                "expected {} control points, got {}",
                n1 * n2,
                control_points.len()
            )));
        }
        if weights.len() != control_points.len() {
            return Err(Error::InvalidInput(
                "weights and control points differ in length".into(),
            ));
        }
        if let Some(i) = weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "weight {i} is not strictly positive"
            )));
        }
        let spans = [knots[0].spans(), knots[1].spans()];
        let extraction = [
            bezier_extraction(knots[0].knots(), knots[0].degree())?,
            bezier_extraction(knots[1].knots(), knots[1].degree())?,
        ];
        let (p1, p2) = (knots[0].degree(), knots[1].degree());
        let mut connectivity = Vec::with_capacity(spans[0].len() * spans[1].len());
        for s2 in &spans[1] {
            for s1 in &spans[0] {
                let mut conn = Vec::with_capacity((p1 + 1) * (p2 + 1));
                for j in 0..=p2 {
                    for i in 0..=p1 {
                        conn.push((s1.first_basis + i) + n1 * (s2.first_basis + j));
                    }
                }
                connectivity.push(conn);
            }
        }
        Ok(Self {
            knots,
            control_points,
            weights,
            spans,
            extraction,
            connectivity,
        })
    }

    pub fn knots(&self) -> &[KnotVector; 2] {
        &self.knots
    }

    pub fn degrees(&self) -> [usize; 2] {
        [self.knots[0].degree(), self.knots[1].degree()]
    }

    pub fn control_points(&self) -> &[Vector3<f64>] {
        &self.control_points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of control points per parametric direction.
    pub fn controls_per_dir(&self) -> [usize; 2] {
        [self.knots[0].num_basis(), self.knots[1].num_basis()]
    }

    pub fn num_controls(&self) -> usize {
        self.control_points.len()
    }

    pub fn elements_per_dir(&self) -> [usize; 2] {
        [self.spans[0].len(), self.spans[1].len()]
    }

    pub fn num_elements(&self) -> usize {
        self.connectivity.len()
    }

    pub fn basis_per_element(&self) -> usize {
        let [p1, p2] = self.degrees();
        (p1 + 1) * (p2 + 1)
    }

    pub fn control_index(&self, i: usize, j: usize) -> usize {
        i + self.controls_per_dir()[0] * j
    }

    pub fn element_index(&self, i: usize, j: usize) -> usize {
        i + self.spans[0].len() * j
    }

    /// Element position `(i, j)` in the element grid.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        let n1 = self.spans[0].len();
        (e % n1, e / n1)
    }

    pub fn connectivity(&self, e: usize) -> &[usize] {
        &self.connectivity[e]
    }

    pub fn element_spans(&self, e: usize) -> [Span; 2] {
        let (i, j) = self.element_position(e);
        [self.spans[0][i], self.spans[1][j]]
    }

    pub fn spans(&self, dir: usize) -> &[Span] {
        &self.spans[dir]
    }

    pub fn extraction(&self, dir: usize) -> &[DMatrix<f64>] {
        &self.extraction[dir]
    }

    /// Parametric domain `[(u_min, u_max), (v_min, v_max)]`.
    pub fn domain(&self) -> [(f64, f64); 2] {
        [self.knots[0].domain(), self.knots[1].domain()]
    }

    pub fn to_global(&self, c: &ParamCoord) -> [f64; 2] {
        let [s1, s2] = self.element_spans(c.element);
        [s1.to_global(c.xi[0]), s2.to_global(c.xi[1])]
    }

    /// Element and local coordinates of a global parametric point.
    /// Points on an interior element boundary go to the element on the right.
    pub fn locate(&self, u: [f64; 2]) -> Result<ParamCoord> {
        let mut pos = [0usize; 2];
        let mut xi = [0.0; 2];
        for d in 0..2 {
            let (lo, hi) = self.knots[d].domain();
            let tol = PARAM_TOL * (hi - lo).max(1.0);
            if !(u[d] >= lo - tol && u[d] <= hi + tol) {
                return Err(Error::InvalidInput(format!(
                    "parameter {} outside [{lo}, {hi}]",
                    u[d]
                )));
            }
            let spans = &self.spans[d];
            let k = spans.partition_point(|s| s.end <= u[d]).min(spans.len() - 1);
            pos[d] = k;
            xi[d] = spans[k].to_local(u[d]).clamp(-1.0, 1.0);
        }
        Ok(ParamCoord {
            element: self.element_index(pos[0], pos[1]),
            xi,
        })
    }

    pub fn check_param(&self, c: &ParamCoord) -> Result<()> {
        if c.element >= self.num_elements() {
            return Err(Error::InvalidInput(format!(
                "element {} out of range",
                c.element
            )));
        }
        if c.xi.iter().any(|x| !(x.abs() <= 1.0 + PARAM_TOL)) {
            return Err(Error::InvalidInput(format!(
                "local coordinate {:?} outside [-1, 1]^2",
                c.xi
            )));
        }
        Ok(())
    }

    /// Rational basis and its first and second parametric derivatives.
    pub fn eval_basis(&self, c: &ParamCoord) -> BasisValues {
        let (ie, je) = self.element_position(c.element);
        let [p1, p2] = self.degrees();
        let b1 = self.univariate(0, ie, c.xi[0]);
        let b2 = self.univariate(1, je, c.xi[1]);
        let conn = &self.connectivity[c.element];
        let nb = (p1 + 1) * (p2 + 1);

        let mut wb = vec![0.0; nb];
        let mut wdb = vec![[0.0; 2]; nb];
        let mut wddb = vec![[[0.0; 2]; 2]; nb];
        let mut w = 0.0;
        let mut dw = [0.0; 2];
        let mut ddw = [[0.0; 2]; 2];
        for j in 0..=p2 {
            for i in 0..=p1 {
                let a = i + (p1 + 1) * j;
                let wt = self.weights[conn[a]];
                let v = b1.0[i] * b2.0[j];
                let d = [b1.1[i] * b2.0[j], b1.0[i] * b2.1[j]];
                let dd = [
                    [b1.2[i] * b2.0[j], b1.1[i] * b2.1[j]],
                    [b1.1[i] * b2.1[j], b1.0[i] * b2.2[j]],
                ];
                wb[a] = wt * v;
                w += wt * v;
                for al in 0..2 {
                    wdb[a][al] = wt * d[al];
                    dw[al] += wt * d[al];
                    for be in 0..2 {
                        wddb[a][al][be] = wt * dd[al][be];
                        ddw[al][be] += wt * dd[al][be];
                    }
                }
            }
        }

        let inv = 1.0 / w;
        let mut n = vec![0.0; nb];
        let mut dn = vec![[0.0; 2]; nb];
        let mut ddn = vec![[[0.0; 2]; 2]; nb];
        for a in 0..nb {
            let na = wb[a] * inv;
            n[a] = na;
            for al in 0..2 {
                dn[a][al] = (wdb[a][al] - na * dw[al]) * inv;
            }
            for al in 0..2 {
                for be in 0..2 {
                    ddn[a][al][be] = (wddb[a][al][be]
                        - dn[a][al] * dw[be]
                        - dn[a][be] * dw[al]
                        - na * ddw[al][be])
                        * inv;
                }
            }
        }
        BasisValues {
            element: c.element,
            n,
            dn,
            ddn,
        }
    }

    /// B-spline values and global-parameter derivatives along one direction.
    fn univariate(&self, dir: usize, span: usize, xi: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p = self.knots[dir].degree();
        let (b, db, ddb) = bernstein(p, xi);
        let c = &self.extraction[dir][span];
        let scale = 2.0 / self.spans[dir][span].length();
        let mut n = vec![0.0; p + 1];
        let mut dn = vec![0.0; p + 1];
        let mut ddn = vec![0.0; p + 1];
        for i in 0..=p {
            for k in 0..=p {
                n[i] += c[(i, k)] * b[k];
                dn[i] += c[(i, k)] * db[k];
                ddn[i] += c[(i, k)] * ddb[k];
            }
            dn[i] *= scale;
            ddn[i] *= scale * scale;
        }
        (n, dn, ddn)
    }

    /// Surface point for the given control positions.
    pub fn point(&self, c: &ParamCoord, controls: &[Vector3<f64>]) -> Vector3<f64> {
        let b = self.eval_basis(c);
        self.connectivity[c.element]
            .iter()
            .zip(&b.n)
            .map(|(&g, &n)| n * controls[g])
            .sum()
    }

    /// Control points lying in row `layer` counted inward from `edge`.
    pub fn edge_controls(&self, edge: Edge, layer: usize) -> Vec<usize> {
        let [n1, n2] = self.controls_per_dir();
        match edge {
            Edge::West => (0..n2).map(|j| self.control_index(layer, j)).collect(),
            Edge::East => (0..n2).map(|j| self.control_index(n1 - 1 - layer, j)).collect(),
            Edge::South => (0..n1).map(|i| self.control_index(i, layer)).collect(),
            Edge::North => (0..n1).map(|i| self.control_index(i, n2 - 1 - layer)).collect(),
        }
    }

    /// Elements adjacent to `edge`, ordered along it.
    pub fn edge_elements(&self, edge: Edge) -> Vec<usize> {
        let [e1, e2] = self.elements_per_dir();
        match edge {
            Edge::West => (0..e2).map(|j| self.element_index(0, j)).collect(),
            Edge::East => (0..e2).map(|j| self.element_index(e1 - 1, j)).collect(),
            Edge::South => (0..e1).map(|i| self.element_index(i, 0)).collect(),
            Edge::North => (0..e1).map(|i| self.element_index(i, e2 - 1)).collect(),
        }
    }

    /// Control points on the four corners of the patch.
    pub fn corner_controls(&self) -> [usize; 4] {
        let [n1, n2] = self.controls_per_dir();
        [
            self.control_index(0, 0),
            self.control_index(n1 - 1, 0),
            self.control_index(0, n2 - 1),
            self.control_index(n1 - 1, n2 - 1),
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
