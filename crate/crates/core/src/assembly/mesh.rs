use crate::error::Result;
use crate::kinematics::{SurfaceGeometry, V3};
use crate::spline::{gauss_legendre, tensor_rule, BasisValues, Edge, NurbsPatch, ParamCoord};

/// Cached data at one surface quadrature point.
#[derive(Debug, Clone)]
pub struct QuadPointData {
    pub xi: [f64; 2],
    pub basis: BasisValues,
    /// Gauss weight times the parametric element measure.
    pub weight: f64,
    pub reference: SurfaceGeometry,
    /// Normalized parameter in `[0, 1]^2`.
    pub param: [f64; 2],
    pub position: V3,
}

impl QuadPointData {
    /// Reference area element `dA`.
    pub fn area_weight(&self) -> f64 {
        self.weight * self.reference.area
    }
}

/// Cached data at one boundary quadrature point.
#[derive(Debug, Clone)]
pub struct EdgePointData {
    pub edge: Edge,
    pub xi: [f64; 2],
    pub basis: BasisValues,
    /// Reference length element `ds` including the Gauss weight.
    pub ds: f64,
    /// Contravariant components `nu^alpha` of the outward reference conormal.
    pub conormal: [f64; 2],
}

/// A patch with its reference geometry tabulated at the quadrature points.
#[derive(Debug, Clone)]
pub struct Discretization {
    patch: NurbsPatch,
    points: Vec<Vec<QuadPointData>>,
    edge_points: Vec<Vec<EdgePointData>>,
}

impl Discretization {
    /// Gauss rule with `p + 1` points per direction.
    pub fn new(patch: NurbsPatch) -> Result<Self> {
        let [p1, p2] = patch.degrees();
        Self::with_order(patch, [p1 + 1, p2 + 1])
    }

    pub fn with_order(patch: NurbsPatch, order: [usize; 2]) -> Result<Self> {
        let rule = tensor_rule(order[0], order[1]);
        let dom = patch.domain();
        let normalize = |u: [f64; 2]| {
            [
                (u[0] - dom[0].0) / (dom[0].1 - dom[0].0),
                (u[1] - dom[1].0) / (dom[1].1 - dom[1].0),
            ]
        };
        let conn_geom = |e: usize, basis: &BasisValues| {
            let (x, d, dd) = basis.interpolate(patch.connectivity(e), patch.control_points());
            SurfaceGeometry::from_derivatives(d, dd, e).map(|g| (x, g))
        };
        let mut points = Vec::with_capacity(patch.num_elements());
        for e in 0..patch.num_elements() {
            let [s1, s2] = patch.element_spans(e);
            let jac = 0.25 * s1.length() * s2.length();
            let mut list = Vec::with_capacity(rule.len());
            for q in &rule {
                let c = ParamCoord { element: e, xi: q.xi };
                let basis = patch.eval_basis(&c);
                let (position, reference) = conn_geom(e, &basis)?;
                list.push(QuadPointData {
                    xi: q.xi,
                    weight: q.weight * jac,
                    reference,
                    param: normalize(patch.to_global(&c)),
                    position,
                    basis,
                });
            }
            points.push(list);
        }

        let mut edge_points = vec![Vec::new(); patch.num_elements()];
        for edge in Edge::ALL {
            let t = edge.tangent_dir();
            let nd = edge.normal_dir();
            let (gx, gw) = gauss_legendre(order[t]);
            for e in patch.edge_elements(edge) {
                let len = patch.element_spans(e)[t].length();
                for (&x, &w) in gx.iter().zip(&gw) {
                    let mut xi = [0.0; 2];
                    xi[t] = x;
                    xi[nd] = edge.local_position();
                    let basis = patch.eval_basis(&ParamCoord { element: e, xi });
                    let (_, g) = conn_geom(e, &basis)?;
                    let ai = g.inv_metric;
                    let s = edge.outward_sign() / ai[(nd, nd)].sqrt();
                    edge_points[e].push(EdgePointData {
                        edge,
                        xi,
                        ds: g.tangents[t].norm() * w * 0.5 * len,
                        conormal: [s * ai[(nd, 0)], s * ai[(nd, 1)]],
                        basis,
                    });
                }
            }
        }
        Ok(Self {
            patch,
            points,
            edge_points,
        })
    }

    pub fn patch(&self) -> &NurbsPatch {
        &self.patch
    }

    pub fn reference(&self) -> &[V3] {
        self.patch.control_points()
    }

    pub fn num_elements(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self, e: usize) -> &[QuadPointData] {
        &self.points[e]
    }

    pub fn edge_points(&self, e: usize) -> &[EdgePointData] {
        &self.edge_points[e]
    }

    pub fn dofs_per_element(&self) -> usize {
        3 * self.patch.basis_per_element()
    }

    /// Reference surface area.
    pub fn area(&self) -> f64 {
        self.points.iter().flatten().map(|q| q.area_weight()).sum()
    }
}
