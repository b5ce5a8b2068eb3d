//! Differential geometry of the reference and current shell mid-surface.

use nalgebra::{Matrix2, Vector3};

use crate::error::{Error, Result};
use crate::spline::{NurbsPatch, ParamCoord};

pub type V3 = Vector3<f64>;

/// Smallest admissible `|a_1 x a_2|`.
pub const DEGENERATE_AREA: f64 = 1e-14;

/// First and second fundamental forms of one configuration at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGeometry {
    /// Covariant tangents `a_alpha`.
    pub tangents: [V3; 2],
    /// Parametric second derivatives `a_{alpha,beta}`.
    pub second: [[V3; 2]; 2],
    pub metric: Matrix2<f64>,
    pub inv_metric: Matrix2<f64>,
    /// Contravariant tangents `a^alpha`.
    pub dual: [V3; 2],
    pub normal: V3,
    pub curvature: Matrix2<f64>,
    /// `sqrt(det a_{alpha beta})`
    pub area: f64,
}

impl SurfaceGeometry {
    pub fn from_derivatives(tangents: [V3; 2], second: [[V3; 2]; 2], element: usize) -> Result<Self> {
        let cross = tangents[0].cross(&tangents[1]);
        let area = cross.norm();
        if !(area >= DEGENERATE_AREA) {
            return Err(Error::SingularGeometry { element, area });
        }
        let normal = cross / area;
        let metric = Matrix2::new(
            tangents[0].dot(&tangents[0]),
            tangents[0].dot(&tangents[1]),
            tangents[1].dot(&tangents[0]),
            tangents[1].dot(&tangents[1]),
        );
        let det = metric[(0, 0)] * metric[(1, 1)] - metric[(0, 1)] * metric[(1, 0)];
        let inv_metric = Matrix2::new(metric[(1, 1)], -metric[(0, 1)], -metric[(1, 0)], metric[(0, 0)]) / det;
        let dual = [
            inv_metric[(0, 0)] * tangents[0] + inv_metric[(0, 1)] * tangents[1],
            inv_metric[(1, 0)] * tangents[0] + inv_metric[(1, 1)] * tangents[1],
        ];
        let mut curvature = Matrix2::zeros();
        for al in 0..2 {
            for be in 0..2 {
                curvature[(al, be)] = second[al][be].dot(&normal);
            }
        }
        Ok(Self {
            tangents,
            second,
            metric,
            inv_metric,
            dual,
            normal,
            curvature,
            area,
        })
    }

    /// Christoffel symbols `Gamma^gamma_{alpha beta} = a_{alpha,beta} . a^gamma`, indexed `[gamma][alpha][beta]`.
    pub fn christoffel(&self) -> [[[f64; 2]; 2]; 2] {
        let mut g = [[[0.0; 2]; 2]; 2];
        for (ga, gg) in g.iter_mut().enumerate() {
            for al in 0..2 {
                for be in 0..2 {
                    gg[al][be] = self.second[al][be].dot(&self.dual[ga]);
                }
            }
        }
        g
    }

    /// Mixed curvature `b^alpha_beta`; its eigenvalues are the principal curvatures.
    pub fn mixed_curvature(&self) -> Matrix2<f64> {
        self.inv_metric * self.curvature
    }

    /// Contravariant curvature `b^{alpha beta}`.
    pub fn contravariant_curvature(&self) -> Matrix2<f64> {
        self.inv_metric * self.curvature * self.inv_metric
    }

    pub fn mean_curvature(&self) -> f64 {
        0.5 * self.mixed_curvature().trace()
    }

    pub fn gauss_curvature(&self) -> f64 {
        self.mixed_curvature().determinant()
    }

    /// Principal curvatures, smaller first.
    pub fn principal_curvatures(&self) -> [f64; 2] {
        let h = self.mean_curvature();
        let k = self.gauss_curvature();
        let d = (h * h - k).max(0.0).sqrt();
        [h - d, h + d]
    }
}

/// Kinematic state at a point: reference geometry, current geometry and the
/// derived stretch, strain and relative curvature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSurfaceData {
    pub reference: SurfaceGeometry,
    pub current: SurfaceGeometry,
    /// Surface stretch `J`.
    pub stretch: f64,
    /// `eps_{alpha beta} = (a_{alpha beta} - A_{alpha beta}) / 2`
    pub strain: Matrix2<f64>,
    /// `kappa_{alpha beta} = b_{alpha beta} - B_{alpha beta}`
    pub relative_curvature: Matrix2<f64>,
}

impl LocalSurfaceData {
    pub fn new(reference: SurfaceGeometry, current: SurfaceGeometry, element: usize) -> Result<Self> {
        let stretch = current.area / reference.area;
        if !(stretch > 0.0 && stretch.is_finite()) {
            return Err(Error::InvertedElement { element, stretch });
        }
        Ok(Self {
            strain: 0.5 * (current.metric - reference.metric),
            relative_curvature: current.curvature - reference.curvature,
            reference,
            current,
            stretch,
        })
    }

    /// Surface deformation gradient `F = a_alpha (x) A^alpha`.
    pub fn deformation_gradient(&self) -> nalgebra::Matrix3<f64> {
        self.current.tangents[0] * self.reference.dual[0].transpose()
            + self.current.tangents[1] * self.reference.dual[1].transpose()
    }
}

/// Geometry of a configuration given by `controls` at a parametric point.
pub fn geometry_at(patch: &NurbsPatch, controls: &[V3], param: &ParamCoord) -> Result<SurfaceGeometry> {
    patch.check_param(param)?;
    let basis = patch.eval_basis(param);
    let (_, d, dd) = basis.interpolate(patch.connectivity(param.element), controls);
    SurfaceGeometry::from_derivatives(d, dd, param.element)
}

/// Full local kinematic state between reference and current control positions.
pub fn surface_data(
    patch: &NurbsPatch,
    reference: &[V3],
    current: &[V3],
    param: &ParamCoord,
) -> Result<LocalSurfaceData> {
    if reference.len() != patch.num_controls() || current.len() != patch.num_controls() {
        return Err(Error::InvalidInput(format!(
            "control arrays must have {} entries",
            patch.num_controls()
        )));
    }
    patch.check_param(param)?;
    let basis = patch.eval_basis(param);
    let conn = patch.connectivity(param.element);
    let (_, d0, dd0) = basis.interpolate(conn, reference);
    let (_, d, dd) = basis.interpolate(conn, current);
    LocalSurfaceData::new(
        SurfaceGeometry::from_derivatives(d0, dd0, param.element)?,
        SurfaceGeometry::from_derivatives(d, dd, param.element)?,
        param.element,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{make_curved_patch, make_cylinder, make_plate, HeightProfile};
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn bumpy() -> NurbsPatch {
        make_curved_patch(1.0, 0.8, 0.25, 4, 3, 2, HeightProfile::Parabolic).unwrap()
    }

    /// Smooth nonlinear deformation of the control net.
    fn deform(x: &[V3], s: f64) -> Vec<V3> {
        x.iter()
            .map(|p| {
                V3::new(
                    p.x * (1.0 + 0.3 * s) + 0.1 * s * p.y * p.y,
                    p.y * (1.0 - 0.1 * s) + 0.05 * s * p.x,
                    p.z + 0.2 * s * (p.x * p.y).sin(),
                )
            })
            .collect()
    }

    #[test]
    fn identity_deformation() {
        let p = bumpy();
        let x = p.control_points().to_vec();
        let d = surface_data(&p, &x, &x, &p.locate([0.3, 0.6]).unwrap()).unwrap();
        assert!((d.stretch - 1.0).abs() < 1e-14);
        assert!(d.strain.norm() < 1e-15);
        assert!(d.relative_curvature.norm() < 1e-15);
    }

    #[test]
    fn flat_plate_has_no_curvature_or_christoffel() {
        let p = make_plate(2.0, 1.0, 3, 3, 2).unwrap();
        for &(u, v) in &[(0.1, 0.1), (0.5, 0.7), (0.99, 0.2)] {
            let g = geometry_at(&p, p.control_points(), &p.locate([u, v]).unwrap()).unwrap();
            assert!(g.curvature.norm() < 1e-14);
            for c in g.christoffel().iter().flatten().flatten() {
                assert!(c.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn equibiaxial_stretch_scales_area() {
        let p = make_plate(1.0, 1.0, 2, 2, 2).unwrap();
        let lam = 1.37;
        let x: Vec<V3> = p.control_points().iter().map(|c| c * lam).collect();
        let d = surface_data(&p, p.control_points(), &x, &p.locate([0.4, 0.2]).unwrap()).unwrap();
        assert!((d.stretch - lam * lam).abs() < 1e-13);
        let det_ratio = d.current.metric.determinant() / d.reference.metric.determinant();
        assert!((det_ratio - lam.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn cylinder_principal_curvatures() {
        let r = 2.5;
        let p = make_cylinder(r, 2.0, 3.0, 4, 3).unwrap();
        for &(u, v) in &[(0.05, 0.5), (0.5, 0.5), (0.77, 0.1), (1.0, 1.0)] {
            let g = geometry_at(&p, p.control_points(), &p.locate([u, v]).unwrap()).unwrap();
            let k = g.principal_curvatures();
            // outward normal points away from the axis: |k| = 1/R in one direction
            let kmax = k[0].abs().max(k[1].abs());
            let kmin = k[0].abs().min(k[1].abs());
            assert!((kmax - 1.0 / r).abs() < 1e-12, "{k:?}");
            assert!(kmin < 1e-12);
        }
    }

    #[test]
    fn degenerate_tangents_rejected() {
        let p = make_plate(1.0, 1.0, 2, 2, 2).unwrap();
        let collapsed: Vec<V3> = p.control_points().iter().map(|c| V3::new(c.x, 0.0, 0.0)).collect();
        let e = surface_data(&p, p.control_points(), &collapsed, &p.locate([0.5, 0.5]).unwrap());
        assert!(matches!(e, Err(Error::SingularGeometry { .. })));
    }

    proptest! {
        #[test]
        fn invariants_at_random_points(u in 0.0f64..=1.0, v in 0.0f64..=1.0, s in -1.0f64..1.0) {
            let p = bumpy();
            let x0 = p.control_points().to_vec();
            let x = deform(&x0, s);
            let d = surface_data(&p, &x0, &x, &p.locate([u, v]).unwrap()).unwrap();
            for g in [&d.reference, &d.current] {
                prop_assert!((g.normal.norm() - 1.0).abs() < 1e-12);
                prop_assert!((g.curvature[(0, 1)] - g.curvature[(1, 0)]).abs() < 1e-12);
                prop_assert!((g.metric * g.inv_metric - Matrix2::identity()).norm() < 1e-12);
                prop_assert!(g.metric.determinant() > 0.0);
                for al in 0..2 {
                    for be in 0..2 {
                        let delta = if al == be { 1.0 } else { 0.0 };
                        prop_assert!((g.dual[al].dot(&g.tangents[be]) - delta).abs() < 1e-12);
                    }
                }
            }
            prop_assert!(d.stretch > 0.0);
            let ratio = (d.current.metric.determinant() / d.reference.metric.determinant()).sqrt();
            prop_assert!((d.stretch - ratio).abs() < 1e-12 * ratio);
            prop_assert!((d.strain - 0.5 * (d.current.metric - d.reference.metric)).norm() == 0.0);
            // F maps reference tangents onto current ones
            let f = d.deformation_gradient();
            for al in 0..2 {
                prop_assert!((f * d.reference.tangents[al] - d.current.tangents[al]).norm() < 1e-12);
            }
        }

        #[test]
        fn rigid_motion_invariance(
            u in 0.0f64..=1.0, v in 0.0f64..=1.0,
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in -3.0f64..3.0,
            t in prop::array::uniform3(-5.0f64..5.0),
        ) {
            let p = bumpy();
            let x0 = p.control_points().to_vec();
            let x = deform(&x0, 0.7);
            let axis = Unit::new_normalize(V3::new(ax, ay, 0.5));
            let rot = Rotation3::from_axis_angle(&axis, angle);
            let moved: Vec<V3> = x.iter().map(|c| rot * c + V3::from(t)).collect();
            let c = p.locate([u, v]).unwrap();
            let d1 = surface_data(&p, &x0, &x, &c).unwrap();
            let d2 = surface_data(&p, &x0, &moved, &c).unwrap();
            prop_assert!((d1.current.metric - d2.current.metric).norm() < 1e-10);
            prop_assert!((d1.current.curvature - d2.current.curvature).norm() < 1e-10);
            prop_assert!((d1.stretch - d2.stretch).abs() < 1e-10);
        }
    }
}
