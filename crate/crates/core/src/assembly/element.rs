use nalgebra::Matrix3;

use super::loads::{edge_slot, AppliedLoad};
use super::mesh::Discretization;
use crate::constitutive::{energy_density, material_tangents, sensitivity_kernels, stresses, MaterialLaw};
use crate::error::{Error, Result};
use crate::kinematics::{LocalSurfaceData, SurfaceGeometry, V3};
use crate::material::{MaterialEval, KINDS};

/// Material nodes of the bilinear element covering one analysis element.
pub const MATERIAL_NODES: usize = 4;
/// Columns of an elemental sensitivity block.
pub const SENS_COLS: usize = MATERIAL_NODES * KINDS;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ElementRequest {
    pub tangent: bool,
    pub sensitivity: bool,
}

/// Elemental force vectors, tangent and sensitivity block.
#[derive(Debug, Clone)]
pub struct ElementTerms {
    pub element: usize,
    pub f_int: Vec<f64>,
    pub f_ext: Vec<f64>,
    /// `d(f_int - f_ext)/dx`, row-major `nd x nd`; empty unless requested.
    pub k: Vec<f64>,
    pub material_nodes: [usize; MATERIAL_NODES],
    /// `d f_int / d q`, row-major `nd x SENS_COLS` with column `m * KINDS + kind`.
    pub s: Vec<f64>,
}

fn skew(v: &V3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn add_block(k: &mut [f64], nd: usize, a: usize, b: usize, m: &Matrix3<f64>, scale: f64) {
    for i in 0..3 {
        let row = &mut k[(3 * a + i) * nd + 3 * b..(3 * a + i) * nd + 3 * b + 3];
        for j in 0..3 {
            row[j] += scale * m[(i, j)];
        }
    }
}

fn current_geometry(basis: &crate::spline::BasisValues, conn: &[usize], x: &[V3], e: usize) -> Result<SurfaceGeometry> {
    let (_, d, dd) = basis.interpolate(conn, x);
    SurfaceGeometry::from_derivatives(d, dd, e)
}

/// Covariant second derivatives `N_{;alpha beta} = N_{,alpha beta} - Gamma^gamma_{alpha beta} N_{,gamma}`.
fn covariant_hessians(basis: &crate::spline::BasisValues, gam: &[[[f64; 2]; 2]; 2]) -> Vec<[[f64; 2]; 2]> {
    basis
        .dn
        .iter()
        .zip(&basis.ddn)
        .map(|(d, dd)| {
            let mut h = *dd;
            for al in 0..2 {
                for be in 0..2 {
                    h[al][be] -= gam[0][al][be] * d[0] + gam[1][al][be] * d[1];
                }
            }
            h
        })
        .collect()
}

/// Force, tangent and sensitivity contributions of element `e` at current control positions `x`.
pub fn element_terms(
    disc: &Discretization,
    law: &MaterialLaw,
    material: &dyn MaterialEval,
    e: usize,
    x: &[V3],
    load: &AppliedLoad,
    req: ElementRequest,
) -> Result<ElementTerms> {
    let conn = disc.patch().connectivity(e);
    let ne = conn.len();
    let nd = 3 * ne;
    let mut out = ElementTerms {
        element: e,
        f_int: vec![0.0; nd],
        f_ext: vec![0.0; nd],
        k: if req.tangent { vec![0.0; nd * nd] } else { Vec::new() },
        material_nodes: [0; MATERIAL_NODES],
        s: if req.sensitivity { vec![0.0; nd * SENS_COLS] } else { Vec::new() },
    };
    let mut da = vec![[[V3::zeros(); 2]; 2]; ne];
    let mut db = vec![[[V3::zeros(); 2]; 2]; ne];
    let mut ga = vec![[[V3::zeros(); 2]; 2]; ne];
    let mut hb = vec![[[V3::zeros(); 2]; 2]; ne];
    let mut v = vec![V3::zeros(); ne];
    let mut mcov = vec![0.0; ne];

    for (qi, qp) in disc.points(e).iter().enumerate() {
        let b = &qp.basis;
        let cur = current_geometry(b, conn, x, e)?;
        let local = LocalSurfaceData::new(qp.reference, cur, e)?;
        let q = material.params_at(e, qp.xi, qp.param, &qp.position);
        let sr = stresses(law, q, &local);
        let w = qp.area_weight();
        let n = cur.normal;
        let at = cur.tangents;
        let ncov = covariant_hessians(b, &cur.christoffel());
        let tau = sr.tau;
        let mom = sr.moment;

        for a in 0..ne {
            let d = b.dn[a];
            let mut f = V3::zeros();
            let mut m = 0.0;
            for al in 0..2 {
                for be in 0..2 {
                    f += tau[(al, be)] * d[al] * at[be];
                    m += mom[(al, be)] * ncov[a][al][be];
                }
            }
            f += m * n;
            for i in 0..3 {
                out.f_int[3 * a + i] += w * f[i];
            }
        }

        if req.tangent {
            let t = material_tangents(law, q, &local);
            let s_bend: f64 = (0..2)
                .flat_map(|al| (0..2).map(move |be| (al, be)))
                .map(|(al, be)| mom[(al, be)] * cur.curvature[(al, be)])
                .sum();
            for a in 0..ne {
                let d = b.dn[a];
                v[a] = d[0] * cur.dual[0] + d[1] * cur.dual[1];
                let mut ms = 0.0;
                for al in 0..2 {
                    for be in 0..2 {
                        da[a][al][be] = d[al] * at[be] + d[be] * at[al];
                        db[a][al][be] = ncov[a][al][be] * n;
                        ms += mom[(al, be)] * ncov[a][al][be];
                    }
                }
                mcov[a] = ms;
                for al in 0..2 {
                    for be in 0..2 {
                        let mut g = V3::zeros();
                        let mut h = V3::zeros();
                        for gm in 0..2 {
                            for dl in 0..2 {
                                g += t.tau_a[al][be][gm][dl] * da[a][gm][dl] + t.tau_b[al][be][gm][dl] * db[a][gm][dl];
                                h += t.moment_a[al][be][gm][dl] * da[a][gm][dl]
                                    + t.moment_b[al][be][gm][dl] * db[a][gm][dl];
                            }
                        }
                        ga[a][al][be] = g;
                        hb[a][al][be] = h;
                    }
                }
            }
            let nn = n * n.transpose();
            for ia in 0..ne {
                let di = b.dn[ia];
                for jb in 0..ne {
                    let dj = b.dn[jb];
                    let mut blk = Matrix3::zeros();
                    let mut geo = 0.0;
                    for al in 0..2 {
                        for be in 0..2 {
                            blk += 0.5 * da[ia][al][be] * ga[jb][al][be].transpose()
                                + db[ia][al][be] * hb[jb][al][be].transpose();
                            geo += tau[(al, be)] * di[al] * dj[be];
                        }
                    }
                    blk += Matrix3::identity() * geo;
                    blk -= mcov[jb] * n * v[ia].transpose()
                        + mcov[ia] * v[jb] * n.transpose()
                        + s_bend * v[ia].dot(&v[jb]) * nn;
                    add_block(&mut out.k, nd, ia, jb, &blk, w);
                }
            }
        }

        if req.sensitivity {
            let nodal = material.nodal(e, qp.xi).ok_or_else(|| {
                Error::MaterialMapping("sensitivities require a nodal material field".into())
            })?;
            if qi == 0 {
                out.material_nodes = nodal.nodes;
            }
            let kernels = sensitivity_kernels(law, q, &local);
            for (kind, ker) in kernels.iter().enumerate() {
                for a in 0..ne {
                    let d = b.dn[a];
                    let mut f = V3::zeros();
                    let mut m = 0.0;
                    for al in 0..2 {
                        for be in 0..2 {
                            f += ker.tau[(al, be)] * d[al] * at[be];
                            m += ker.moment[(al, be)] * ncov[a][al][be];
                        }
                    }
                    f += m * n;
                    for (mi, &sh) in nodal.shape.iter().enumerate() {
                        for i in 0..3 {
                            out.s[(3 * a + i) * SENS_COLS + mi * KINDS + kind] += w * sh * f[i];
                        }
                    }
                }
            }
        }

        if load.dead.norm_squared() > 0.0 {
            for a in 0..ne {
                for i in 0..3 {
                    out.f_ext[3 * a + i] += w * b.n[a] * load.dead[i];
                }
            }
        }
        if load.pressure != 0.0 {
            // follower pressure over the current area element
            let wp = qp.weight * load.pressure;
            let an = at[0].cross(&at[1]);
            let (s1, s2) = (skew(&at[1]), skew(&at[0]));
            for a in 0..ne {
                for i in 0..3 {
                    out.f_ext[3 * a + i] += wp * b.n[a] * an[i];
                }
                if req.tangent {
                    for jb in 0..ne {
                        let blk = s2 * b.dn[jb][1] - s1 * b.dn[jb][0];
                        add_block(&mut out.k, nd, a, jb, &blk, -wp * b.n[a]);
                    }
                }
            }
        }
    }

    if load.has_edge_loads() {
        for ep in disc.edge_points(e) {
            let slot = edge_slot(ep.edge);
            let (t, m) = (load.traction[slot], load.moment[slot]);
            if t.norm_squared() > 0.0 {
                for a in 0..ne {
                    for i in 0..3 {
                        out.f_ext[3 * a + i] += ep.ds * ep.basis.n[a] * t[i];
                    }
                }
            }
            if m != 0.0 {
                let cur = current_geometry(&ep.basis, conn, x, e)?;
                let n = cur.normal;
                let c: Vec<f64> = ep
                    .basis
                    .dn
                    .iter()
                    .map(|d| m * ep.ds * (ep.conormal[0] * d[0] + ep.conormal[1] * d[1]))
                    .collect();
                for a in 0..ne {
                    for i in 0..3 {
                        out.f_ext[3 * a + i] += c[a] * n[i];
                    }
                }
                if req.tangent {
                    for jb in 0..ne {
                        let d = ep.basis.dn[jb];
                        let vj = d[0] * cur.dual[0] + d[1] * cur.dual[1];
                        let blk = vj * n.transpose();
                        for a in 0..ne {
                            add_block(&mut out.k, nd, a, jb, &blk, c[a]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Strain energy `int W dA` stored in element `e`.
pub fn element_energy(
    disc: &Discretization,
    law: &MaterialLaw,
    material: &dyn MaterialEval,
    e: usize,
    x: &[V3],
) -> Result<f64> {
    let conn = disc.patch().connectivity(e);
    let mut total = 0.0;
    for qp in disc.points(e) {
        let cur = current_geometry(&qp.basis, conn, x, e)?;
        let local = LocalSurfaceData::new(qp.reference, cur, e)?;
        let q = material.params_at(e, qp.xi, qp.param, &qp.position);
        total += qp.area_weight() * energy_density(law, q, &local);
    }
    Ok(total)
}
