//! Membrane stresses, bending moments, their tangents and parameter sensitivities.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::kinematics::LocalSurfaceData;

/// Fourth-order component array `T[alpha][beta][gamma][delta]`.
pub type Tensor4 = [[[[f64; 2]; 2]; 2]; 2];

/// Surface material law. Parameters are supplied pointwise as `[q_0, q_1]`:
/// `[mu, c]` for Neo-Hooke/Canham and `[E, T]` for Koiter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaterialLaw {
    /// Incompressible Neo-Hooke membrane with Canham bending.
    NeoHookeCanham,
    /// Koiter shell built from Saint Venant–Kirchhoff; `poisson = 0.5` is the incompressible case.
    Koiter {
        #[serde(default = "incompressible")]
        poisson: f64,
    },
}

fn incompressible() -> f64 {
    0.5
}

impl MaterialLaw {
    pub const KOITER_INCOMPRESSIBLE: MaterialLaw = MaterialLaw::Koiter { poisson: 0.5 };

    pub fn param_names(&self) -> [&'static str; 2] {
        match self {
            MaterialLaw::NeoHookeCanham => ["mu", "c"],
            MaterialLaw::Koiter { .. } => ["E", "T"],
        }
    }

    /// True if stresses are linear in the parameters, so that `f_int = S q`.
    pub fn is_linear_in_params(&self) -> bool {
        matches!(self, MaterialLaw::NeoHookeCanham)
    }
}

/// Membrane stress `tau^{alpha beta}` and bending moment `M_0^{alpha beta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressResultants {
    pub tau: Matrix2<f64>,
    pub moment: Matrix2<f64>,
}

impl StressResultants {
    pub fn zero() -> Self {
        Self {
            tau: Matrix2::zeros(),
            moment: Matrix2::zeros(),
        }
    }
}

/// Derivatives of the stress resultants with respect to the covariant
/// metric `a_{gamma delta}` and curvature `b_{gamma delta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialTangents {
    pub tau_a: Tensor4,
    pub tau_b: Tensor4,
    pub moment_a: Tensor4,
    pub moment_b: Tensor4,
}

/// 2D Lamé parameters of the Koiter model.
pub fn koiter_lame(e: f64, t: f64, poisson: f64) -> (f64, f64) {
    let mu = e * t / (2.0 * (1.0 + poisson));
    (mu, 2.0 * mu * poisson / (1.0 - poisson))
}

fn zero4() -> Tensor4 {
    [[[[0.0; 2]; 2]; 2]; 2]
}

/// `1/2 (X^{ag} Y^{bd} + X^{ad} Y^{bg})`
fn sym_product(x: &Matrix2<f64>, y: &Matrix2<f64>, a: usize, b: usize, g: usize, d: usize) -> f64 {
    0.5 * (x[(a, g)] * y[(b, d)] + x[(a, d)] * y[(b, g)])
}

/// Koiter stiffness per unit `E T`: `k1 I_dil + k2 I_dev`.
fn koiter_factors(poisson: f64) -> (f64, f64) {
    (
        poisson / ((1.0 + poisson) * (1.0 - poisson)),
        1.0 / (1.0 + poisson),
    )
}

/// `(k1 I_dil + k2 I_dev) : X` for a symmetric covariant `X`.
fn koiter_apply(ainv: &Matrix2<f64>, x: &Matrix2<f64>, poisson: f64) -> Matrix2<f64> {
    let (k1, k2) = koiter_factors(poisson);
    let tr = (ainv * x).trace();
    ainv * (k1 * tr) + (ainv * x * ainv) * k2
}

fn koiter_tensor(ainv: &Matrix2<f64>, poisson: f64, scale: f64) -> Tensor4 {
    let (k1, k2) = koiter_factors(poisson);
    let mut c = zero4();
    for a in 0..2 {
        for b in 0..2 {
            for g in 0..2 {
                for d in 0..2 {
                    c[a][b][g][d] = scale
                        * (k1 * ainv[(a, b)] * ainv[(g, d)] + k2 * sym_product(ainv, ainv, a, b, g, d));
                }
            }
        }
    }
    c
}

/// Neo-Hooke membrane stress and Canham bending moment.
pub fn neo_hooke_canham(mu: f64, c: f64, local: &LocalSurfaceData) -> StressResultants {
    let j = local.stretch;
    let ainv = &local.current.inv_metric;
    StressResultants {
        tau: (local.reference.inv_metric - ainv / (j * j)) * mu,
        moment: local.current.contravariant_curvature() * (c * j),
    }
}

/// Incompressible Koiter stresses (`poisson = 0.5`).
pub fn koiter(e: f64, t: f64, local: &LocalSurfaceData) -> StressResultants {
    koiter_general(e, t, 0.5, local)
}

fn koiter_general(e: f64, t: f64, poisson: f64, local: &LocalSurfaceData) -> StressResultants {
    let ainv = &local.reference.inv_metric;
    StressResultants {
        tau: koiter_apply(ainv, &local.strain, poisson) * (e * t),
        moment: koiter_apply(ainv, &local.relative_curvature, poisson) * (e * t * t * t / 12.0),
    }
}

pub fn stresses(law: &MaterialLaw, q: [f64; 2], local: &LocalSurfaceData) -> StressResultants {
    match *law {
        MaterialLaw::NeoHookeCanham => neo_hooke_canham(q[0], q[1], local),
        MaterialLaw::Koiter { poisson } => koiter_general(q[0], q[1], poisson, local),
    }
}

pub fn material_tangents(law: &MaterialLaw, q: [f64; 2], local: &LocalSurfaceData) -> MaterialTangents {
    match *law {
        MaterialLaw::NeoHookeCanham => {
            let (mu, c) = (q[0], q[1]);
            let j = local.stretch;
            let ai = &local.current.inv_metric;
            let bu = local.current.contravariant_curvature();
            let mut t = MaterialTangents {
                tau_a: zero4(),
                tau_b: zero4(),
                moment_a: zero4(),
                moment_b: zero4(),
            };
            let fm = mu / (j * j);
            let fc = c * j;
            for a in 0..2 {
                for b in 0..2 {
                    for g in 0..2 {
                        for d in 0..2 {
                            let aa = sym_product(ai, ai, a, b, g, d);
                            t.tau_a[a][b][g][d] = fm * (aa + ai[(a, b)] * ai[(g, d)]);
                            t.moment_b[a][b][g][d] = fc * aa;
                            t.moment_a[a][b][g][d] = fc
                                * (0.5 * bu[(a, b)] * ai[(g, d)]
                                    - sym_product(ai, &bu, a, b, g, d)
                                    - sym_product(&bu, ai, a, b, g, d));
                        }
                    }
                }
            }
            t
        }
        MaterialLaw::Koiter { poisson } => {
            let (e, th) = (q[0], q[1]);
            let ai = &local.reference.inv_metric;
            MaterialTangents {
                // d eps / d a = 1/2
                tau_a: koiter_tensor(ai, poisson, 0.5 * e * th),
                tau_b: zero4(),
                moment_a: zero4(),
                moment_b: koiter_tensor(ai, poisson, e * th * th * th / 12.0),
            }
        }
    }
}

/// Derivatives of the stress resultants with respect to each material parameter.
pub fn sensitivity_kernels(law: &MaterialLaw, q: [f64; 2], local: &LocalSurfaceData) -> [StressResultants; 2] {
    match *law {
        MaterialLaw::NeoHookeCanham => {
            let j = local.stretch;
            [
                StressResultants {
                    tau: local.reference.inv_metric - local.current.inv_metric / (j * j),
                    moment: Matrix2::zeros(),
                },
                StressResultants {
                    tau: Matrix2::zeros(),
                    moment: local.current.contravariant_curvature() * j,
                },
            ]
        }
        MaterialLaw::Koiter { poisson } => {
            let (e, t) = (q[0], q[1]);
            let ai = &local.reference.inv_metric;
            let ke = koiter_apply(ai, &local.strain, poisson);
            let kk = koiter_apply(ai, &local.relative_curvature, poisson);
            [
                StressResultants {
                    tau: ke * t,
                    moment: kk * (t * t * t / 12.0),
                },
                StressResultants {
                    tau: ke * e,
                    moment: kk * (e * t * t / 4.0),
                },
            ]
        }
    }
}

/// Surface strain energy density per reference area.
///
/// For Neo-Hooke/Canham the bending part `c/2 J b^{ab} b_{ab}` is consistent with
/// the moment only; its metric derivative is not part of the membrane stress.
pub fn energy_density(law: &MaterialLaw, q: [f64; 2], local: &LocalSurfaceData) -> f64 {
    match *law {
        MaterialLaw::NeoHookeCanham => membrane_energy(q[0], local) + canham_energy(q[1], local),
        MaterialLaw::Koiter { poisson } => {
            let (e, t) = (q[0], q[1]);
            let ai = &local.reference.inv_metric;
            let m = koiter_apply(ai, &local.strain, poisson) * (e * t);
            let b = koiter_apply(ai, &local.relative_curvature, poisson) * (e * t * t * t / 12.0);
            0.5 * (m.component_mul(&local.strain).sum() + b.component_mul(&local.relative_curvature).sum())
        }
    }
}

/// `mu/2 (A^{ab} a_{ab} + J^{-2} - 3)`
pub fn membrane_energy(mu: f64, local: &LocalSurfaceData) -> f64 {
    let i1 = local.reference.inv_metric.component_mul(&local.current.metric).sum();
    let j = local.stretch;
    0.5 * mu * (i1 + 1.0 / (j * j) - 3.0)
}

pub fn canham_energy(c: f64, local: &LocalSurfaceData) -> f64 {
    let bu = local.current.contravariant_curvature();
    0.5 * c * local.stretch * bu.component_mul(&local.current.curvature).sum()
}

/// Contract a tangent with a symmetric covariant increment: `T^{ab gd} X_{gd}`.
pub fn contract(t: &Tensor4, x: &Matrix2<f64>) -> Matrix2<f64> {
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut s = 0.0;
            for g in 0..2 {
                for d in 0..2 {
                    s += t[a][b][g][d] * x[(g, d)];
                }
            }
            out[(a, b)] = s;
        }
    }
    out
}
