use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::knots::{bernstein, bezier_extraction, KnotVector};
use super::patch::NurbsPatch;
use crate::error::{Error, Result};

/// Flat rectangular patch `[0, lx] x [0, ly]` in the XY plane with uniform
/// elements and a linear (affine) parameterization.
pub fn make_plate(lx: f64, ly: f64, nx: usize, ny: usize, degree: usize) -> Result<NurbsPatch> {
    check_dims(lx, ly, nx, ny, degree)?;
    let k1 = KnotVector::open_uniform(nx, degree);
    let k2 = KnotVector::open_uniform(ny, degree);
    let g1 = k1.greville();
    let g2 = k2.greville();
    let mut cps = Vec::with_capacity(g1.len() * g2.len());
    for &v in &g2 {
        for &u in &g1 {
            cps.push(Vector3::new(lx * u, ly * v, 0.0));
        }
    }
    let weights = vec![1.0; cps.len()];
    NurbsPatch::new([k1, k2], cps, weights)
}

/// Rectangular strip; identical to a plate but kept separate for readability at call sites.
pub fn make_strip(length: f64, width: f64, nx: usize, ny: usize, degree: usize) -> Result<NurbsPatch> {
    make_plate(length, width, nx, ny, degree)
}

/// Quadratic NURBS cylinder sector of radius `radius`, opening angle `angle`
/// (at most a half turn) and axial length `length`. The axis is Y; the first
/// parametric direction runs around the circumference.
pub fn make_cylinder(
    radius: f64,
    angle: f64,
    length: f64,
    n_circ: usize,
    n_axial: usize,
) -> Result<NurbsPatch> {
    check_dims(radius, length, n_circ, n_axial, 2)?;
    if !(angle > 0.0 && angle <= std::f64::consts::PI) {
        return Err(Error::InvalidInput(format!(
            "cylinder angle {angle} outside (0, pi]"
        )));
    }
    // one rational Bézier segment per quarter (or less)
    let segments = if angle > std::f64::consts::FRAC_PI_2 { 2 } else { 1 };
    let half = angle / (2.0 * segments as f64);
    let mut breaks = Vec::new();
    let mut homog: Vec<Vec<f64>> = Vec::new();
    for s in 0..segments {
        let a0 = -angle / 2.0 + 2.0 * half * s as f64;
        let am = a0 + half;
        let w = half.cos();
        let pts = [
            (a0, radius, 1.0),
            (am, radius / w, w),
            (a0 + 2.0 * half, radius, 1.0),
        ];
        for (k, &(a, r, wt)) in pts.iter().enumerate() {
            if s > 0 && k == 0 {
                continue;
            }
            homog.push(vec![wt * r * a.sin(), wt * r * a.cos(), wt]);
        }
        breaks.push(s as f64 / segments as f64);
    }
    breaks.push(1.0);
    let mut knots = vec![0.0, 0.0, 0.0];
    for &b in &breaks[1..segments] {
        knots.extend([b, b]);
    }
    knots.extend([1.0, 1.0, 1.0]);
    let mut kv = KnotVector::new(knots, 2)?;
    // refine uniformly in parameter within each segment
    let per_seg = n_circ.div_ceil(segments);
    if per_seg * segments != n_circ {
        return Err(Error::InvalidInput(format!(
            "n_circ = {n_circ} must be a multiple of {segments} for this angle"
        )));
    }
    for s in 0..segments {
        for k in 1..per_seg {
            let u = (s as f64 + k as f64 / per_seg as f64) / segments as f64;
            let (kv2, h2) = kv.insert_knot(u, &homog);
            kv = kv2;
            homog = h2;
        }
    }
    let ka = KnotVector::open_uniform(n_axial, 2);
    let ga = ka.greville();
    let mut cps = Vec::new();
    let mut weights = Vec::new();
    for &v in &ga {
        for h in &homog {
            let w = h[2];
            cps.push(Vector3::new(h[0] / w, v * length, h[1] / w - radius));
            weights.push(w);
        }
    }
    NurbsPatch::new([kv, ka], cps, weights)
}

/// Height profile of the curved generator over the unit parameter square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightProfile {
    /// `z = 16 h s(1-s) t(1-t)`, represented exactly by quadratic splines.
    Parabolic,
    /// `z = h sin(pi s) sin(pi t)`, fitted by least squares per direction.
    Sine,
}

/// Doubly curved bump over `[0, lx] x [0, ly]` with apex height `height`.
pub fn make_curved_patch(
    lx: f64,
    ly: f64,
    height: f64,
    nx: usize,
    ny: usize,
    degree: usize,
    profile: HeightProfile,
) -> Result<NurbsPatch> {
    let mut patch = make_plate(lx, ly, nx, ny, degree)?;
    let [k1, k2] = patch.knots().clone();
    let (h1, h2) = match profile {
        HeightProfile::Parabolic => (bump_coefficients(&k1), bump_coefficients(&k2)),
        HeightProfile::Sine => (fit_sine(&k1)?, fit_sine(&k2)?),
    };
    let mut cps = patch.control_points().to_vec();
    for (j, b) in h2.iter().enumerate() {
        for (i, a) in h1.iter().enumerate() {
            cps[i + h1.len() * j].z = height * a * b;
        }
    }
    patch = NurbsPatch::new([k1, k2], cps, patch.weights().to_vec())?;
    Ok(patch)
}

/// Exact spline coefficients of `4 s (1 - s)` via polar forms:
/// for a monomial of degree <= p the i-th coefficient is its blossom at
/// the knots `t_{i+1..i+p}`.
fn bump_coefficients(kv: &KnotVector) -> Vec<f64> {
    let p = kv.degree();
    let t = kv.knots();
    (0..kv.num_basis())
        .map(|i| {
            let args = &t[i + 1..=i + p];
            let lin = args.iter().sum::<f64>() / p as f64;
            let mut pairs = 0.0;
            for a in 0..p {
                for b in a + 1..p {
                    pairs += args[a] * args[b];
                }
            }
            let quad = if p >= 2 {
                pairs / (p * (p - 1) / 2) as f64
            } else {
                lin * lin
            };
            4.0 * (lin - quad)
        })
        .collect()
}

fn fit_sine(kv: &KnotVector) -> Result<Vec<f64>> {
    let p = kv.degree();
    let ops = bezier_extraction(kv.knots(), p)?;
    let spans = kv.spans();
    let n = kv.num_basis();
    let samples_per_span = 4 * (p + 1);
    let rows = spans.len() * samples_per_span;
    let mut a = DMatrix::<f64>::zeros(rows, n);
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut r = 0;
    for (e, s) in spans.iter().enumerate() {
        for k in 0..samples_per_span {
            let xi = -1.0 + 2.0 * (k as f64 + 0.5) / samples_per_span as f64;
            let (b, _, _) = bernstein(p, xi);
            for i in 0..=p {
                a[(r, s.first_basis + i)] = (0..=p).map(|j| ops[e][(i, j)] * b[j]).sum();
            }
            rhs[r] = (std::f64::consts::PI * s.to_global(xi)).sin();
            r += 1;
        }
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * rhs;
    let mut c = ata
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("sine fit normal equations".into()))?
        .solve(&atb);
    // pin the ends so boundaries stay flat
    c[0] = 0.0;
    c[n - 1] = 0.0;
    Ok(c.iter().copied().collect())
}

fn check_dims(a: f64, b: f64, n1: usize, n2: usize, degree: usize) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "dimensions must be positive, got {a} x {b}"
        )));
    }
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput(format!(
            "element counts must be positive, got {n1} x {n2}"
        )));
    }
    if degree < 2 {
        return Err(Error::InvalidInput(
            "Kirchhoff-Love shells need at least quadratic splines".into(),
        ));
    }
    Ok(())
}
