//! Knot vectors, Bernstein polynomials and Bézier extraction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KNOT_EPS: f64 = 1e-14;

/// A non-zero knot span `[start, end)` and the index of the first B-spline
/// function supported on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub start: f64,
    pub end: f64,
    pub first_basis: usize,
}

impl Span {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Map a global parameter inside the span to the local coordinate in `[-1, 1]`.
    pub fn to_local(&self, u: f64) -> f64 {
        2.0 * (u - self.start) / self.length() - 1.0
    }

    pub fn to_global(&self, xi: f64) -> f64 {
        self.start + 0.5 * (xi + 1.0) * self.length()
    }
}

/// Open, non-decreasing knot vector of a given degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotVectorDoc", into = "KnotVectorDoc")]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
struct KnotVectorDoc {
    degree: usize,
    knots: Vec<f64>,
}

impl TryFrom<KnotVectorDoc> for KnotVector {
    type Error = Error;
    fn try_from(doc: KnotVectorDoc) -> Result<Self> {
        KnotVector::new(doc.knots, doc.degree)
    }
}

impl From<KnotVector> for KnotVectorDoc {
    fn from(k: KnotVector) -> Self {
        KnotVectorDoc {
            degree: k.degree,
            knots: k.knots,
        }
    }
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        validate_open(&knots, degree)?;
        Ok(Self { knots, degree })
    }

    /// Open knot vector on `[0, 1]` with `n_spans` equal spans and simple interior knots.
    pub fn open_uniform(n_spans: usize, degree: usize) -> Self {
        let breaks: Vec<f64> = (0..=n_spans).map(|i| i as f64 / n_spans as f64).collect();
        Self::from_breaks(&breaks, degree)
    }

    /// Open knot vector with the given (strictly increasing) breakpoints, each
    /// interior breakpoint appearing once.
    pub fn from_breaks(breaks: &[f64], degree: usize) -> Self {
        assert!(breaks.len() >= 2, "need at least one span");
        let mut knots = vec![breaks[0]; degree + 1];
        knots.extend_from_slice(&breaks[1..breaks.len() - 1]);
        knots.extend(std::iter::repeat_n(breaks[breaks.len() - 1], degree + 1));
        Self { knots, degree }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.knots.len() - self.degree - 1])
    }

    pub fn spans(&self) -> Vec<Span> {
        let p = self.degree;
        (p..self.knots.len() - p - 1)
            .filter(|&k| self.knots[k + 1] - self.knots[k] > KNOT_EPS)
            .map(|k| Span {
                start: self.knots[k],
                end: self.knots[k + 1],
                first_basis: k - p,
            })
            .collect()
    }

    /// Greville abscissae; control points placed there reproduce linear geometry exactly.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Insert knot `u` once, updating homogeneous control values (one row per basis function).
    pub fn insert_knot(&self, u: f64, control: &[Vec<f64>]) -> (KnotVector, Vec<Vec<f64>>) {
        let p = self.degree;
        let k = self.find_knot_interval(u);
        let n = self.num_basis();
        assert_eq!(control.len(), n);
        let dim = control[0].len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..=n {
            if i + p <= k {
                out.push(control[i].clone());
            } else if i > k {
                out.push(control[i - 1].clone());
            } else {
                let alpha = (u - self.knots[i]) / (self.knots[i + p] - self.knots[i]);
                out.push(
                    (0..dim)
                        .map(|d| alpha * control[i][d] + (1.0 - alpha) * control[i - 1][d])
                        .collect(),
                );
            }
        }
        let mut knots = self.knots.clone();
        knots.insert(k + 1, u);
        (
            KnotVector {
                knots,
                degree: self.degree,
            },
            out,
        )
    }

    /// Index `k` with `U[k] <= u < U[k+1]` restricted to the domain spans.
    fn find_knot_interval(&self, u: f64) -> usize {
        let p = self.degree;
        let last = self.knots.len() - p - 2;
        let mut k = p;
        while k < last && self.knots[k + 1] <= u {
            k += 1;
        }
        k
    }
}

fn validate_open(knots: &[f64], degree: usize) -> Result<()> {
    if degree < 1 {
        return Err(Error::InvalidKnotVector("degree must be at least 1".into()));
    }
    if knots.len() < 2 * (degree + 1) {
        return Err(Error::InvalidKnotVector(format!(
            "{} knots are too few for degree {degree}",
            knots.len()
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidKnotVector("non-finite knot".into()));
    }
    if let Some(w) = knots.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidKnotVector(format!(
            "knots decrease at position {}",
            w + 1
        )));
    }
    let first = knots[0];
    let last = knots[knots.len() - 1];
    let open_start = knots[..=degree].iter().all(|&k| k == first);
    let open_end = knots[knots.len() - degree - 1..].iter().all(|&k| k == last);
    if !open_start || !open_end {
        return Err(Error::InvalidKnotVector(format!(
            "end knots must be repeated {} times",
            degree + 1
        )));
    }
    if last - first <= KNOT_EPS {
        return Err(Error::InvalidKnotVector("empty parameter domain".into()));
    }
    if knots[degree + 1..knots.len() - degree - 1]
        .windows(degree + 1)
        .any(|w| w[degree] - w[0] <= KNOT_EPS)
    {
        return Err(Error::InvalidKnotVector(format!(
            "interior knot multiplicity exceeds degree {degree}"
        )));
    }
    Ok(())
}

/// Bézier extraction operators, one `(p+1) x (p+1)` matrix per non-zero span.
///
/// Row `i` of operator `e` holds the Bernstein coefficients of the `i`-th
/// B-spline function supported on span `e`, so `N^e(xi) = C^e B(xi)`.
pub fn bezier_extraction(knots: &[f64], degree: usize) -> Result<Vec<DMatrix<f64>>> {
    validate_open(knots, degree)?;
    let p = degree;
    let m = knots.len();
    let u = knots;
    let mut ops = vec![DMatrix::<f64>::identity(p + 1, p + 1)];
    let mut alphas = vec![0.0; p + 1];
    let mut a = p;
    let mut b = p + 1;
    let mut nb = 0;
    while b < m - 1 {
        ops.push(DMatrix::identity(p + 1, p + 1));
        let i = b;
        while b < m - 1 && u[b + 1] == u[b] {
            b += 1;
        }
        let mult = b - i + 1;
        if mult < p {
            let numer = u[b] - u[a];
            for j in (mult + 1..=p).rev() {
                alphas[j - mult - 1] = numer / (u[a + j] - u[a]);
            }
            let r = p - mult;
            for j in 1..=r {
                let save = r - j;
                let s = mult + j;
                for k in (s..=p).rev() {
                    let alpha = alphas[k - s];
                    for row in 0..=p {
                        let v = alpha * ops[nb][(row, k)] + (1.0 - alpha) * ops[nb][(row, k - 1)];
                        ops[nb][(row, k)] = v;
                    }
                }
                if b < m - 1 {
                    for t in 0..=j {
                        let v = ops[nb][(p - j + t, p)];
                        ops[nb + 1][(save + t, save)] = v;
                    }
                }
            }
        }
        nb += 1;
        if b < m - 1 {
            a = b;
            b += 1;
        }
    }
    ops.truncate(nb);
    Ok(ops)
}

/// Bernstein polynomials of degree `p` on `[-1, 1]` with first and second derivatives.
pub fn bernstein(p: usize, xi: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let values = bernstein_values(p, xi);
    let mut d1 = vec![0.0; p + 1];
    let mut d2 = vec![0.0; p + 1];
    if p >= 1 {
        let lower = bernstein_values(p - 1, xi);
        let f = 0.5 * p as f64;
        for i in 0..=p {
            let left = if i >= 1 { lower[i - 1] } else { 0.0 };
            let right = if i < p { lower[i] } else { 0.0 };
            d1[i] = f * (left - right);
        }
    }
    if p >= 2 {
        let lower = bernstein_values(p - 2, xi);
        let f = 0.25 * (p * (p - 1)) as f64;
        let at = |k: isize| -> f64 {
            if k >= 0 && (k as usize) < lower.len() {
                lower[k as usize]
            } else {
                0.0
            }
        };
        for i in 0..=p {
            let i = i as isize;
            d2[i as usize] = f * (at(i - 2) - 2.0 * at(i - 1) + at(i));
        }
    }
    (values, d1, d2)
}

fn bernstein_values(p: usize, xi: f64) -> Vec<f64> {
    // de Casteljau-style recursion, stable on [-1, 1]
    let t = 0.5 * (xi + 1.0);
    let s = 1.0 - t;
    let mut b = vec![0.0; p + 1];
    b[0] = 1.0;
    for deg in 1..=p {
        for i in (0..=deg).rev() {
            let from_left = if i >= 1 { t * b[i - 1] } else { 0.0 };
            let from_same = if i < deg { s * b[i] } else { 0.0 };
            b[i] = from_left + from_same;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Basis values by de Boor's algorithm (repeated knot insertion) on unit control data.
    fn de_boor_basis(knots: &[f64], p: usize, u: f64) -> Vec<f64> {
        let n = knots.len() - p - 1;
        // locate span
        let mut k = p;
        while k < n - 1 && knots[k + 1] <= u {
            k += 1;
        }
        (0..n)
            .map(|target| {
                let mut d: Vec<f64> = (0..=p)
                    .map(|j| if j + k - p == target { 1.0 } else { 0.0 })
                    .collect();
                for r in 1..=p {
                    for j in (r..=p).rev() {
                        let i = j + k - p;
                        let denom = knots[i + p + 1 - r] - knots[i];
                        let alpha = if denom == 0.0 {
                            0.0
                        } else {
                            (u - knots[i]) / denom
                        };
                        d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
                    }
                }
                d[p]
            })
            .collect()
    }

    fn extracted_basis(knots: &[f64], p: usize, u: f64) -> Vec<f64> {
        let kv = KnotVector::new(knots.to_vec(), p).unwrap();
        let ops = bezier_extraction(knots, p).unwrap();
        let spans = kv.spans();
        let e = spans
            .iter()
            .position(|s| u >= s.start && u < s.end)
            .unwrap_or(spans.len() - 1);
        let span = spans[e];
        let (b, _, _) = bernstein(p, span.to_local(u));
        let mut out = vec![0.0; kv.num_basis()];
        for i in 0..=p {
            out[span.first_basis + i] = (0..=p).map(|j| ops[e][(i, j)] * b[j]).sum();
        }
        out
    }

    #[test]
    fn single_span_is_identity() {
        let ops = bezier_extraction(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(ops.len(), 1);
        assert_eq!(ops[0], DMatrix::identity(3, 3));
    }

    #[test]
    fn operator_count_matches_nonzero_spans() {
        let ops = bezier_extraction(&[0., 0., 0., 1., 2., 3., 3., 3.], 2).unwrap();
        assert_eq!(ops.len(), 3);
        let ops = bezier_extraction(&[0., 0., 0., 1., 1., 2., 2., 2.], 2).unwrap();
        assert_eq!(ops.len(), 2);
    }

    #[test]
    fn two_span_quadratic_matches_de_boor() {
        let knots = [0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 2.0];
        for k in 0..50 {
            let u = 2.0 * (k as f64 + 0.5) / 50.0;
            let a = extracted_basis(&knots, 2, u);
            let b = de_boor_basis(&knots, 2, u);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-13, "u={u}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn higher_degree_and_repeated_knots_match_de_boor() {
        let cases: Vec<(Vec<f64>, usize)> = vec![
            (vec![0., 0., 0., 0., 0.3, 0.5, 0.5, 0.9, 1., 1., 1., 1.], 3),
            (vec![0., 0., 0., 0.2, 0.2, 0.7, 1., 1., 1.], 2),
            (vec![0., 0., 0.25, 0.5, 0.75, 1., 1.], 1),
            (vec![0., 0., 0., 0., 0., 0.4, 0.6, 1., 1., 1., 1., 1.], 4),
        ];
        for (knots, p) in cases {
            for k in 0..97 {
                let u = (k as f64 + 0.31) / 97.0;
                let a = extracted_basis(&knots, p, u);
                let b = de_boor_basis(&knots, p, u);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-12, "p={p} u={u}");
                }
            }
        }
    }

    #[test]
    fn malformed_knots_rejected() {
        assert!(bezier_extraction(&[0., 0., 0., 2., 1., 1., 1.], 2).is_err());
        assert!(bezier_extraction(&[0., 0., 0.5, 1., 1., 1.], 2).is_err());
        assert!(bezier_extraction(&[0., 0., 0., 1., 1.], 2).is_err());
        assert!(KnotVector::new(vec![0., 0., 0., 0.5, 0.5, 0.5, 1., 1., 1.], 2).is_err());
    }

    #[test]
    fn bernstein_derivatives_match_differences() {
        for p in 1..=4 {
            for &xi in &[-0.8, -0.1, 0.37, 0.9] {
                let h = 1e-5;
                let (_, d1, d2) = bernstein(p, xi);
                let (vp, d1p, _) = bernstein(p, xi + h);
                let (vm, d1m, _) = bernstein(p, xi - h);
                for i in 0..=p {
                    assert!((d1[i] - (vp[i] - vm[i]) / (2.0 * h)).abs() < 1e-8);
                    assert!((d2[i] - (d1p[i] - d1m[i]) / (2.0 * h)).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn knot_insertion_preserves_curve() {
        let kv = KnotVector::open_uniform(2, 2);
        let ctrl: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0], vec![-2.0], vec![0.5]];
        let (kv2, ctrl2) = kv.insert_knot(0.3, &ctrl);
        for k in 0..20 {
            let u = k as f64 / 20.0;
            let b1 = de_boor_basis(kv.knots(), 2, u);
            let b2 = de_boor_basis(kv2.knots(), 2, u);
            let c1: f64 = b1.iter().zip(&ctrl).map(|(b, c)| b * c[0]).sum();
            let c2: f64 = b2.iter().zip(&ctrl2).map(|(b, c)| b * c[0]).sum();
            assert!((c1 - c2).abs() < 1e-13);
        }
    }

    #[test]
    fn greville_of_uniform_quadratic() {
        let g = KnotVector::open_uniform(2, 2).greville();
        assert_eq!(g, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
