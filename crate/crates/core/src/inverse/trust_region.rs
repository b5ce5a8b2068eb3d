use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonlinear least-squares problem `min 1/2 |r(x)|^2`.
pub trait LeastSquares {
    fn n_var(&self) -> usize;
    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>>;
    /// Jacobian `dr/dx` at the point of the most recent successful `residual` call.
    fn jacobian(&mut self, x: &[f64]) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionSettings {
    /// `|f_{k+1} - f_k|` must fall below this, and the scaled step norm below
    /// `tolerance (1 + |z_k|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial radius in scaled variables; `None` gives `0.1 |z_0|`.
    pub initial_radius: Option<f64>,
    pub shrink: f64,
    pub grow: f64,
    /// Minimum ratio of actual to predicted reduction for acceptance.
    pub eta: f64,
}

impl Default for TrustRegionSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            initial_radius: None,
            shrink: 0.25,
            grow: 2.0,
            eta: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Both stopping criteria satisfied.
    Converged,
    /// Gradient vanished or no model decrease is left.
    Stationary,
    MaxIterations,
    /// The trust region collapsed without an acceptable step.
    RadiusCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the trial point (`NaN` if its evaluation failed).
    pub f: f64,
    pub step_norm: f64,
    pub accepted: bool,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub jacobian_evaluations: usize,
    pub residual_evaluations: usize,
    pub termination: Termination,
    pub wall_time: f64,
}

fn half_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Gauss-Newton step on the free variables, regularized if `H` is singular.
fn gauss_newton(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += reg * scale;
        }
        if let Some(ch) = m.cholesky() {
            let p = -ch.solve(g);
            if p.iter().all(|v| v.is_finite()) {
                return p;
            }
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
    }
    -g.clone() / scale
}

/// Dogleg step for the model `g.p + 1/2 p.H.p` within `|p| <= radius`.
fn dogleg(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let gn = gauss_newton(h, g);
    if gn.norm() <= radius {
        return gn;
    }
    let ghg = g.dot(&(h * g));
    let gg = g.dot(g);
    let cauchy = if ghg > 0.0 { -(gg / ghg) * g } else { -g * (radius / g.norm()) };
    if cauchy.norm() >= radius {
        let len = cauchy.norm();
        return cauchy * (radius / len);
    }
    // largest t in [0, 1] with |c + t (gn - c)| = radius
    let d = &gn - &cauchy;
    let (a, b, c) = (d.dot(&d), 2.0 * cauchy.dot(&d), cauchy.dot(&cauchy) - radius * radius);
    let t = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    cauchy + t.clamp(0.0, 1.0) * d
}

fn model_decrease(h: &DMatrix<f64>, g: &DVector<f64>, p: &DVector<f64>) -> f64 {
    -(g.dot(p) + 0.5 * p.dot(&(h * p)))
}

/// Bound-constrained trust-region Gauss-Newton.
///
/// Variables are scaled as `z = x / scale`. Each iteration fixes variables held at
/// a bound by the gradient, takes a dogleg step on the rest and projects it onto
/// the box; if projection destroys the model decrease a projected Cauchy step is
/// used instead. Every iterate is feasible.
pub fn minimize<P: LeastSquares>(
    problem: &mut P,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    scale: &[f64],
    settings: &TrustRegionSettings,
) -> Result<TrustRegionResult> {
    let start = Instant::now();
    let n = problem.n_var();
    if x0.len() != n || lower.len() != n || upper.len() != n || scale.len() != n {
        return Err(Error::InvalidInput("optimizer vectors must match the number of variables".into()));
    }
    for i in 0..n {
        if !(lower[i] > 0.0 && lower[i] <= upper[i]) || !(scale[i] > 0.0) {
            return Err(Error::InvalidInput(format!("bad bounds or scale for variable {i}")));
        }
        if x0[i] < lower[i] || x0[i] > upper[i] {
            return Err(Error::InvalidInput(format!("initial value of variable {i} outside its bounds")));
        }
    }
    if !(settings.tolerance > 0.0) {
        return Err(Error::InvalidInput("stopping tolerance must be positive".into()));
    }
    let lo = DVector::from_fn(n, |i, _| lower[i] / scale[i]);
    let hi = DVector::from_fn(n, |i, _| upper[i] / scale[i]);
    let to_x = |z: &DVector<f64>| -> Vec<f64> { (0..n).map(|i| (z[i] * scale[i]).clamp(lower[i], upper[i])).collect() };
    let mut z = DVector::from_fn(n, |i, _| x0[i] / scale[i]);

    let mut residual_evaluations = 1;
    let mut r = DVector::from_vec(problem.residual(&to_x(&z))?);
    let mut f = half_sq(r.as_slice());
    let mut jacobian_evaluations = 0;
    let mut radius = settings.initial_radius.unwrap_or(0.1 * z.norm()).max(1e-8);
    let mut history = Vec::new();
    let mut need_jacobian = true;
    let (mut g, mut h) = (DVector::zeros(n), DMatrix::zeros(n, n));
    let mut termination = Termination::MaxIterations;

    let mut iteration = 0;
    while iteration < settings.max_iterations {
        if need_jacobian {
            let jx = problem.jacobian(&to_x(&z))?;
            jacobian_evaluations += 1;
            let mut jz = jx;
            for (c, &s) in scale.iter().enumerate() {
                jz.column_mut(c).scale_mut(s);
            }
            g = jz.transpose() * &r;
            h = jz.transpose() * &jz;
            need_jacobian = false;
        }
        // variables pinned at a bound by the gradient
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((z[i] <= lo[i] && g[i] > 0.0) || (z[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let g_free = DVector::from_fn(free.len(), |a, _| g[free[a]]);
        let gnorm = g_free.norm();
        if free.is_empty() || gnorm <= f64::EPSILON * f64::EPSILON * (1.0 + f) || f == 0.0 {
            termination = Termination::Stationary;
            break;
        }
        let h_free = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
        let p_free = dogleg(&h_free, &g_free, radius);
        let mut p = DVector::zeros(n);
        for (a, &i) in free.iter().enumerate() {
            p[i] = p_free[a];
        }
        let project = |p: &DVector<f64>| DVector::from_fn(n, |i, _| (z[i] + p[i]).clamp(lo[i], hi[i]) - z[i]);
        let mut step = project(&p);
        let mut pred = model_decrease(&h, &g, &step);
        if !(pred > 0.0) {
            // projected steepest descent limited by the radius
            let ghg = g.dot(&(&h * &g));
            let t = if ghg > 0.0 { (g.dot(&g) / ghg).min(radius / g.norm()) } else { radius / g.norm() };
            step = project(&(-t * &g));
            pred = model_decrease(&h, &g, &step);
        }
        if !(pred > 0.0) || pred <= f64::EPSILON * f {
            termination = Termination::Stationary;
            break;
        }
        let step_norm = step.norm();
        let step_tol = settings.tolerance * (1.0 + z.norm());
        // the model already predicts changes below both tolerances
        if step_norm <= step_tol && pred <= settings.tolerance {
            termination = Termination::Converged;
            break;
        }
        iteration += 1;
        let z_new = &z + &step;
        residual_evaluations += 1;
        let trial = match problem.residual(&to_x(&z_new)) {
            Ok(rv) => Some(DVector::from_vec(rv)),
            Err(e) if e.is_forward_failure() => {
                log::debug!("trial evaluation failed: {e}");
                None
            }
            Err(e) => return Err(e),
        };
        let f_new = trial.as_ref().map(|rv| half_sq(rv.as_slice())).unwrap_or(f64::NAN);
        let rho = (f - f_new) / pred;
        let accepted = f_new.is_finite() && rho > settings.eta && f_new < f;
        history.push(IterationRecord {
            iteration,
            f: f_new,
            step_norm,
            accepted,
            radius,
        });
        log::info!(
            "iter {iteration:3}  f {f_new:.6e}  |dz| {step_norm:.3e}  radius {radius:.3e}  {}",
            if accepted { "accepted" } else { "rejected" }
        );
        if accepted {
            let df = f - f_new;
            z = z_new;
            r = trial.expect("accepted steps have a residual");
            f = f_new;
            need_jacobian = true;
            if rho > 0.75 && step_norm >= 0.9 * radius {
                radius *= settings.grow;
            } else if rho < 0.25 {
                radius *= settings.shrink;
            }
            if df <= settings.tolerance && step_norm <= step_tol {
                termination = Termination::Converged;
                break;
            }
        } else {
            // a rejected step within both tolerances means f is at its noise floor
            if (f_new - f).abs() <= settings.tolerance && step_norm <= step_tol {
                termination = Termination::Converged;
                break;
            }
            radius = settings.shrink * step_norm.min(radius);
            if radius <= 1e-3 * settings.tolerance * (1.0 + z.norm()) {
                termination = Termination::RadiusCollapse;
                break;
            }
        }
    }
    Ok(TrustRegionResult {
        x: to_x(&z),
        f,
        iterations: iteration,
        history,
        jacobian_evaluations,
        residual_evaluations,
        termination,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rosenbrock as a least-squares problem.
    struct Rosen;

    impl LeastSquares for Rosen {
        fn n_var(&self) -> usize {
            2
        }
        fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
        }
        fn jacobian(&mut self, x: &[f64]) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]))
        }
    }

    /// Linear residual `A x - b` with known solution.
    struct Linear {
        a: DMatrix<f64>,
        b: DVector<f64>,
    }

    impl LeastSquares for Linear {
        fn n_var(&self) -> usize {
            self.a.ncols()
        }
        fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
            Ok((&self.a * DVector::from_column_slice(x) - &self.b).as_slice().to_vec())
        }
        fn jacobian(&mut self, _x: &[f64]) -> Result<DMatrix<f64>> {
            Ok(self.a.clone())
        }
    }

    #[test]
    fn solves_rosenbrock_inside_bounds() {
        let res = minimize(&mut Rosen, &[0.2, 0.3], &[0.1, 0.1], &[2.0, 2.0], &[1.0, 1.0], &TrustRegionSettings::default())
            .unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-8 && (res.x[1] - 1.0).abs() < 1e-8, "{:?}", res);
        assert!(res.f < 1e-20);
    }

    #[test]
    fn active_bound_solution() {
        // unconstrained minimizer (1,1) lies outside x0 <= 0.5
        let res = minimize(&mut Rosen, &[0.3, 0.3], &[0.1, 0.1], &[0.5, 2.0], &[1.0, 1.0], &TrustRegionSettings::default())
            .unwrap();
        assert_eq!(res.x[0], 0.5);
        assert!((res.x[1] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn starting_at_optimum_stops_immediately() {
        let res = minimize(&mut Rosen, &[1.0, 1.0], &[0.1, 0.1], &[2.0, 2.0], &[1.0, 1.0], &TrustRegionSettings::default())
            .unwrap();
        assert!(res.iterations <= 3);
        assert_eq!(res.f, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        let s = TrustRegionSettings::default();
        assert!(minimize(&mut Rosen, &[3.0, 1.0], &[0.1, 0.1], &[2.0, 2.0], &[1.0, 1.0], &s).is_err());
        assert!(minimize(&mut Rosen, &[1.0, 1.0], &[0.0, 0.1], &[2.0, 2.0], &[1.0, 1.0], &s).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn iterates_feasible_and_monotone(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let a = DMatrix::from_fn(6, n, |_, _| rng.random_range(-1.0..1.0));
            let xt = DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0));
            let b = &a * &xt;
            let lower = vec![0.2; n];
            let upper = vec![2.0; n];
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
            struct Rec<'a> { inner: Linear, seen: &'a mut Vec<Vec<f64>> }
            impl LeastSquares for Rec<'_> {
                fn n_var(&self) -> usize { self.inner.n_var() }
                fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> { self.seen.push(x.to_vec()); self.inner.residual(x) }
                fn jacobian(&mut self, x: &[f64]) -> Result<DMatrix<f64>> { self.inner.jacobian(x) }
            }
            let mut seen = Vec::new();
            let mut p = Rec { inner: Linear { a, b }, seen: &mut seen };
            let res = minimize(&mut p, &x0, &lower, &upper, &[1.1; 4], &TrustRegionSettings::default()).unwrap();
            for x in &seen {
                for i in 0..n {
                    prop_assert!(x[i] >= lower[i] && x[i] <= upper[i]);
                }
            }
            let accepted: Vec<f64> = res.history.iter().filter(|h| h.accepted).map(|h| h.f).collect();
            for w in accepted.windows(2) {
                prop_assert!(w[1] < w[0]);
            }
        }
    }
}
