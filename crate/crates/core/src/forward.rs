//! Incremental Newton solution of the discrete equilibrium `f_int(u) - f_ext(u) = 0`.

use serde::{Deserialize, Serialize};

use crate::assembly::{DofMap, ElementRequest, GlobalTerms, LoadCase, System, DIM};
use crate::constitutive::MaterialLaw;
use crate::error::{Error, Result};
use crate::kinematics::V3;
use crate::material::MaterialEval;
use crate::spline::{NurbsPatch, ParamCoord};

/// Relative Newton correction below which the iterate is accepted even if the
/// residual test fails.
const STEP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardSettings {
    /// Converged when `|r_free| <= tolerance * force scale`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Number of times a failing load step may be halved.
    pub max_bisections: usize,
    /// Largest load-factor increment attempted in one step.
    pub max_increment: f64,
}

impl Default for ForwardSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            max_bisections: 12,
            max_increment: 1.0,
        }
    }
}

/// Mesh, boundary conditions, constitutive law and loading of one forward problem.
#[derive(Debug)]
pub struct ForwardProblem {
    pub system: System,
    pub law: MaterialLaw,
    pub load: LoadCase,
}

/// Converged state at one load level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    pub factor: f64,
    /// Displacements of all dofs (`3 control + dir`).
    pub u: Vec<f64>,
    /// `f_int - f_ext` at each prescribed dof.
    pub reactions_per_dof: Vec<f64>,
    /// Net reaction per configured set.
    pub reactions: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Residual norms of the Newton iterations of the final increment.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub levels: Vec<LevelSolution>,
}

impl ForwardSolution {
    pub fn last(&self) -> &LevelSolution {
        self.levels.last().expect("at least one level")
    }
}

impl ForwardProblem {
    pub fn new(system: System, law: MaterialLaw, load: LoadCase) -> Result<Self> {
        load.validate()?;
        Ok(Self { system, law, load })
    }

    pub fn dofs(&self) -> &DofMap {
        self.system.dofs()
    }

    pub fn patch(&self) -> &NurbsPatch {
        self.system.discretization().patch()
    }

    fn terms(
        &self,
        material: &dyn MaterialEval,
        u_free: &[f64],
        factor: f64,
        tangent: bool,
    ) -> Result<GlobalTerms> {
        let x = self.system.positions(&self.dofs().expand(u_free, factor));
        let req = ElementRequest {
            tangent,
            sensitivity: false,
        };
        self.system.assemble(&self.law, material, &x, &self.load.at(factor), req, 0)
    }

    /// Newton iteration at a fixed factor from `u_free`.
    fn newton(
        &self,
        material: &dyn MaterialEval,
        u_free: &mut Vec<f64>,
        factor: f64,
        settings: &ForwardSettings,
    ) -> Result<(usize, f64, Vec<f64>)> {
        let free = self.dofs().free_dofs();
        let mut history = Vec::new();
        let mut last_step = f64::INFINITY;
        for it in 0..=settings.max_iterations {
            let g = self.terms(material, u_free, factor, true)?;
            let r: Vec<f64> = free.iter().map(|&d| g.f_int[d] - g.f_ext[d]).collect();
            let rn = norm(&r);
            history.push(rn);
            let scale = norm(&g.f_int).max(norm(&g.f_ext));
            // the second test catches residuals stuck at the roundoff floor
            if rn <= settings.tolerance * scale || rn == 0.0 || last_step <= STEP_FLOOR {
                return Ok((it, rn, history));
            }
            if !rn.is_finite() || (history.len() > 3 && rn > 1e8 * history[0]) || it == settings.max_iterations {
                return Err(Error::NonConvergence {
                    load_factor: factor,
                    iterations: it,
                    residual: rn,
                });
            }
            let du = self.system.factorize(&g.k_ff)?.solve(&r)?;
            for (u, d) in u_free.iter_mut().zip(&du) {
                *u -= d;
            }
            let un = norm(u_free);
            last_step = if un > 0.0 { norm(&du) / un } else { f64::INFINITY };
        }
        unreachable!("loop returns on the last iteration")
    }

    /// Tangent predictor from a converged state at `f0` towards `f1`.
    fn predict(&self, material: &dyn MaterialEval, u_free: &[f64], f0: f64, f1: f64) -> Result<Vec<f64>> {
        let dofs = self.dofs();
        // forces at the new load with the old configuration, boundary dofs still at f0
        let x = self.system.positions(&dofs.expand(u_free, f0));
        let req = ElementRequest {
            tangent: true,
            sensitivity: false,
        };
        let g = self.system.assemble(&self.law, material, &x, &self.load.at(f1), req, 0)?;
        let mut rhs: Vec<f64> = dofs.free_dofs().iter().map(|&d| g.f_int[d] - g.f_ext[d]).collect();
        let vals = dofs.prescribed_values();
        for &(f, p, v) in &g.k_fb {
            rhs[f] += v * (f1 - f0) * vals[p];
        }
        let du = self.system.factorize(&g.k_ff)?.solve(&rhs)?;
        Ok(u_free.iter().zip(&du).map(|(u, d)| u - d).collect())
    }

    /// Advance from `(u_free, f0)` to `f1`, halving the increment on failure.
    fn advance(
        &self,
        material: &dyn MaterialEval,
        u_free: &mut Vec<f64>,
        f0: f64,
        f1: f64,
        settings: &ForwardSettings,
    ) -> Result<(usize, f64, Vec<f64>)> {
        let mut current = f0;
        let mut step = (f1 - f0).min(settings.max_increment.max(1e-6));
        let mut halvings = 0;
        let mut total_iterations = 0;
        loop {
            let target = if current + step >= f1 - 1e-14 { f1 } else { current + step };
            let attempt = self.predict(material, u_free, current, target).and_then(|mut trial| {
                let out = self.newton(material, &mut trial, target, settings)?;
                Ok((trial, out))
            });
            match attempt {
                Ok((trial, (its, rn, hist))) => {
                    *u_free = trial;
                    total_iterations += its;
                    current = target;
                    if current == f1 {
                        return Ok((total_iterations, rn, hist));
                    }
                }
                Err(e) if e.is_forward_failure() && halvings < settings.max_bisections => {
                    log::debug!("load step {current} -> {target} failed ({e}); halving");
                    step *= 0.5;
                    halvings += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Converged states at every load level of the load case.
    pub fn solve(&self, material: &dyn MaterialEval, settings: &ForwardSettings) -> Result<ForwardSolution> {
        self.solve_from(material, settings, None)
    }

    /// Like [`ForwardProblem::solve`], but each level first tries Newton from the
    /// matching level of `guess`, falling back to load stepping if that fails.
    pub fn solve_from(
        &self,
        material: &dyn MaterialEval,
        settings: &ForwardSettings,
        guess: Option<&ForwardSolution>,
    ) -> Result<ForwardSolution> {
        let dofs = self.dofs();
        let mut u_free = vec![0.0; dofs.n_free()];
        let mut prev = 0.0;
        let mut levels = Vec::with_capacity(self.load.levels.len());
        for (i, &factor) in self.load.levels.iter().enumerate() {
            let warm = guess
                .and_then(|g| g.levels.get(i))
                .filter(|l| l.factor == factor)
                .and_then(|l| {
                    let mut trial = dofs.restrict_free(&l.u);
                    match self.newton(material, &mut trial, factor, settings) {
                        Ok(out) => Some((trial, out)),
                        Err(e) => {
                            log::debug!("warm start at level {factor} failed ({e})");
                            None
                        }
                    }
                });
            let (iterations, residual_norm, history) = match warm {
                Some((trial, out)) => {
                    u_free = trial;
                    out
                }
                None => self.advance(material, &mut u_free, prev, factor, settings)?,
            };
            prev = factor;
            let u = dofs.expand(&u_free, factor);
            let g = self.terms(material, &u_free, factor, false)?;
            let reactions_per_dof: Vec<f64> = dofs.prescribed_dofs().iter().map(|&d| g.f_int[d] - g.f_ext[d]).collect();
            levels.push(LevelSolution {
                factor,
                reactions: dofs.sum_reactions(&reactions_per_dof),
                reactions_per_dof,
                u,
                iterations,
                residual_norm,
                history,
            });
        }
        Ok(ForwardSolution { levels })
    }
}

/// Free function form of [`ForwardProblem::solve`].
pub fn solve_forward(
    problem: &ForwardProblem,
    material: &dyn MaterialEval,
    settings: &ForwardSettings,
) -> Result<ForwardSolution> {
    problem.solve(material, settings)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Shape-function evaluation of displacement fields at fixed parametric points.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    /// Per point, the supporting controls and basis values.
    rows: Vec<(Vec<usize>, Vec<f64>)>,
}

impl Sampler {
    /// `points` are normalized parameters in `[0, 1]^2`.
    pub fn new(patch: &NurbsPatch, points: &[[f64; 2]]) -> Result<Self> {
        let dom = patch.domain();
        let rows = points
            .iter()
            .map(|p| {
                let u = [
                    dom[0].0 + p[0] * (dom[0].1 - dom[0].0),
                    dom[1].0 + p[1] * (dom[1].1 - dom[1].0),
                ];
                let c: ParamCoord = patch.locate(u)?;
                let b = patch.eval_basis(&c);
                Ok((patch.connectivity(c.element).to_vec(), b.n))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(Vec<usize>, Vec<f64>)] {
        &self.rows
    }

    /// Displacements `u^h` at the points from a full dof vector.
    pub fn sample(&self, u_full: &[f64]) -> Vec<V3> {
        self.rows
            .iter()
            .map(|(conn, n)| {
                conn.iter().zip(n).fold(V3::zeros(), |acc, (&c, &w)| {
                    acc + w * V3::new(u_full[DIM * c], u_full[DIM * c + 1], u_full[DIM * c + 2])
                })
            })
            .collect()
    }

    /// Same as [`Sampler::sample`] flattened to `[u_x, u_y, u_z, ...]`.
    pub fn sample_flat(&self, u_full: &[f64]) -> Vec<f64> {
        self.sample(u_full).iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }
}

/// Uniform `n1 x n2` grid of normalized parameters including the boundary.
pub fn parametric_grid(n1: usize, n2: usize) -> Vec<[f64; 2]> {
    let coord = |i: usize, n: usize| if n <= 1 { 0.5 } else { i as f64 / (n - 1) as f64 };
    (0..n2)
        .flat_map(|j| (0..n1).map(move |i| [coord(i, n1), coord(j, n2)]))
        .collect()
}

/// Result of a mesh-refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub elements: Vec<usize>,
    /// `|u_ref - u_h| / |u_ref|` over the sample grid.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log elements`.
    pub slope: f64,
    pub reference_elements: usize,
}

/// Discrete relative L2 error of `u` against `reference` (flattened samples).
pub fn relative_l2(reference: &[f64], u: &[f64]) -> f64 {
    let d: f64 = reference.iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum();
    let r: f64 = reference.iter().map(|a| a * a).sum();
    if r == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (d / r).sqrt()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Solve the problem produced by `build(n)` for each mesh size and compare the
/// final-level displacements against the solution for `reference`, sampled on an
/// `samples x samples` parametric grid.
pub fn convergence_study<F>(
    build: F,
    meshes: &[usize],
    reference: usize,
    samples: usize,
    settings: &ForwardSettings,
) -> Result<ConvergenceReport>
where
    F: Fn(usize) -> Result<(ForwardProblem, Box<dyn MaterialEval>)>,
{
    if meshes.iter().any(|&m| m > reference) {
        return Err(Error::InvalidInput("reference mesh must be at least as fine as every study mesh".into()));
    }
    let grid = parametric_grid(samples, samples);
    let run = |n: usize| -> Result<(Vec<f64>, usize)> {
        let (problem, material) = build(n)?;
        let sol = problem.solve(material.as_ref(), settings)?;
        let sampler = Sampler::new(problem.patch(), &grid)?;
        Ok((sampler.sample_flat(&sol.last().u), problem.patch().num_elements()))
    };
    let (u_ref, reference_elements) = run(reference)?;
    let mut elements = Vec::new();
    let mut errors = Vec::new();
    for &m in meshes {
        let (u, ne) = run(m)?;
        elements.push(ne);
        errors.push(relative_l2(&u_ref, &u));
    }
    let xs: Vec<f64> = elements.iter().map(|&e| e as f64).collect();
    let slope = if errors.iter().all(|&e| e > 0.0) && errors.len() > 1 {
        log_log_slope(&xs, &errors)
    } else {
        f64::NAN
    };
    Ok(ConvergenceReport {
        elements,
        errors,
        slope,
        reference_elements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{Discretization, EdgeMoment, ReactionSpec, Support};
    use crate::material::{MaterialField, MaterialGrid, NodalMaterial};
    use crate::spline::{make_plate, make_strip, Edge};

    fn strip_problem(n: usize, levels: Vec<f64>) -> (ForwardProblem, NodalMaterial) {
        let l = 1.0;
        let patch = make_strip(4.0 * l, l, n, 1, 2).unwrap();
        let supports = [
            Support::edge(Edge::West, [true; 3]),
            Support::edge(Edge::East, [false, false, true]),
        ];
        let dofs = DofMap::from_supports(&patch, &supports, &[]).unwrap();
        let mat = NodalMaterial::new(&patch, MaterialField::constant(MaterialGrid::uniform(1, 1).unwrap(), [1.0, 1e-3]))
            .unwrap();
        let load = LoadCase {
            moments: vec![
                EdgeMoment {
                    edge: Edge::West,
                    moment: 0.5e-4,
                },
                EdgeMoment {
                    edge: Edge::East,
                    moment: 0.5e-4,
                },
            ],
            levels,
            ..LoadCase::default()
        };
        let sys = System::new(Discretization::new(patch).unwrap(), dofs).unwrap();
        (ForwardProblem::new(sys, MaterialLaw::NeoHookeCanham, load).unwrap(), mat)
    }

    #[test]
    fn zero_load_gives_zero_solution() {
        let patch = make_plate(1.0, 1.0, 3, 3, 2).unwrap();
        let dofs = DofMap::from_supports(
            &patch,
            &[Support::edge(Edge::West, [true; 3])],
            &[ReactionSpec {
                name: "Rx".into(),
                edge: Edge::West,
                dir: 0,
            }],
        )
        .unwrap();
        let mat = NodalMaterial::new(&patch, MaterialField::constant(MaterialGrid::uniform(1, 1).unwrap(), [1.0, 0.1]))
            .unwrap();
        let sys = System::new(Discretization::new(patch).unwrap(), dofs).unwrap();
        let p = ForwardProblem::new(sys, MaterialLaw::NeoHookeCanham, LoadCase::default()).unwrap();
        let s = p.solve(&mat, &ForwardSettings::default()).unwrap();
        assert!(s.last().u.iter().all(|&v| v == 0.0));
        assert_eq!(s.last().reactions, vec![0.0]);
        assert_eq!(s.last().iterations, 0);
    }

    #[test]
    fn pure_bending_gives_uniform_curvature() {
        let (p, mat) = strip_problem(64, vec![1.0]);
        let sol = p.solve(&mat, &ForwardSettings::default()).unwrap();
        let x = p.system.positions(&sol.last().u);
        let patch = p.patch();
        let expected = 0.5e-4 / 1e-3;
        let mut worst: f64 = 0.0;
        for k in 1..40 {
            let u = k as f64 / 40.0;
            let c = patch.locate([u, 0.5]).unwrap();
            let g = crate::kinematics::geometry_at(patch, &x, &c).unwrap();
            let h = g.mean_curvature().abs();
            // H = kappa/2 for a cylinder
            worst = worst.max((2.0 * h - expected).abs() / expected);
        }
        assert!(worst < 0.01, "curvature error {worst}");
    }

    #[test]
    fn incremental_and_direct_agree() {
        let (p1, mat) = strip_problem(16, vec![1.0]);
        let (p4, _) = strip_problem(16, LoadCase::uniform_levels(4));
        let s = ForwardSettings::default();
        let a = p1.solve(&mat, &s).unwrap();
        let b = p4.solve(&mat, &s).unwrap();
        assert_eq!(b.levels.len(), 4);
        let d = relative_l2(&a.last().u, &b.last().u);
        assert!(d < 1e-9, "difference {d}");
    }

    #[test]
    fn newton_converges_quadratically() {
        let (p, mat) = strip_problem(16, vec![1.0]);
        let sol = p.solve(&mat, &ForwardSettings::default()).unwrap();
        let h = &sol.last().history;
        assert!(h.len() >= 3, "{h:?}");
        let n = h.len();
        let (r0, r1, r2) = (h[n - 3], h[n - 2], h[n - 1]);
        // r_{k+1} <= C r_k^2 with C measured on the previous pair
        let c = r1 / (r0 * r0);
        assert!(r2 <= 10.0 * c * r1 * r1 + 1e-14 * h[0], "{h:?}");
    }

    #[test]
    fn sampler_reproduces_affine_fields() {
        let patch = make_plate(2.0, 1.0, 3, 2, 2).unwrap();
        let grid = parametric_grid(5, 4);
        let s = Sampler::new(&patch, &grid).unwrap();
        let u: Vec<f64> = patch
            .control_points()
            .iter()
            .flat_map(|x| [0.1 * x.x, -0.2 * x.y, 0.3 * x.x * 0.0 + 0.05])
            .collect();
        let v = s.sample(&u);
        for (p, val) in grid.iter().zip(&v) {
            assert!((val.x - 0.1 * 2.0 * p[0]).abs() < 1e-14);
            assert!((val.y + 0.2 * p[1]).abs() < 1e-14);
            assert!((val.z - 0.05).abs() < 1e-14);
        }
    }

    #[test]
    fn slope_and_self_comparison() {
        let x = [64.0, 256.0, 1024.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((log_log_slope(&x, &y) + 1.5).abs() < 1e-12);
        assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    }
}
