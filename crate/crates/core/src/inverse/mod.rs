//! Material-field identification by finite element model updating.

mod trust_region;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use trust_region::{
    minimize, IterationRecord, LeastSquares, Termination, TrustRegionResult, TrustRegionSettings,
};

use crate::assembly::{DofKind, ElementRequest, DIM};
use crate::error::{Error, Result};
use crate::forward::{norm, ForwardProblem, ForwardSettings, ForwardSolution, LevelSolution, Sampler};
use crate::material::{DesignMap, MaterialCoupling, MaterialField, MaterialGrid, NodalMaterial, KINDS};

/// Observed displacements and reactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    /// Normalized parametric coordinates of the measurement points.
    pub points: Vec<[f64; 2]>,
    /// Load factors of the observed states.
    pub levels: Vec<f64>,
    /// Per level, `[u_x, u_y, u_z]` of every point, flattened.
    pub displacements: Vec<Vec<f64>>,
    /// Per level, the net reaction of each reaction set.
    pub reactions: Vec<Vec<f64>>,
}

impl Measurements {
    pub fn validate(&self, n_sets: usize) -> Result<()> {
        let n = self.levels.len();
        if n == 0 || self.points.is_empty() {
            return Err(Error::InvalidInput("measurements need at least one level and one point".into()));
        }
        if self.displacements.len() != n || self.reactions.len() != n {
            return Err(Error::InvalidInput("measurement blocks do not match the number of levels".into()));
        }
        if self.displacements.iter().any(|d| d.len() != DIM * self.points.len()) {
            return Err(Error::InvalidInput("displacement block size does not match the points".into()));
        }
        if self.reactions.iter().any(|r| r.len() != n_sets) {
            return Err(Error::InvalidInput(format!("expected {n_sets} reactions per level")));
        }
        if self
            .displacements
            .iter()
            .chain(&self.reactions)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite measurement".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    /// Central differences with step `fd_step * |x_i|`.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseSettings {
    /// `[lower, upper]` for each parameter kind.
    pub bounds: [[f64; 2]; KINDS],
    pub optimizer: TrustRegionSettings,
    pub jacobian: JacobianMode,
    pub fd_step: f64,
    /// Include the reaction block in the objective.
    pub use_reactions: bool,
    pub forward: ForwardSettings,
}

impl Default for InverseSettings {
    fn default() -> Self {
        Self {
            bounds: [[1e-3, 1e3]; KINDS],
            optimizer: TrustRegionSettings::default(),
            jacobian: JacobianMode::Analytic,
            fd_step: 1e-6,
            use_reactions: true,
            forward: ForwardSettings::default(),
        }
    }
}

/// Residual vector at one design point with the forward states behind it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub f: f64,
    pub solution: ForwardSolution,
}

/// Identification problem on a fixed analysis mesh and material grid.
pub struct Identification<'a> {
    problem: &'a ForwardProblem,
    coupling: MaterialCoupling,
    design: DesignMap,
    sampler: Sampler,
    u_exp: Vec<f64>,
    r_exp: Vec<f64>,
    u_norm: f64,
    r_norm: f64,
    settings: InverseSettings,
    last: Option<Evaluation>,
    pub residual_evaluations: usize,
    pub jacobian_evaluations: usize,
}

impl<'a> Identification<'a> {
    pub fn new(
        problem: &'a ForwardProblem,
        grid: &MaterialGrid,
        design: DesignMap,
        data: &Measurements,
        settings: InverseSettings,
    ) -> Result<Self> {
        let n_sets = problem.dofs().reactions().len();
        data.validate(n_sets)?;
        if data.levels != problem.load.levels {
            return Err(Error::InvalidInput("measured load levels differ from the load case".into()));
        }
        if design.n_full() != KINDS * grid.num_nodes() {
            return Err(Error::InvalidInput("design map does not match the material grid".into()));
        }
        if design.n_var() == 0 {
            return Err(Error::InvalidInput("no design variables".into()));
        }
        for b in &settings.bounds {
            if !(b[0] > 0.0 && b[0] < b[1]) {
                return Err(Error::InvalidInput(format!("invalid bounds {b:?}")));
            }
        }
        let coupling = MaterialCoupling::new(problem.patch(), grid)?;
        let sampler = Sampler::new(problem.patch(), &data.points)?;
        let u_exp: Vec<f64> = data.displacements.concat();
        let r_exp: Vec<f64> = if settings.use_reactions { data.reactions.concat() } else { Vec::new() };
        let u_norm = norm(&u_exp);
        let r_norm = norm(&r_exp);
        if u_norm == 0.0 {
            return Err(Error::InvalidInput("measured displacements are identically zero".into()));
        }
        if !r_exp.is_empty() && r_norm == 0.0 {
            return Err(Error::InvalidInput("measured reactions are identically zero".into()));
        }
        Ok(Self {
            problem,
            coupling,
            design,
            sampler,
            u_exp,
            r_exp,
            u_norm,
            r_norm,
            settings,
            last: None,
            residual_evaluations: 0,
            jacobian_evaluations: 0,
        })
    }

    pub fn design(&self) -> &DesignMap {
        &self.design
    }

    pub fn settings(&self) -> &InverseSettings {
        &self.settings
    }

    /// Nodal material for design vector `x`.
    pub fn material(&self, x: &[f64]) -> Result<NodalMaterial> {
        let q = self.design.expand(x)?;
        let mut field = MaterialField::constant(self.coupling.grid().clone(), [0.0; KINDS]);
        field.set_from_vector(&q)?;
        field.check_positive()?;
        Ok(NodalMaterial {
            field,
            coupling: self.coupling.clone(),
        })
    }

    /// Per-variable lower and upper bounds and bound-midpoint scales.
    pub fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let b = |v: usize| self.settings.bounds[self.design.var_kind(v)];
        let n = self.design.n_var();
        (
            (0..n).map(|v| b(v)[0]).collect(),
            (0..n).map(|v| b(v)[1]).collect(),
            (0..n).map(|v| 0.5 * (b(v)[0] + b(v)[1])).collect(),
        )
    }

    fn model_vectors(&self, sol: &ForwardSolution) -> (Vec<f64>, Vec<f64>) {
        let u: Vec<f64> = sol.levels.iter().flat_map(|l| self.sampler.sample_flat(&l.u)).collect();
        let r: Vec<f64> = if self.r_exp.is_empty() {
            Vec::new()
        } else {
            sol.levels.iter().flat_map(|l| l.reactions.iter().copied()).collect()
        };
        (u, r)
    }

    /// Forward solve at `x` and the normalized residual blocks.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        let mat = self.material(x)?;
        let guess = self.last.as_ref().map(|e| &e.solution);
        let solution = self.problem.solve_from(&mat, &self.settings.forward, guess)?;
        self.residual_evaluations += 1;
        let (u, r) = self.model_vectors(&solution);
        let residual: Vec<f64> = self
            .u_exp
            .iter()
            .zip(&u)
            .map(|(e, m)| (e - m) / self.u_norm)
            .chain(self.r_exp.iter().zip(&r).map(|(e, m)| (e - m) / self.r_norm))
            .collect();
        let f = 0.5 * residual.iter().map(|v| v * v).sum::<f64>();
        let ev = Evaluation {
            x: x.to_vec(),
            residual,
            f,
            solution,
        };
        self.last = Some(ev.clone());
        Ok(ev)
    }

    fn evaluation_at(&mut self, x: &[f64]) -> Result<Evaluation> {
        match &self.last {
            Some(e) if e.x == x => Ok(e.clone()),
            _ => self.evaluate(x),
        }
    }

    /// Sensitivities of the sampled displacements and net reactions at one level
    /// with respect to the design variables.
    fn level_sensitivity(&self, mat: &NodalMaterial, level: &LevelSolution) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let sys = &self.problem.system;
        let dofs = sys.dofs();
        let x = sys.positions(&level.u);
        let req = ElementRequest {
            tangent: true,
            sensitivity: true,
        };
        let n_nodes = self.coupling.grid().num_nodes();
        let g = sys.assemble(&self.problem.law, mat, &x, &self.problem.load.at(level.factor), req, n_nodes)?;
        let s = self.design.reduce_columns(g.s.as_ref().expect("sensitivity requested"));
        let nv = s.ncols();
        let s_f = s.select_rows(dofs.free_dofs());
        // du_f/dx = -K_ff^{-1} S_f
        let du = -sys.factorize(&g.k_ff)?.solve_many(&s_f)?;

        let mut d_samples = DMatrix::zeros(DIM * self.sampler.len(), nv);
        for (p, (conn, n)) in self.sampler.rows().iter().enumerate() {
            for (&c, &w) in conn.iter().zip(n) {
                for dir in 0..DIM {
                    if let DofKind::Free(f) = dofs.kind(DIM * c + dir) {
                        let mut row = d_samples.row_mut(DIM * p + dir);
                        row += du.row(f) * w;
                    }
                }
            }
        }
        let mut d_per_dof = s.select_rows(dofs.prescribed_dofs());
        for &(p, f, v) in &g.k_bf {
            let mut row = d_per_dof.row_mut(p);
            row += du.row(f) * v;
        }
        let sets = dofs.reactions();
        let mut d_reactions = DMatrix::zeros(sets.len(), nv);
        for (k, set) in sets.iter().enumerate() {
            for &p in &set.members {
                let mut row = d_reactions.row_mut(k);
                row += d_per_dof.row(p);
            }
        }
        Ok((d_samples, d_reactions))
    }

    /// `dr/dx` from the adjoint-free direct sensitivity method.
    pub fn analytic_jacobian(&mut self, x: &[f64]) -> Result<DMatrix<f64>> {
        let ev = self.evaluation_at(x)?;
        let mat = self.material(x)?;
        let blocks = ev
            .solution
            .levels
            .par_iter()
            .map(|l| self.level_sensitivity(&mat, l))
            .collect::<Result<Vec<_>>>()?;
        let nv = self.design.n_var();
        let nu = self.u_exp.len();
        let mut j = DMatrix::zeros(nu + self.r_exp.len(), nv);
        let n_sets = self.problem.dofs().reactions().len();
        for (l, (du, dr)) in blocks.iter().enumerate() {
            let rows = du.nrows();
            j.view_mut((l * rows, 0), (rows, nv)).copy_from(&(du * (-1.0 / self.u_norm)));
            if !self.r_exp.is_empty() {
                j.view_mut((nu + l * n_sets, 0), (n_sets, nv))
                    .copy_from(&(dr * (-1.0 / self.r_norm)));
            }
        }
        self.jacobian_evaluations += 1;
        Ok(j)
    }

    /// Central-difference `dr/dx`.
    pub fn fd_jacobian(&mut self, x: &[f64]) -> Result<DMatrix<f64>> {
        let base = self.evaluation_at(x)?;
        let nv = x.len();
        let mut j = DMatrix::zeros(base.residual.len(), nv);
        for v in 0..nv {
            let h = self.settings.fd_step * x[v].abs().max(f64::MIN_POSITIVE);
            let mut xp = x.to_vec();
            xp[v] += h;
            let rp = self.evaluate(&xp)?.residual;
            let mut xm = x.to_vec();
            xm[v] -= h;
            let rm = self.evaluate(&xm)?.residual;
            for i in 0..rp.len() {
                j[(i, v)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        // keep the cache at the base point
        self.last = Some(base);
        self.jacobian_evaluations += 1;
        Ok(j)
    }

    /// Objective, gradient `J^T r` and Gauss-Newton Hessian `J^T J` in unscaled variables.
    pub fn gradient_and_hessian(&mut self, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let ev = self.evaluation_at(x)?;
        let j = LeastSquares::jacobian(self, x)?;
        let r = DVector::from_vec(ev.residual);
        Ok((ev.f, j.transpose() * &r, j.transpose() * &j))
    }

    /// Run the bounded trust-region minimization from `x0`.
    pub fn identify(&mut self, x0: &[f64]) -> Result<Identified> {
        let (lower, upper, scale) = self.variable_bounds();
        let opt = self.settings.optimizer.clone();
        let result = minimize(self, x0, &lower, &upper, &scale, &opt)?;
        let j = self.analytic_jacobian(&result.x)?;
        let q = self.design.expand(&result.x)?;
        let mut field = MaterialField::constant(self.coupling.grid().clone(), [0.0; KINDS]);
        field.set_from_vector(&q)?;
        Ok(Identified {
            x: result.x.clone(),
            q,
            field,
            conditioning: ConditioningReport::from_jacobian(&j),
            optimizer: result,
        })
    }
}

impl LeastSquares for Identification<'_> {
    fn n_var(&self) -> usize {
        self.design.n_var()
    }

    fn residual(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(x)?.residual)
    }

    fn jacobian(&mut self, x: &[f64]) -> Result<DMatrix<f64>> {
        match self.settings.jacobian {
            JacobianMode::Analytic => self.analytic_jacobian(x),
            JacobianMode::FiniteDifference => self.fd_jacobian(x),
        }
    }
}

/// Outcome of an identification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Identified {
    pub x: Vec<f64>,
    /// Full node-major material vector.
    pub q: Vec<f64>,
    pub field: MaterialField,
    pub conditioning: ConditioningReport,
    pub optimizer: TrustRegionResult,
}

/// Column norms of the Jacobian; small columns mark poorly determined variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub column_norms: Vec<f64>,
    /// Largest over smallest column norm.
    pub ratio: f64,
    /// Variables whose column norm is below `1e-3` of the largest.
    pub weak: Vec<usize>,
}

impl ConditioningReport {
    pub fn from_jacobian(j: &DMatrix<f64>) -> Self {
        let column_norms: Vec<f64> = j.column_iter().map(|c| c.norm()).collect();
        let max = column_norms.iter().copied().fold(0.0, f64::max);
        let min = column_norms.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            weak: column_norms
                .iter()
                .enumerate()
                .filter(|(_, &c)| c < 1e-3 * max)
                .map(|(i, _)| i)
                .collect(),
            ratio: if min > 0.0 { max / min } else { f64::INFINITY },
            column_norms,
        }
    }
}

/// Iteration trace as CSV (`iteration,f,step_norm,accepted,radius`).
pub fn write_trace(path: &Path, history: &[IterationRecord]) -> Result<()> {
    // explicit header so that an empty history still yields a valid table
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["iteration", "f", "step_norm", "accepted", "radius"])?;
    for h in history {
        w.serialize(h)?;
    }
    w.flush()?;
    Ok(())
}
