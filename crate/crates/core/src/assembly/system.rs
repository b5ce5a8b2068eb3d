use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::dofs::{DofKind, DofMap, DIM};
use super::element::{element_terms, ElementRequest, ElementTerms, SENS_COLS};
use super::loads::AppliedLoad;
use super::mesh::Discretization;
use crate::constitutive::MaterialLaw;
use crate::error::{Error, Result};
use crate::kinematics::V3;
use crate::material::{MaterialEval, KINDS};

const CHUNK: usize = 256;
const NONE: u32 = u32::MAX;

/// Global arrays assembled at one state.
#[derive(Debug, Clone)]
pub struct GlobalTerms {
    pub f_int: Vec<f64>,
    pub f_ext: Vec<f64>,
    /// Free-free tangent values in the pattern order of [`System`].
    pub k_ff: Vec<f64>,
    /// Prescribed-row, free-column tangent entries `(prescribed index, free index, value)`;
    /// duplicates are to be summed.
    pub k_bf: Vec<(usize, usize, f64)>,
    /// Free-row, prescribed-column entries `(free index, prescribed index, value)`.
    pub k_fb: Vec<(usize, usize, f64)>,
    /// `d f_int / d q` over all dofs and the full node-major material vector.
    pub s: Option<DMatrix<f64>>,
}

impl GlobalTerms {
    /// `f_int - f_ext` over all dofs.
    pub fn residual(&self) -> Vec<f64> {
        self.f_int.iter().zip(&self.f_ext).map(|(a, b)| a - b).collect()
    }
}

/// Analysis mesh, dof partition and sparse tangent structure.
#[derive(Debug)]
pub struct System {
    disc: Discretization,
    dofs: DofMap,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Per element, `nd * nd` positions into the free-free value array.
    scatter: Vec<Vec<u32>>,
    symbolic: SymbolicLu<usize>,
}

impl System {
    pub fn new(disc: Discretization, dofs: DofMap) -> Result<Self> {
        let patch = disc.patch();
        if dofs.n_dofs() != DIM * patch.num_controls() {
            return Err(Error::InvalidInput(format!(
                "dof map has {} dofs, mesh needs {}",
                dofs.n_dofs(),
                DIM * patch.num_controls()
            )));
        }
        // sequential factorization keeps results bit-reproducible
        faer::set_global_parallelism(faer::Par::Seq);
        if dofs.n_free() == 0 {
            return Err(Error::InvalidInput("no free dofs".into()));
        }
        let element_free = |e: usize| -> Vec<Option<usize>> {
            patch
                .connectivity(e)
                .iter()
                .flat_map(|&c| (0..DIM).map(move |i| DIM * c + i))
                .map(|g| match dofs.kind(g) {
                    DofKind::Free(f) => Some(f),
                    DofKind::Prescribed(_) => None,
                })
                .collect()
        };
        let nf = dofs.n_free();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); nf];
        for e in 0..patch.num_elements() {
            let fr: Vec<usize> = element_free(e).into_iter().flatten().collect();
            for &c in &fr {
                cols[c].extend_from_slice(&fr);
            }
        }
        let mut col_ptr = Vec::with_capacity(nf + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        if row_idx.len() >= NONE as usize {
            return Err(Error::InvalidInput("tangent pattern too large".into()));
        }
        let scatter = (0..patch.num_elements())
            .map(|e| {
                let fr = element_free(e);
                let nd = fr.len();
                let mut map = vec![NONE; nd * nd];
                for (i, ri) in fr.iter().enumerate() {
                    for (j, cj) in fr.iter().enumerate() {
                        if let (Some(r), Some(c)) = (ri, cj) {
                            let rows = &row_idx[col_ptr[*c]..col_ptr[*c + 1]];
                            let pos = rows.binary_search(r).expect("pattern covers element");
                            map[i * nd + j] = (col_ptr[*c] + pos) as u32;
                        }
                    }
                }
                map
            })
            .collect();
        let sym = SymbolicSparseColMatRef::new_checked(nf, nf, &col_ptr, None, &row_idx);
        let symbolic =
            SymbolicLu::try_new(sym).map_err(|e| Error::SingularMatrix(format!("symbolic factorization: {e:?}")))?;
        Ok(Self {
            disc,
            dofs,
            col_ptr,
            row_idx,
            scatter,
            symbolic,
        })
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Current control positions for a full displacement vector.
    pub fn positions(&self, u_full: &[f64]) -> Vec<V3> {
        super::dofs::displaced(self.disc.reference(), u_full)
    }

    /// Assemble forces, and optionally the tangent and the sensitivity matrix.
    /// Elements are evaluated in parallel and reduced in element order.
    pub fn assemble(
        &self,
        law: &MaterialLaw,
        material: &dyn MaterialEval,
        x: &[V3],
        load: &AppliedLoad,
        req: ElementRequest,
        n_material_nodes: usize,
    ) -> Result<GlobalTerms> {
        let n = self.dofs.n_dofs();
        let mut g = GlobalTerms {
            f_int: vec![0.0; n],
            f_ext: vec![0.0; n],
            k_ff: if req.tangent { vec![0.0; self.nnz()] } else { Vec::new() },
            k_bf: Vec::new(),
            k_fb: Vec::new(),
            s: req.sensitivity.then(|| DMatrix::zeros(n, KINDS * n_material_nodes)),
        };
        let elements: Vec<usize> = (0..self.disc.num_elements()).collect();
        for chunk in elements.chunks(CHUNK) {
            let terms: Vec<Result<ElementTerms>> = chunk
                .par_iter()
                .map(|&e| element_terms(&self.disc, law, material, e, x, load, req))
                .collect();
            for t in terms {
                self.scatter_element(&t?, &mut g, n_material_nodes)?;
            }
        }
        Ok(g)
    }

    fn scatter_element(&self, t: &ElementTerms, g: &mut GlobalTerms, n_material_nodes: usize) -> Result<()> {
        let conn = self.disc.patch().connectivity(t.element);
        let global: Vec<usize> = conn.iter().flat_map(|&c| (0..DIM).map(move |i| DIM * c + i)).collect();
        let nd = global.len();
        for (l, &gd) in global.iter().enumerate() {
            g.f_int[gd] += t.f_int[l];
            g.f_ext[gd] += t.f_ext[l];
        }
        if !t.k.is_empty() {
            let map = &self.scatter[t.element];
            for i in 0..nd {
                for j in 0..nd {
                    let v = t.k[i * nd + j];
                    let pos = map[i * nd + j];
                    if pos != NONE {
                        g.k_ff[pos as usize] += v;
                        continue;
                    }
                    match (self.dofs.kind(global[i]), self.dofs.kind(global[j])) {
                        (DofKind::Prescribed(p), DofKind::Free(f)) => g.k_bf.push((p, f, v)),
                        (DofKind::Free(f), DofKind::Prescribed(p)) => g.k_fb.push((f, p, v)),
                        _ => {}
                    }
                }
            }
        }
        if let Some(s) = g.s.as_mut() {
            for (m, &node) in t.material_nodes.iter().enumerate() {
                if node >= n_material_nodes {
                    return Err(Error::MaterialMapping(format!(
                        "material node {node} outside field of {n_material_nodes} nodes"
                    )));
                }
                for k in 0..KINDS {
                    let col = KINDS * node + k;
                    for (l, &gd) in global.iter().enumerate() {
                        s[(gd, col)] += t.s[l * SENS_COLS + m * KINDS + k];
                    }
                }
            }
        }
        Ok(())
    }

    /// Numeric LU of the free-free tangent, reusing the symbolic analysis.
    pub fn factorize(&self, k_ff: &[f64]) -> Result<Factorization> {
        if k_ff.len() != self.nnz() {
            return Err(Error::InvalidInput("tangent value array does not match the pattern".into()));
        }
        if k_ff.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("non-finite tangent entries".into()));
        }
        let nf = self.dofs.n_free();
        let sym = SymbolicSparseColMatRef::new_checked(nf, nf, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(sym, k_ff);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
        Ok(Factorization { lu, n: nf })
    }

    /// Dense copy of the free-free tangent (tests and small problems only).
    pub fn dense_k_ff(&self, k_ff: &[f64]) -> DMatrix<f64> {
        let nf = self.dofs.n_free();
        let mut m = DMatrix::zeros(nf, nf);
        for c in 0..nf {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                m[(self.row_idx[p], c)] += k_ff[p];
            }
        }
        m
    }

    /// `y += K_ff x`.
    pub fn k_ff_mul(&self, k_ff: &[f64], x: &[f64], y: &mut [f64]) {
        for c in 0..self.dofs.n_free() {
            let xc = x[c];
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += k_ff[p] * xc;
            }
        }
    }
}

pub struct Factorization {
    lu: Lu<usize, f64>,
    n: usize,
}

impl Factorization {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(b.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("solution is not finite".into()));
        }
        Ok(x)
    }

    /// Solve for every column of `rhs`.
    pub fn solve_many(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut b = Mat::<f64>::from_fn(self.n, rhs.ncols(), |i, j| rhs[(i, j)]);
        self.lu.solve_in_place(b.as_mut());
        let x = DMatrix::from_fn(self.n, rhs.ncols(), |i, j| b[(i, j)]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix("solution is not finite".into()));
        }
        Ok(x)
    }
}
