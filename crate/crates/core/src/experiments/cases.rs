use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{Discretization, DofMap, EdgeMoment, LoadCase, ReactionSpec, Region, Support, System};
use crate::constitutive::MaterialLaw;
use crate::error::{Error, Result};
use crate::forward::{ForwardProblem, ForwardSettings};
use crate::inverse::{InverseSettings, TrustRegionSettings};
use crate::material::{
    sample_reference, AnalyticMaterial, Axis, DesignMap, KindSpec, MaterialField, MaterialGrid, ScalarDistribution,
    Symmetry, KINDS,
};
use crate::spline::{make_curved_patch, make_plate, make_strip, Edge, HeightProfile, NurbsPatch};

/// Reference geometry of a case; meshes are chosen separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Plate { lx: f64, ly: f64 },
    Bump { lx: f64, ly: f64, height: f64, profile: HeightProfile },
}

impl Geometry {
    pub fn build(&self, mesh: [usize; 2]) -> Result<NurbsPatch> {
        if mesh.contains(&0) {
            return Err(Error::Config(format!("mesh {mesh:?} must have positive counts")));
        }
        match *self {
            Geometry::Plate { lx, ly } if lx > ly => make_strip(lx, ly, mesh[0], mesh[1], 2),
            Geometry::Plate { lx, ly } => make_plate(lx, ly, mesh[0], mesh[1], 2),
            Geometry::Bump {
                lx,
                ly,
                height,
                profile,
            } => make_curved_patch(lx, ly, height, mesh[0], mesh[1], 2, profile),
        }
    }
}

/// How the optimizer is started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialGuess {
    /// The same value for every variable of a kind.
    Constant { values: [f64; KINDS] },
    /// Uniform in the bounds, drawn from the run seed.
    Random,
    /// One value per design variable.
    Explicit { values: Vec<f64> },
    /// The reference distribution at the material nodes.
    Reference,
}

/// A complete synthetic identification problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub name: String,
    pub geometry: Geometry,
    pub law: MaterialLaw,
    pub supports: Vec<Support>,
    #[serde(default)]
    pub reactions: Vec<ReactionSpec>,
    pub load: LoadCase,
    pub reference: AnalyticMaterial,
    /// Analysis mesh used for identification.
    pub analysis_mesh: [usize; 2],
    /// Mesh used to synthesize the measurements.
    pub fine_mesh: [usize; 2],
    pub material_mesh: [usize; 2],
    /// Custom material element edges (normalized), overriding `material_mesh`.
    #[serde(default)]
    pub material_edges: Option<[Vec<f64>; 2]>,
    pub kinds: [KindSpec; KINDS],
    #[serde(default)]
    pub symmetry: Symmetry,
    pub bounds: [[f64; 2]; KINDS],
    pub initial: InitialGuess,
    pub experiment_grid: [usize; 2],
    #[serde(default)]
    pub noise: f64,
    /// Displacement components that receive noise.
    #[serde(default = "all_components")]
    pub noise_components: [bool; 3],
    #[serde(default = "yes")]
    pub use_reactions: bool,
    #[serde(default)]
    pub forward: ForwardSettings,
    #[serde(default)]
    pub optimizer: TrustRegionSettings,
    /// Material nodes left out of the secondary error metrics.
    #[serde(default)]
    pub excluded_nodes: Vec<usize>,
}

fn all_components() -> [bool; 3] {
    [true; 3]
}

fn yes() -> bool {
    true
}

impl CaseSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: [usize; 2]| {
            if v.contains(&0) {
                Err(Error::Config(format!("{what}: counts must be positive, got {v:?}")))
            } else {
                Ok(())
            }
        };
        positive("analysis_mesh", self.analysis_mesh)?;
        positive("fine_mesh", self.fine_mesh)?;
        positive("material_mesh", self.material_mesh)?;
        positive("experiment_grid", self.experiment_grid)?;
        if !(0.0..=0.1).contains(&self.noise) {
            return Err(Error::Config(format!("noise: {} outside [0, 0.1]", self.noise)));
        }
        for (k, b) in self.bounds.iter().enumerate() {
            if !(b[0] > 0.0 && b[0] < b[1]) {
                return Err(Error::Config(format!("bounds[{k}]: invalid interval {b:?}")));
            }
        }
        if !self.kinds.contains(&KindSpec::Free) {
            return Err(Error::Config("kinds: at least one parameter kind must be identified".into()));
        }
        self.load.validate().map_err(|e| Error::Config(format!("load: {e}")))?;
        Ok(())
    }

    pub fn patch(&self, mesh: [usize; 2]) -> Result<NurbsPatch> {
        self.geometry.build(mesh)
    }

    /// Forward problem on an `mesh[0] x mesh[1]` analysis mesh.
    pub fn problem(&self, mesh: [usize; 2]) -> Result<ForwardProblem> {
        let patch = self.patch(mesh)?;
        let dofs = DofMap::from_supports(&patch, &self.supports, &self.reactions)?;
        let sys = System::new(Discretization::new(patch)?, dofs)?;
        ForwardProblem::new(sys, self.law, self.load.clone())
    }

    pub fn material_grid(&self) -> Result<MaterialGrid> {
        match &self.material_edges {
            Some([u, v]) => MaterialGrid::new(u.clone(), v.clone()),
            None => MaterialGrid::uniform(self.material_mesh[0], self.material_mesh[1]),
        }
    }

    pub fn design_map(&self, grid: &MaterialGrid) -> DesignMap {
        DesignMap::new(grid, self.kinds, self.symmetry)
    }

    /// Reference distribution at the material nodes, located on the reference surface.
    pub fn reference_field(&self, grid: &MaterialGrid) -> Result<MaterialField> {
        let patch = self.patch(self.analysis_mesh)?;
        Ok(MaterialField {
            grid: grid.clone(),
            values: sample_reference(&self.reference, grid, &patch)?,
        })
    }

    pub fn inverse_settings(&self) -> InverseSettings {
        InverseSettings {
            bounds: self.bounds,
            optimizer: self.optimizer.clone(),
            use_reactions: self.use_reactions && !self.reactions.is_empty(),
            forward: self.forward,
            ..InverseSettings::default()
        }
    }

    /// Starting design vector; `seed` drives the random variant.
    pub fn initial_design(&self, design: &DesignMap, grid: &MaterialGrid, seed: u64) -> Result<Vec<f64>> {
        let n = design.n_var();
        let clamp = |v: usize, x: f64| {
            let b = self.bounds[design.var_kind(v)];
            x.clamp(b[0], b[1])
        };
        let x = match &self.initial {
            InitialGuess::Constant { values } => (0..n).map(|v| values[design.var_kind(v)]).collect(),
            InitialGuess::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n)
                    .map(|v| {
                        let b = self.bounds[design.var_kind(v)];
                        rng.random_range(b[0]..=b[1])
                    })
                    .collect()
            }
            InitialGuess::Explicit { values } => {
                if values.len() != n {
                    return Err(Error::Config(format!(
                        "initial.values: {} entries for {n} design variables",
                        values.len()
                    )));
                }
                values.clone()
            }
            InitialGuess::Reference => design.restrict(&self.reference_field(grid)?.to_vector()),
        };
        Ok(x.into_iter().enumerate().map(|(v, x)| clamp(v, x)).collect())
    }

    /// Uniform load levels `k / n`, `k = 1..n`.
    pub fn with_levels(mut self, n: usize) -> Self {
        self.load.levels = LoadCase::uniform_levels(n);
        self
    }
}

fn radial(base: f64) -> ScalarDistribution {
    ScalarDistribution::RadialCosine {
        base,
        amplitude: base,
        radius: 0.35,
        center: [0.5, 0.5],
    }
}

fn constant(value: f64) -> ScalarDistribution {
    ScalarDistribution::Constant { value }
}

/// Tighter than the solver default so that objective noise stays below the
/// optimizer tolerance.
fn forward_settings(max_increment: f64) -> ForwardSettings {
    ForwardSettings {
        tolerance: 1e-12,
        max_increment,
        ..ForwardSettings::default()
    }
}

fn fixed_z_everywhere() -> Support {
    Support {
        region: Region::All,
        dirs: [false, false, true],
        displacement: [0.0; 3],
    }
}

/// Uniaxial tension of a unit square with a radial shear-modulus bump.
pub fn uniaxial() -> CaseSpec {
    let mu0 = 1.0;
    CaseSpec {
        name: "uniaxial".into(),
        geometry: Geometry::Plate { lx: 1.0, ly: 1.0 },
        law: MaterialLaw::NeoHookeCanham,
        supports: vec![
            Support::edge(Edge::West, [true; 3]),
            Support::edge(Edge::East, [true, true, false]).with_displacement([1.0, 0.0, 0.0]),
            fixed_z_everywhere(),
        ],
        reactions: vec![ReactionSpec {
            name: "Rx".into(),
            edge: Edge::East,
            dir: 0,
        }],
        load: LoadCase::default(),
        reference: AnalyticMaterial::new(radial(mu0), constant(1e-3)),
        analysis_mesh: [16, 16],
        fine_mesh: [64, 64],
        material_mesh: [8, 8],
        material_edges: None,
        kinds: [KindSpec::Free, KindSpec::Fixed(1e-3)],
        symmetry: Symmetry::None,
        bounds: [[0.1 * mu0, 5.0 * mu0], [1e-4, 1e-2]],
        initial: InitialGuess::Random,
        experiment_grid: [66, 66],
        noise: 0.0,
        noise_components: [true; 3],
        use_reactions: true,
        forward: forward_settings(0.25),
        optimizer: TrustRegionSettings::default(),
        excluded_nodes: Vec::new(),
    }
}

/// Uniaxial tension with the top and bottom edges held in `Y`, free of corner singularities.
pub fn uniaxial_singularity_free() -> CaseSpec {
    let mut c = uniaxial();
    c.name = "uniaxial_singularity_free".into();
    c.supports.push(Support::edge(Edge::South, [false, true, false]));
    c.supports.push(Support::edge(Edge::North, [false, true, false]));
    c
}

fn bending(name: &str, c_dist: ScalarDistribution, c0: f64) -> CaseSpec {
    let m = 0.5e-4;
    CaseSpec {
        name: name.into(),
        geometry: Geometry::Plate { lx: 4.0, ly: 1.0 },
        law: MaterialLaw::NeoHookeCanham,
        supports: vec![
            Support::edge(Edge::West, [true; 3]),
            Support::edge(Edge::East, [false, false, true]),
        ],
        reactions: Vec::new(),
        load: LoadCase {
            moments: vec![
                EdgeMoment {
                    edge: Edge::West,
                    moment: m,
                },
                EdgeMoment {
                    edge: Edge::East,
                    moment: m,
                },
            ],
            levels: LoadCase::uniform_levels(4),
            ..LoadCase::default()
        },
        reference: AnalyticMaterial::new(constant(1.0), c_dist),
        analysis_mesh: [64, 1],
        fine_mesh: [4096, 1],
        material_mesh: [8, 1],
        material_edges: None,
        kinds: [KindSpec::Fixed(1.0), KindSpec::Free],
        symmetry: Symmetry::AlongU,
        bounds: [[0.1, 5.0], [0.4 * c0, 5.0 * c0]],
        initial: InitialGuess::Random,
        experiment_grid: [2049, 2],
        noise: 0.0,
        noise_components: [true, false, true],
        use_reactions: false,
        forward: forward_settings(1.0),
        optimizer: TrustRegionSettings::default(),
        excluded_nodes: Vec::new(),
    }
}

/// Pure bending of a `4 x 1` strip with a piecewise linear bending stiffness.
pub fn pure_bending_gradual() -> CaseSpec {
    let c0 = 1e-3;
    let c1 = 0.6 * c0;
    let dist = ScalarDistribution::PiecewiseLinear {
        axis: Axis::X,
        points: vec![[0.5, c0], [1.5, c1], [2.5, c1], [3.5, c0]],
    };
    bending("pure_bending_gradual", dist, c0)
}

/// Pure bending with a jump in bending stiffness over `0.04` of the length, on
/// an adapted three-element material mesh.
pub fn pure_bending_discontinuous() -> CaseSpec {
    let c0 = 2e-3;
    let c1 = 0.5 * c0;
    let dist = ScalarDistribution::PiecewiseLinear {
        axis: Axis::X,
        points: vec![[2.0, c0], [2.04, c1]],
    };
    let mut c = bending("pure_bending_discontinuous", dist, c0);
    c.analysis_mesh = [100, 1];
    c.material_mesh = [3, 1];
    c.material_edges = Some([vec![0.0, 0.5, 0.51, 1.0], vec![0.0, 1.0]]);
    c.noise_components = [true; 3];
    c
}

/// Inflation of a pinned flat sheet; shear modulus and bending stiffness both unknown.
pub fn sheet_inflation() -> CaseSpec {
    let (mu0, c0) = (1.0, 1e-3);
    let pinned = [Edge::West, Edge::East, Edge::South, Edge::North]
        .into_iter()
        .map(|e| Support::edge(e, [true; 3]))
        .collect();
    CaseSpec {
        name: "sheet_inflation".into(),
        geometry: Geometry::Plate { lx: 1.0, ly: 1.0 },
        law: MaterialLaw::NeoHookeCanham,
        supports: pinned,
        reactions: Vec::new(),
        load: LoadCase {
            pressure: 0.5,
            levels: LoadCase::uniform_levels(4),
            ..LoadCase::default()
        },
        reference: AnalyticMaterial::new(radial(mu0), radial(c0)),
        analysis_mesh: [16, 16],
        fine_mesh: [64, 64],
        material_mesh: [8, 8],
        material_edges: None,
        kinds: [KindSpec::Free, KindSpec::Free],
        symmetry: Symmetry::Quarter,
        bounds: [[0.1 * mu0, 5.0 * mu0], [0.4 * c0, 5.0 * c0]],
        initial: InitialGuess::Constant { values: [mu0, c0] },
        experiment_grid: [66, 66],
        noise: 0.0,
        noise_components: [true; 3],
        use_reactions: false,
        forward: forward_settings(0.25),
        optimizer: TrustRegionSettings::default(),
        excluded_nodes: Vec::new(),
    }
}

/// Pressurized doubly curved wall (cm, kPa), Koiter law with Young's modulus and
/// thickness unknown.
pub fn curved_wall() -> CaseSpec {
    let (e1, e2, t1, t2) = (20.0, 40.0, 1.0, 1.5);
    let pinned = [Edge::West, Edge::East, Edge::South, Edge::North]
        .into_iter()
        .map(|e| Support::edge(e, [true; 3]))
        .collect();
    let seventh = |k: f64| k / 7.0;
    let grid = MaterialGrid::uniform(7, 7).expect("static grid");
    CaseSpec {
        name: "curved_wall".into(),
        geometry: Geometry::Bump {
            lx: 20.0,
            ly: 20.0,
            height: 4.0,
            profile: HeightProfile::Parabolic,
        },
        law: MaterialLaw::KOITER_INCOMPRESSIBLE,
        supports: pinned,
        reactions: Vec::new(),
        load: LoadCase {
            pressure: 1.6,
            levels: LoadCase::uniform_levels(4),
            ..LoadCase::default()
        },
        reference: AnalyticMaterial::new(
            ScalarDistribution::PiecewiseLinear {
                axis: Axis::U,
                points: vec![[seventh(1.0), e1], [seventh(3.0), e2], [seventh(4.0), e2], [seventh(6.0), e1]],
            },
            ScalarDistribution::Parabolic {
                axis: Axis::V,
                edge: t1,
                center: t2,
            },
        ),
        analysis_mesh: [14, 14],
        fine_mesh: [56, 56],
        material_mesh: [7, 7],
        material_edges: None,
        kinds: [KindSpec::Free, KindSpec::Free],
        symmetry: Symmetry::None,
        bounds: [[5.0, 100.0], [0.5, 5.0]],
        initial: InitialGuess::Constant { values: [6.0, 4.0] },
        experiment_grid: [66, 66],
        noise: 0.0,
        noise_components: [true; 3],
        use_reactions: false,
        forward: forward_settings(0.25),
        optimizer: TrustRegionSettings::default(),
        excluded_nodes: grid.corner_nodes().to_vec(),
    }
}

/// All case generators by name.
pub fn case_library() -> Vec<CaseSpec> {
    vec![
        uniaxial(),
        uniaxial_singularity_free(),
        pure_bending_gradual(),
        pure_bending_discontinuous(),
        sheet_inflation(),
        curved_wall(),
    ]
}

pub fn preset(name: &str) -> Result<CaseSpec> {
    case_library().into_iter().find(|c| c.name == name).ok_or_else(|| {
        let names: Vec<String> = case_library().into_iter().map(|c| c.name).collect();
        Error::Config(format!("case: unknown case '{name}' (known: {})", names.join(", ")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::V3;

    #[test]
    fn library_presets_are_valid() {
        for c in case_library() {
            c.validate().unwrap();
            let grid = c.material_grid().unwrap();
            let p = c.problem(c.analysis_mesh).unwrap();
            // material mesh conforms to the analysis mesh
            crate::material::MaterialCoupling::new(p.patch(), &grid).unwrap();
            let json = serde_json::to_string(&c).unwrap();
            let back: CaseSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn preset_parameters() {
        let u = uniaxial();
        assert_eq!(u.bounds[0], [0.1, 5.0]);
        let d = DesignMap::new(&u.material_grid().unwrap(), u.kinds, Symmetry::Quarter);
        assert_eq!(d.n_var(), 25);
        assert_eq!(u.design_map(&u.material_grid().unwrap()).n_var(), 81);

        let g = pure_bending_gradual();
        assert_eq!(g.load.moments[0].moment, 0.5e-4);
        assert_eq!(g.bounds[1], [0.4e-3, 5e-3]);
        assert_eq!(g.design_map(&g.material_grid().unwrap()).n_var(), 9);
        let at = |x: f64| g.reference.eval([x / 4.0, 0.0], &V3::new(x, 0.0, 0.0))[1];
        assert!((at(0.2) - 1e-3).abs() < 1e-18);
        assert!((at(2.0) - 0.6e-3).abs() < 1e-18);
        assert!((at(1.0) - 0.8e-3).abs() < 1e-15);

        let dc = pure_bending_discontinuous();
        assert_eq!(dc.design_map(&dc.material_grid().unwrap()).n_var(), 4);
        let at = |x: f64| dc.reference.eval([x / 4.0, 0.0], &V3::new(x, 0.0, 0.0))[1];
        assert_eq!(at(1.0), 2e-3);
        assert_eq!(at(3.0), 1e-3);

        let i = sheet_inflation();
        assert_eq!(i.load.pressure, 0.5);
        assert_eq!(i.design_map(&i.material_grid().unwrap()).n_var(), 50);
        assert_eq!(i.bounds, [[0.1, 5.0], [0.4e-3, 5e-3]]);

        let w = curved_wall();
        assert_eq!(w.design_map(&w.material_grid().unwrap()).n_var(), 128);
        assert_eq!(w.excluded_nodes.len(), 4);
    }

    #[test]
    fn initial_designs() {
        let c = uniaxial();
        let grid = c.material_grid().unwrap();
        let d = c.design_map(&grid);
        let a = c.initial_design(&d, &grid, 3).unwrap();
        let b = c.initial_design(&d, &grid, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (0.1..=5.0).contains(&x)));
        assert_ne!(a, c.initial_design(&d, &grid, 4).unwrap());
        let r = CaseSpec {
            initial: InitialGuess::Reference,
            ..c.clone()
        };
        let x = r.initial_design(&d, &grid, 0).unwrap();
        // center node carries the full bump
        assert!((x[grid.node_index(4, 4)] - 2.0).abs() < 1e-12);
        let bad = CaseSpec {
            initial: InitialGuess::Explicit { values: vec![1.0] },
            ..c
        };
        assert!(bad.initial_design(&d, &grid, 0).is_err());
    }

    #[test]
    fn validation_reports_field() {
        let mut c = uniaxial();
        c.analysis_mesh = [0, 16];
        assert!(c.validate().unwrap_err().to_string().contains("analysis_mesh"));
        let mut c = uniaxial();
        c.noise = 0.2;
        assert!(c.validate().unwrap_err().to_string().contains("noise"));
        assert!(preset("nope").is_err());
    }
}
