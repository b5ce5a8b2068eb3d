use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cases::CaseSpec;
use crate::error::{Error, Result};
use crate::forward::{parametric_grid, Sampler};
use crate::inverse::Measurements;

/// How a data set was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub case: String,
    pub fine_mesh: [usize; 2],
    pub grid: [usize; 2],
    pub noise_level: f64,
    pub noise_components: [bool; 3],
    pub seed: u64,
}

/// Synthetic measurements with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentData {
    pub meta: ExperimentMeta,
    pub measurements: Measurements,
}

/// Noise-free fine-mesh samples, reusable across noise seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanExperiment {
    pub case: String,
    pub fine_mesh: [usize; 2],
    pub grid: [usize; 2],
    pub measurements: Measurements,
}

/// Fine-mesh forward solve sampled on a uniform parametric grid. Refuses a
/// fine mesh that is not strictly finer than the analysis mesh of `case`.
pub fn synthesize_clean(case: &CaseSpec) -> Result<CleanExperiment> {
    case.validate()?;
    let (fine, coarse) = (case.fine_mesh, case.analysis_mesh);
    if fine[0] < coarse[0] || fine[1] < coarse[1] || fine == coarse {
        return Err(Error::Config(format!(
            "fine_mesh: {fine:?} is not strictly finer than the analysis mesh {coarse:?}"
        )));
    }
    let problem = case.problem(fine)?;
    let solution = problem.solve(&case.reference, &case.forward)?;
    let points = parametric_grid(case.experiment_grid[0], case.experiment_grid[1]);
    let sampler = Sampler::new(problem.patch(), &points)?;
    let measurements = Measurements {
        levels: solution.levels.iter().map(|l| l.factor).collect(),
        displacements: solution.levels.iter().map(|l| sampler.sample_flat(&l.u)).collect(),
        reactions: solution.levels.iter().map(|l| l.reactions.clone()).collect(),
        points,
    };
    Ok(CleanExperiment {
        case: case.name.clone(),
        fine_mesh: fine,
        grid: case.experiment_grid,
        measurements,
    })
}

/// `u_exp = u_h (1 + g)` per component with `g` uniform in `[-level, level]`;
/// reactions stay exact.
pub fn add_noise(clean: &CleanExperiment, level: f64, components: [bool; 3], seed: u64) -> ExperimentData {
    let mut measurements = clean.measurements.clone();
    if level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut measurements.displacements {
            for (i, u) in block.iter_mut().enumerate() {
                let g: f64 = rng.random_range(-level..=level);
                if components[i % 3] {
                    *u *= 1.0 + g;
                }
            }
        }
    }
    ExperimentData {
        meta: ExperimentMeta {
            case: clean.case.clone(),
            fine_mesh: clean.fine_mesh,
            grid: clean.grid,
            noise_level: level,
            noise_components: components,
            seed,
        },
        measurements,
    }
}

/// Synthetic experiment for `case` with its configured noise.
pub fn synthesize(case: &CaseSpec, seed: u64) -> Result<ExperimentData> {
    let clean = synthesize_clean(case)?;
    Ok(add_noise(&clean, case.noise, case.noise_components, seed))
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: ExperimentMeta,
    levels: Vec<f64>,
    n_points: usize,
    reaction_sets: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    level: usize,
    point: usize,
    s: f64,
    t: f64,
    ux: f64,
    uy: f64,
    uz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReactionRow {
    level: usize,
    set: usize,
    value: f64,
}

impl ExperimentData {
    /// Writes `experiment.json`, `displacements.csv` and `reactions.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let m = &self.measurements;
        let header = Header {
            meta: self.meta.clone(),
            levels: m.levels.clone(),
            n_points: m.points.len(),
            reaction_sets: m.reactions.first().map_or(0, Vec::len),
        };
        fs::write(dir.join("experiment.json"), serde_json::to_string_pretty(&header)?)?;
        let mut w = csv::Writer::from_path(dir.join("displacements.csv"))?;
        for (level, block) in m.displacements.iter().enumerate() {
            for (point, (p, u)) in m.points.iter().zip(block.chunks_exact(3)).enumerate() {
                w.serialize(PointRow {
                    level,
                    point,
                    s: p[0],
                    t: p[1],
                    ux: u[0],
                    uy: u[1],
                    uz: u[2],
                })?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("reactions.csv"))?;
        for (level, r) in m.reactions.iter().enumerate() {
            for (set, &value) in r.iter().enumerate() {
                w.serialize(ReactionRow { level, set, value })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header: Header = serde_json::from_str(&fs::read_to_string(dir.join("experiment.json"))?)?;
        let n_levels = header.levels.len();
        let mut points = vec![[0.0; 2]; header.n_points];
        let mut displacements = vec![vec![0.0; 3 * header.n_points]; n_levels];
        let mut rd = csv::Reader::from_path(dir.join("displacements.csv"))?;
        let mut count = 0;
        for row in rd.deserialize() {
            let r: PointRow = row?;
            if r.level >= n_levels || r.point >= header.n_points {
                return Err(Error::InvalidInput(format!("displacement row out of range: level {} point {}", r.level, r.point)));
            }
            points[r.point] = [r.s, r.t];
            displacements[r.level][3 * r.point..3 * r.point + 3].copy_from_slice(&[r.ux, r.uy, r.uz]);
            count += 1;
        }
        if count != n_levels * header.n_points {
            return Err(Error::InvalidInput(format!("expected {} displacement rows, found {count}", n_levels * header.n_points)));
        }
        let mut reactions = vec![vec![0.0; header.reaction_sets]; n_levels];
        let mut rd = csv::Reader::from_path(dir.join("reactions.csv"))?;
        for row in rd.deserialize() {
            let r: ReactionRow = row?;
            if r.level >= n_levels || r.set >= header.reaction_sets {
                return Err(Error::InvalidInput(format!("reaction row out of range: level {} set {}", r.level, r.set)));
            }
            reactions[r.level][r.set] = r.value;
        }
        Ok(Self {
            meta: header.meta,
            measurements: Measurements {
                points,
                levels: header.levels,
                displacements,
                reactions,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::cases::uniaxial;

    fn small_case() -> CaseSpec {
        let mut c = uniaxial().with_levels(2);
        c.analysis_mesh = [2, 2];
        c.fine_mesh = [4, 4];
        c.material_mesh = [2, 2];
        c.experiment_grid = [5, 5];
        c
    }

    #[test]
    fn refuses_equal_or_coarser_fine_mesh() {
        let mut c = small_case();
        c.fine_mesh = c.analysis_mesh;
        assert!(matches!(synthesize_clean(&c), Err(Error::Config(_))));
        c.fine_mesh = [8, 1];
        assert!(synthesize_clean(&c).is_err());
    }

    #[test]
    fn noise_free_and_bounded_noise() {
        let c = small_case();
        let clean = synthesize_clean(&c).unwrap();
        let zero = add_noise(&clean, 0.0, [true; 3], 7);
        assert_eq!(zero.measurements, clean.measurements);
        let noisy = add_noise(&clean, 0.04, [true, false, true], 7);
        for (a, b) in noisy.measurements.displacements.iter().flatten().zip(clean.measurements.displacements.iter().flatten()) {
            assert!((a - b).abs() <= 0.04 * b.abs() + 1e-300);
        }
        for (l, block) in noisy.measurements.displacements.iter().enumerate() {
            for (i, v) in block.iter().enumerate().filter(|(i, _)| i % 3 == 1) {
                assert_eq!(*v, clean.measurements.displacements[l][i]);
            }
        }
        assert_eq!(noisy.measurements.reactions, clean.measurements.reactions);
        assert_ne!(noisy.measurements, add_noise(&clean, 0.04, [true; 3], 8).measurements);
    }

    #[test]
    fn noise_is_unbiased() {
        // mean of u(1 + g) over many draws approaches u
        let clean = CleanExperiment {
            case: "unit".into(),
            fine_mesh: [1, 1],
            grid: [1, 1],
            measurements: Measurements {
                points: vec![[0.5, 0.5]],
                levels: vec![1.0],
                displacements: vec![vec![1.0; 3]],
                reactions: vec![vec![]],
            },
        };
        let level = 0.04;
        let n = 10_000;
        let mut sum = 0.0;
        for seed in 0..n {
            sum += add_noise(&clean, level, [true; 3], seed).measurements.displacements[0][0];
        }
        let mean = sum / n as f64;
        // standard error of a uniform variable on [-a, a] is a / sqrt(3 n)
        let se = level / (3.0 * n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn persistence_round_trip_and_determinism() {
        let c = small_case();
        let a = synthesize(&CaseSpec { noise: 0.02, ..c.clone() }, 11).unwrap();
        let b = synthesize(&CaseSpec { noise: 0.02, ..c }, 11).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let back = ExperimentData::load(dir.path()).unwrap();
        assert_eq!(back, a);
        let first = std::fs::read(dir.path().join("displacements.csv")).unwrap();
        b.save(dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("displacements.csv")).unwrap());
    }
}
