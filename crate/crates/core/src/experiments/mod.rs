//! Synthetic experiments, reference cases, error metrics and repeated runs.

mod cases;
mod metrics;
mod synth;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cases::{
    case_library, curved_wall, preset, pure_bending_discontinuous, pure_bending_gradual, sheet_inflation, uniaxial,
    uniaxial_singularity_free, CaseSpec, Geometry, InitialGuess,
};
pub use metrics::{error_metrics, ErrorReport, KindError};
pub use synth::{add_noise, synthesize, synthesize_clean, CleanExperiment, ExperimentData, ExperimentMeta};

use crate::error::Result;
use crate::forward::ForwardProblem;
use crate::inverse::{Identification, Identified, Termination};
use crate::material::{KindSpec, MaterialField, KINDS};

/// One identification with its error against the reference distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub case: String,
    pub seed: u64,
    pub initial: Vec<f64>,
    pub identified: Identified,
    pub reference: MaterialField,
    pub errors: ErrorReport,
}

/// Kinds identified in `case`.
pub fn free_kinds(case: &CaseSpec) -> Vec<usize> {
    (0..KINDS).filter(|&k| case.kinds[k] == KindSpec::Free).collect()
}

/// Identify the material of `case` from `data` on a prepared analysis problem.
/// `seed` only drives a random initial estimate.
pub fn identify_with(problem: &ForwardProblem, case: &CaseSpec, data: &ExperimentData, seed: u64) -> Result<RunOutcome> {
    let grid = case.material_grid()?;
    let design = case.design_map(&grid);
    let initial = case.initial_design(&design, &grid, seed)?;
    let mut id = Identification::new(problem, &grid, design, &data.measurements, case.inverse_settings())?;
    let identified = id.identify(&initial)?;
    let reference = case.reference_field(&grid)?;
    let errors = error_metrics(&reference, &identified.field, &free_kinds(case), &case.excluded_nodes)?;
    Ok(RunOutcome {
        case: case.name.clone(),
        seed,
        initial,
        identified,
        reference,
        errors,
    })
}

pub fn identify_case(case: &CaseSpec, data: &ExperimentData, seed: u64) -> Result<RunOutcome> {
    case.validate()?;
    let problem = case.problem(case.analysis_mesh)?;
    identify_with(&problem, case, data, seed)
}

/// Values relative to the first one; identical samples give exact zeros.
fn shifted(values: &[f64]) -> Vec<f64> {
    let v0 = values.first().copied().unwrap_or(0.0);
    values.iter().map(|v| v - v0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Unbiased sample standard deviation; absent for a single sample.
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let d = shifted(values);
        let dm = d.iter().sum::<f64>() / n;
        let mean = values.first().map_or(f64::NAN, |v0| v0 + dm);
        let std = (values.len() >= 2).then(|| (d.iter().map(|v| (v - dm).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || lo == hi || bins == 0 {
            return Self {
                edges: vec![lo, hi],
                counts: vec![values.len()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0; bins];
        for v in values {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
        Self {
            edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
            counts,
        }
    }
}

/// Sample skewness `m3 / m2^(3/2)`; `None` without spread.
pub fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    let d = shifted(values);
    let mean = d.iter().sum::<f64>() / n;
    let m2 = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = d.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStatistics {
    pub kind: usize,
    pub delta_max: Summary,
    pub delta_ave: Summary,
    pub histogram: Histogram,
    pub skewness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub seed: u64,
    pub iterations: usize,
    pub f: f64,
    pub termination: Termination,
    /// `(kind, delta_max, delta_ave)`
    pub errors: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub case: String,
    pub base_seed: u64,
    pub runs: Vec<Repetition>,
    /// Seeds of excluded repetitions with the reason.
    pub failures: Vec<(u64, String)>,
    pub kinds: Vec<KindStatistics>,
}

/// Repeat synthesis noise and identification with seeds `base_seed + i`.
/// The initial estimate is drawn once from `base_seed`, so the spread reflects
/// the noise alone. Non-converging repetitions are excluded and counted. With a
/// single repetition the standard deviations are absent.
pub fn run_statistics(case: &CaseSpec, repetitions: usize, base_seed: u64) -> Result<Statistics> {
    if repetitions == 0 {
        return Err(crate::error::Error::Config("repetitions: must be positive".into()));
    }
    case.validate()?;
    let clean = synthesize_clean(case)?;
    let problem = case.problem(case.analysis_mesh)?;
    let outcomes: Vec<(u64, Result<RunOutcome>)> = (0..repetitions as u64)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i;
            let data = add_noise(&clean, case.noise, case.noise_components, seed);
            (seed, identify_with(&problem, case, &data, base_seed))
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, out) in outcomes {
        match out {
            Ok(o) if o.identified.optimizer.termination != Termination::MaxIterations => runs.push(Repetition {
                seed,
                iterations: o.identified.optimizer.iterations,
                f: o.identified.optimizer.f,
                termination: o.identified.optimizer.termination,
                errors: o.errors.kinds.iter().map(|e| (e.kind, e.max, e.ave)).collect(),
            }),
            Ok(_) => failures.push((seed, "optimizer reached the iteration limit".to_string())),
            Err(e) if e.is_forward_failure() => failures.push((seed, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {repetitions} repetitions excluded", failures.len());
    }
    let kinds = free_kinds(case)
        .into_iter()
        .filter(|_| !runs.is_empty())
        .map(|k| {
            let pick = |f: fn(&(usize, f64, f64)) -> f64| -> Vec<f64> {
                runs.iter()
                    .map(|r| r.errors.iter().find(|e| e.0 == k).map(f).unwrap_or(f64::NAN))
                    .collect()
            };
            let max = pick(|e| e.1);
            let ave = pick(|e| e.2);
            KindStatistics {
                kind: k,
                delta_max: Summary::of(&max),
                delta_ave: Summary::of(&ave),
                histogram: Histogram::new(&ave, 10),
                skewness: skewness(&ave),
            }
        })
        .collect();
    Ok(Statistics {
        case: case.name.clone(),
        base_seed,
        runs,
        failures,
        kinds,
    })
}
