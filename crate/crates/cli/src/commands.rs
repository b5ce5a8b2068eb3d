//! Subcommand implementations. Each writes CSV tables plus `summary.json`
//! into the run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use shellid_core::experiments::{
    identify_case, run_statistics, synthesize, CaseSpec, ExperimentData, RunOutcome, Statistics,
};
use shellid_core::forward::{convergence_study, parametric_grid, ConvergenceReport, Sampler};
use shellid_core::inverse::{write_trace, Termination};
use shellid_core::material::MaterialEval;

use crate::config::{ConvergenceConfig, RunConfig};
use crate::{exit, CliError};

/// Where a run wrote its files and how the process should exit.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub summary: Value,
    pub exit_code: i32,
}

fn termination_name(t: Termination) -> String {
    match serde_json::to_value(t) {
        Ok(Value::String(s)) => s,
        _ => format!("{t:?}"),
    }
}

fn write_summary(dir: &Path, summary: &Value) -> Result<(), CliError> {
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<(CaseSpec, PathBuf), CliError> {
    let case = cfg.resolve()?;
    let dir = cfg.out_dir(&case);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
    Ok((case, dir))
}

#[derive(Serialize)]
struct DisplacementRow {
    level: usize,
    point: usize,
    s: f64,
    t: f64,
    ux: f64,
    uy: f64,
    uz: f64,
}

#[derive(Serialize)]
struct LevelRow {
    level: usize,
    factor: f64,
    iterations: usize,
    residual_norm: f64,
}

#[derive(Serialize)]
struct ReactionRow<'a> {
    level: usize,
    set: usize,
    name: &'a str,
    value: f64,
}

/// Reference-material solve on the analysis mesh, sampled on the experiment grid;
/// runs the mesh study as well when `convergence` is configured.
pub fn run_forward(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, dir) = prepare(cfg)?;
    let start = Instant::now();
    let problem = case.problem(case.analysis_mesh)?;
    let solution = problem.solve(&case.reference, &case.forward)?;
    let points = parametric_grid(case.experiment_grid[0], case.experiment_grid[1]);
    let sampler = Sampler::new(problem.patch(), &points)?;

    let mut w = csv::Writer::from_path(dir.join("displacements.csv"))?;
    for (level, l) in solution.levels.iter().enumerate() {
        for (point, (p, u)) in points.iter().zip(sampler.sample(&l.u)).enumerate() {
            w.serialize(DisplacementRow {
                level,
                point,
                s: p[0],
                t: p[1],
                ux: u.x,
                uy: u.y,
                uz: u.z,
            })?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("levels.csv"))?;
    for (level, l) in solution.levels.iter().enumerate() {
        w.serialize(LevelRow {
            level,
            factor: l.factor,
            iterations: l.iterations,
            residual_norm: l.residual_norm,
        })?;
    }
    w.flush()?;
    let sets = problem.dofs().reactions();
    let mut w = csv::Writer::from_path(dir.join("reactions.csv"))?;
    for (level, l) in solution.levels.iter().enumerate() {
        for (set, (s, &value)) in sets.iter().zip(&l.reactions).enumerate() {
            w.serialize(ReactionRow {
                level,
                set,
                name: &s.name,
                value,
            })?;
        }
    }
    w.flush()?;

    let convergence = match &cfg.convergence {
        Some(c) => Some(study(&case, c, &dir)?),
        None => None,
    };
    let summary = json!({
        "command": "forward",
        "case": case.name,
        "analysis_mesh": case.analysis_mesh,
        "levels": solution.levels.iter().map(|l| json!({
            "factor": l.factor,
            "iterations": l.iterations,
            "residual_norm": l.residual_norm,
            "reactions": l.reactions,
        })).collect::<Vec<_>>(),
        "convergence": convergence,
        "wall_time": start.elapsed().as_secs_f64(),
    });
    write_summary(&dir, &summary)?;
    Ok(Outcome {
        out_dir: dir,
        summary,
        exit_code: exit::SUCCESS,
    })
}

/// Mesh sequence `n x n` (or `n x 1` for strips) against a reference mesh.
fn study(case: &CaseSpec, conv: &ConvergenceConfig, dir: &Path) -> Result<ConvergenceReport, CliError> {
    let strip = case.analysis_mesh[1] == 1;
    let build = |n: usize| {
        let p = case.problem(if strip { [n, 1] } else { [n, n] })?;
        Ok((p, Box::new(case.reference.clone()) as Box<dyn MaterialEval>))
    };
    let report = convergence_study(build, &conv.meshes, conv.reference, conv.samples, &case.forward)?;
    let mut w = csv::Writer::from_path(dir.join("convergence.csv"))?;
    w.write_record(["mesh", "elements", "error"])?;
    for ((m, e), err) in conv.meshes.iter().zip(&report.elements).zip(&report.errors) {
        w.write_record([m.to_string(), e.to_string(), err.to_string()])?;
    }
    w.flush()?;
    log::info!("convergence slope {:.3} over {:?}", report.slope, report.elements);
    Ok(report)
}

pub fn run_convergence(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, dir) = prepare(cfg)?;
    let start = Instant::now();
    let conv = cfg.convergence.clone().unwrap_or_default();
    let report = study(&case, &conv, &dir)?;
    let summary = json!({
        "command": "convergence",
        "case": case.name,
        "report": report,
        "wall_time": start.elapsed().as_secs_f64(),
    });
    write_summary(&dir, &summary)?;
    Ok(Outcome {
        out_dir: dir,
        summary,
        exit_code: exit::SUCCESS,
    })
}

pub fn run_synth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, dir) = prepare(cfg)?;
    let data = synthesize(&case, cfg.seed)?;
    data.save(&dir)?;
    let summary = json!({
        "command": "synth",
        "case": case.name,
        "meta": data.meta,
        "points": data.measurements.points.len(),
        "levels": data.measurements.levels,
    });
    write_summary(&dir, &summary)?;
    Ok(Outcome {
        out_dir: dir,
        summary,
        exit_code: exit::SUCCESS,
    })
}

fn write_q_opt(path: &Path, case: &CaseSpec, out: &RunOutcome) -> Result<(), CliError> {
    let names = case.law.param_names();
    let field = &out.identified.field;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "s", "t", names[0], names[1]])?;
    for (n, v) in field.values.iter().enumerate() {
        let p = field.grid.node_param(n);
        w.write_record([n.to_string(), p[0].to_string(), p[1].to_string(), v[0].to_string(), v[1].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_errors(path: &Path, case: &CaseSpec, out: &RunOutcome) -> Result<(), CliError> {
    let names = case.law.param_names();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "name", "node", "reference", "identified", "delta", "excluded"])?;
    for e in &out.errors.kinds {
        for (n, d) in e.delta.iter().enumerate() {
            w.write_record([
                e.kind.to_string(),
                names[e.kind].to_string(),
                n.to_string(),
                out.reference.values[n][e.kind].to_string(),
                out.identified.field.values[n][e.kind].to_string(),
                d.to_string(),
                out.errors.excluded_nodes.contains(&n).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_conditioning(path: &Path, case: &CaseSpec, out: &RunOutcome) -> Result<(), CliError> {
    let grid = case.material_grid()?;
    let design = case.design_map(&grid);
    let report = &out.identified.conditioning;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variable", "kind", "node", "column_norm", "weak"])?;
    for (v, norm) in report.column_norms.iter().enumerate() {
        w.write_record([
            v.to_string(),
            design.var_kind(v).to_string(),
            design.var_node(v).to_string(),
            norm.to_string(),
            report.weak.contains(&v).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Synthesize (or load) measurements and identify the material field.
/// Reaching the iteration limit still writes all outputs but exits with the
/// optimizer code.
pub fn run_identify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, dir) = prepare(cfg)?;
    let data = match &cfg.data {
        Some(d) => ExperimentData::load(d)?,
        None => synthesize(&case, cfg.seed)?,
    };
    let out = identify_case(&case, &data, cfg.seed)?;
    let opt = &out.identified.optimizer;
    write_q_opt(&dir.join("q_opt.csv"), &case, &out)?;
    write_trace(&dir.join("trace.csv"), &opt.history)?;
    write_errors(&dir.join("errors.csv"), &case, &out)?;
    write_conditioning(&dir.join("conditioning.csv"), &case, &out)?;
    let names = case.law.param_names();
    let metrics = |list: &[shellid_core::experiments::KindError]| -> Vec<Value> {
        list.iter()
            .map(|e| json!({"kind": e.kind, "name": names[e.kind], "delta_max": e.max, "delta_ave": e.ave}))
            .collect()
    };
    let status = termination_name(opt.termination);
    let summary = json!({
        "command": "identify",
        "case": case.name,
        "seed": cfg.seed,
        "status": status,
        "iterations": opt.iterations,
        "f": opt.f,
        "jacobian_evaluations": opt.jacobian_evaluations,
        "residual_evaluations": opt.residual_evaluations,
        "wall_time": opt.wall_time,
        "errors": metrics(&out.errors.kinds),
        "excluded_nodes": out.errors.excluded_nodes,
        "errors_without_excluded": metrics(&out.errors.without_excluded),
        "conditioning_ratio": out.identified.conditioning.ratio,
        "weak_variables": out.identified.conditioning.weak,
    });
    write_summary(&dir, &summary)?;
    let exit_code = if opt.termination == Termination::MaxIterations {
        log::error!("optimizer stopped at the iteration limit ({} iterations)", opt.iterations);
        exit::OPTIMIZER
    } else {
        exit::SUCCESS
    };
    Ok(Outcome {
        out_dir: dir,
        summary,
        exit_code,
    })
}

fn opt_string(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_statistics(dir: &Path, case: &CaseSpec, stats: &Statistics) -> Result<(), CliError> {
    let names = case.law.param_names();
    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record(["seed", "iterations", "f", "termination", "kind", "name", "delta_max", "delta_ave"])?;
    for r in &stats.runs {
        for &(k, max, ave) in &r.errors {
            w.write_record([
                r.seed.to_string(),
                r.iterations.to_string(),
                r.f.to_string(),
                termination_name(r.termination),
                k.to_string(),
                names[k].to_string(),
                max.to_string(),
                ave.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("statistics.csv"))?;
    w.write_record([
        "kind",
        "name",
        "runs",
        "delta_max_mean",
        "delta_max_std",
        "delta_ave_mean",
        "delta_ave_std",
        "skewness",
    ])?;
    for k in &stats.kinds {
        w.write_record([
            k.kind.to_string(),
            names[k.kind].to_string(),
            stats.runs.len().to_string(),
            k.delta_max.mean.to_string(),
            opt_string(k.delta_max.std),
            k.delta_ave.mean.to_string(),
            opt_string(k.delta_ave.std),
            opt_string(k.skewness),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("histogram.csv"))?;
    w.write_record(["kind", "name", "bin", "lower", "upper", "count"])?;
    for k in &stats.kinds {
        let h = &k.histogram;
        for (b, c) in h.counts.iter().enumerate() {
            w.write_record([
                k.kind.to_string(),
                names[k.kind].to_string(),
                b.to_string(),
                h.edges[b].to_string(),
                h.edges[b + 1].to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Repeated noisy identifications with seeds `seed + i`.
pub fn run_stats(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (case, dir) = prepare(cfg)?;
    let start = Instant::now();
    let repetitions = cfg.repetitions.unwrap_or(25);
    let stats = run_statistics(&case, repetitions, cfg.seed)?;
    write_statistics(&dir, &case, &stats)?;
    let summary = json!({
        "command": "stats",
        "case": case.name,
        "repetitions": repetitions,
        "statistics": stats,
        "wall_time": start.elapsed().as_secs_f64(),
    });
    write_summary(&dir, &summary)?;
    if stats.runs.is_empty() {
        return Err(CliError::Optimizer(format!("all {repetitions} repetitions failed")));
    }
    Ok(Outcome {
        out_dir: dir,
        summary,
        exit_code: exit::SUCCESS,
    })
}
