//! Run configuration: a case preset or inline case plus overrides.
//!
//! Sources are layered: the JSON file, then `SHELLID_*` environment variables,
//! then command-line flags. An environment key maps to a config path by
//! lowercasing and splitting on `__`, so `SHELLID_CONVERGENCE__MESHES=[8,16]`
//! sets `convergence.meshes`. Values are parsed as JSON and fall back to a
//! plain string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use shellid_core::experiments::{preset, CaseSpec, InitialGuess};
use shellid_core::material::{Symmetry, KINDS};

use crate::CliError;

pub const ENV_PREFIX: &str = "SHELLID_";

/// A named preset or a complete inline case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaseRef {
    Name(String),
    Inline(Box<CaseSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "default_meshes")]
    pub meshes: Vec<usize>,
    #[serde(default = "default_reference")]
    pub reference: usize,
    /// Samples per direction of the comparison grid. Grids whose points land on
    /// the knots of the study meshes overstate the rate (nodal superconvergence).
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_meshes() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_reference() -> usize {
    128
}

fn default_samples() -> usize {
    66
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            meshes: default_meshes(),
            reference: default_reference(),
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseRef,
    #[serde(default)]
    pub analysis_mesh: Option<[usize; 2]>,
    #[serde(default)]
    pub fine_mesh: Option<[usize; 2]>,
    #[serde(default)]
    pub material_mesh: Option<[usize; 2]>,
    #[serde(default)]
    pub material_edges: Option<[Vec<f64>; 2]>,
    #[serde(default)]
    pub experiment_grid: Option<[usize; 2]>,
    /// Number of uniform load levels.
    #[serde(default)]
    pub n_ll: Option<usize>,
    #[serde(default)]
    pub noise: Option<f64>,
    /// Design-variable symmetry (`none`, `quarter`, `along_u`).
    #[serde(default)]
    pub symmetry: Option<Symmetry>,
    #[serde(default)]
    pub bounds: Option<[[f64; 2]; KINDS]>,
    #[serde(default)]
    pub initial: Option<InitialGuess>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Previously synthesized experiment directory used by `identify`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub repetitions: Option<usize>,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
}

impl RunConfig {
    /// Read `path` (if any) and layer the environment overrides on top.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Map::new()),
        };
        apply_env(&mut tree, env)?;
        Self::from_tree(tree)
    }

    pub fn from_tree(tree: Value) -> Result<Self, CliError> {
        serde_path_to_error::deserialize(tree).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    /// The case with all overrides applied, validated.
    pub fn resolve(&self) -> Result<CaseSpec, CliError> {
        let mut case = match &self.case {
            CaseRef::Name(n) => preset(n).map_err(|e| CliError::Config(e.to_string()))?,
            CaseRef::Inline(c) => (**c).clone(),
        };
        if let Some(m) = self.analysis_mesh {
            case.analysis_mesh = m;
        }
        if let Some(m) = self.fine_mesh {
            case.fine_mesh = m;
        }
        if let Some(m) = self.material_mesh {
            case.material_mesh = m;
            case.material_edges = None;
        }
        if let Some(e) = &self.material_edges {
            case.material_edges = Some(e.clone());
        }
        if let Some(g) = self.experiment_grid {
            case.experiment_grid = g;
        }
        if let Some(n) = self.n_ll {
            if n == 0 {
                return Err(CliError::Config("n_ll: must be positive".into()));
            }
            case = case.with_levels(n);
        }
        if let Some(v) = self.noise {
            case.noise = v;
        }
        if let Some(sym) = self.symmetry {
            case.symmetry = sym;
        }
        if let Some(b) = self.bounds {
            case.bounds = b;
        }
        if let Some(i) = &self.initial {
            case.initial = i.clone();
        }
        if let Some(n) = self.max_iterations {
            case.optimizer.max_iterations = n;
        }
        if self.repetitions == Some(0) {
            return Err(CliError::Config("repetitions: must be positive".into()));
        }
        if let Some(c) = &self.convergence {
            if c.meshes.is_empty() || c.meshes.contains(&0) || c.samples == 0 {
                return Err(CliError::Config("convergence: mesh sizes and samples must be positive".into()));
            }
        }
        case.validate().map_err(|e| CliError::Config(e.to_string()))?;
        case.material_grid().map_err(|e| CliError::Config(format!("material_edges: {e}")))?;
        Ok(case)
    }

    pub fn out_dir(&self, case: &CaseSpec) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&case.name))
    }
}

fn apply_env<I>(tree: &mut Value, env: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_lowercase(), v)))
        .collect();
    // deterministic order independent of the process environment
    vars.sort();
    for (key, raw) in vars {
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        let path: Vec<&str> = key.split("__").collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("{ENV_PREFIX}{}: malformed key", key.to_uppercase())));
        }
        set_path(tree, &path, value).map_err(|p| {
            CliError::Config(format!("{ENV_PREFIX}{}: {p} is not an object", key.to_uppercase()))
        })?;
    }
    Ok(())
}

fn set_path(tree: &mut Value, path: &[&str], value: Value) -> Result<(), String> {
    let Value::Object(map) = tree else {
        return Err("target".into());
    };
    match path {
        [last] => {
            map.insert(last.to_string(), value);
            Ok(())
        }
        [head, rest @ ..] => {
            let child = map.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new()));
            set_path(child, rest, value).map_err(|_| head.to_string())
        }
        [] => Ok(()),
    }
}
