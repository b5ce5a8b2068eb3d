use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{MaterialField, KINDS};

/// Relative nodal errors of one parameter kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindError {
    pub kind: usize,
    /// `delta_I = |(q_ref - q_opt) / q_ref|` per material node.
    pub delta: Vec<f64>,
    pub max: f64,
    pub ave: f64,
}

impl KindError {
    fn from_delta(kind: usize, delta: Vec<f64>) -> Self {
        let max = delta.iter().copied().fold(0.0, f64::max);
        let ave = if delta.is_empty() {
            0.0
        } else {
            delta.iter().sum::<f64>() / delta.len() as f64
        };
        Self { kind, delta, max, ave }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kinds: Vec<KindError>,
    pub excluded_nodes: Vec<usize>,
    /// Same metrics without `excluded_nodes` (empty when none are excluded).
    pub without_excluded: Vec<KindError>,
}

impl ErrorReport {
    pub fn kind(&self, k: usize) -> Option<&KindError> {
        self.kinds.iter().find(|e| e.kind == k)
    }

    pub fn kind_without_excluded(&self, k: usize) -> Option<&KindError> {
        self.without_excluded.iter().find(|e| e.kind == k)
    }
}

/// Per-node relative errors for the listed parameter kinds.
pub fn error_metrics(
    reference: &MaterialField,
    identified: &MaterialField,
    kinds: &[usize],
    excluded_nodes: &[usize],
) -> Result<ErrorReport> {
    if reference.grid != identified.grid || reference.values.len() != identified.values.len() {
        return Err(Error::Config("error metrics need fields on the same material mesh".into()));
    }
    let mut out = Vec::new();
    let mut reduced = Vec::new();
    for &k in kinds {
        if k >= KINDS {
            return Err(Error::Config(format!("parameter kind {k} out of range")));
        }
        let delta = reference
            .values
            .iter()
            .zip(&identified.values)
            .enumerate()
            .map(|(n, (r, o))| {
                if r[k] == 0.0 {
                    Err(Error::Config(format!("reference value of kind {k} at node {n} is zero")))
                } else {
                    Ok(((r[k] - o[k]) / r[k]).abs())
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if !excluded_nodes.is_empty() {
            let kept = delta
                .iter()
                .enumerate()
                .filter(|(n, _)| !excluded_nodes.contains(n))
                .map(|(_, &d)| d)
                .collect();
            reduced.push(KindError::from_delta(k, kept));
        }
        out.push(KindError::from_delta(k, delta));
    }
    Ok(ErrorReport {
        kinds: out,
        excluded_nodes: excluded_nodes.to_vec(),
        without_excluded: reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaterialGrid;
    use proptest::prelude::*;

    #[test]
    fn identical_fields_have_zero_error() {
        let g = MaterialGrid::uniform(2, 2).unwrap();
        let f = MaterialField::constant(g, [1.0, 2.0]);
        let r = error_metrics(&f, &f, &[0, 1], &[]).unwrap();
        assert_eq!(r.kind(0).unwrap().max, 0.0);
        assert_eq!(r.kind(1).unwrap().ave, 0.0);
    }

    #[test]
    fn single_perturbed_node() {
        let g = MaterialGrid::uniform(2, 2).unwrap();
        let reference = MaterialField::constant(g, [1.0, 1.0]);
        let mut opt = reference.clone();
        opt.values[4][0] = 0.9;
        let n = reference.values.len() as f64;
        let r = error_metrics(&reference, &opt, &[0], &[4]).unwrap();
        let e = r.kind(0).unwrap();
        assert!((e.max - 0.1).abs() < 1e-15);
        assert!((e.ave - 0.1 / n).abs() < 1e-15);
        assert_eq!(r.kind_without_excluded(0).unwrap().max, 0.0);
    }

    #[test]
    fn zero_reference_is_a_config_error() {
        let g = MaterialGrid::uniform(1, 1).unwrap();
        let reference = MaterialField::constant(g, [0.0, 1.0]);
        assert!(matches!(error_metrics(&reference, &reference, &[0], &[]), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn max_bounds_average(vals in proptest::collection::vec((0.1f64..10.0, 0.1f64..10.0), 4)) {
            let g = MaterialGrid::uniform(1, 1).unwrap();
            let reference = MaterialField { grid: g.clone(), values: vals.iter().map(|v| [v.0, 1.0]).collect() };
            let opt = MaterialField { grid: g, values: vals.iter().map(|v| [v.1, 1.0]).collect() };
            let r = error_metrics(&reference, &opt, &[0], &[]).unwrap();
            let e = r.kind(0).unwrap();
            prop_assert!(e.delta.iter().all(|&d| d >= 0.0));
            prop_assert!(e.max >= e.ave);
        }
    }
}
