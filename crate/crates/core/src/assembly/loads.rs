use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::V3;
use crate::spline::Edge;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTraction {
    pub edge: Edge,
    /// Force per reference length.
    pub traction: V3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMoment {
    pub edge: Edge,
    /// Bending moment per reference length about the edge tangent.
    pub moment: f64,
}

/// Applied loads at full level together with the load-level factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    /// Dead surface force per reference area.
    #[serde(default = "V3::zeros")]
    pub dead: V3,
    /// Follower pressure along the current normal, per current area.
    #[serde(default)]
    pub pressure: f64,
    #[serde(default)]
    pub tractions: Vec<EdgeTraction>,
    #[serde(default)]
    pub moments: Vec<EdgeMoment>,
    /// Load factors in `(0, 1]`, strictly increasing.
    pub levels: Vec<f64>,
}

impl Default for LoadCase {
    fn default() -> Self {
        Self {
            dead: V3::zeros(),
            pressure: 0.0,
            tractions: Vec::new(),
            moments: Vec::new(),
            levels: vec![1.0],
        }
    }
}

impl LoadCase {
    /// `n` equally spaced levels `k/n`.
    pub fn uniform_levels(n: usize) -> Vec<f64> {
        (1..=n).map(|k| k as f64 / n as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidInput("at least one load level is required".into()));
        }
        let mut prev = 0.0;
        for &l in &self.levels {
            if !(l > prev && l <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "load levels must be increasing in (0, 1], got {:?}",
                    self.levels
                )));
            }
            prev = l;
        }
        let finite = self.dead.iter().all(|v| v.is_finite())
            && self.pressure.is_finite()
            && self.tractions.iter().all(|t| t.traction.iter().all(|v| v.is_finite()))
            && self.moments.iter().all(|m| m.moment.is_finite());
        if !finite {
            return Err(Error::InvalidInput("load magnitudes must be finite".into()));
        }
        Ok(())
    }

    /// Loads scaled to factor `lambda`.
    pub fn at(&self, lambda: f64) -> AppliedLoad {
        let mut traction = [V3::zeros(); 4];
        let mut moment = [0.0; 4];
        for t in &self.tractions {
            traction[edge_slot(t.edge)] += lambda * t.traction;
        }
        for m in &self.moments {
            moment[edge_slot(m.edge)] += lambda * m.moment;
        }
        AppliedLoad {
            dead: lambda * self.dead,
            pressure: lambda * self.pressure,
            traction,
            moment,
        }
    }
}

pub(crate) fn edge_slot(edge: Edge) -> usize {
    match edge {
        Edge::West => 0,
        Edge::East => 1,
        Edge::South => 2,
        Edge::North => 3,
    }
}

/// Loads at one factor, with edge loads indexed by [`Edge`] slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedLoad {
    pub dead: V3,
    pub pressure: f64,
    pub traction: [V3; 4],
    pub moment: [f64; 4],
}

impl AppliedLoad {
    pub fn none() -> Self {
        Self {
            dead: V3::zeros(),
            pressure: 0.0,
            traction: [V3::zeros(); 4],
            moment: [0.0; 4],
        }
    }

    pub fn has_edge_loads(&self) -> bool {
        self.moment.iter().any(|&m| m != 0.0) || self.traction.iter().any(|t| t.norm_squared() > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.dead.norm_squared() == 0.0 && self.pressure == 0.0 && !self.has_edge_loads()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_validation() {
        let mut l = LoadCase::default();
        assert!(l.validate().is_ok());
        l.levels = vec![0.5, 0.5];
        assert!(l.validate().is_err());
        l.levels = vec![0.0, 1.0];
        assert!(l.validate().is_err());
        l.levels = LoadCase::uniform_levels(4);
        assert_eq!(l.levels, vec![0.25, 0.5, 0.75, 1.0]);
        assert!(l.validate().is_ok());
    }

    #[test]
    fn scaling() {
        let l = LoadCase {
            pressure: 2.0,
            moments: vec![
                EdgeMoment {
                    edge: Edge::East,
                    moment: 1.0,
                },
                EdgeMoment {
                    edge: Edge::East,
                    moment: 0.5,
                },
            ],
            ..LoadCase::default()
        };
        let a = l.at(0.5);
        assert_eq!(a.pressure, 1.0);
        assert_eq!(a.moment[edge_slot(Edge::East)], 0.75);
        assert!(a.has_edge_loads());
        assert!(AppliedLoad::none().is_zero());
    }
}
