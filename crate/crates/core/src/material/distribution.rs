use serde::{Deserialize, Serialize};

use super::{MaterialEval, MaterialGrid, KINDS};
use crate::error::Result;
use crate::kinematics::V3;
use crate::spline::NurbsPatch;

/// Coordinate a distribution is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Normalized first parameter in `[0, 1]`.
    U,
    /// Normalized second parameter in `[0, 1]`.
    V,
    /// Reference X coordinate.
    X,
    /// Reference Y coordinate.
    Y,
}

impl Axis {
    fn pick(self, param: [f64; 2], position: &V3) -> f64 {
        match self {
            Axis::U => param[0],
            Axis::V => param[1],
            Axis::X => position.x,
            Axis::Y => position.y,
        }
    }
}

/// Analytic scalar parameter distribution over the reference surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarDistribution {
    Constant {
        value: f64,
    },
    /// `base + amplitude/2 (1 + cos(pi R / radius))` for `R < radius`, else `base`,
    /// with `R` the in-plane distance from `center`.
    RadialCosine {
        base: f64,
        amplitude: f64,
        radius: f64,
        center: [f64; 2],
    },
    /// Linear interpolation through `(coordinate, value)` points, constant beyond the ends.
    PiecewiseLinear {
        axis: Axis,
        points: Vec<[f64; 2]>,
    },
    /// `center - (center - edge) (2 s - 1)^2` with `s` the coordinate along `axis`.
    Parabolic {
        axis: Axis,
        edge: f64,
        center: f64,
    },
}

impl ScalarDistribution {
    pub fn eval(&self, param: [f64; 2], position: &V3) -> f64 {
        match self {
            ScalarDistribution::Constant { value } => *value,
            ScalarDistribution::RadialCosine {
                base,
                amplitude,
                radius,
                center,
            } => {
                let r = ((position.x - center[0]).powi(2) + (position.y - center[1]).powi(2)).sqrt();
                if r < *radius {
                    base + 0.5 * amplitude * (1.0 + (std::f64::consts::PI * r / radius).cos())
                } else {
                    *base
                }
            }
            ScalarDistribution::PiecewiseLinear { axis, points } => {
                let s = axis.pick(param, position);
                piecewise_linear(points, s)
            }
            ScalarDistribution::Parabolic { axis, edge, center } => {
                let s = axis.pick(param, position);
                center - (center - edge) * (2.0 * s - 1.0).powi(2)
            }
        }
    }
}

fn piecewise_linear(points: &[[f64; 2]], s: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if s <= first[0] {
        return first[1];
    }
    if s >= last[0] {
        return last[1];
    }
    let k = points.partition_point(|p| p[0] <= s);
    let (a, b) = (points[k - 1], points[k]);
    let t = (s - a[0]) / (b[0] - a[0]);
    a[1] + t * (b[1] - a[1])
}

/// Pointwise analytic material used for synthetic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMaterial {
    pub kinds: [ScalarDistribution; KINDS],
}

impl AnalyticMaterial {
    pub fn new(first: ScalarDistribution, second: ScalarDistribution) -> Self {
        Self {
            kinds: [first, second],
        }
    }

    pub fn eval(&self, param: [f64; 2], position: &V3) -> [f64; KINDS] {
        [self.kinds[0].eval(param, position), self.kinds[1].eval(param, position)]
    }
}

impl MaterialEval for AnalyticMaterial {
    fn params_at(&self, _element: usize, _xi: [f64; 2], param: [f64; 2], position: &V3) -> [f64; KINDS] {
        self.eval(param, position)
    }
}

/// Reference distribution evaluated at the material nodes, located on the
/// reference surface of `patch`.
pub fn sample_reference(material: &AnalyticMaterial, grid: &MaterialGrid, patch: &NurbsPatch) -> Result<Vec<[f64; KINDS]>> {
    let dom = patch.domain();
    (0..grid.num_nodes())
        .map(|n| {
            let p = grid.node_param(n);
            let u = [
                dom[0].0 + p[0] * (dom[0].1 - dom[0].0),
                dom[1].0 + p[1] * (dom[1].1 - dom[1].0),
            ];
            let x = patch.point(&patch.locate(u)?, patch.control_points());
            Ok(material.eval(p, &x))
        })
        .collect()
}
