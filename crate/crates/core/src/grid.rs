//! Quadrature grids on speeds for radially symmetric functions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RadialProfile;
use crate::quadrature::GaussLegendre;

/// Composite Gauss–Legendre nodes on `[0, cutoff]` split into equal panels.
///
/// `weights` include the shell factor `4π r²`, so `Σ wᵢ f(rᵢ) ≈ ∫ f(|v|) dv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Plain `dr` weights, without the shell factor.
    pub line_weights: Vec<f64>,
    pub cutoff: f64,
    pub panels: usize,
    pub order: usize,
}

impl SpeedGrid {
    pub fn composite(panels: usize, order: usize, cutoff: f64) -> Result<Self> {
        if panels == 0 || order == 0 || !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::input(format!(
                "speed grid needs panels, order >= 1 and a positive cutoff (got {panels}, {order}, {cutoff})"
            )));
        }
        let gl = GaussLegendre::new(order);
        let h = cutoff / panels as f64;
        let mut nodes = Vec::with_capacity(panels * order);
        let mut line_weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, w) in gl.mapped(a, a + h) {
                nodes.push(x);
                line_weights.push(w);
            }
        }
        let weights = nodes.iter().zip(&line_weights).map(|(r, w)| 4.0 * PI * r * r * w).collect();
        Ok(SpeedGrid {
            nodes,
            weights,
            line_weights,
            cutoff,
            panels,
            order,
        })
    }

    /// Single-panel Gauss–Legendre grid.
    pub fn gauss_legendre(n: usize, cutoff: f64) -> Result<Self> {
        SpeedGrid::composite(1, n, cutoff)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panel_bounds(&self, panel: usize) -> (f64, f64) {
        let h = self.cutoff / self.panels as f64;
        (panel as f64 * h, (panel + 1) as f64 * h)
    }

    pub fn panel_of(&self, index: usize) -> usize {
        index / self.order
    }

    /// `Σ wᵢ f(rᵢ)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * f(r)).sum()
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> GridFunction {
        GridFunction {
            nodes: self.nodes.clone(),
            weights: self.weights.clone(),
            values: self.nodes.iter().map(|&r| f(r)).collect(),
        }
    }
}

/// Values of a radial function at quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub nodes: Vec<f64>,
    /// Quadrature weights including `4π r²`.
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() != values.len() {
            return Err(Error::input("grid function arrays differ in length"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("grid nodes must be strictly increasing"));
        }
        Ok(GridFunction { nodes, weights, values })
    }

    /// `∫ f dv`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.values).map(|(w, f)| w * f).sum()
    }

    /// `∫ |f| g(|v|) dv`.
    pub fn integrate_abs<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .map(|((&r, &w), &f)| w * f.abs() * g(r))
            .sum()
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }
}

impl RadialProfile for GridFunction {
    /// Log-linear interpolation between nodes; `None` outside the node range or where the
    /// function is not positive.
    fn density(&self, speed: f64) -> Option<f64> {
        self.log_density(speed).map(f64::exp)
    }

    fn log_density(&self, speed: f64) -> Option<f64> {
        log_linear(&self.nodes, &self.values, speed)
    }
}

/// Log-linear interpolation of positive samples `values` at increasing `nodes`; constant below
/// the first node, `None` beyond the last node or next to a non-positive value.
pub(crate) fn log_linear(nodes: &[f64], values: &[f64], x: f64) -> Option<f64> {
    let n = nodes.len();
    if n == 0 || !(x <= nodes[n - 1]) {
        return None;
    }
    if x <= nodes[0] {
        return (values[0] > 0.0).then(|| values[0].ln());
    }
    let j = nodes.partition_point(|&r| r < x);
    let (r0, r1) = (nodes[j - 1], nodes[j]);
    let (f0, f1) = (values[j - 1], values[j]);
    if f0 <= 0.0 || f1 <= 0.0 {
        return None;
    }
    let t = (x - r0) / (r1 - r0);
    Some((1.0 - t) * f0.ln() + t * f1.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::maxwellian_norm;

    #[test]
    fn grid_integrates_maxwellian() {
        let g = SpeedGrid::composite(25, 8, 8.0).unwrap();
        let m = g.integrate(|r| maxwellian_norm(1.0) * (-0.5 * r * r).exp());
        assert!((m - 1.0).abs() < 1e-10);
        assert_eq!(g.len(), 200);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(SpeedGrid::composite(0, 8, 8.0).is_err());
    }

    #[test]
    fn log_linear_interpolation_is_exact_for_exponentials() {
        let g = SpeedGrid::composite(10, 4, 5.0).unwrap();
        let f = g.sample(|r| (-2.0 * r).exp());
        for r in [0.3, 1.7, 4.2] {
            let got = f.density(r).unwrap();
            assert!((got / (-2.0 * r).exp() - 1.0).abs() < 1e-12);
        }
        assert!(f.density(6.0).is_none());
        assert!(GridFunction::new(vec![1.0, 0.5], vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
    }
}
