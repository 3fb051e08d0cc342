//! Symmetric quadrature on triangles and a deterministic summation helper.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::mesh::{Mesh, Point};

/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights are normalized to sum to one, so a cell integral is
/// `area * sum_q w_q f(x_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: u32,
}

/// Selects one of the built-in rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadChoice {
    /// 7 points, exact through degree 5.
    #[default]
    Degree5,
    /// 12 points, exact through degree 6.
    TwelvePoint,
}

impl FromStr for QuadChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "5" => Ok(Self::Degree5),
            "12" => Ok(Self::TwelvePoint),
            other => Err(Error::InvalidArgument(format!("quadrature choice must be 5 or 12, got '{other}'"))),
        }
    }
}

impl fmt::Display for QuadChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Degree5 => write!(f, "5"),
            Self::TwelvePoint => write!(f, "12"),
        }
    }
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, ws: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        pts.push(p);
        ws.push(w);
    }
}

fn orbit6(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 3]>, ws: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        pts.push(p);
        ws.push(w);
    }
}

impl QuadratureRule {
    /// Radon's 7-point rule.
    pub fn degree5() -> Self {
        let s15 = 15f64.sqrt();
        let mut points = vec![[1.0 / 3.0; 3]];
        let mut weights = vec![9.0 / 40.0];
        orbit3((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0, &mut points, &mut weights);
        orbit3((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0, &mut points, &mut weights);
        Self { points, weights, degree: 5 }
    }

    /// Dunavant's 12-point rule.
    pub fn twelve_point() -> Self {
        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        orbit3(0.249286745170910, 0.116786275726379, &mut points, &mut weights);
        orbit3(0.063089014491502, 0.050844906370207, &mut points, &mut weights);
        orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374, &mut points, &mut weights);
        // tabulated weights carry 15 digits; renormalize the residue away
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { points, weights, degree: 6 }
    }

    /// Single barycenter point, exact for affine integrands.
    pub fn barycenter() -> Self {
        Self { points: vec![[1.0 / 3.0; 3]], weights: vec![1.0], degree: 1 }
    }

    pub fn from_choice(choice: QuadChoice) -> Self {
        match choice {
            QuadChoice::Degree5 => Self::degree5(),
            QuadChoice::TwelvePoint => Self::twelve_point(),
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical quadrature points of every cell, cell-major.
    pub fn physical_points(&self, mesh: &Mesh) -> Vec<Point> {
        let mut out = Vec::with_capacity(mesh.num_cells() * self.len());
        for k in 0..mesh.num_cells() {
            for &b in &self.points {
                out.push(mesh.map_point(k, b));
            }
        }
        out
    }

    /// Integration weights `area * w_q` matching [`QuadratureRule::physical_points`].
    pub fn physical_weights(&self, mesh: &Mesh) -> Vec<f64> {
        let mut out = Vec::with_capacity(mesh.num_cells() * self.len());
        for c in mesh.cells() {
            for &w in &self.weights {
                out.push(c.area * w);
            }
        }
        out
    }

    /// `∫ f` over the mesh.
    pub fn integrate<F: Fn(Point) -> f64>(&self, mesh: &Mesh, f: F) -> f64 {
        let terms: Vec<f64> =
            self.physical_points(mesh).into_iter().zip(self.physical_weights(mesh)).map(|(x, w)| w * f(x)).collect();
        pairwise_sum(&terms)
    }
}

/// Pairwise summation in a fixed recursion order, so a given slice always
/// produces the same bits.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ over the reference triangle {x, y ≥ 0, x + y ≤ 1} of x^a y^b, divided by its area.
    fn monomial_mean(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        2.0 * fact(a) * fact(b) / fact(a + b + 2)
    }

    fn check_exactness(rule: &QuadratureRule) {
        assert!(rule.weights().iter().all(|&w| w > 0.0));
        assert!((rule.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for total in 0..=rule.degree() {
            for a in 0..=total {
                let b = total - a;
                // barycentric (l0, l1, l2) -> cartesian (x, y) = (l1, l2)
                let q: f64 = rule
                    .points()
                    .iter()
                    .zip(rule.weights())
                    .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                    .sum();
                let exact = monomial_mean(a, b);
                assert!((q - exact).abs() < 1e-13, "x^{a} y^{b}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn degree5_is_exact() {
        check_exactness(&QuadratureRule::degree5());
    }

    #[test]
    fn twelve_point_is_exact() {
        check_exactness(&QuadratureRule::twelve_point());
    }

    #[test]
    fn degree5_not_exact_at_degree6() {
        let rule = QuadratureRule::degree5();
        let q: f64 = rule.points().iter().zip(rule.weights()).map(|(p, w)| w * p[1].powi(6)).sum();
        assert!((q - monomial_mean(6, 0)).abs() > 1e-8);
    }

    #[test]
    fn parse_choice() {
        assert_eq!("5".parse::<QuadChoice>().unwrap(), QuadChoice::Degree5);
        assert_eq!("12".parse::<QuadChoice>().unwrap(), QuadChoice::TwelvePoint);
        assert!("7".parse::<QuadChoice>().is_err());
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
