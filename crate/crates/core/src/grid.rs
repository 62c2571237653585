//! Uniform quadrature grids and functions sampled on them.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A uniform grid on `[a, b]` with composite trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Step between consecutive points.
    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.len() - 1) as f64
    }

    pub(crate) fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// Build `m` equally spaced points on `[a, b]` with trapezoid weights.
pub fn make_uniform_grid(a: f64, b: f64, m: usize) -> Result<Arc<Grid>> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(invalid(
            "domain",
            format!("need finite a < b, got [{a}, {b}]"),
        ));
    }
    if m < 2 {
        return Err(invalid("m", format!("need at least 2 points, got {m}")));
    }
    let h = (b - a) / (m - 1) as f64;
    let points: Vec<f64> = (0..m)
        .map(|j| if j == m - 1 { b } else { a + h * j as f64 })
        .collect();
    let mut weights = vec![h; m];
    weights[0] = h / 2.0;
    weights[m - 1] = h / 2.0;
    Ok(Arc::new(Grid {
        a,
        b,
        points,
        weights,
    }))
}

/// Values of a function at the points of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function values"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let m = grid.len();
        Self {
            grid,
            values: vec![0.0; m],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    /// Construct without the finiteness check; callers guarantee finite values.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(
            self.grid.clone(),
            self.values.iter().map(|v| c * v).collect(),
        )
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip(other, |x, y| x - y)
    }

    fn zip(&self, other: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(self, other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| op(x, y))
            .collect();
        Ok(Self::from_raw(self.grid.clone(), values))
    }

    /// Largest absolute value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

fn check_same_grid(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.grid.same_as(&g.grid) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Weighted inner product `Σ w_j f_j g_j`.
pub fn quad_inner(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_same_grid(f, g)?;
    Ok(weighted_dot(f.grid.weights(), &f.values, &g.values))
}

pub fn quad_norm(f: &GridFunction) -> f64 {
    weighted_dot(f.grid.weights(), &f.values, &f.values).sqrt()
}

pub(crate) fn weighted_dot(w: &[f64], x: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum()
}

/// Cosine basis on `[0, 1]`: `1` for `k = 1`, `√2 cos((k-1)πt)` after that.
pub fn cosine_basis(k: usize, grid: &Arc<Grid>) -> Result<GridFunction> {
    if k < 1 {
        return Err(invalid("k", "basis index starts at 1"));
    }
    let (a, b) = grid.domain();
    if a != 0.0 || b != 1.0 {
        return Err(invalid(
            "grid",
            format!("cosine basis is defined on [0, 1], grid spans [{a}, {b}]"),
        ));
    }
    let values = grid.points().iter().map(|&t| cosine_value(k, t)).collect();
    Ok(GridFunction::from_raw(grid.clone(), values))
}

pub(crate) fn cosine_value(k: usize, t: f64) -> f64 {
    if k == 1 {
        1.0
    } else {
        SQRT_2 * ((k - 1) as f64 * PI * t).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_point_grid() {
        let g = make_uniform_grid(0.0, 1.0, 2).unwrap();
        assert_eq!(g.points(), &[0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn three_point_weights() {
        let g = make_uniform_grid(0.0, 1.0, 3).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn weights_sum_to_length() {
        let g = make_uniform_grid(0.0, 1.0, 101).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
        let g = make_uniform_grid(-2.0, 3.0, 57).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert_relative_eq!(s, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_uniform_grid(0.0, 1.0, 1).is_err());
        assert!(make_uniform_grid(1.0, 1.0, 10).is_err());
        assert!(make_uniform_grid(2.0, 1.0, 10).is_err());
    }

    #[test]
    fn constant_has_unit_norm() {
        let g = make_uniform_grid(0.0, 1.0, 11).unwrap();
        let one = GridFunction::from_fn(g, |_| 1.0).unwrap();
        assert_relative_eq!(quad_inner(&one, &one).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn cosines_orthogonal() {
        let g = make_uniform_grid(0.0, 1.0, 201).unwrap();
        let p2 = cosine_basis(2, &g).unwrap();
        let p3 = cosine_basis(3, &g).unwrap();
        assert!(quad_inner(&p2, &p3).unwrap().abs() < 1e-8);
    }

    #[test]
    fn second_moment_of_identity() {
        let g = make_uniform_grid(0.0, 1.0, 101).unwrap();
        let t = GridFunction::from_fn(g, |t| t).unwrap();
        assert!((quad_inner(&t, &t).unwrap() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn cosine_values() {
        let g = make_uniform_grid(0.0, 1.0, 5).unwrap();
        assert!(cosine_basis(1, &g)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 1.0));
        assert_eq!(cosine_basis(2, &g).unwrap().values()[0], SQRT_2);
        assert!(cosine_basis(0, &g).is_err());
        let off = make_uniform_grid(0.0, 2.0, 5).unwrap();
        assert!(cosine_basis(2, &off).is_err());
    }

    #[test]
    fn cosine_normalization() {
        let g = make_uniform_grid(0.0, 1.0, 401).unwrap();
        for k in 1..=10 {
            let psi = cosine_basis(k, &g).unwrap();
            assert!((quad_inner(&psi, &psi).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let g1 = make_uniform_grid(0.0, 1.0, 11).unwrap();
        let g2 = make_uniform_grid(0.0, 1.0, 12).unwrap();
        let f = GridFunction::zeros(g1);
        let h = GridFunction::zeros(g2);
        assert_eq!(quad_inner(&f, &h), Err(Error::GridMismatch));
    }

    #[test]
    fn equal_grids_from_separate_allocations_match() {
        let g1 = make_uniform_grid(0.0, 1.0, 11).unwrap();
        let g2 = make_uniform_grid(0.0, 1.0, 11).unwrap();
        let f = GridFunction::from_fn(g1, |t| t).unwrap();
        let h = GridFunction::from_fn(g2, |_| 1.0).unwrap();
        assert_relative_eq!(quad_inner(&f, &h).unwrap(), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn non_finite_rejected() {
        let g = make_uniform_grid(0.0, 1.0, 3).unwrap();
        assert!(GridFunction::new(g.clone(), vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(GridFunction::new(g, vec![0.0, 1.0]).is_err());
    }
}
