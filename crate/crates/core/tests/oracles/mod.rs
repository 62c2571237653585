//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use pflm_core::grid::{cosine_basis, quad_inner, GridFunction};
use pflm_core::operator::SpectralOperator;
use pflm_core::synthetic::{Dataset, ModelSpec, PopulationOperators};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Minimizer of the penalized objective over `(α, f) ∈ ℝ^p × ℝ^m`, with `f`
/// free on every grid point, by conjugate gradients on the quadratic form.
pub struct QuadraticMinimum {
    pub alpha: DVector<f64>,
    pub f: DVector<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

pub fn minimize_objective(
    data: &Dataset,
    khalf: &SpectralOperator,
    lambda: f64,
    tol: f64,
) -> QuadraticMinimum {
    let n = data.n() as f64;
    let p = data.p();
    let m = data.grid.len();
    let w = DVector::from_column_slice(data.grid.weights());
    // Design acting on (α, f): Xα + Y W K f, with K the dense root.
    let ywk = {
        let mut yw = data.y.clone();
        for (j, wj) in w.iter().enumerate() {
            yw.column_mut(j).scale_mut(*wj);
        }
        yw * khalf.dense()
    };
    let design =
        |x: &DVector<f64>| -> DVector<f64> { &data.x * x.rows(0, p) + &ywk * x.rows(p, m) };
    let design_t = |r: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(p + m);
        out.rows_mut(0, p).copy_from(&data.x.tr_mul(r));
        out.rows_mut(p, m).copy_from(&ywk.tr_mul(r));
        out
    };
    // Hessian/2 applied to x: (1/n) Bᵀ B x + λ W f.
    let hess = |x: &DVector<f64>| -> DVector<f64> {
        let mut out = design_t(&design(x)) / n;
        let pen = x.rows(p, m).component_mul(&w) * lambda;
        let mut tail = out.rows_mut(p, m);
        tail += pen;
        out
    };
    let b = design_t(&data.z) / n;
    let mut x = DVector::zeros(p + m);
    let mut r = b.clone();
    let mut d = r.clone();
    let mut rr = r.norm_squared();
    let max_iter = 50 * (p + m);
    let mut it = 0;
    while it < max_iter && 2.0 * rr.sqrt() > tol {
        let hd = hess(&d);
        let step = rr / d.dot(&hd);
        x += &d * step;
        // Recompute the residual every few steps to limit drift.
        r = if it % 20 == 19 {
            &b - hess(&x)
        } else {
            &r - &hd * step
        };
        let rr_new = r.norm_squared();
        d = &r + &d * (rr_new / rr);
        rr = rr_new;
        it += 1;
    }
    let grad = (hess(&x) - &b) * 2.0;
    let resid = &data.z - design(&x);
    let fv = x.rows(p, m).into_owned();
    let pen = lambda * fv.component_mul(&w).dot(&fv);
    QuadraticMinimum {
        alpha: x.rows(0, p).into_owned(),
        f: fv,
        objective: resid.norm_squared() / n + pen,
        gradient_norm: grad.norm(),
        iterations: it,
    }
}

/// Laplace(0, b) by inverting the distribution function.
fn laplace(rng: &mut StdRng, b: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Monte Carlo mean and standard error of `(η̂ − η₀)²` over fresh predictors.
pub fn monte_carlo_risk(
    spec: &ModelSpec,
    pop: &PopulationOperators,
    alpha_hat: &[f64],
    beta_hat: &GridFunction,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let grid = &pop.grid;
    let db = beta_hat.sub(&pop.beta0).unwrap();
    let mu = spec.process_spectrum.values();
    let proj: Vec<f64> = (1..=mu.len())
        .map(|k| mu[k - 1].sqrt() * quad_inner(&cosine_basis(k, grid).unwrap(), &db).unwrap())
        .collect();
    let da: Vec<f64> = alpha_hat
        .iter()
        .zip(&spec.alpha0)
        .map(|(a, b)| a - b)
        .collect();
    let s3 = 3f64.sqrt();
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..draws {
        let mut v = 0.0;
        for d in &da {
            v += d * laplace(&mut rng, spec.laplace_scale);
        }
        for c in &proj {
            v += c * rng.random_range(-s3..s3);
        }
        let sq = v * v;
        sum += sq;
        sum2 += sq * sq;
    }
    let nf = draws as f64;
    let mean = sum / nf;
    let var = (sum2 / nf - mean * mean) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Ordinary least squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Dense matrix of a spectral operator with explicit eigenvalues on the cosine basis.
pub fn cosine_operator(
    grid: &std::sync::Arc<pflm_core::grid::Grid>,
    values: &[f64],
) -> SpectralOperator {
    let funcs = (1..=values.len())
        .map(|k| cosine_basis(k, grid).unwrap())
        .collect();
    SpectralOperator::from_eigenpairs(grid.clone(), values.to_vec(), funcs).unwrap()
}
