//! Penalized least squares for the partially functional linear model.

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{quad_norm, GridFunction};
use crate::operator::{sandwich, CovarianceMatrix, SpectralOperator};
use crate::synthetic::Dataset;

/// Sample operators built from one dataset.
#[derive(Debug, Clone)]
pub struct EmpiricalOperators {
    pub n: usize,
    /// `(1/n) Σ X_i X_iᵀ`.
    pub d_n: DMatrix<f64>,
    /// `(1/n) Σ Y_i ⊗ Y_i`.
    pub c_n: CovarianceMatrix,
    pub t_n: SpectralOperator,
    /// `(1/n) Σ ε_i X_i`, present when the noise is known.
    pub a_n: Option<DVector<f64>>,
    /// `(1/n) Σ ε_i K^{1/2} Y_i`, present when the noise is known.
    pub g_n: Option<GridFunction>,
    /// `p × m` matrix of `f ↦ (1/n) Σ ⟨Y_i, K^{1/2} f⟩ X_i` acting on grid values.
    pub g_op: DMatrix<f64>,
    /// `m × p` matrix of the adjoint `α ↦ (1/n) Σ (X_iᵀα) K^{1/2} Y_i`.
    pub h_op: DMatrix<f64>,
}

impl EmpiricalOperators {
    /// Operator norm of `G_n` from `L²` into `ℝ^p`.
    pub fn g_norm(&self) -> f64 {
        // ‖G‖ = σ_max(G W^{-1/2})
        let w = self.c_n.grid().weights();
        let mut gw = self.g_op.clone();
        for (j, &wj) in w.iter().enumerate() {
            gw.column_mut(j).scale_mut(1.0 / wj.sqrt());
        }
        largest_singular_value(gw)
    }

    /// Operator norm of `H_n` from `ℝ^p` into `L²`.
    pub fn h_norm(&self) -> f64 {
        // ‖H‖ = σ_max(W^{1/2} H)
        let w = self.c_n.grid().weights();
        let mut wh = self.h_op.clone();
        for (j, &wj) in w.iter().enumerate() {
            wh.row_mut(j).scale_mut(wj.sqrt());
        }
        largest_singular_value(wh)
    }

    pub fn apply_g(&self, f: &GridFunction) -> DVector<f64> {
        &self.g_op * DVector::from_column_slice(f.values())
    }

    pub fn apply_h(&self, alpha: &DVector<f64>) -> GridFunction {
        let v = &self.h_op * alpha;
        GridFunction::from_raw(self.c_n.grid().clone(), v.data.into())
    }
}

pub(crate) fn largest_singular_value(a: DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::new(a, false, false).singular_values.max()
}

/// Rows `K^{1/2} Y_i`, an `n × m` matrix.
fn smoothed_curves(data: &Dataset, khalf: &SpectralOperator) -> DMatrix<f64> {
    let e = khalf.eigenfunction_matrix();
    let mut u = reduced_features(data, khalf);
    // U already carries diag(s), so K^{1/2} Y_i = E u_i.
    u = &u * e.transpose();
    u
}

/// Coordinates `u_i = diag(s) Eᵀ W Y_i` of the smoothed curves.
fn reduced_features(data: &Dataset, khalf: &SpectralOperator) -> DMatrix<f64> {
    let mut we = khalf.eigenfunction_matrix().clone();
    for (j, &w) in data.grid.weights().iter().enumerate() {
        we.row_mut(j).scale_mut(w);
    }
    let mut u = &data.y * we;
    for (k, &s) in khalf.eigenvalues().iter().enumerate() {
        u.column_mut(k).scale_mut(s);
    }
    u
}

pub fn build_empirical(data: &Dataset, khalf: &SpectralOperator) -> Result<EmpiricalOperators> {
    let n = data.n();
    if n == 0 {
        return Err(invalid("data", "empty dataset"));
    }
    if !data.grid.same_as(khalf.grid()) {
        return Err(Error::GridMismatch);
    }
    let nf = n as f64;
    let d_n = crate::operator::symmetrize(data.x.tr_mul(&data.x) / nf);
    let c_n = CovarianceMatrix::from_raw(
        data.grid.clone(),
        crate::operator::symmetrize(data.y.tr_mul(&data.y) / nf),
    );
    let t_n = sandwich(khalf, &c_n)?;
    let ky = smoothed_curves(data, khalf);
    let h_op = ky.tr_mul(&data.x) / nf;
    let mut g_op = h_op.transpose();
    for (j, &w) in data.grid.weights().iter().enumerate() {
        g_op.column_mut(j).scale_mut(w);
    }
    let (a_n, g_n) = match &data.noise {
        Some(eps) => {
            let a = data.x.tr_mul(eps) / nf;
            let g = ky.tr_mul(eps) / nf;
            (
                Some(a),
                Some(GridFunction::from_raw(data.grid.clone(), g.data.into())),
            )
        }
        None => (None, None),
    };
    Ok(EmpiricalOperators {
        n,
        d_n,
        c_n,
        t_n,
        a_n,
        g_n,
        g_op,
        h_op,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Joint,
    Coupled,
}

/// Fitted coefficients and diagnostics.
#[derive(Debug, Clone)]
pub struct PflmFit {
    pub alpha_hat: DVector<f64>,
    pub f_hat: GridFunction,
    /// `K^{1/2} f̂`.
    pub beta_hat: GridFunction,
    pub lambda: f64,
    pub solver: Solver,
    /// Relative residual of the stationarity equations.
    pub residual: f64,
    /// Number of kernel eigenpairs spanning the admissible `f`.
    pub rank: usize,
}

/// `(1/n) Σ (z_i − X_iᵀα − ⟨Y_i, K^{1/2} f⟩)² + λ‖f‖²`.
pub fn objective(
    data: &Dataset,
    khalf: &SpectralOperator,
    alpha: &DVector<f64>,
    f: &GridFunction,
    lambda: f64,
) -> Result<f64> {
    let beta = khalf.apply(f)?;
    let wb = DVector::from_iterator(
        beta.len(),
        beta.values()
            .iter()
            .zip(data.grid.weights())
            .map(|(b, w)| b * w),
    );
    let resid = &data.z - &data.x * alpha - &data.y * wb;
    let nf = data.n() as f64;
    Ok(resid.norm_squared() / nf + lambda * quad_norm(f).powi(2))
}

/// Solve the normal equations in `(α, c)` with `f = E c` on the kernel's retained span.
pub fn fit_joint(data: &Dataset, khalf: &SpectralOperator, lambda: f64) -> Result<PflmFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(
            "lambda",
            format!("must be nonnegative, got {lambda}"),
        ));
    }
    if !data.grid.same_as(khalf.grid()) {
        return Err(Error::GridMismatch);
    }
    let n = data.n();
    if n == 0 {
        return Err(invalid("data", "empty dataset"));
    }
    let nf = n as f64;
    let p = data.p();
    let r = khalf.rank();
    let u = reduced_features(data, khalf);
    let mut a = DMatrix::zeros(n, p + r);
    a.columns_mut(0, p).copy_from(&data.x);
    a.columns_mut(p, r).copy_from(&u);
    let mut normal = crate::operator::symmetrize(a.tr_mul(&a) / nf);
    for k in p..p + r {
        normal[(k, k)] += lambda;
    }
    let rhs = a.tr_mul(&data.z) / nf;

    let chol = Cholesky::new(normal.clone()).ok_or(Error::RankDeficient)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    if !diag.is_empty() && (lo / hi).powi(2) < 1e-14 {
        return Err(Error::RankDeficient);
    }
    let sol = chol.solve(&rhs);
    let resid = (&normal * &sol - &rhs).amax() / rhs.amax().max(1.0);

    let alpha_hat = sol.rows(0, p).into_owned();
    let coeffs = sol.rows(p, r).into_owned();
    let f_hat = khalf.synthesize(&coeffs);
    let beta_coeffs = DVector::from_iterator(
        r,
        coeffs.iter().zip(khalf.eigenvalues()).map(|(c, s)| c * s),
    );
    let beta_hat = khalf.synthesize(&beta_coeffs);
    Ok(PflmFit {
        alpha_hat,
        f_hat,
        beta_hat,
        lambda,
        solver: Solver::Joint,
        residual: resid,
        rank: r,
    })
}

/// Solve the coupled first-order conditions
/// `D_n α + G_n f = x_z` and `(T_n + λ) f + H_n α = h_z`
/// by eliminating `α` and applying the resolvent of `T_n` with a Woodbury correction.
pub fn fit_coupled(
    ops: &EmpiricalOperators,
    data: &Dataset,
    khalf: &SpectralOperator,
    lambda: f64,
) -> Result<PflmFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if !data.grid.same_as(khalf.grid()) {
        return Err(Error::GridMismatch);
    }
    let n = data.n();
    let nf = n as f64;
    let p = data.p();
    let grid = data.grid.clone();

    let x_z = data.x.tr_mul(&data.z) / nf;
    let yz = data.y.tr_mul(&data.z) / nf;
    let h_z = khalf.apply(&GridFunction::from_raw(grid.clone(), yz.data.into()))?;

    let (alpha_hat, f_hat) = if p == 0 {
        (DVector::zeros(0), ops.t_n.shift_solve(lambda, &h_z)?)
    } else {
        let d_chol = Cholesky::new(ops.d_n.clone()).ok_or(Error::SingularDesign { n })?;
        let diag = d_chol.l_dirty().diagonal();
        if diag.min().powi(2) < 1e-12 * diag.max().powi(2) {
            return Err(Error::SingularDesign { n });
        }
        let dinv_xz = d_chol.solve(&x_z);
        let b = h_z.sub(&ops.apply_h(&dinv_xz))?;
        let rb = ops.t_n.shift_solve(lambda, &b)?;
        let mut rh = DMatrix::zeros(grid.len(), p);
        for j in 0..p {
            let col =
                GridFunction::from_raw(grid.clone(), ops.h_op.column(j).iter().copied().collect());
            let solved = ops.t_n.shift_solve(lambda, &col)?;
            rh.column_mut(j).copy_from_slice(solved.values());
        }
        let schur = &ops.d_n - &ops.g_op * &rh;
        let g_rb = ops.apply_g(&rb);
        let y = schur.lu().solve(&g_rb).ok_or(Error::SingularDesign { n })?;
        let corr = &rh * y;
        let f_vals: Vec<f64> = rb
            .values()
            .iter()
            .zip(corr.iter())
            .map(|(a, b)| a + b)
            .collect();
        let f_hat = GridFunction::from_raw(grid.clone(), f_vals);
        let alpha_hat = d_chol.solve(&(&x_z - ops.apply_g(&f_hat)));
        (alpha_hat, f_hat)
    };

    // Residuals of both stationarity equations.
    let r1 = &ops.d_n * &alpha_hat + ops.apply_g(&f_hat) - &x_z;
    let tf = ops.t_n.apply(&f_hat)?;
    let r2 = tf
        .add(&f_hat.scale(lambda))?
        .add(&ops.apply_h(&alpha_hat))?
        .sub(&h_z)?;
    let scale = (x_z.norm() + quad_norm(&h_z)).max(1.0);
    let residual = (r1.norm() + quad_norm(&r2)) / scale;

    let beta_hat = khalf.apply(&f_hat)?;
    Ok(PflmFit {
        alpha_hat,
        f_hat,
        beta_hat,
        lambda,
        solver: Solver::Coupled,
        residual,
        rank: khalf.rank(),
    })
}

/// `ω n^{-1/(1+θ)}`.
pub fn lambda_schedule(omega: f64, theta: f64, n: usize) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(invalid("omega", "must be positive"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta", "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    Ok(omega * (n as f64).powf(-1.0 / (1.0 + theta)))
}
