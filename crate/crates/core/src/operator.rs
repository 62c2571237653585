//! Integral operators on a quadrature grid, stored through their eigenpairs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{cosine_value, Grid, GridFunction};

/// Relative cutoff below which eigenvalues are discarded.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;

/// Reproducing kernels understood by [`kernel_matrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `Σ_{k ≤ terms} scale · k^{-2·exponent} ψ_k ⊗ ψ_k` on the cosine basis.
    SyntheticSpectrum {
        scale: f64,
        exponent: f64,
        terms: usize,
    },
    /// `min(s, t)`.
    Brownian,
    /// `exp(-(s - t)² / (2ℓ²))`.
    Gaussian { length_scale: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::SyntheticSpectrum {
                scale,
                exponent,
                terms,
            } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("kernel.scale", "must be positive"));
                }
                if !(exponent > 0.5 && exponent.is_finite()) {
                    return Err(invalid("kernel.exponent", "must exceed 1/2"));
                }
                if terms < 1 {
                    return Err(invalid("kernel.terms", "need at least one term"));
                }
            }
            KernelSpec::Brownian => {}
            KernelSpec::Gaussian { length_scale } => {
                if !(length_scale > 0.0 && length_scale.is_finite()) {
                    return Err(invalid("kernel.length_scale", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Closed-form eigenvalues when the kernel is given by its spectrum.
    pub fn spectrum(&self) -> Option<Vec<f64>> {
        match *self {
            KernelSpec::SyntheticSpectrum {
                scale,
                exponent,
                terms,
            } => Some(power_law(scale, exponent, terms)),
            _ => None,
        }
    }
}

pub(crate) fn power_law(scale: f64, exponent: f64, terms: usize) -> Vec<f64> {
    (1..=terms)
        .map(|k| scale * (k as f64).powf(-2.0 * exponent))
        .collect()
}

/// A symmetric array of bivariate function values on a grid.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    grid: Arc<Grid>,
    values: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(grid: Arc<Grid>, values: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if values.nrows() != m || values.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: values.nrows().max(values.ncols()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        let scale = values.amax().max(1.0);
        let mut asym: f64 = 0.0;
        for j in 0..m {
            for k in 0..j {
                asym = asym.max((values[(j, k)] - values[(k, j)]).abs());
            }
        }
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let m = grid.len();
        Self {
            grid,
            values: DMatrix::zeros(m, m),
        }
    }

    /// `Σ_k coeffs[k] ψ_{k+1} ⊗ ψ_{k+1}` on the cosine basis.
    pub fn from_cosine_spectrum(grid: Arc<Grid>, coeffs: &[f64]) -> Result<Self> {
        let basis = cosine_matrix(&grid, coeffs.len())?;
        let mut scaled = basis.clone();
        for (k, &c) in coeffs.iter().enumerate() {
            scaled.column_mut(k).scale_mut(c);
        }
        let values = symmetrize(&scaled * basis.transpose());
        Self::new(grid, values)
    }

    /// Build from a symmetric product without re-checking symmetry.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: DMatrix<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.values[(j, k)]
    }

    /// The integral operator `f ↦ Σ_k w_k R(·, t_k) f_k`.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if !self.grid.same_as(f.grid()) {
            return Err(Error::GridMismatch);
        }
        let wf = DVector::from_iterator(
            f.len(),
            f.values()
                .iter()
                .zip(self.grid.weights())
                .map(|(v, w)| v * w),
        );
        let out = &self.values * wf;
        Ok(GridFunction::from_raw(self.grid.clone(), out.data.into()))
    }

    /// Entrywise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &CovarianceMatrix) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok((&self.values - &other.values).amax())
    }
}

pub(crate) fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    let at = a.transpose();
    (a + at) * 0.5
}

/// Columns `ψ_1, …, ψ_k` evaluated on the grid.
pub(crate) fn cosine_matrix(grid: &Arc<Grid>, k: usize) -> Result<DMatrix<f64>> {
    let (a, b) = grid.domain();
    if a != 0.0 || b != 1.0 {
        return Err(invalid(
            "grid",
            format!("cosine spectra need a grid on [0, 1], got [{a}, {b}]"),
        ));
    }
    let pts = grid.points();
    Ok(DMatrix::from_fn(pts.len(), k, |j, c| {
        cosine_value(c + 1, pts[j])
    }))
}

/// Evaluate a kernel at every pair of grid points.
pub fn kernel_matrix(spec: &KernelSpec, grid: &Arc<Grid>) -> Result<CovarianceMatrix> {
    spec.validate()?;
    let pts = grid.points();
    let m = pts.len();
    match *spec {
        KernelSpec::SyntheticSpectrum { .. } => {
            let nu = spec.spectrum().expect("synthetic kernel has a spectrum");
            CovarianceMatrix::from_cosine_spectrum(grid.clone(), &nu)
        }
        KernelSpec::Brownian => {
            let values = DMatrix::from_fn(m, m, |j, k| pts[j].min(pts[k]));
            CovarianceMatrix::new(grid.clone(), values)
        }
        KernelSpec::Gaussian { length_scale } => {
            let denom = 2.0 * length_scale * length_scale;
            let values = DMatrix::from_fn(m, m, |j, k| {
                let d = pts[j] - pts[k];
                (-d * d / denom).exp()
            });
            CovarianceMatrix::new(grid.clone(), values)
        }
    }
}

/// A positive semidefinite self-adjoint operator on the grid's L² space.
///
/// Eigenfunctions are stored as the columns of an `m × rank` matrix whose
/// columns are orthonormal under the quadrature inner product.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    grid: Arc<Grid>,
    eigenvalues: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
}

impl SpectralOperator {
    pub fn zero(grid: Arc<Grid>) -> Self {
        let m = grid.len();
        Self {
            grid,
            eigenvalues: Vec::new(),
            eigenfunctions: DMatrix::zeros(m, 0),
        }
    }

    /// Assemble from explicit eigenpairs, checking orthonormality and sign.
    pub fn from_eigenpairs(
        grid: Arc<Grid>,
        eigenvalues: Vec<f64>,
        eigenfunctions: Vec<GridFunction>,
    ) -> Result<Self> {
        if eigenvalues.len() != eigenfunctions.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                got: eigenfunctions.len(),
            });
        }
        if eigenvalues.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid("eigenvalues", "must be finite and nonnegative"));
        }
        let m = grid.len();
        let mut e = DMatrix::zeros(m, eigenfunctions.len());
        for (k, f) in eigenfunctions.iter().enumerate() {
            if !grid.same_as(f.grid()) {
                return Err(Error::GridMismatch);
            }
            e.column_mut(k).copy_from_slice(f.values());
        }
        let gram = weighted_gram(&e, grid.weights());
        let dev = (gram - DMatrix::identity(e.ncols(), e.ncols())).amax();
        if dev > 1e-8 {
            return Err(invalid(
                "eigenfunctions",
                format!("not orthonormal (Gram deviation {dev:e})"),
            ));
        }
        let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));
        let values = order.iter().map(|&i| eigenvalues[i]).collect();
        let funcs = e.select_columns(&order);
        Ok(Self {
            grid,
            eigenvalues: values,
            eigenfunctions: funcs,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenfunctions as matrix columns (`m × rank`).
    pub fn eigenfunction_matrix(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    /// The `k`-th eigenfunction, zero-based.
    pub fn eigenfunction(&self, k: usize) -> GridFunction {
        let col = self.eigenfunctions.column(k);
        GridFunction::from_raw(self.grid.clone(), col.iter().copied().collect())
    }

    pub fn largest_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn op_norm(&self) -> f64 {
        self.largest_eigenvalue()
    }

    pub fn hs_norm(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    fn check_grid(&self, f: &GridFunction) -> Result<()> {
        if self.grid.same_as(f.grid()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Coordinates `⟨f, e_k⟩` along the retained eigenfunctions.
    pub fn coefficients(&self, f: &GridFunction) -> Result<DVector<f64>> {
        self.check_grid(f)?;
        Ok(self.coefficients_of(f.values()))
    }

    pub(crate) fn coefficients_of(&self, values: &[f64]) -> DVector<f64> {
        let wf = DVector::from_iterator(
            values.len(),
            values.iter().zip(self.grid.weights()).map(|(v, w)| v * w),
        );
        self.eigenfunctions.tr_mul(&wf)
    }

    /// Function with the given coordinates along the eigenfunctions.
    pub(crate) fn synthesize(&self, coeffs: &DVector<f64>) -> GridFunction {
        let v = &self.eigenfunctions * coeffs;
        GridFunction::from_raw(self.grid.clone(), v.data.into())
    }

    /// Apply `φ(A)`, with `φ(0)` taken as `complement` off the retained span.
    pub fn apply_function(
        &self,
        f: &GridFunction,
        phi: impl Fn(f64) -> f64,
        complement: f64,
    ) -> Result<GridFunction> {
        self.check_grid(f)?;
        let c = self.coefficients_of(f.values());
        let scaled = DVector::from_iterator(
            c.len(),
            c.iter()
                .zip(&self.eigenvalues)
                .map(|(c, &t)| (phi(t) - complement) * c),
        );
        let inside = &self.eigenfunctions * scaled;
        let values = f
            .values()
            .iter()
            .zip(inside.iter())
            .map(|(v, i)| complement * v + i)
            .collect();
        Ok(GridFunction::from_raw(self.grid.clone(), values))
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check_grid(f)?;
        let c = self.coefficients_of(f.values());
        let scaled =
            DVector::from_iterator(c.len(), c.iter().zip(&self.eigenvalues).map(|(c, t)| c * t));
        Ok(self.synthesize(&scaled))
    }

    /// `(A + λI)⁻¹ f`.
    pub fn shift_solve(&self, lambda: f64, f: &GridFunction) -> Result<GridFunction> {
        check_lambda(lambda)?;
        self.apply_function(f, |t| 1.0 / (t + lambda), 1.0 / lambda)
    }

    /// `Σ θ_k / (θ_k + λ)`.
    pub fn effective_dimension(&self, lambda: f64) -> Result<f64> {
        spectrum_effective_dimension(&self.eigenvalues, lambda)
    }

    /// Same eigenfunctions, eigenvalues `√θ_k`.
    pub fn sqrt(&self) -> SpectralOperator {
        SpectralOperator {
            grid: self.grid.clone(),
            eigenvalues: self.eigenvalues.iter().map(|t| t.sqrt()).collect(),
            eigenfunctions: self.eigenfunctions.clone(),
        }
    }

    /// Dense `m × m` matrix of the operator acting on grid values.
    pub fn dense(&self) -> DMatrix<f64> {
        let mut scaled = self.eigenfunctions.clone();
        for (k, &t) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(t);
        }
        let mut et_w = self.eigenfunctions.transpose();
        for (j, &w) in self.grid.weights().iter().enumerate() {
            et_w.column_mut(j).scale_mut(w);
        }
        scaled * et_w
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid("lambda", format!("must be positive, got {lambda}")))
    }
}

/// `Eᵀ W E` for a matrix of grid functions.
pub(crate) fn weighted_gram(e: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut we = e.clone();
    for (j, &w) in weights.iter().enumerate() {
        we.row_mut(j).scale_mut(w);
    }
    e.tr_mul(&we)
}

/// Eigendecompose a symmetric matrix and keep pairs above `tol · θ₁`.
///
/// Eigenvectors are mapped through `lift` into grid space. Each is given
/// the sign that makes its largest-magnitude entry positive.
pub(crate) fn truncated_eigen(
    grid: Arc<Grid>,
    sym: DMatrix<f64>,
    tol: f64,
    lift: impl Fn(DMatrix<f64>) -> DMatrix<f64>,
) -> SpectralOperator {
    let m = grid.len();
    if sym.nrows() == 0 {
        return SpectralOperator::zero(grid);
    }
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]];
    if top.is_nan() || top <= 0.0 {
        return SpectralOperator {
            grid,
            eigenvalues: Vec::new(),
            eigenfunctions: DMatrix::zeros(m, 0),
        };
    }
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > tol * top)
        .collect();
    let values = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut funcs = lift(eig.eigenvectors.select_columns(&keep));
    for mut col in funcs.column_iter_mut() {
        let pivot = col
            .iter()
            .fold(0.0_f64, |acc, &v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    SpectralOperator {
        grid,
        eigenvalues: values,
        eigenfunctions: funcs,
    }
}

/// Eigenpairs of `f ↦ Σ_k w_k R(·, t_k) f_k` through `W^{1/2} R W^{1/2}`.
pub fn spectral_decompose(r: &CovarianceMatrix, tol: f64) -> Result<SpectralOperator> {
    if !(0.0..1.0).contains(&tol) {
        return Err(invalid("tol", "must lie in [0, 1)"));
    }
    let grid = r.grid().clone();
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let m = grid.len();
    let sym = symmetrize(DMatrix::from_fn(m, m, |j, k| sw[j] * r.entry(j, k) * sw[k]));
    Ok(truncated_eigen(grid, sym, tol, |mut v| {
        for (j, s) in sw.iter().enumerate() {
            v.row_mut(j).scale_mut(1.0 / s);
        }
        v
    }))
}

pub fn operator_sqrt(a: &SpectralOperator) -> SpectralOperator {
    a.sqrt()
}

/// Spectral decomposition of `K^{1/2} ∘ L_C ∘ K^{1/2}`.
///
/// The composite lives on the span of the root's eigenfunctions, so the
/// eigenproblem is solved in those coordinates.
pub fn sandwich(khalf: &SpectralOperator, c: &CovarianceMatrix) -> Result<SpectralOperator> {
    if !khalf.grid().same_as(c.grid()) {
        return Err(Error::GridMismatch);
    }
    let e = khalf.eigenfunction_matrix();
    let mut we = e.clone();
    for (j, &w) in khalf.grid().weights().iter().enumerate() {
        we.row_mut(j).scale_mut(w);
    }
    // Q = diag(s) Eᵀ W, so the reduced matrix is Q C Qᵀ.
    let mut q = we.transpose();
    for (k, &s) in khalf.eigenvalues().iter().enumerate() {
        q.row_mut(k).scale_mut(s);
    }
    let qc = &q * c.matrix();
    let reduced = symmetrize(&qc * q.transpose());
    sandwich_from_reduced(khalf, reduced)
}

/// Finish a sandwich given the reduced symmetric matrix in root coordinates.
pub(crate) fn sandwich_from_reduced(
    khalf: &SpectralOperator,
    reduced: DMatrix<f64>,
) -> Result<SpectralOperator> {
    if reduced.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sandwich operator"));
    }
    let e = khalf.eigenfunction_matrix().clone();
    Ok(truncated_eigen(
        khalf.grid().clone(),
        reduced,
        DEFAULT_EIGEN_TOL,
        move |v| &e * v,
    ))
}

pub fn effective_dimension(t: &SpectralOperator, lambda: f64) -> Result<f64> {
    t.effective_dimension(lambda)
}

/// `Σ_k τ_k/(τ_k+λ)` for an eigenvalue sequence that need not fit on a grid.
pub fn spectrum_effective_dimension(values: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(values.iter().map(|t| t / (t + lambda)).sum())
}

pub fn shift_solve(a: &SpectralOperator, lambda: f64, f: &GridFunction) -> Result<GridFunction> {
    a.shift_solve(lambda, f)
}
