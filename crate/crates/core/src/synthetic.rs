//! Ground-truth models with closed-form population quantities, and samplers.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{quad_inner, Grid, GridFunction};
use crate::operator::{
    cosine_matrix, kernel_matrix, power_law, sandwich, spectral_decompose, CovarianceMatrix,
    KernelSpec, SpectralOperator, DEFAULT_EIGEN_TOL,
};
use crate::rng::{stream, Role};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Noise law for the response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform on `[-√3σ, √3σ]`, so the variance is still `σ²`.
    Uniform,
}

/// Eigenvalues of the process covariance on the cosine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProcessSpectrum {
    Explicit(Vec<f64>),
    /// `scale · k^{-2·exponent}` for `k = 1..=terms`.
    PowerLaw {
        scale: f64,
        exponent: f64,
        terms: usize,
    },
}

impl ProcessSpectrum {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ProcessSpectrum::Explicit(v) => v.clone(),
            ProcessSpectrum::PowerLaw {
                scale,
                exponent,
                terms,
            } => power_law(*scale, *exponent, *terms),
        }
    }
}

/// The data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub alpha0: Vec<f64>,
    /// Coefficients of `f₀` on the cosine basis; `β₀ = K^{1/2} f₀`.
    pub f0_coeffs: Vec<f64>,
    pub kernel: KernelSpec,
    pub process_spectrum: ProcessSpectrum,
    pub laplace_scale: f64,
    pub sigma: f64,
    #[serde(default)]
    pub noise: NoiseKind,
}

impl ModelSpec {
    pub fn p(&self) -> usize {
        self.alpha0.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self
            .alpha0
            .iter()
            .chain(&self.f0_coeffs)
            .any(|v| !v.is_finite())
        {
            return Err(invalid("alpha0/f0_coeffs", "must be finite"));
        }
        if !(self.laplace_scale > 0.0 && self.laplace_scale.is_finite()) {
            return Err(invalid("laplace_scale", "must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be nonnegative"));
        }
        if let ProcessSpectrum::PowerLaw { exponent, .. } = self.process_spectrum {
            if !(exponent >= 0.0 && exponent.is_finite()) {
                return Err(invalid("process_spectrum.exponent", "must be nonnegative"));
            }
        }
        let mu = self.process_spectrum.values();
        if mu.is_empty() {
            return Err(invalid("process_spectrum", "needs at least one term"));
        }
        if mu.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid("process_spectrum", "entries must be positive"));
        }
        if mu.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("process_spectrum", "entries must be nonincreasing"));
        }
        Ok(())
    }

    /// Decay exponent `r` of `τ_k = ν_k μ_k ∝ k^{-2r}` when both spectra are power laws.
    pub fn decay_exponent(&self) -> Option<f64> {
        match (&self.kernel, &self.process_spectrum) {
            (
                KernelSpec::SyntheticSpectrum { exponent: a, .. },
                ProcessSpectrum::PowerLaw { exponent: c, .. },
            ) => Some(a + c),
            _ => None,
        }
    }

    /// Copy with a different covariate coefficient vector.
    pub fn with_alpha0(&self, alpha0: Vec<f64>) -> Self {
        Self {
            alpha0,
            ..self.clone()
        }
    }
}

/// Population operators and moment constants of a model on a grid.
#[derive(Debug, Clone)]
pub struct PopulationOperators {
    pub grid: Arc<Grid>,
    pub kernel: SpectralOperator,
    pub khalf: SpectralOperator,
    /// Covariate second-moment matrix `2b²I`.
    pub d: DMatrix<f64>,
    pub c: CovarianceMatrix,
    pub t: SpectralOperator,
    pub kappa: f64,
    pub lambda_max: f64,
    pub m1: f64,
    pub upsilon: f64,
    pub m2: f64,
    pub d_inv_norm: f64,
    /// `f₀` projected onto the retained eigenspace of the kernel.
    pub f0: GridFunction,
    pub beta0: GridFunction,
    /// Norm of the part of `f₀` outside the retained eigenspace.
    pub f0_truncation: f64,
    pub process_spectrum: Vec<f64>,
}

pub fn population_operators(spec: &ModelSpec, grid: &Arc<Grid>) -> Result<PopulationOperators> {
    spec.validate()?;
    let m = grid.len();
    let mu = spec.process_spectrum.values();
    if mu.len() >= m {
        return Err(invalid(
            "process_spectrum",
            format!(
                "{} terms need a grid with more than {} points",
                mu.len(),
                mu.len()
            ),
        ));
    }
    if let KernelSpec::SyntheticSpectrum { terms, .. } = spec.kernel {
        if terms >= m {
            return Err(invalid(
                "kernel.terms",
                format!("{terms} terms need a grid with more than {terms} points"),
            ));
        }
    }
    if spec.f0_coeffs.len() >= m {
        return Err(invalid(
            "f0_coeffs",
            "more coefficients than the grid resolves",
        ));
    }
    let kernel = spectral_decompose(&kernel_matrix(&spec.kernel, grid)?, DEFAULT_EIGEN_TOL)?;
    let khalf = kernel.sqrt();
    let c = CovarianceMatrix::from_cosine_spectrum(grid.clone(), &mu)?;
    let t = sandwich(&khalf, &c)?;

    let raw_f0 = {
        let basis = cosine_matrix(grid, spec.f0_coeffs.len())?;
        let v = basis * DVector::from_column_slice(&spec.f0_coeffs);
        GridFunction::from_raw(grid.clone(), v.data.into())
    };
    let f0 = khalf.synthesize(&khalf.coefficients_of(raw_f0.values()));
    let f0_truncation = crate::grid::quad_norm(&raw_f0.sub(&f0)?);
    let beta0 = khalf.apply(&f0)?;

    let b = spec.laplace_scale;
    let p = spec.p();
    let d = DMatrix::identity(p, p) * (2.0 * b * b);
    let m2 = (3.0 * mu.iter().sum::<f64>()).sqrt();
    Ok(PopulationOperators {
        grid: grid.clone(),
        kappa: khalf.largest_eigenvalue(),
        kernel,
        khalf,
        d,
        c,
        t,
        lambda_max: 2.0 * b * b,
        m1: SQRT_2 * b,
        upsilon: b,
        m2,
        d_inv_norm: 1.0 / (2.0 * b * b),
        f0,
        beta0,
        f0_truncation,
        process_spectrum: mu,
    })
}

/// A training sample.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: Arc<Grid>,
    /// `n × p` covariates.
    pub x: DMatrix<f64>,
    /// `n × m` curves, one per row.
    pub y: DMatrix<f64>,
    pub z: DVector<f64>,
    /// Noise draws, known only for synthetic data.
    pub noise: Option<DVector<f64>>,
    pub seed: u64,
}

impl Dataset {
    /// Assemble an observed sample; checks shapes only.
    pub fn new(grid: Arc<Grid>, x: DMatrix<f64>, y: DMatrix<f64>, z: DVector<f64>) -> Result<Self> {
        let n = z.len();
        if x.nrows() != n || y.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if x.nrows() != n { x.nrows() } else { y.nrows() },
            });
        }
        if y.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: y.ncols(),
            });
        }
        Ok(Self {
            grid,
            x,
            y,
            z,
            noise: None,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn curve(&self, i: usize) -> GridFunction {
        GridFunction::from_raw(self.grid.clone(), self.y.row(i).iter().copied().collect())
    }
}

/// Reusable generator for one model on one grid.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: ModelSpec,
    grid: Arc<Grid>,
    /// Row `k` holds `√μ_k ψ_k` on the grid.
    scaled_basis: DMatrix<f64>,
    /// `W β₀`, so that `⟨Y_i, β₀⟩` is a dot product with the raw row.
    weighted_beta0: DVector<f64>,
}

impl Sampler {
    pub fn new(spec: &ModelSpec, pop: &PopulationOperators) -> Result<Self> {
        spec.validate()?;
        let grid = pop.grid.clone();
        let mu = &pop.process_spectrum;
        let mut scaled_basis = cosine_matrix(&grid, mu.len())?.transpose();
        for (k, v) in mu.iter().enumerate() {
            scaled_basis.row_mut(k).scale_mut(v.sqrt());
        }
        let weighted_beta0 = DVector::from_iterator(
            grid.len(),
            pop.beta0
                .values()
                .iter()
                .zip(grid.weights())
                .map(|(b, w)| b * w),
        );
        Ok(Self {
            spec: spec.clone(),
            grid,
            scaled_basis,
            weighted_beta0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Draw `n` samples; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(invalid("n", "need at least one sample"));
        }
        let p = self.spec.p();
        let b = self.spec.laplace_scale;

        let mut rng = stream(seed, Role::Covariates);
        let x = DMatrix::from_row_iterator(
            n,
            p,
            (0..n * p).map(|_| {
                let e1: f64 = Exp1.sample(&mut rng);
                let e2: f64 = Exp1.sample(&mut rng);
                b * (e1 - e2)
            }),
        );

        let k = self.scaled_basis.nrows();
        let unif = Uniform::new_inclusive(-SQRT_3, SQRT_3).expect("valid bounds");
        let mut rng = stream(seed, Role::Process);
        let zeta = DMatrix::from_row_iterator(n, k, (0..n * k).map(|_| unif.sample(&mut rng)));
        let y = zeta * &self.scaled_basis;

        let sigma = self.spec.sigma;
        let mut rng = stream(seed, Role::Noise);
        let noise = DVector::from_iterator(
            n,
            (0..n).map(|_| match self.spec.noise {
                NoiseKind::Gaussian => {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    sigma * g
                }
                NoiseKind::Uniform => sigma * rng.random_range(-SQRT_3..=SQRT_3),
            }),
        );

        let alpha0 = DVector::from_column_slice(&self.spec.alpha0);
        let z = &x * alpha0 + &y * &self.weighted_beta0 + &noise;
        Ok(Dataset {
            grid: self.grid.clone(),
            x,
            y,
            z,
            noise: Some(noise),
            seed,
        })
    }
}

pub fn gen_dataset(
    spec: &ModelSpec,
    pop: &PopulationOperators,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    Sampler::new(spec, pop)?.sample(n, seed)
}

/// Noise-free regression function `x'α₀ + ⟨y, β₀⟩`.
pub fn true_prediction(
    spec: &ModelSpec,
    pop: &PopulationOperators,
    x: &[f64],
    y: &GridFunction,
) -> Result<f64> {
    if x.len() != spec.p() {
        return Err(Error::DimensionMismatch {
            expected: spec.p(),
            got: x.len(),
        });
    }
    let lin: f64 = x.iter().zip(&spec.alpha0).map(|(a, b)| a * b).sum();
    Ok(lin + quad_inner(y, &pop.beta0)?)
}
