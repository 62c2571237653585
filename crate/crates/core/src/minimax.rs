//! Lower-bound certificate: binary packing, hypothesis family and KL budget.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{quad_norm, GridFunction};
use crate::operator::{CovarianceMatrix, SpectralOperator};
use crate::rng::{stream, Role};

/// Largest packing length built explicitly; beyond it the pairwise check is too costly.
pub const MAX_PACKING_LENGTH: usize = 64;

/// Binary vectors of length `M` with pairwise Hamming distance above `M/8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub length: usize,
    /// First vector is all zeros.
    pub vectors: Vec<Vec<bool>>,
    pub min_distance: usize,
}

impl Packing {
    /// Number of vectors besides the zero vector.
    pub fn size(&self) -> usize {
        self.vectors.len() - 1
    }
}

fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// `⌈2^{M/8}⌉`.
pub fn required_packing_size(m: usize) -> usize {
    2f64.powf(m as f64 / 8.0).ceil() as usize
}

/// Greedy random packing seeded from the zero vector.
pub fn vg_packing(m: usize, seed: u64) -> Result<Packing> {
    if m < 8 {
        return Err(invalid("M", format!("packing needs M >= 8, got {m}")));
    }
    let required = required_packing_size(m);
    let max_attempts = 1000 * required.max(100);
    let mut rng = stream(seed, Role::Packing);
    let mut kept = vec![vec![false; m]];
    let mut attempts = 0;
    while kept.len() <= required {
        if attempts == max_attempts {
            return Err(Error::PackingExhausted {
                attempts,
                found: kept.len() - 1,
                required,
            });
        }
        attempts += 1;
        let cand: Vec<bool> = (0..m).map(|_| rng.random::<bool>()).collect();
        if kept.iter().all(|v| 8 * hamming(v, &cand) > m) {
            kept.push(cand);
        }
    }
    let packing = Packing {
        length: m,
        min_distance: min_pairwise_distance(&kept),
        vectors: kept,
    };
    verify_packing(&packing)?;
    Ok(packing)
}

fn min_pairwise_distance(vs: &[Vec<bool>]) -> usize {
    let mut best = usize::MAX;
    for i in 0..vs.len() {
        for j in 0..i {
            best = best.min(hamming(&vs[i], &vs[j]));
        }
    }
    best
}

/// Exhaustive check of the zero vector, the size and every pairwise distance.
pub fn verify_packing(p: &Packing) -> Result<()> {
    let m = p.length;
    if p.vectors.is_empty() || p.vectors[0].iter().any(|&b| b) {
        return Err(Error::Precondition(
            "first packing vector must be zero".into(),
        ));
    }
    if p.vectors.iter().any(|v| v.len() != m) {
        return Err(Error::Precondition(
            "packing vectors differ in length".into(),
        ));
    }
    if p.size() < required_packing_size(m) {
        return Err(Error::Precondition(format!(
            "packing has {} vectors, needs at least 2^(M/8) = {}",
            p.size(),
            required_packing_size(m)
        )));
    }
    for i in 0..p.vectors.len() {
        for j in 0..i {
            if 8 * hamming(&p.vectors[i], &p.vectors[j]) <= m {
                return Err(Error::Precondition(format!(
                    "vectors {j} and {i} are within M/8 of each other"
                )));
            }
        }
    }
    Ok(())
}

/// Slope functions indexed by a packing.
#[derive(Debug, Clone)]
pub struct BetaFamily {
    /// `M^{-1/2} Σ θ_k φ_{M+k}`, so that `β = K^{1/2} f`.
    pub preimages: Vec<GridFunction>,
    pub betas: Vec<GridFunction>,
    /// `‖β_θ‖²_K = ‖f_θ‖²` from the quadrature norm of the preimage.
    pub rkhs_norms_sq: Vec<f64>,
    /// `M^{-1} Σ θ_k²`.
    pub coefficient_norms_sq: Vec<f64>,
}

/// Build `β_θ = M^{-1/2} Σ_{k=M+1}^{2M} θ_k K^{1/2} φ_k` for each packing vector.
pub fn beta_family(
    pack: &Packing,
    t: &SpectralOperator,
    khalf: &SpectralOperator,
) -> Result<BetaFamily> {
    let m = pack.length;
    if t.rank() < 2 * m {
        return Err(Error::InsufficientRank {
            required: 2 * m,
            available: t.rank(),
        });
    }
    if !t.grid().same_as(khalf.grid()) {
        return Err(Error::GridMismatch);
    }
    let phi = t.eigenfunction_matrix().columns(m, m);
    let scale = 1.0 / (m as f64).sqrt();
    let mut family = BetaFamily {
        preimages: Vec::with_capacity(pack.vectors.len()),
        betas: Vec::with_capacity(pack.vectors.len()),
        rkhs_norms_sq: Vec::with_capacity(pack.vectors.len()),
        coefficient_norms_sq: Vec::with_capacity(pack.vectors.len()),
    };
    for theta in &pack.vectors {
        let coeffs = DVector::from_iterator(m, theta.iter().map(|&b| if b { scale } else { 0.0 }));
        let f = phi * &coeffs;
        let f = GridFunction::new(t.grid().clone(), f.data.into())?;
        let beta = khalf.apply(&f)?;
        family.rkhs_norms_sq.push(quad_norm(&f).powi(2));
        family.coefficient_norms_sq.push(coeffs.norm_squared());
        family.preimages.push(f);
        family.betas.push(beta);
    }
    Ok(family)
}

/// `⟨Δβ, L_C Δβ⟩`, the excess risk between two slopes at equal `α`.
pub fn functional_distance(
    beta1: &GridFunction,
    beta2: &GridFunction,
    c: &CovarianceMatrix,
) -> Result<f64> {
    let d = beta1.sub(beta2)?;
    let cd = c.apply(&d)?;
    crate::grid::quad_inner(&d, &cd)
}

/// Per-sample KL divergence between two Gaussian-noise models differing in slope.
pub fn kl_gaussian(
    beta1: &GridFunction,
    beta2: &GridFunction,
    c: &CovarianceMatrix,
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma2", "noise variance must be positive"));
    }
    Ok(functional_distance(beta1, beta2, c)? / (2.0 * sigma2))
}

/// Smallest pairwise `⟨Δβ, L_C Δβ⟩` over the family.
pub fn min_pairwise_distance_in(family: &BetaFamily, c: &CovarianceMatrix) -> Result<f64> {
    let mut best = f64::INFINITY;
    for i in 0..family.betas.len() {
        for j in 0..i {
            best = best.min(functional_distance(&family.betas[i], &family.betas[j], c)?);
        }
    }
    Ok(best)
}

/// `√N/(1+√N) · (1 − 2ρ − √(2ρ/log N))`.
pub fn probability_floor(n_hyp: f64, rho: f64) -> f64 {
    let s = n_hyp.sqrt();
    s / (1.0 + s) * (1.0 - 2.0 * rho - (2.0 * rho / n_hyp.ln()).sqrt())
}

/// Evaluated lower-bound certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCert {
    pub r: f64,
    pub b1: f64,
    pub b2: f64,
    pub sigma2: f64,
    pub k_sigma2: f64,
    pub rho: f64,
    pub n: usize,
    pub b0: f64,
    #[serde(rename = "M")]
    pub m: usize,
    /// Size of the certified packing, when one was built.
    pub packing_size: Option<usize>,
    pub packing_min_distance: Option<usize>,
    /// `b₂ n K M^{-2r}`.
    pub kl_budget_lhs: f64,
    /// `ρ (M/8) log 2`.
    pub kl_budget_rhs: f64,
    /// `ρ log N` for the certified packing.
    pub kl_budget_rhs_certified: Option<f64>,
    pub kl_budget_ok: bool,
    pub separation: f64,
    pub lower_bound: f64,
    /// Required lower bound on `log N`.
    pub log_n_required: f64,
    pub log_n_certified: Option<f64>,
    pub log_n_ok: Option<bool>,
    pub probability_floor: Option<f64>,
}

/// Continuous form of the lower bound.
pub fn lower_bound_value(n: f64, r: f64, b1: f64, b2: f64, sigma2: f64, rho: f64) -> f64 {
    let k = 1.0 / (2.0 * sigma2);
    let e = 2.0 * r / (1.0 + 2.0 * r);
    b1 * 2f64.powf(-4.0 * (1.0 + r)) * (8.0 * b2 * k / (rho * LN_2)).powf(-e) * n.powf(-e)
}

pub fn lower_bound(
    n: usize,
    r: f64,
    b1: f64,
    b2: f64,
    sigma2: f64,
    rho: f64,
    seed: u64,
) -> Result<LowerBoundCert> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", "must be positive"));
    }
    if !(b1 > 0.0 && b2 >= b1 && b2.is_finite()) {
        return Err(invalid(
            "b1/b2",
            format!("need 0 < b1 <= b2, got b1 = {b1}, b2 = {b2}"),
        ));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma2", "noise variance must be positive"));
    }
    if !(rho > 0.0 && rho < 0.125) {
        return Err(Error::Precondition(format!(
            "rho must lie in (0, 1/8), got {rho}"
        )));
    }
    let k = 1.0 / (2.0 * sigma2);
    let nf = n as f64;
    let n_min = rho * LN_2 / (8.0 * b2 * k);
    if nf < n_min {
        return Err(Error::Precondition(format!(
            "n >= rho log 2 / (8 b2 K) = {n_min:.3e} is required, got n = {n}"
        )));
    }
    let inv = 1.0 / (1.0 + 2.0 * r);
    let b0 = (8.0 * b2 * k / LN_2).powf(inv) * rho.powf(-inv);
    let m = (b0 * nf.powf(inv)).floor() as usize + 1;
    let mf = m as f64;

    let packing = if (8..=MAX_PACKING_LENGTH).contains(&m) {
        Some(vg_packing(m, seed)?)
    } else {
        None
    };
    let size = packing.as_ref().map(|p| p.size());
    let log_n_certified = size.map(|s| (s as f64).ln());
    let kl_budget_lhs = b2 * nf * k * mf.powf(-2.0 * r);
    let kl_budget_rhs = rho * mf / 8.0 * LN_2;
    let log_n_required =
        (8.0 / LN_2).powf(-2.0 * r * inv) * (b2 * k).powf(inv) * rho.powf(-inv) * nf.powf(inv);
    Ok(LowerBoundCert {
        r,
        b1,
        b2,
        sigma2,
        k_sigma2: k,
        rho,
        n,
        b0,
        m,
        packing_size: size,
        packing_min_distance: packing.as_ref().map(|p| p.min_distance),
        kl_budget_lhs,
        kl_budget_rhs,
        kl_budget_rhs_certified: log_n_certified.map(|l| rho * l),
        kl_budget_ok: kl_budget_lhs <= kl_budget_rhs,
        separation: b1 * 2f64.powf(-(2.0 * r + 3.0)) * mf.powf(-2.0 * r),
        lower_bound: lower_bound_value(nf, r, b1, b2, sigma2, rho),
        log_n_required,
        log_n_certified,
        log_n_ok: log_n_certified.map(|l| l >= log_n_required),
        probability_floor: size.map(|s| probability_floor(s as f64, rho)),
    })
}
