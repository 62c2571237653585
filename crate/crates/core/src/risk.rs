//! Exact excess risk, upper-bound constants, and empirical checks of the
//! concentration events behind them.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{build_empirical, lambda_schedule, largest_singular_value, PflmFit};
use crate::grid::quad_norm;
use crate::operator::SpectralOperator;
use crate::rng::replicate_seed;
use crate::synthetic::{ModelSpec, PopulationOperators, Sampler};

/// Excess prediction risk and its pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessRisk {
    pub total: f64,
    /// `(α̂−α₀)ᵀ D (α̂−α₀)`.
    pub alpha_part: f64,
    /// `⟨β̂−β₀, L_C(β̂−β₀)⟩`.
    pub functional_part: f64,
    /// `2λ_max‖α̂−α₀‖² + 2‖T^{1/2}(f̂−f₀)‖²`.
    pub upper_bound: f64,
    pub alpha_err: f64,
    pub tfhalf_err: f64,
}

pub fn excess_risk(
    fit: &PflmFit,
    spec: &ModelSpec,
    pop: &PopulationOperators,
) -> Result<ExcessRisk> {
    if fit.alpha_hat.len() != spec.p() {
        return Err(Error::DimensionMismatch {
            expected: spec.p(),
            got: fit.alpha_hat.len(),
        });
    }
    let da = &fit.alpha_hat - DVector::from_column_slice(&spec.alpha0);
    let alpha_part = (da.transpose() * &pop.d * &da)[(0, 0)];
    let db = fit.beta_hat.sub(&pop.beta0)?;
    let w = pop.grid.weights();
    let wdb = DVector::from_iterator(db.len(), db.values().iter().zip(w).map(|(b, w)| b * w));
    let functional_part = (wdb.transpose() * pop.c.matrix() * &wdb)[(0, 0)];
    let df = fit.f_hat.sub(&pop.f0)?;
    let tdf = pop.t.apply(&df)?;
    let tf2 = crate::grid::quad_inner(&df, &tdf)?.max(0.0);
    let alpha_err = da.norm();
    Ok(ExcessRisk {
        total: alpha_part + functional_part,
        alpha_part,
        functional_part,
        upper_bound: 2.0 * pop.lambda_max * alpha_err * alpha_err + 2.0 * tf2,
        alpha_err,
        tfhalf_err: tf2.sqrt(),
    })
}

/// Confidence levels, penalty schedule and effective-dimension constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
    pub omega: f64,
    pub theta: f64,
    /// Constant `c` in `D(λ) ≤ c λ^{-θ}`.
    pub c_eff: f64,
}

const TWO_OVER_E: f64 = 2.0 / std::f64::consts::E;

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        let ds = [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
            ("delta4", self.delta4),
            ("delta5", self.delta5),
        ];
        for (name, d) in ds {
            if !(d > 0.0 && d < 1.0) {
                return Err(invalid(name, format!("must lie in (0, 1), got {d}")));
            }
        }
        for (name, d) in [("delta1", self.delta1), ("delta2", self.delta2)] {
            if d >= TWO_OVER_E {
                return Err(invalid(name, format!("must lie in (0, 2/e), got {d}")));
            }
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(invalid("omega", "must be positive"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(invalid("theta", "must be positive"));
        }
        if !(self.c_eff > 0.0 && self.c_eff.is_finite()) {
            return Err(invalid("c_eff", "must be positive"));
        }
        Ok(())
    }

    pub fn delta_sum(&self) -> f64 {
        self.delta1 + self.delta2 + self.delta3 + self.delta4 + self.delta5
    }
}

/// Model constants entering the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub p: usize,
    pub kappa: f64,
    pub m1: f64,
    pub upsilon: f64,
    pub m2: f64,
    pub sigma: f64,
    pub d_inv_norm: f64,
    pub lambda_max: f64,
    pub f0_norm: f64,
}

impl BoundInputs {
    pub fn from_population(spec: &ModelSpec, pop: &PopulationOperators) -> Self {
        Self {
            p: spec.p(),
            kappa: pop.kappa,
            m1: pop.m1,
            upsilon: pop.upsilon,
            m2: pop.m2,
            sigma: spec.sigma,
            d_inv_norm: pop.d_inv_norm,
            lambda_max: pop.lambda_max,
            f0_norm: quad_norm(&pop.f0),
        }
    }
}

/// Every constant of the upper bound, evaluated at one sample size.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub lambda_n: f64,
    pub omega: f64,
    pub theta: f64,
    pub c_eff: f64,
    pub effective_dimension: f64,
    pub kappa: f64,
    pub lambda_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    #[serde(rename = "B_n")]
    pub b_n: f64,
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    /// Threshold `(2c₂c₄ log(2p/δ₅)/ω)^{(1+θ)/θ}` reached inside the proof.
    #[serde(rename = "N2_proof")]
    pub n2_proof: f64,
    pub n0: f64,
    #[serde(rename = "C1")]
    pub big_c1: f64,
    #[serde(rename = "C2")]
    pub big_c2: f64,
    #[serde(rename = "C3")]
    pub big_c3: f64,
    pub bound: f64,
    pub alpha_radius: f64,
    pub f_radius: f64,
    pub below_threshold: bool,
}

/// Bound and confidence radii at one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub n: usize,
    pub lambda_n: f64,
    pub bound: f64,
    pub alpha_radius: f64,
    pub f_radius: f64,
    /// `n < n₀`: the guarantee does not apply yet.
    pub below_threshold: bool,
}

/// `B_n = 1/(n√λ) + √(D(λ)/n)`.
pub fn b_n(n: usize, lambda: f64, effective_dimension: f64) -> f64 {
    let nf = n as f64;
    1.0 / (nf * lambda.sqrt()) + (effective_dimension / nf).sqrt()
}

/// Threshold above which `‖D_n^{-1}‖ ≤ 1.5‖D^{-1}‖` holds with probability `1−δ`.
pub fn n1_threshold(p: usize, upsilon: f64, m1: f64, d_inv_norm: f64, delta: f64) -> f64 {
    let pf = p as f64;
    48.0 * upsilon
        * upsilon
        * pf
        * d_inv_norm
        * (48.0 * pf * d_inv_norm * m1 * m1 + 1.0)
        * (2.0 * pf * pf / delta).ln()
}

/// Smallest `t` with `2p² exp(−nt²/(16υ²(16M₁²+t))) ≤ δ`.
pub fn covariate_deviation_radius(n: usize, p: usize, m1: f64, upsilon: f64, delta: f64) -> f64 {
    let pf = p as f64;
    let l = (2.0 * pf * pf / delta).ln();
    let a = 16.0 * upsilon * upsilon * l;
    let nf = n as f64;
    (a + (a * a + 4.0 * nf * a * 16.0 * m1 * m1).sqrt()) / (2.0 * nf)
}

pub fn bound_constants(
    cfg: &BoundConfig,
    inputs: &BoundInputs,
    t: &SpectralOperator,
    n: usize,
) -> Result<BoundReport> {
    cfg.validate()?;
    if inputs.p == 0 {
        return Err(invalid(
            "p",
            "the bound needs at least one scalar covariate",
        ));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let BoundInputs {
        p,
        kappa,
        m1,
        upsilon,
        m2,
        sigma,
        d_inv_norm,
        lambda_max,
        f0_norm,
    } = *inputs;
    let pf = p as f64;
    let (omega, theta, c) = (cfg.omega, cfg.theta, cfg.c_eff);
    let log1 = (2.0 / cfg.delta1).ln();
    let log2 = (2.0 * pf / cfg.delta2).ln();
    let log5 = (2.0 * pf / cfg.delta5).ln();

    let lambda_n = lambda_schedule(omega, theta, n)?;
    let eff = t.effective_dimension(lambda_n)?;
    let bn = b_n(n, lambda_n, eff);

    let c1 = 2.0 * kappa * kappa * m2 * m2;
    let c2 = 2.0 * pf * kappa * (upsilon + m1) * m2;
    let c3 = pf.sqrt() * sigma * m1;
    let c4 = 3.0 * pf * kappa * (upsilon + m1) * m2 * d_inv_norm * log2;
    let c5 = 3.0 * pf.sqrt() * sigma * m1 * d_inv_norm / (2.0 * cfg.delta4.sqrt());
    let a = 1.0 / omega + omega.powf(-(1.0 + theta) / 2.0) * c.sqrt();
    let c6 = f0_norm + c2 * c5 / omega * log2 + sigma * a / cfg.delta3.sqrt();
    let amp = c1 * a * log1 + 1.0;
    let c7 = f0_norm * amp;
    let c8 = amp * amp * sigma * a / cfg.delta3.sqrt();
    let c9 = c2 * (2.0 * c4 * c6 + c5) / omega.sqrt() * amp * log2;

    let n1 = n1_threshold(p, upsilon, m1, d_inv_norm, cfg.delta5);
    let expo = (1.0 + theta) / theta;
    let n2 = (12.0 * pf * pf * kappa * kappa * (upsilon + m1).powi(2) * m2 * m2 * d_inv_norm
        / omega
        * log2.powi(3)
        * log5)
        .powf(expo);
    let n2_proof = (2.0 * c2 * c4 / omega * log5).powf(expo);
    let n0 = n1.max(n2).ceil();

    let big_c1 = 2.0 * lambda_max * (2.0 * c4 * c6 + c5).powi(2) + 2.0 * c9 * c9;
    let big_c2 = 4.0 * (c7 + c8) * c9;
    let big_c3 = 2.0 * (c7 + c8).powi(2);

    let mut report = BoundReport {
        n,
        lambda_n,
        omega,
        theta,
        c_eff: c,
        effective_dimension: eff,
        kappa,
        lambda_max,
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        b_n: bn,
        n1,
        n2,
        n2_proof,
        n0,
        big_c1,
        big_c2,
        big_c3,
        ..Default::default()
    };
    let v = bound_value(&report, n);
    report.bound = v.bound;
    report.alpha_radius = v.alpha_radius;
    report.f_radius = v.f_radius;
    report.below_threshold = v.below_threshold;
    Ok(report)
}

/// Bound constants for a synthetic model, with `‖f₀‖` from the population truth.
pub fn bound_constants_for(
    cfg: &BoundConfig,
    spec: &ModelSpec,
    pop: &PopulationOperators,
    n: usize,
) -> Result<BoundReport> {
    bound_constants(cfg, &BoundInputs::from_population(spec, pop), &pop.t, n)
}

pub fn bound_value(report: &BoundReport, n: usize) -> BoundValue {
    let nf = n as f64;
    let theta = report.theta;
    let lambda_n = report.omega * nf.powf(-1.0 / (1.0 + theta));
    let mixed = report.omega.sqrt() * nf.powf(-(2.0 + theta) / (2.0 + 2.0 * theta));
    BoundValue {
        n,
        lambda_n,
        bound: report.big_c1 / nf + report.big_c2 * mixed + report.big_c3 * lambda_n,
        alpha_radius: (2.0 * report.c4 * report.c6 + report.c5) / nf.sqrt(),
        f_radius: (report.c7 + report.c8) * lambda_n.sqrt() + report.c9 / nf.sqrt(),
        below_threshold: nf < report.n0,
    }
}

/// `θ = 1/(2r)` for eigenvalues decaying like `k^{-2r}`.
pub fn theta_from_decay(r: f64) -> Result<f64> {
    if !(r > 0.5 && r.is_finite()) {
        return Err(invalid(
            "r",
            format!("decay exponent must exceed 1/2, got {r}"),
        ));
    }
    Ok(1.0 / (2.0 * r))
}

/// `max D(λ) λ^θ` over a log-spaced grid of penalties in `[1e-10, 1e4]`.
pub fn fit_effective_dimension_constant(t: &SpectralOperator, theta: f64) -> Result<f64> {
    if theta.is_nan() || theta <= 0.0 {
        return Err(invalid("theta", "must be positive"));
    }
    let steps = 281;
    let mut best = 0.0_f64;
    for i in 0..steps {
        let lambda = 10f64.powf(-10.0 + 14.0 * i as f64 / (steps - 1) as f64);
        best = best.max(t.effective_dimension(lambda)? * lambda.powf(theta));
    }
    Ok(best)
}

/// Norms compared by the two resolvent inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    /// `‖(T+λ)^{-1/2}(T_n−T)‖`.
    pub deviation: f64,
    /// `‖(T+λ)(T_n+λ)^{-1}‖`.
    pub resolvent_ratio: f64,
    /// `‖(T+λ)^{1/2}(T_n+λ)^{-1/2}‖`.
    pub half_ratio: f64,
    /// `‖(T_n+λ)^{-1/2}(T+λ)^{1/2}‖`, the adjoint of the previous one.
    pub half_ratio_adjoint: f64,
    /// `(deviation/√λ + 1)²`.
    pub resolvent_rhs: f64,
    /// `deviation/√λ + 1`.
    pub half_rhs: f64,
    pub resolvent_holds: bool,
    pub half_holds: bool,
    /// Whether `deviation ≤ radius` for the supplied radius.
    pub within_radius: Option<bool>,
}

/// Matrix function of a symmetric matrix.
fn sym_fn(a: &DMatrix<f64>, phi: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let mut v = eig.eigenvectors.clone();
    for (k, &t) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(k).scale_mut(phi(t.max(0.0)));
    }
    v * eig.eigenvectors.transpose()
}

/// Compare `T` and `T_n` on the span of both ranges; off that span both vanish.
pub fn inequality_check(
    t: &SpectralOperator,
    tn: &SpectralOperator,
    lambda: f64,
    radius: Option<f64>,
) -> Result<InequalityReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", "must be positive"));
    }
    if !t.grid().same_as(tn.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = t.grid();
    let m = grid.len();
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let lift = |e: &DMatrix<f64>| {
        let mut out = e.clone();
        for (j, s) in sw.iter().enumerate() {
            out.row_mut(j).scale_mut(*s);
        }
        out
    };
    let (rt, rn) = (t.rank(), tn.rank());
    let mut stacked = DMatrix::zeros(m, rt + rn);
    stacked
        .columns_mut(0, rt)
        .copy_from(&lift(t.eigenfunction_matrix()));
    stacked
        .columns_mut(rt, rn)
        .copy_from(&lift(tn.eigenfunction_matrix()));

    let basis = if rt + rn == 0 {
        DMatrix::zeros(m, 0)
    } else {
        let svd = SVD::new(stacked.clone(), true, false);
        let u = svd.u.expect("left vectors requested");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > 1e-10 * smax)
            .collect();
        u.select_columns(&keep)
    };
    let q = basis.ncols();
    let reduce = |op: &SpectralOperator, cols: DMatrix<f64>| {
        let mut pc = basis.tr_mul(&cols);
        let proj = pc.clone();
        for (k, &v) in op.eigenvalues().iter().enumerate() {
            pc.column_mut(k).scale_mut(v);
        }
        crate::operator::symmetrize(pc * proj.transpose())
    };
    let a_t = reduce(t, stacked.columns(0, rt).into_owned());
    let a_n = reduce(tn, stacked.columns(rt, rn).into_owned());

    let complement = if q < m { 1.0 } else { 0.0 };
    let (deviation, ratio, half, half_adj) = if q == 0 {
        (0.0, complement, complement, complement)
    } else {
        let t_inv_half = sym_fn(&a_t, |x| 1.0 / (x + lambda).sqrt());
        let t_half = sym_fn(&a_t, |x| (x + lambda).sqrt());
        let t_shift = sym_fn(&a_t, |x| x + lambda);
        let n_inv = sym_fn(&a_n, |x| 1.0 / (x + lambda));
        let n_inv_half = sym_fn(&a_n, |x| 1.0 / (x + lambda).sqrt());
        (
            largest_singular_value(&t_inv_half * (&a_n - &a_t)),
            largest_singular_value(&t_shift * &n_inv).max(complement),
            largest_singular_value(&t_half * &n_inv_half).max(complement),
            largest_singular_value(&n_inv_half * &t_half).max(complement),
        )
    };
    let half_rhs = deviation / lambda.sqrt() + 1.0;
    let resolvent_rhs = half_rhs * half_rhs;
    let slack = 1.0 + 1e-10;
    Ok(InequalityReport {
        deviation,
        resolvent_ratio: ratio,
        half_ratio: half,
        half_ratio_adjoint: half_adj,
        resolvent_rhs,
        half_rhs,
        resolvent_holds: ratio <= resolvent_rhs * slack,
        half_holds: half.max(half_adj) <= half_rhs * slack,
        within_radius: radius.map(|r| deviation <= r),
    })
}

/// Frequency of one concentration event over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub lemma: String,
    pub delta: f64,
    /// Radius the statistic is compared against.
    pub radius: f64,
    /// `None` when the event does not apply.
    pub frequency: Option<f64>,
    /// Required floor `1 − δ`.
    pub threshold: f64,
    pub max_statistic: f64,
}

impl EventRow {
    pub fn passes(&self) -> bool {
        self.frequency.is_none_or(|f| f >= self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n: usize,
    pub reps: usize,
    pub lambda_n: f64,
    #[serde(rename = "B_n")]
    pub b_n: f64,
    #[serde(rename = "N1")]
    pub n1: Option<f64>,
    pub rows: Vec<EventRow>,
    /// Draws on which either resolvent inequality failed.
    pub inequality_violations: usize,
    /// Largest `|‖G_n‖ − ‖H_n‖|` seen.
    pub max_adjoint_gap: f64,
}

#[derive(Debug, Clone, Copy)]
struct DrawStats {
    deviation: f64,
    inequalities_hold: bool,
    g_norm: f64,
    adjoint_gap: f64,
    noise_term: f64,
    a_norm: f64,
    d_dev: f64,
    d_inv_norm: f64,
}

/// Check the concentration events on `reps` independent draws of size `n`.
///
/// Replicates run on the current rayon pool; the result does not depend on
/// how many threads it has.
pub fn concentration_suite(
    spec: &ModelSpec,
    pop: &PopulationOperators,
    n: usize,
    reps: usize,
    cfg: &BoundConfig,
    seed: u64,
) -> Result<ConcentrationReport> {
    cfg.validate()?;
    if reps < 100 {
        return Err(invalid(
            "reps",
            format!("need at least 100 replicates, got {reps}"),
        ));
    }
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let sampler = Sampler::new(spec, pop)?;
    let lambda = lambda_schedule(cfg.omega, cfg.theta, n)?;
    let p = spec.p();
    let stats: Vec<DrawStats> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<DrawStats> {
            let data = sampler.sample(n, replicate_seed(seed, n as u64, rep as u64))?;
            let ops = build_empirical(&data, &pop.khalf)?;
            let ineq = inequality_check(&pop.t, &ops.t_n, lambda, None)?;
            let g = ops.g_n.as_ref().expect("synthetic data carries noise");
            let noise_term = quad_norm(&pop.t.apply_function(
                g,
                |x| 1.0 / (x + lambda).sqrt(),
                1.0 / lambda.sqrt(),
            )?);
            let (g_norm, h_norm) = (ops.g_norm(), ops.h_norm());
            let (a_norm, d_dev, d_inv_norm) = if p == 0 {
                (0.0, 0.0, 0.0)
            } else {
                let a = ops.a_n.as_ref().expect("synthetic data carries noise");
                let min_eig = SymmetricEigen::new(ops.d_n.clone()).eigenvalues.min();
                (
                    a.norm(),
                    (&ops.d_n - &pop.d).amax(),
                    if min_eig > 0.0 {
                        1.0 / min_eig
                    } else {
                        f64::INFINITY
                    },
                )
            };
            Ok(DrawStats {
                deviation: ineq.deviation,
                inequalities_hold: ineq.resolvent_holds && ineq.half_holds,
                g_norm,
                adjoint_gap: (g_norm - h_norm).abs(),
                noise_term,
                a_norm,
                d_dev,
                d_inv_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let eff = pop.t.effective_dimension(lambda)?;
    let bn = b_n(n, lambda, eff);
    let nf = n as f64;
    let pf = p as f64;
    let (kappa, m1, m2, ups) = (pop.kappa, pop.m1, pop.m2, pop.upsilon);
    let sigma = spec.sigma;
    let freq = |pred: &dyn Fn(&DrawStats) -> bool| {
        stats.iter().filter(|s| pred(s)).count() as f64 / reps as f64
    };
    let max_of = |get: &dyn Fn(&DrawStats) -> f64| stats.iter().map(get).fold(0.0, f64::max);
    let row = |lemma: &str, delta: f64, radius: f64, frequency: Option<f64>, max_statistic: f64| {
        EventRow {
            lemma: lemma.to_string(),
            delta,
            radius,
            frequency,
            threshold: 1.0 - delta,
            max_statistic,
        }
    };

    let mut rows = Vec::new();
    let r31 = 2.0 * kappa * kappa * m2 * m2 * (2.0 / cfg.delta1).ln() * bn;
    rows.push(row(
        "sandwich_deviation",
        cfg.delta1,
        r31,
        Some(freq(&|s| s.deviation <= r31)),
        max_of(&|s| s.deviation),
    ));
    let r32 = if p > 0 {
        2.0 * pf * kappa * (ups + m1) * m2 * (2.0 * pf / cfg.delta2).ln() / nf.sqrt()
    } else {
        f64::NAN
    };
    rows.push(row(
        "cross_operator",
        cfg.delta2,
        r32,
        (p > 0).then(|| freq(&|s| s.g_norm <= r32)),
        max_of(&|s| s.g_norm),
    ));
    let r34 = sigma / cfg.delta3.sqrt() * bn;
    rows.push(row(
        "noise_projection",
        cfg.delta3,
        r34,
        Some(freq(&|s| s.noise_term <= r34)),
        max_of(&|s| s.noise_term),
    ));
    let r35 = pf.sqrt() * sigma * m1 / (cfg.delta4.sqrt() * nf.sqrt());
    rows.push(row(
        "covariate_noise",
        cfg.delta4,
        r35,
        (p > 0).then(|| freq(&|s| s.a_norm <= r35)),
        max_of(&|s| s.a_norm),
    ));
    let r36 = if p > 0 {
        covariate_deviation_radius(n, p, m1, ups, cfg.delta5)
    } else {
        f64::NAN
    };
    rows.push(row(
        "design_deviation",
        cfg.delta5,
        r36,
        (p > 0).then(|| freq(&|s| s.d_dev < r36)),
        max_of(&|s| s.d_dev),
    ));
    let n1 = (p > 0).then(|| n1_threshold(p, ups, m1, pop.d_inv_norm, cfg.delta5));
    let r37 = 1.5 * pop.d_inv_norm;
    let applies = n1.is_some_and(|n1| nf > n1);
    rows.push(row(
        "design_inverse",
        cfg.delta5,
        r37,
        applies.then(|| freq(&|s| s.d_inv_norm <= r37)),
        max_of(&|s| s.d_inv_norm),
    ));

    Ok(ConcentrationReport {
        n,
        reps,
        lambda_n: lambda,
        b_n: bn,
        n1,
        rows,
        inequality_violations: stats.iter().filter(|s| !s.inequalities_hold).count(),
        max_adjoint_gap: max_of(&|s| s.adjoint_gap),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit_joint;
    use crate::grid::{make_uniform_grid, GridFunction};
    use crate::operator::{CovarianceMatrix, KernelSpec};
    use crate::synthetic::{population_operators, NoiseKind, ProcessSpectrum};
    use approx::assert_relative_eq;

    fn model(p: usize) -> ModelSpec {
        ModelSpec {
            alpha0: vec![1.0; p],
            f0_coeffs: vec![1.0, 0.5],
            kernel: KernelSpec::SyntheticSpectrum {
                scale: 1.0,
                exponent: 1.0,
                terms: 10,
            },
            process_spectrum: ProcessSpectrum::PowerLaw {
                scale: 1.0,
                exponent: 1.0,
                terms: 10,
            },
            laplace_scale: 1.0,
            sigma: 1.0,
            noise: NoiseKind::Gaussian,
        }
    }

    fn config() -> BoundConfig {
        BoundConfig {
            delta1: 0.1,
            delta2: 0.1,
            delta3: 0.1,
            delta4: 0.1,
            delta5: 0.1,
            omega: 1.0,
            theta: 0.25,
            c_eff: 1.0,
        }
    }

    fn truth_fit(spec: &ModelSpec, pop: &PopulationOperators) -> PflmFit {
        PflmFit {
            alpha_hat: DVector::from_column_slice(&spec.alpha0),
            f_hat: pop.f0.clone(),
            beta_hat: pop.beta0.clone(),
            lambda: 0.1,
            solver: crate::estimator::Solver::Joint,
            residual: 0.0,
            rank: pop.khalf.rank(),
        }
    }

    #[test]
    fn truth_has_zero_risk() {
        let g = make_uniform_grid(0.0, 1.0, 41).unwrap();
        let s = model(2);
        let pop = population_operators(&s, &g).unwrap();
        let r = excess_risk(&truth_fit(&s, &pop), &s, &pop).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.upper_bound, 0.0);
    }

    #[test]
    fn unit_covariate_error() {
        let g = make_uniform_grid(0.0, 1.0, 41).unwrap();
        let s = model(2);
        let pop = population_operators(&s, &g).unwrap();
        let mut fit = truth_fit(&s, &pop);
        fit.alpha_hat[0] += 1.0;
        let r = excess_risk(&fit, &s, &pop).unwrap();
        assert_relative_eq!(r.total, 2.0, max_relative = 1e-14);
        assert_relative_eq!(r.alpha_part, 2.0, max_relative = 1e-14);
        assert_eq!(r.functional_part, 0.0);
    }

    #[test]
    fn risk_bounded_by_decomposition() {
        let g = make_uniform_grid(0.0, 1.0, 41).unwrap();
        let s = model(2);
        let pop = population_operators(&s, &g).unwrap();
        let data = Sampler::new(&s, &pop).unwrap().sample(80, 3).unwrap();
        let fit = fit_joint(&data, &pop.khalf, 0.05).unwrap();
        let r = excess_risk(&fit, &s, &pop).unwrap();
        assert!(r.total <= r.upper_bound);
        assert_relative_eq!(r.functional_part, r.tfhalf_err.powi(2), max_relative = 1e-8);
    }

    #[test]
    fn printed_n1_example() {
        let n1 = n1_threshold(1, 1.0, 1.0, 1.0, 0.05);
        assert_relative_eq!(n1, 48.0 * 49.0 * 40f64.ln(), max_relative = 1e-14);
        assert!((n1 - 8676.2).abs() < 0.05);
    }

    #[test]
    fn leading_constants() {
        let g = make_uniform_grid(0.0, 1.0, 21).unwrap();
        let s = model(4);
        let pop = population_operators(&s, &g).unwrap();
        let inputs = BoundInputs {
            p: 4,
            kappa: 1.0,
            m1: 1.0,
            upsilon: 1.0,
            m2: 2.0,
            sigma: 1.0,
            d_inv_norm: 1.0,
            lambda_max: 1.0,
            f0_norm: 1.0,
        };
        let rep = bound_constants(&config(), &inputs, &pop.t, 100).unwrap();
        assert_eq!(rep.c3, 2.0);
        assert_eq!(rep.c1, 8.0);
        assert!(rep.n2_proof.is_finite() && rep.n2 >= rep.n2_proof);
    }

    #[test]
    fn bound_value_examples() {
        let rep = BoundReport {
            big_c1: 1.0,
            big_c2: 1.0,
            big_c3: 1.0,
            theta: 1.0,
            omega: 1.0,
            ..Default::default()
        };
        let v = bound_value(&rep, 100);
        assert_relative_eq!(
            v.bound,
            0.01 + 100f64.powf(-0.75) + 0.1,
            max_relative = 1e-14
        );
        assert_eq!(v.alpha_radius, 0.0);
        assert_eq!(v.f_radius, 0.0);

        let only_c3 = BoundReport {
            big_c3: 1.0,
            theta: 1.0,
            omega: 1.0,
            ..Default::default()
        };
        let ratio = bound_value(&only_c3, 200).bound / bound_value(&only_c3, 100).bound;
        assert_relative_eq!(ratio, 0.5f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn decay_mapping() {
        assert_eq!(theta_from_decay(1.0).unwrap(), 0.5);
        assert_eq!(theta_from_decay(2.0).unwrap(), 0.25);
        assert!(theta_from_decay(0.5).is_err());
        let r = 1.0;
        let theta = theta_from_decay(r).unwrap();
        assert_relative_eq!(
            2.0 * r / (1.0 + 2.0 * r),
            1.0 / (1.0 + theta),
            max_relative = 1e-15
        );
        assert_relative_eq!(1.0 / (1.0 + theta), 2.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn delta_ranges_enforced() {
        let mut c = config();
        c.delta2 = 0.8;
        assert!(c.validate().is_err());
        let mut c = config();
        c.delta1 = 0.8;
        assert!(c.validate().is_err());
        let mut c = config();
        c.delta3 = 0.8;
        assert!(c.validate().is_ok());
        c.delta4 = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn identical_operators() {
        let g = make_uniform_grid(0.0, 1.0, 41).unwrap();
        let pop = population_operators(&model(1), &g).unwrap();
        let rep = inequality_check(&pop.t, &pop.t, 0.01, None).unwrap();
        assert!(rep.deviation < 1e-12);
        assert!((rep.resolvent_ratio - 1.0).abs() < 1e-12);
        assert!((rep.half_ratio - 1.0).abs() < 1e-12);
        assert!(rep.resolvent_holds && rep.half_holds);
    }

    #[test]
    fn rank_one_perturbation() {
        // T = diag(0.5, 0.2) and T_n = T + 0.1 ψ₁⊗ψ₁ on the cosine basis.
        let g = make_uniform_grid(0.0, 1.0, 41).unwrap();
        let lambda: f64 = 0.05;
        let mk = |vals: &[f64]| {
            let funcs = (1..=vals.len())
                .map(|k| crate::grid::cosine_basis(k, &g).unwrap())
                .collect();
            SpectralOperator::from_eigenpairs(g.clone(), vals.to_vec(), funcs).unwrap()
        };
        let t = mk(&[0.5, 0.2]);
        let tn = mk(&[0.6, 0.2]);
        let rep = inequality_check(&t, &tn, lambda, Some(1.0)).unwrap();
        let dev = 0.1 / (0.5 + lambda).sqrt();
        assert_relative_eq!(rep.deviation, dev, max_relative = 1e-10);
        assert_relative_eq!(rep.resolvent_ratio, 1.0, max_relative = 1e-10);
        let want_half = 1.0f64.max(((0.5 + lambda) / (0.6 + lambda)).sqrt());
        assert_relative_eq!(rep.half_ratio, want_half, max_relative = 1e-10);
        assert!(rep.resolvent_holds && rep.half_holds);
        assert_eq!(rep.within_radius, Some(true));

        // Shrinking the operator instead makes the ratios exceed one.
        let rep = inequality_check(&tn, &t, lambda, None).unwrap();
        assert_relative_eq!(
            rep.resolvent_ratio,
            (0.6 + lambda) / (0.5 + lambda),
            max_relative = 1e-10
        );
        assert!(rep.resolvent_holds && rep.half_holds);
    }

    #[test]
    fn inequality_rejects_bad_lambda() {
        let g = make_uniform_grid(0.0, 1.0, 11).unwrap();
        let z = SpectralOperator::zero(g);
        assert!(inequality_check(&z, &z, 0.0, None).is_err());
    }

    #[test]
    fn deviation_radius_inverts_tail() {
        let (n, p, m1, ups, delta) = (500, 2, 2f64.sqrt(), 1.0, 0.05);
        let t = covariate_deviation_radius(n, p, m1, ups, delta);
        let tail = 2.0
            * (p * p) as f64
            * (-(n as f64) * t * t / (16.0 * ups * ups * (16.0 * m1 * m1 + t))).exp();
        assert_relative_eq!(tail, delta, max_relative = 1e-10);
    }

    #[test]
    fn effective_constant_dominates() {
        let g = make_uniform_grid(0.0, 1.0, 101).unwrap();
        let pop = population_operators(&model(1), &g).unwrap();
        let c = fit_effective_dimension_constant(&pop.t, 0.25).unwrap();
        for lambda in [1e-6, 1e-3, 0.1, 10.0] {
            assert!(
                pop.t.effective_dimension(lambda).unwrap() <= c * lambda.powf(-0.25) * (1.0 + 1e-9)
            );
        }
    }

    #[test]
    fn suite_without_covariates_marks_rows_inapplicable() {
        let g = make_uniform_grid(0.0, 1.0, 31).unwrap();
        let s = model(0);
        let pop = population_operators(&s, &g).unwrap();
        let rep = concentration_suite(&s, &pop, 50, 100, &config(), 1).unwrap();
        let by = |l: &str| rep.rows.iter().find(|r| r.lemma == l).unwrap().clone();
        assert!(by("covariate_noise").frequency.is_none());
        assert!(by("cross_operator").frequency.is_none());
        assert!(by("sandwich_deviation").frequency.is_some());
        assert_eq!(rep.inequality_violations, 0);
        assert!(rep.n1.is_none());
    }

    #[test]
    fn suite_requires_enough_replicates() {
        let g = make_uniform_grid(0.0, 1.0, 31).unwrap();
        let s = model(1);
        let pop = population_operators(&s, &g).unwrap();
        assert!(concentration_suite(&s, &pop, 50, 10, &config(), 1).is_err());
    }

    #[test]
    fn zero_covariance_sandwich_is_rank_zero_for_check() {
        let g = make_uniform_grid(0.0, 1.0, 21).unwrap();
        let pop = population_operators(&model(1), &g).unwrap();
        let zero = crate::operator::sandwich(&pop.khalf, &CovarianceMatrix::zeros(g)).unwrap();
        let rep = inequality_check(&pop.t, &zero, 0.1, None).unwrap();
        assert!(rep.resolvent_holds && rep.half_holds);
    }

    #[test]
    fn noise_statistic_uses_complement() {
        let g = make_uniform_grid(0.0, 1.0, 21).unwrap();
        let z = SpectralOperator::zero(g.clone());
        let f = GridFunction::from_fn(g, |_| 1.0).unwrap();
        let out = z
            .apply_function(&f, |x| 1.0 / (x + 4.0).sqrt(), 0.5)
            .unwrap();
        assert_relative_eq!(quad_norm(&out), 0.5, max_relative = 1e-14);
    }
}
