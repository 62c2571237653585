mod oracles;

use nalgebra::{DMatrix, SymmetricEigen};
use pflm_core::estimator::{build_empirical, fit_joint, lambda_schedule};
use pflm_core::grid::make_uniform_grid;
use pflm_core::operator::{KernelSpec, SpectralOperator};
use pflm_core::risk::{concentration_suite, excess_risk, inequality_check, BoundConfig};
use pflm_core::rng::replicate_seed;
use pflm_core::synthetic::{
    gen_dataset, population_operators, ModelSpec, ProcessSpectrum, Sampler,
};

fn spec(p: usize, kernel_exp: f64, process_exp: f64, terms: usize) -> ModelSpec {
    ModelSpec {
        alpha0: vec![1.0; p],
        f0_coeffs: vec![1.0, 0.5, 0.25],
        kernel: KernelSpec::SyntheticSpectrum {
            scale: 1.0,
            exponent: kernel_exp,
            terms,
        },
        process_spectrum: ProcessSpectrum::PowerLaw {
            scale: 1.0,
            exponent: process_exp,
            terms,
        },
        laplace_scale: 1.0,
        sigma: 1.0,
        noise: Default::default(),
    }
}

fn config(delta1: f64, delta4: f64) -> BoundConfig {
    BoundConfig {
        delta1,
        delta2: 0.05,
        delta3: 0.05,
        delta4,
        delta5: 0.05,
        omega: 0.1,
        theta: 0.5,
        c_eff: 1.0,
    }
}

#[test]
fn exact_risk_matches_monte_carlo() {
    let s = spec(2, 1.0, 1.0, 12);
    let grid = make_uniform_grid(0.0, 1.0, 51).unwrap();
    let pop = population_operators(&s, &grid).unwrap();
    for seed in 0..3u64 {
        let data = gen_dataset(&s, &pop, 40, seed).unwrap();
        let fit = fit_joint(&data, &pop.khalf, 0.01).unwrap();
        let risk = excess_risk(&fit, &s, &pop).unwrap();
        let (mean, se) = oracles::monte_carlo_risk(
            &s,
            &pop,
            fit.alpha_hat.as_slice(),
            &fit.beta_hat,
            1_000_000,
            500 + seed,
        );
        assert!(
            (risk.total - mean).abs() <= 3.0 * se,
            "seed {seed}: {} vs {mean} ± {se}",
            risk.total
        );
        assert!(risk.total <= risk.upper_bound * (1.0 + 1e-12));
    }
}

/// Symmetric matrix of an operator in the `W^{1/2}`-weighted coordinates.
fn symmetric_form(op: &SpectralOperator, sw: &[f64]) -> DMatrix<f64> {
    let m = sw.len();
    let d = op.dense();
    let s = DMatrix::from_fn(m, m, |i, j| sw[i] * d[(i, j)] / sw[j]);
    (&s + s.transpose()) * 0.5
}

fn matrix_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let vals = eig.eigenvalues.map(|x| f(x.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

fn sigma_max(a: &DMatrix<f64>) -> f64 {
    a.singular_values().max()
}

#[test]
fn operator_norms_match_dense_computation() {
    let s = spec(1, 1.0, 1.0, 20);
    let grid = make_uniform_grid(0.0, 1.0, 41).unwrap();
    let pop = population_operators(&s, &grid).unwrap();
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let st = symmetric_form(&pop.t, &sw);
    for (seed, lambda) in [(1u64, 0.3), (2, 0.01), (3, 1e-4)] {
        let data = gen_dataset(&s, &pop, 100, seed).unwrap();
        let ops = build_empirical(&data, &pop.khalf).unwrap();
        let rep = inequality_check(&pop.t, &ops.t_n, lambda, None).unwrap();
        let sn = symmetric_form(&ops.t_n, &sw);
        let dev = sigma_max(&(matrix_fn(&st, |x| 1.0 / (x + lambda).sqrt()) * (&sn - &st)));
        let ratio =
            sigma_max(&(matrix_fn(&st, |x| x + lambda) * matrix_fn(&sn, |x| 1.0 / (x + lambda))));
        let half = sigma_max(
            &(matrix_fn(&st, |x| (x + lambda).sqrt())
                * matrix_fn(&sn, |x| 1.0 / (x + lambda).sqrt())),
        );
        assert!(
            (rep.deviation - dev).abs() <= 1e-7 * dev.max(1.0),
            "{} vs {dev}",
            rep.deviation
        );
        assert!((rep.resolvent_ratio - ratio).abs() <= 1e-6 * ratio);
        assert!((rep.half_ratio - half).abs() <= 1e-6 * half);
        assert!(rep.resolvent_holds && rep.half_holds);
    }
}

#[test]
fn rank_one_perturbation_satisfies_inequalities() {
    let grid = make_uniform_grid(0.0, 1.0, 41).unwrap();
    let tau: Vec<f64> = (1..=10).map(|k| (k as f64).powi(-2)).collect();
    let mut bumped = tau.clone();
    bumped[0] += 0.1;
    let t = oracles::cosine_operator(&grid, &tau);
    let tn = oracles::cosine_operator(&grid, &bumped);
    let lambda = 0.05;
    let rep = inequality_check(&t, &tn, lambda, None).unwrap();
    // Everything is diagonal in the cosine basis: closed forms on the first mode.
    let dev = 0.1 / (1.0 + lambda).sqrt();
    assert!((rep.deviation - dev).abs() < 1e-8);
    assert!((rep.resolvent_ratio - 1.0).abs() < 1e-8);
    assert!((rep.half_ratio - 1.0).abs() < 1e-8);
    assert!(rep.resolvent_holds && rep.half_holds);
    // A downward perturbation pushes the resolvent ratio above one.
    let mut shrunk = tau.clone();
    shrunk[0] -= 0.5;
    let tn = oracles::cosine_operator(&grid, &shrunk);
    let rep = inequality_check(&t, &tn, lambda, None).unwrap();
    assert!((rep.resolvent_ratio - (1.0 + lambda) / (0.5 + lambda)).abs() < 1e-8);
    assert!(rep.resolvent_holds && rep.half_holds);
}

#[test]
fn lemma_events_hold_at_stated_probability() {
    let s = spec(2, 1.0, 1.0, 20);
    let grid = make_uniform_grid(0.0, 1.0, 41).unwrap();
    let pop = population_operators(&s, &grid).unwrap();
    let report = concentration_suite(&s, &pop, 200, 1000, &config(0.1, 0.2), 2024).unwrap();
    let r31 = report.rows.iter().find(|r| r.lemma == "sandwich_deviation").unwrap();
    assert!(r31.frequency.unwrap() >= 0.9);
    assert_eq!(report.inequality_violations, 0);
    assert!(report.max_adjoint_gap <= 1e-10);

    let report = concentration_suite(&s, &pop, 500, 1000, &config(0.1, 0.2), 77).unwrap();
    let r35 = report.rows.iter().find(|r| r.lemma == "covariate_noise").unwrap();
    assert!(r35.frequency.unwrap() >= 0.8);
    for row in &report.rows {
        assert!(row.passes(), "{row:?}");
    }
}

#[test]
fn scalar_part_skipped_without_covariates() {
    let s = spec(0, 1.0, 1.0, 10);
    let grid = make_uniform_grid(0.0, 1.0, 21).unwrap();
    let pop = population_operators(&s, &grid).unwrap();
    let report = concentration_suite(&s, &pop, 100, 100, &config(0.1, 0.2), 1).unwrap();
    for lemma in ["cross_operator", "covariate_noise", "design_deviation", "design_inverse"] {
        assert!(report
            .rows
            .iter()
            .find(|r| r.lemma == lemma)
            .unwrap()
            .frequency
            .is_none());
    }
    assert!(report
        .rows
        .iter()
        .find(|r| r.lemma == "sandwich_deviation")
        .unwrap()
        .frequency
        .is_some());
}

#[test]
fn risk_decreases_with_growing_covariate_count() {
    // r = 1 (θ = 1/2 > 2/5) with p_n = ⌊n^{1/8}⌋.
    let grid = make_uniform_grid(0.0, 1.0, 201).unwrap();
    let reps = 40;
    let mut means = Vec::new();
    for n in [100usize, 200, 400, 800, 1600, 3200] {
        let p = (n as f64).powf(0.125).floor() as usize;
        let s = spec(p, 0.75, 0.25, 100);
        let pop = population_operators(&s, &grid).unwrap();
        let sampler = Sampler::new(&s, &pop).unwrap();
        let lambda = lambda_schedule(0.1, 0.5, n).unwrap();
        let total: f64 = (0..reps)
            .map(|rep| {
                let data = sampler
                    .sample(n, replicate_seed(31, n as u64, rep))
                    .unwrap();
                let fit = fit_joint(&data, &pop.khalf, lambda).unwrap();
                excess_risk(&fit, &s, &pop).unwrap().total
            })
            .sum();
        means.push(total / reps as f64);
    }
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}
