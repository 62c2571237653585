//! Experiment runners. Each runner computes an in-memory outcome and a
//! separate writer serializes it, so tests can inspect results directly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use pflm_core::error::Error as CoreError;
use pflm_core::estimator::{build_empirical, fit_coupled, fit_joint, lambda_schedule, PflmFit};
use pflm_core::grid::Grid;
use pflm_core::minimax::{
    beta_family, lower_bound, min_pairwise_distance_in, vg_packing, LowerBoundCert,
};
use pflm_core::risk::{
    bound_constants_for, bound_value, concentration_suite, excess_risk, BoundConfig, BoundReport,
    ConcentrationReport, ExcessRisk,
};
use pflm_core::rng::replicate_seed;
use pflm_core::synthetic::{population_operators, ModelSpec, PopulationOperators, Sampler};

use crate::config::{ExperimentConfig, ExperimentKind, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};

/// Fits whose stationarity residual exceeds this are excluded from summaries.
pub const RESIDUAL_LIMIT: f64 = 1e-6;

/// Run the configured experiment on a pool of `workers` threads and write its
/// outputs under `out`. Returns the written paths.
pub fn run(cfg: &ExperimentConfig, out: &Path, workers: usize) -> CliResult<Vec<PathBuf>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    std::fs::create_dir_all(out)?;
    pool.install(|| match cfg.kind {
        ExperimentKind::Rate => write_rate(&rate_experiment(cfg)?, cfg, out),
        ExperimentKind::Concentration => write_concentration(&concentration_experiment(cfg)?, out),
        ExperimentKind::Bounds => write_json(&bounds_experiment(cfg)?, &out.join("bounds.json")),
        ExperimentKind::Minimax => write_json(&minimax_experiment(cfg)?, &out.join("minimax.json")),
        ExperimentKind::Fit => write_fit(&fit_experiment(cfg)?, out),
    })
}

fn converged(fit: &PflmFit) -> bool {
    fit.residual <= RESIDUAL_LIMIT
}

fn model(cfg: &ExperimentConfig, n: usize) -> CliResult<ModelSpec> {
    cfg.model_at(n)
        .ok_or_else(|| CliError::Config(format!("kind `{}` needs a model", cfg.kind.name())))
}

/// Population operators per sample size; rebuilt only when the covariate count changes.
struct Populations {
    grid: std::sync::Arc<Grid>,
    cached: Option<(usize, PopulationOperators)>,
}

impl Populations {
    fn new(cfg: &ExperimentConfig) -> CliResult<Self> {
        Ok(Self {
            grid: cfg.make_grid()?,
            cached: None,
        })
    }

    fn get(&mut self, spec: &ModelSpec) -> CliResult<&PopulationOperators> {
        let stale = self.cached.as_ref().is_none_or(|(p, _)| *p != spec.p());
        if stale {
            let pop = population_operators(spec, &self.grid)
                .map_err(|e| CliError::Config(format!("model: {e}")))?;
            self.cached = Some((spec.p(), pop));
        }
        Ok(&self.cached.as_ref().expect("filled above").1)
    }
}

fn lambda_for(cfg: &ExperimentConfig, bounds: &BoundConfig, n: usize) -> CliResult<f64> {
    Ok(match cfg.fixed_lambda {
        Some(l) => l,
        None => lambda_schedule(bounds.omega, bounds.theta, n)?,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Least-squares slope of `ln y` on `ln x`, over points with positive finite `y`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(_, y)| y.is_finite() && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub rep: usize,
    pub lambda: f64,
    pub excess_risk: f64,
    pub alpha_part: f64,
    pub functional_part: f64,
    pub alpha_err: f64,
    pub tfhalf_err: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSummaryRow {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub reps_used: usize,
    pub excluded: usize,
    pub mean_excess_risk: f64,
    pub se_excess_risk: f64,
    pub mean_alpha_part: f64,
    pub se_alpha_part: f64,
    pub mean_functional_part: f64,
    pub se_functional_part: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSlope {
    pub quantity: String,
    pub slope: Option<f64>,
    /// Rate predicted by the theory: `-1/(1+θ)` for the total and functional
    /// parts, `-1` for the covariate part.
    pub target: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateOutcome {
    pub rows: Vec<RateRow>,
    pub summary: Vec<RateSummaryRow>,
    pub slopes: Vec<RateSlope>,
    pub excluded: usize,
    pub theta: f64,
}

enum RepResult {
    Kept(RateRow),
    Excluded,
}

pub fn rate_experiment(cfg: &ExperimentConfig) -> CliResult<RateOutcome> {
    let mut pops = Populations::new(cfg)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut theta = f64::NAN;
    for &n in &cfg.n_grid {
        let spec = model(cfg, n)?;
        let pop = pops.get(&spec)?;
        let bounds = cfg.bounds.resolve(&spec, pop)?;
        theta = bounds.theta;
        let lambda = lambda_for(cfg, &bounds, n)?;
        let sampler = Sampler::new(&spec, pop)?;
        let results: Vec<RepResult> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| -> CliResult<RepResult> {
                let seed = replicate_seed(cfg.seed, n as u64, rep as u64);
                let data = sampler.sample(n, seed)?;
                let fit = match fit_joint(&data, &pop.khalf, lambda) {
                    Ok(fit) => fit,
                    Err(CoreError::RankDeficient) => return Ok(RepResult::Excluded),
                    Err(e) => return Err(e.into()),
                };
                if !converged(&fit) {
                    return Ok(RepResult::Excluded);
                }
                let risk = excess_risk(&fit, &spec, pop)?;
                Ok(RepResult::Kept(RateRow {
                    n,
                    p: spec.p(),
                    rep,
                    lambda,
                    excess_risk: risk.total,
                    alpha_part: risk.alpha_part,
                    functional_part: risk.functional_part,
                    alpha_err: risk.alpha_err,
                    tfhalf_err: risk.tfhalf_err,
                    seed,
                }))
            })
            .collect::<CliResult<_>>()?;
        let kept: Vec<RateRow> = results
            .iter()
            .filter_map(|r| match r {
                RepResult::Kept(row) => Some(row.clone()),
                RepResult::Excluded => None,
            })
            .collect();
        let excluded = results.len() - kept.len();
        let column = |get: fn(&RateRow) -> f64| mean_se(&kept.iter().map(get).collect::<Vec<_>>());
        let (mt, st) = column(|r| r.excess_risk);
        let (ma, sa) = column(|r| r.alpha_part);
        let (mf, sf) = column(|r| r.functional_part);
        summary.push(RateSummaryRow {
            n,
            p: spec.p(),
            lambda,
            reps_used: kept.len(),
            excluded,
            mean_excess_risk: mt,
            se_excess_risk: st,
            mean_alpha_part: ma,
            se_alpha_part: sa,
            mean_functional_part: mf,
            se_functional_part: sf,
        });
        rows.extend(kept);
    }
    let ns: Vec<f64> = summary.iter().map(|s| s.n as f64).collect();
    let slope = |get: fn(&RateSummaryRow) -> f64| {
        log_log_slope(&ns, &summary.iter().map(get).collect::<Vec<_>>())
    };
    let functional_target = -1.0 / (1.0 + theta);
    let slopes = vec![
        RateSlope {
            quantity: "excess_risk".into(),
            slope: slope(|s| s.mean_excess_risk),
            target: functional_target,
        },
        RateSlope {
            quantity: "alpha_part".into(),
            slope: slope(|s| s.mean_alpha_part),
            target: -1.0,
        },
        RateSlope {
            quantity: "functional_part".into(),
            slope: slope(|s| s.mean_functional_part),
            target: functional_target,
        },
    ];
    let excluded = summary.iter().map(|s| s.excluded).sum();
    Ok(RateOutcome {
        rows,
        summary,
        slopes,
        excluded,
        theta,
    })
}

fn write_csv<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const RATE_HEADER: [&str; 10] = [
    "n",
    "p",
    "rep",
    "lambda",
    "excess_risk",
    "alpha_part",
    "functional_part",
    "alpha_err",
    "tfhalf_err",
    "seed",
];

pub const RATE_SUMMARY_HEADER: [&str; 11] = [
    "n",
    "p",
    "lambda",
    "reps_used",
    "excluded",
    "mean_excess_risk",
    "se_excess_risk",
    "mean_alpha_part",
    "se_alpha_part",
    "mean_functional_part",
    "se_functional_part",
];

pub const RATE_SLOPES_HEADER: [&str; 3] = ["quantity", "slope", "target"];

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    kind: &'a str,
    seed: u64,
    reps: usize,
    n_grid: &'a [usize],
    excluded: usize,
    files: Vec<String>,
}

fn write_rate(
    outcome: &RateOutcome,
    cfg: &ExperimentConfig,
    out: &Path,
) -> CliResult<Vec<PathBuf>> {
    let rate = out.join("rate.csv");
    let summary = out.join("rate_summary.csv");
    let slopes = out.join("rate_slopes.csv");
    write_csv(&outcome.rows, &RATE_HEADER, &rate)?;
    write_csv(&outcome.summary, &RATE_SUMMARY_HEADER, &summary)?;
    write_csv(&outcome.slopes, &RATE_SLOPES_HEADER, &slopes)?;
    let mut files = vec![rate, summary, slopes];
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        kind: "rate",
        seed: cfg.seed,
        reps: cfg.reps,
        n_grid: &cfg.n_grid,
        excluded: outcome.excluded,
        files: files
            .iter()
            .map(|p| {
                p.file_name()
                    .expect("joined above")
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    let path = out.join("manifest.json");
    write_json(&manifest, &path)?;
    files.push(path);
    Ok(files)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult<Vec<PathBuf>> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(vec![path.to_path_buf()])
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationRow {
    pub lemma: String,
    pub n: usize,
    pub reps: usize,
    pub delta: f64,
    /// Empty when the event does not apply (no covariates, or `n ≤ N₁`).
    pub frequency: Option<f64>,
    pub threshold: f64,
}

pub const CONCENTRATION_HEADER: [&str; 6] =
    ["lemma", "n", "reps", "delta", "frequency", "threshold"];

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationOutcome {
    pub schema_version: u32,
    pub bounds: Vec<BoundConfig>,
    pub reports: Vec<ConcentrationReport>,
}

impl ConcentrationOutcome {
    pub fn rows(&self) -> Vec<ConcentrationRow> {
        self.reports
            .iter()
            .flat_map(|rep| {
                rep.rows.iter().map(|row| ConcentrationRow {
                    lemma: row.lemma.clone(),
                    n: rep.n,
                    reps: rep.reps,
                    delta: row.delta,
                    frequency: row.frequency,
                    threshold: row.threshold,
                })
            })
            .collect()
    }
}

pub fn concentration_experiment(cfg: &ExperimentConfig) -> CliResult<ConcentrationOutcome> {
    if cfg.reps < 100 {
        return Err(CliError::Config(format!(
            "the concentration suite needs reps >= 100, got {}",
            cfg.reps
        )));
    }
    let mut pops = Populations::new(cfg)?;
    let mut reports = Vec::new();
    let mut bounds = Vec::new();
    for &n in &cfg.n_grid {
        let spec = model(cfg, n)?;
        let pop = pops.get(&spec)?;
        let b = cfg.bounds.resolve(&spec, pop)?;
        reports.push(concentration_suite(&spec, pop, n, cfg.reps, &b, cfg.seed)?);
        bounds.push(b);
    }
    Ok(ConcentrationOutcome {
        schema_version: SCHEMA_VERSION,
        bounds,
        reports,
    })
}

fn write_concentration(outcome: &ConcentrationOutcome, out: &Path) -> CliResult<Vec<PathBuf>> {
    let csv_path = out.join("concentration.csv");
    write_csv(&outcome.rows(), &CONCENTRATION_HEADER, &csv_path)?;
    let mut files = vec![csv_path];
    files.extend(write_json(outcome, &out.join("concentration.json"))?);
    Ok(files)
}

/// Observed frequencies of the bound and radius events at one sample size.
#[derive(Debug, Clone, Serialize)]
pub struct BoundValidity {
    pub n: usize,
    pub reps: usize,
    pub below_threshold: bool,
    pub bound: f64,
    pub mean_excess_risk: f64,
    pub risk_frequency: f64,
    /// `1 − Σδ`.
    pub risk_threshold: f64,
    pub alpha_radius_frequency: f64,
    /// `1 − δ₂ − δ₃ − δ₄ − δ₅`.
    pub alpha_radius_threshold: f64,
    pub f_radius_frequency: f64,
    pub f_radius_threshold: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsOutcome {
    pub schema_version: u32,
    pub config: BoundConfig,
    pub reports: Vec<BoundReport>,
    pub validity: Vec<BoundValidity>,
}

pub fn bounds_experiment(cfg: &ExperimentConfig) -> CliResult<BoundsOutcome> {
    let mut pops = Populations::new(cfg)?;
    let mut reports = Vec::new();
    let mut validity = Vec::new();
    let mut config = None;
    for &n in &cfg.n_grid {
        let spec = model(cfg, n)?;
        let pop = pops.get(&spec)?;
        let b = cfg.bounds.resolve(&spec, pop)?;
        let report = bound_constants_for(&b, &spec, pop, n)?;
        validity.push(bound_validity(cfg, &spec, pop, &b, &report, n)?);
        reports.push(report);
        config = Some(b);
    }
    Ok(BoundsOutcome {
        schema_version: SCHEMA_VERSION,
        config: config.ok_or_else(|| CliError::Config("n_grid is empty".into()))?,
        reports,
        validity,
    })
}

fn bound_validity(
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    pop: &PopulationOperators,
    b: &BoundConfig,
    report: &BoundReport,
    n: usize,
) -> CliResult<BoundValidity> {
    let value = bound_value(report, n);
    let sampler = Sampler::new(spec, pop)?;
    let risks: Vec<Option<ExcessRisk>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> CliResult<Option<ExcessRisk>> {
            let data = sampler.sample(n, replicate_seed(cfg.seed, n as u64, rep as u64))?;
            let fit = fit_joint(&data, &pop.khalf, report.lambda_n)?;
            if !converged(&fit) {
                return Ok(None);
            }
            Ok(Some(excess_risk(&fit, spec, pop)?))
        })
        .collect::<CliResult<_>>()?;
    let kept: Vec<&ExcessRisk> = risks.iter().flatten().collect();
    let k = kept.len().max(1) as f64;
    let freq =
        |pred: &dyn Fn(&ExcessRisk) -> bool| kept.iter().filter(|r| pred(r)).count() as f64 / k;
    Ok(BoundValidity {
        n,
        reps: cfg.reps,
        below_threshold: value.below_threshold,
        bound: value.bound,
        mean_excess_risk: kept.iter().map(|r| r.total).sum::<f64>() / k,
        risk_frequency: freq(&|r| r.total <= value.bound),
        risk_threshold: 1.0 - b.delta_sum(),
        alpha_radius_frequency: freq(&|r| r.alpha_err <= value.alpha_radius),
        alpha_radius_threshold: 1.0 - (b.delta_sum() - b.delta1),
        f_radius_frequency: freq(&|r| r.tfhalf_err <= value.f_radius),
        f_radius_threshold: 1.0 - b.delta_sum(),
        excluded: risks.len() - kept.len(),
    })
}

/// Checks on the explicit slope family built from the model's sandwich operator.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyCheck {
    pub family_size: usize,
    pub max_rkhs_norm_sq: f64,
    pub rkhs_ok: bool,
    pub min_separation: f64,
    /// `b₁ 2^{-(2r+3)} M^{-2r}`.
    pub separation_floor: f64,
    pub separation_ok: bool,
    /// Whether `b₁ k^{-2r} ≤ τ_k ≤ b₂ k^{-2r}` for every `k ≤ 2M`.
    pub envelope_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxOutcome {
    pub schema_version: u32,
    pub certificate: LowerBoundCert,
    pub family: Option<FamilyCheck>,
}

pub fn minimax_experiment(cfg: &ExperimentConfig) -> CliResult<MinimaxOutcome> {
    let mm = cfg
        .minimax
        .ok_or_else(|| CliError::Config("kind `minimax` needs a `minimax` section".into()))?;
    let cert = lower_bound(mm.n, mm.r, mm.b1, mm.b2, mm.sigma2, mm.rho, cfg.seed)?;
    let family = match (&cfg.model, cert.packing_size) {
        (Some(spec), Some(_)) => {
            let grid = cfg.make_grid()?;
            let pop = population_operators(spec, &grid)
                .map_err(|e| CliError::Config(format!("model: {e}")))?;
            let pack = vg_packing(cert.m, cfg.seed)?;
            let fam = beta_family(&pack, &pop.t, &pop.khalf)?;
            let m = cert.m as f64;
            let max_rkhs = fam.rkhs_norms_sq.iter().copied().fold(0.0, f64::max);
            let min_sep = min_pairwise_distance_in(&fam, &pop.c)?;
            let floor = mm.b1 * 2f64.powf(-(2.0 * mm.r + 3.0)) * m.powf(-2.0 * mm.r);
            let envelope_ok =
                pop.t.eigenvalues()[..2 * cert.m]
                    .iter()
                    .enumerate()
                    .all(|(k, &tau)| {
                        let base = ((k + 1) as f64).powf(-2.0 * mm.r);
                        let tol = 1e-9 * base;
                        tau >= mm.b1 * base - tol && tau <= mm.b2 * base + tol
                    });
            Some(FamilyCheck {
                family_size: fam.betas.len(),
                max_rkhs_norm_sq: max_rkhs,
                rkhs_ok: max_rkhs <= 1.0 + 1e-10,
                min_separation: min_sep,
                separation_floor: floor,
                separation_ok: min_sep >= floor,
                envelope_ok,
            })
        }
        _ => None,
    };
    Ok(MinimaxOutcome {
        schema_version: SCHEMA_VERSION,
        certificate: cert,
        family,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub lambda: f64,
    pub alpha_hat: Vec<f64>,
    pub joint_residual: f64,
    /// Present when the coupled solver applies (`λ > 0`, invertible `D_n`).
    pub coupled_residual: Option<f64>,
    /// Relative gaps between the two solvers in `α̂` and `f̂`.
    pub solver_gap: Option<(f64, f64)>,
    pub risk: ExcessRisk,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub n: usize,
    pub t: f64,
    pub f_hat: f64,
    pub beta_hat: f64,
    pub beta0: f64,
}

pub const CURVE_HEADER: [&str; 5] = ["n", "t", "f_hat", "beta_hat", "beta0"];

#[derive(Debug, Clone, Serialize)]
pub struct FitOutcome {
    pub schema_version: u32,
    pub fits: Vec<FitSummary>,
    #[serde(skip)]
    pub curves: Vec<CurveRow>,
}

fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

pub fn fit_experiment(cfg: &ExperimentConfig) -> CliResult<FitOutcome> {
    let mut pops = Populations::new(cfg)?;
    let mut fits = Vec::new();
    let mut curves = Vec::new();
    for &n in &cfg.n_grid {
        let spec = model(cfg, n)?;
        let pop = pops.get(&spec)?;
        let lambda = match cfg.fixed_lambda {
            Some(l) => l,
            None => lambda_for(cfg, &cfg.bounds.resolve(&spec, pop)?, n)?,
        };
        let seed = replicate_seed(cfg.seed, n as u64, 0);
        let data = Sampler::new(&spec, pop)?.sample(n, seed)?;
        let joint = fit_joint(&data, &pop.khalf, lambda)?;
        let coupled: Option<PflmFit> = if lambda > 0.0 {
            let ops = build_empirical(&data, &pop.khalf)?;
            match fit_coupled(&ops, &data, &pop.khalf, lambda) {
                Ok(fit) => Some(fit),
                Err(CoreError::SingularDesign { .. }) => None,
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        let risk = excess_risk(&joint, &spec, pop)?;
        for (j, &t) in pop.grid.points().iter().enumerate() {
            curves.push(CurveRow {
                n,
                t,
                f_hat: joint.f_hat.values()[j],
                beta_hat: joint.beta_hat.values()[j],
                beta0: pop.beta0.values()[j],
            });
        }
        fits.push(FitSummary {
            n,
            p: spec.p(),
            seed,
            lambda,
            alpha_hat: joint.alpha_hat.iter().copied().collect(),
            joint_residual: joint.residual,
            coupled_residual: coupled.as_ref().map(|c| c.residual),
            solver_gap: coupled.as_ref().map(|c| {
                (
                    relative_gap(c.alpha_hat.as_slice(), joint.alpha_hat.as_slice()),
                    relative_gap(c.f_hat.values(), joint.f_hat.values()),
                )
            }),
            risk,
        });
    }
    Ok(FitOutcome {
        schema_version: SCHEMA_VERSION,
        fits,
        curves,
    })
}

fn write_fit(outcome: &FitOutcome, out: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = write_json(outcome, &out.join("fit.json"))?;
    let curves = out.join("fit_curves.csv");
    write_csv(&outcome.curves, &CURVE_HEADER, &curves)?;
    files.push(curves);
    Ok(files)
}
