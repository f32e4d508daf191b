//! Monte Carlo studies: replicate scheduling, aggregation and rate fits.
//!
//! Replicates are independent tasks distributed over the rayon pool; the
//! per-replicate seed is derived from the master seed and the (cell,
//! replicate) indices only, so results are reproducible regardless of
//! scheduling order and unchanged when other replicates are added.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use convdiff::estimator::{
    estimate_a_stats, mle_unknown_a_stats, quadratic_variation_stats, simulate_location_stats,
    spectral_location_stats, weighted_augmented_mle_stats, BoxDomain, ExtensionMap,
    LocationStats, VelocityEstimate,
};
use convdiff::kernel::BaseKernel;
use convdiff::measure::MeasurementConfig;
use convdiff::model::{ModelSpec, ReactionSpec, ThetaSpec, X0Mode};
use convdiff::sim::SimOptions;
use convdiff::weights::{compute_weights, SmoothingKernel, WeightConfig, WeightSet};
use convdiff::{Error, Grid};

use crate::config::{DiffusivityMode, StudyConfig};
use crate::replicate_seed;
use crate::slope::fit_loglog_slope;

#[derive(Debug)]
pub enum LabError {
    Core(Error),
    /// A cell lost more than 10% of its replicates to estimation
    /// failures; the study result is not trustworthy.
    Invalidated {
        delta: f64,
        failures: usize,
        replicates: usize,
    },
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Core(e) => write!(f, "{e}"),
            LabError::Invalidated {
                delta,
                failures,
                replicates,
            } => write!(
                f,
                "study invalidated: {failures}/{replicates} replicate failures at delta = {delta}"
            ),
        }
    }
}

impl std::error::Error for LabError {}

impl From<Error> for LabError {
    fn from(e: Error) -> Self {
        LabError::Core(e)
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;

const MAX_FAILURE_FRACTION: f64 = 0.1;

// ---------------------------------------------------------------------------
// Cell machinery
// ---------------------------------------------------------------------------

/// One estimate written to estimates.csv.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    pub replicate: usize,
    pub seed: u64,
    pub delta: f64,
    pub h: f64,
    pub x: Vec<f64>,
    pub component: usize,
    pub theta_hat: f64,
    pub theta_true: f64,
    pub fisher_cond: f64,
    pub a_used: f64,
    pub a_source: &'static str,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub delta: f64,
    pub h: f64,
    pub n_locations: usize,
    pub m: usize,
    pub n_t: usize,
    pub replicates: usize,
    pub failures: usize,
    /// Aggregates at the primary evaluation point, per component.
    pub rmse: Vec<f64>,
    pub bias: Vec<f64>,
    /// Sample standard deviation (Bessel); `None` for a single replicate.
    pub std: Option<Vec<f64>>,
    /// Mean of tr([𝓜]_T)·N·h^d over replicates — the martingale
    /// variance-scaling diagnostic.
    pub qv_scaled: f64,
    /// Mean plug-in diffusivity over replicates (plug-in mode only).
    pub mean_a_hat: Option<f64>,
    pub rows: Vec<EstimateRow>,
}

struct CellPlan {
    delta: f64,
    h: f64,
    grid: Grid,
    meas: MeasurementConfig,
    locations: Vec<Vec<f64>>,
    weight_sets: Vec<WeightSet>,
}

fn plan_cell(
    cfg: &StudyConfig,
    kernel: &Arc<BaseKernel>,
    delta: f64,
    h: f64,
    eval_points: &[Vec<f64>],
) -> LabResult<CellPlan> {
    let locations = cfg.locations(delta, kernel)?;
    let m = cfg.grid_points(delta, kernel);
    let n_t = cfg.time_steps(delta);
    let grid = Grid::new(1, m, n_t, cfg.model.t_horizon)?;
    cfg.model.validate(&grid)?;
    let meas = MeasurementConfig::new(delta, locations.clone(), kernel.clone())?
        .with_guard_ratio(cfg.observation.guard_ratio);
    let wconfig = WeightConfig {
        h,
        v: cfg.weights.v,
        ridge: cfg.weights.ridge,
    };
    let weight_sets = eval_points
        .iter()
        .map(|x| compute_weights(x, &locations, &wconfig))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CellPlan {
        delta,
        h,
        grid,
        meas,
        locations,
        weight_sets,
    })
}

struct ReplicateOut {
    seed: u64,
    /// One estimate per evaluation point, or the failure message.
    estimates: std::result::Result<Vec<VelocityEstimate>, String>,
    qv_scaled: f64,
    a_hat_pooled: Option<f64>,
}

fn run_replicate(
    cfg: &StudyConfig,
    plan: &CellPlan,
    seed: u64,
) -> std::result::Result<(Vec<LocationStats>, f64), String> {
    let stats = simulate_location_stats(
        &cfg.model,
        &plan.grid,
        seed,
        &SimOptions::default(),
        &plan.meas,
    )
    .map_err(|e| e.to_string())?;
    let qv = quadratic_variation_stats(&stats, &plan.weight_sets[0]).map_err(|e| e.to_string())?;
    let d = plan.grid.d;
    let trace: f64 = (0..d).map(|i| qv[i * d + i]).sum();
    let n = plan.locations.len() as f64;
    let qv_scaled = trace * n * plan.h.powi(d as i32);
    Ok((stats, qv_scaled))
}

fn estimate_at_points(
    cfg: &StudyConfig,
    plan: &CellPlan,
    stats: &[LocationStats],
) -> std::result::Result<Vec<VelocityEstimate>, String> {
    plan.weight_sets
        .iter()
        .map(|ws| match cfg.diffusivity {
            DiffusivityMode::Known => {
                weighted_augmented_mle_stats(stats, ws, cfg.model.a).map_err(|e| e.to_string())
            }
            DiffusivityMode::Plugin => {
                mle_unknown_a_stats(stats, ws).map_err(|e| e.to_string())
            }
        })
        .collect()
}

fn run_cell(
    cfg: &StudyConfig,
    plan: &CellPlan,
    cell_idx: usize,
    eval_points: &[Vec<f64>],
) -> LabResult<CellResult> {
    let outs: Vec<ReplicateOut> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(cfg.seed, cell_idx, r);
            match run_replicate(cfg, plan, seed) {
                Ok((stats, qv_scaled)) => {
                    let a_hat_pooled = estimate_a_stats(&stats, None).ok();
                    ReplicateOut {
                        seed,
                        estimates: estimate_at_points(cfg, plan, &stats),
                        qv_scaled,
                        a_hat_pooled,
                    }
                }
                Err(msg) => ReplicateOut {
                    seed,
                    estimates: Err(msg),
                    qv_scaled: f64::NAN,
                    a_hat_pooled: None,
                },
            }
        })
        .collect();
    aggregate_cell(cfg, plan, eval_points, outs)
}

fn aggregate_cell(
    cfg: &StudyConfig,
    plan: &CellPlan,
    eval_points: &[Vec<f64>],
    outs: Vec<ReplicateOut>,
) -> LabResult<CellResult> {
    let d = plan.grid.d;
    let x0 = &eval_points[0];
    let theta_true0 = cfg.model.theta.value(x0);
    let mut rows = Vec::new();
    let mut failures = 0usize;
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); d];
    let mut qv_acc = 0.0;
    let mut qv_count = 0usize;
    let mut a_acc = 0.0;
    let mut a_count = 0usize;
    for (r, out) in outs.iter().enumerate() {
        match &out.estimates {
            Ok(ests) => {
                for (p, est) in ests.iter().enumerate() {
                    let truth = cfg.model.theta.value(&eval_points[p]);
                    for i in 0..d {
                        rows.push(EstimateRow {
                            replicate: r,
                            seed: out.seed,
                            delta: plan.delta,
                            h: plan.h,
                            x: eval_points[p].clone(),
                            component: i,
                            theta_hat: est.theta_hat[i],
                            theta_true: truth[i],
                            fisher_cond: est.fisher_cond,
                            a_used: est.a_used,
                            a_source: match est.a_source {
                                convdiff::estimator::ASource::Known => "known",
                                convdiff::estimator::ASource::PlugIn => "plugin",
                            },
                        });
                    }
                }
                for i in 0..d {
                    samples[i].push(ests[0].theta_hat[i]);
                }
                qv_acc += out.qv_scaled;
                qv_count += 1;
                if cfg.diffusivity == DiffusivityMode::Plugin {
                    if let Some(a) = out.a_hat_pooled {
                        a_acc += a;
                        a_count += 1;
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    let succeeded = cfg.replicates - failures;
    if (failures as f64) > MAX_FAILURE_FRACTION * cfg.replicates as f64 || succeeded == 0 {
        return Err(LabError::Invalidated {
            delta: plan.delta,
            failures,
            replicates: cfg.replicates,
        });
    }
    let mut rmse = vec![0.0; d];
    let mut bias = vec![0.0; d];
    let mut std = vec![0.0; d];
    for i in 0..d {
        let n = samples[i].len() as f64;
        let mean = samples[i].iter().sum::<f64>() / n;
        bias[i] = mean - theta_true0[i];
        rmse[i] = (samples[i]
            .iter()
            .map(|v| (v - theta_true0[i]).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        if n > 1.0 {
            std[i] = (samples[i].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
                .sqrt();
        }
    }
    Ok(CellResult {
        delta: plan.delta,
        h: plan.h,
        n_locations: plan.locations.len(),
        m: plan.grid.m,
        n_t: plan.grid.n_t,
        replicates: cfg.replicates,
        failures,
        rmse,
        bias,
        std: if succeeded > 1 { Some(std) } else { None },
        qv_scaled: if qv_count > 0 {
            qv_acc / qv_count as f64
        } else {
            f64::NAN
        },
        mean_a_hat: if a_count > 0 {
            Some(a_acc / a_count as f64)
        } else {
            None
        },
        rows,
    })
}

// ---------------------------------------------------------------------------
// Rate study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RateStudyResult {
    pub cells: Vec<CellResult>,
    /// OLS slope of log RMSE (first component) against log δ; `None`
    /// for a single-cell study.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub master_seed: u64,
}

pub fn run_rate_study(cfg: &StudyConfig) -> LabResult<RateStudyResult> {
    let kernel = Arc::new(cfg.kernel.build()?);
    let mut cells = Vec::new();
    for (ci, &delta) in cfg.observation.deltas.iter().enumerate() {
        let n_hint = cfg.locations(delta, &kernel)?.len();
        let h = cfg.weights.h_rule.bandwidth(delta, n_hint, 1);
        let plan = plan_cell(cfg, &kernel, delta, h, &cfg.eval_points)?;
        cells.push(run_cell(cfg, &plan, ci, &cfg.eval_points)?);
    }
    let (slope, slope_stderr) = if cells.len() >= 2 {
        let pairs: Vec<(f64, f64)> = cells.iter().map(|c| (c.delta, c.rmse[0])).collect();
        let (s, se) = fit_loglog_slope(&pairs)?;
        (Some(s), se)
    } else {
        (None, None)
    };
    Ok(RateStudyResult {
        cells,
        slope,
        slope_stderr,
        master_seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Bandwidth sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub delta: f64,
    pub cells: Vec<CellResult>,
    /// Index of the RMSE minimum over the h grid (first component).
    pub min_index: usize,
    /// RMSE(h_min_grid)/RMSE(min), RMSE(h_max_grid)/RMSE(min).
    pub endpoint_ratios: (f64, f64),
    /// True when the minimum is attained strictly inside the grid.
    pub interior_minimum: bool,
    pub master_seed: u64,
}

/// Fixed δ, geometric h grid. Replicates are simulated once and reused
/// across bandwidths (the measurements do not depend on h).
pub fn run_bandwidth_sweep(cfg: &StudyConfig) -> LabResult<SweepResult> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep study without [sweep] section".into()))?;
    let kernel = Arc::new(cfg.kernel.build()?);
    let delta = cfg.observation.deltas[0];
    let h_grid: Vec<f64> = (0..sweep.h_count)
        .map(|k| sweep.h_from * sweep.h_factor.powi(k as i32))
        .collect();

    // One plan per h (weights differ); shared simulation stats.
    let mut plans = Vec::new();
    for &h in &h_grid {
        plans.push(plan_cell(cfg, &kernel, delta, h, &cfg.eval_points)?);
    }
    let base = &plans[0];
    let stats_per_rep: Vec<std::result::Result<(Vec<LocationStats>, u64), String>> = (0
        ..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(cfg.seed, 0, r);
            simulate_location_stats(
                &cfg.model,
                &base.grid,
                seed,
                &SimOptions::default(),
                &base.meas,
            )
            .map(|s| (s, seed))
            .map_err(|e| e.to_string())
        })
        .collect();

    let mut cells = Vec::new();
    for plan in &plans {
        let outs: Vec<ReplicateOut> = stats_per_rep
            .iter()
            .map(|res| match res {
                Ok((stats, seed)) => {
                    let qv = quadratic_variation_stats(stats, &plan.weight_sets[0])
                        .map(|qv| qv[0] * plan.locations.len() as f64 * plan.h)
                        .unwrap_or(f64::NAN);
                    ReplicateOut {
                        seed: *seed,
                        estimates: estimate_at_points(cfg, plan, stats),
                        qv_scaled: qv,
                        a_hat_pooled: None,
                    }
                }
                Err(msg) => ReplicateOut {
                    seed: 0,
                    estimates: Err(msg.clone()),
                    qv_scaled: f64::NAN,
                    a_hat_pooled: None,
                },
            })
            .collect();
        cells.push(aggregate_cell(cfg, plan, &cfg.eval_points, outs)?);
    }

    let min_index = cells
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.rmse[0].partial_cmp(&b.rmse[0]).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let min_rmse = cells[min_index].rmse[0];
    let ratios = (
        cells.first().unwrap().rmse[0] / min_rmse,
        cells.last().unwrap().rmse[0] / min_rmse,
    );
    Ok(SweepResult {
        delta,
        min_index,
        endpoint_ratios: ratios,
        interior_minimum: min_index > 0 && min_index + 1 < cells.len(),
        cells,
        master_seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Trajectory study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub replicate: usize,
    pub x: f64,
    pub theta_hat: f64,
    pub theta_true: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    pub delta: f64,
    pub h: f64,
    pub rows: Vec<TrajectoryRow>,
    pub failures: usize,
    pub master_seed: u64,
}

/// Estimate θ̂ on a grid over 𝒥 for each replicate (d = 1).
pub fn run_trajectory(cfg: &StudyConfig) -> LabResult<TrajectoryResult> {
    let kernel = Arc::new(cfg.kernel.build()?);
    let delta = cfg.observation.deltas[0];
    let [lo, hi] = cfg.observation.domain;
    let eval_points: Vec<Vec<f64>> = (0..cfg.eval_grid)
        .map(|k| vec![lo + (hi - lo) * k as f64 / (cfg.eval_grid - 1) as f64])
        .collect();
    let n_hint = cfg.locations(delta, &kernel)?.len();
    let h = cfg.weights.h_rule.bandwidth(delta, n_hint, 1);
    let plan = plan_cell(cfg, &kernel, delta, h, &eval_points)?;

    let outs: Vec<(usize, std::result::Result<Vec<VelocityEstimate>, String>)> = (0
        ..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(cfg.seed, 0, r);
            let res = run_replicate(cfg, &plan, seed)
                .and_then(|(stats, _)| estimate_at_points(cfg, &plan, &stats));
            (r, res)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (r, res) in outs {
        match res {
            Ok(ests) => {
                for (p, est) in ests.iter().enumerate() {
                    rows.push(TrajectoryRow {
                        replicate: r,
                        x: eval_points[p][0],
                        theta_hat: est.theta_hat[0],
                        theta_true: cfg.model.theta.value(&eval_points[p])[0],
                    });
                }
            }
            Err(_) => failures += 1,
        }
    }
    if (failures as f64) > MAX_FAILURE_FRACTION * cfg.replicates as f64 {
        return Err(LabError::Invalidated {
            delta,
            failures,
            replicates: cfg.replicates,
        });
    }
    Ok(TrajectoryResult {
        delta,
        h,
        rows,
        failures,
        master_seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Integrated risk study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RiskCell {
    pub delta: f64,
    pub h: f64,
    pub n_locations: usize,
    pub replicates: usize,
    pub failures: usize,
    /// Means over replicates, first component.
    pub interior: f64,
    pub boundary: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct RiskStudyResult {
    pub cells: Vec<RiskCell>,
    pub d_max_sq: f64,
    /// Slope of log(mean interior contribution) against log δ.
    pub interior_slope: Option<f64>,
    pub master_seed: u64,
}

pub fn run_integrated_risk_study(cfg: &StudyConfig) -> LabResult<RiskStudyResult> {
    let kernel = Arc::new(cfg.kernel.build()?);
    let [lo, hi] = cfg.observation.domain;
    let j_box = BoxDomain::new(vec![lo], vec![hi])?;
    let eval_points: Vec<Vec<f64>> = (0..cfg.eval_grid)
        .map(|k| vec![lo + (hi - lo) * k as f64 / (cfg.eval_grid - 1) as f64])
        .collect();
    let theta_true = |x: &[f64]| cfg.model.theta.value(x);

    let mut cells = Vec::new();
    for (ci, &delta) in cfg.observation.deltas.iter().enumerate() {
        let n_hint = cfg.locations(delta, &kernel)?.len();
        let h = cfg.weights.h_rule.bandwidth(delta, n_hint, 1);
        let plan = plan_cell(cfg, &kernel, delta, h, &eval_points)?;
        let outs: Vec<std::result::Result<(f64, f64, f64), String>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = replicate_seed(cfg.seed, ci, r);
                let (stats, _) = run_replicate(cfg, &plan, seed)?;
                let ests = estimate_at_points(cfg, &plan, &stats)?;
                let map = ExtensionMap {
                    domain: j_box.clone(),
                    entries: eval_points
                        .iter()
                        .zip(ests.iter())
                        .map(|(x, e)| (x.clone(), e.theta_hat.clone()))
                        .collect(),
                };
                let risk = convdiff::estimator::integrated_risk(
                    |x| map.extend(x).unwrap(),
                    theta_true,
                    &j_box,
                    cfg.risk_cells,
                );
                Ok((
                    risk.interior[0],
                    risk.boundary_strip[0],
                    risk.per_component[0],
                ))
            })
            .collect();
        let mut failures = 0usize;
        let mut acc = (0.0, 0.0, 0.0);
        let mut count = 0usize;
        for out in outs {
            match out {
                Ok((i, b, t)) => {
                    acc.0 += i;
                    acc.1 += b;
                    acc.2 += t;
                    count += 1;
                }
                Err(_) => failures += 1,
            }
        }
        if (failures as f64) > MAX_FAILURE_FRACTION * cfg.replicates as f64 || count == 0 {
            return Err(LabError::Invalidated {
                delta,
                failures,
                replicates: cfg.replicates,
            });
        }
        cells.push(RiskCell {
            delta,
            h,
            n_locations: plan.locations.len(),
            replicates: cfg.replicates,
            failures,
            interior: acc.0 / count as f64,
            boundary: acc.1 / count as f64,
            total: acc.2 / count as f64,
        });
    }
    let interior_slope = if cells.len() >= 2 {
        let pairs: Vec<(f64, f64)> = cells.iter().map(|c| (c.delta, c.interior)).collect();
        Some(fit_loglog_slope(&pairs)?.0)
    } else {
        None
    };
    Ok(RiskStudyResult {
        cells,
        d_max_sq: j_box.d_max_sq(),
        interior_slope,
        master_seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Fisher-limit study (exact spectral sampler, θ = 0)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FisherStudyResult {
    pub mean_fisher: f64,
    pub sigma_reference: f64,
    pub rel_err: f64,
    pub replicates: usize,
}

/// Monte Carlo mean of the weighted observed Fisher information under the
/// null model θ = 0, compared against the asymptotic matrix
/// `Σ = T/(2a)·⟨(-Δ)^{-1}∂K, ∂K⟩` from Fourier quadrature. Uses the
/// exact-in-time spectral sampler so the comparison is free of
/// time-stepping bias; uniform (Nadaraya-Watson) weights at the domain
/// midpoint.
#[allow(clippy::too_many_arguments)]
pub fn run_fisher_study(
    kernel: Arc<BaseKernel>,
    a: f64,
    t_horizon: f64,
    delta: f64,
    n_locations: usize,
    domain: [f64; 2],
    m: usize,
    n_t: usize,
    replicates: usize,
    master_seed: u64,
) -> LabResult<FisherStudyResult> {
    let model = ModelSpec {
        a,
        theta: ThetaSpec::Zero,
        c: ReactionSpec::Zero,
        t_horizon,
        x0: X0Mode::StationaryWarmup { burn_in: None },
        gamma_check: None,
    };
    let grid = Grid::new(1, m, n_t, t_horizon)?;
    let [lo, hi] = domain;
    let locations: Vec<Vec<f64>> = (0..n_locations)
        .map(|k| vec![lo + (hi - lo) * k as f64 / (n_locations - 1) as f64])
        .collect();
    let meas = MeasurementConfig::new(delta, locations.clone(), kernel.clone())?;
    let x = vec![0.5 * (lo + hi)];
    // rectangular window wide enough to cover all locations: w_k = 1/N
    let wconfig = WeightConfig {
        h: 2.0 * (hi - lo).max(1.0),
        v: SmoothingKernel::Rectangular,
        ridge: 0.0,
    };
    let ws = compute_weights(&x, &locations, &wconfig)?;

    let sums: Vec<std::result::Result<f64, String>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(master_seed, 0, r);
            let stats = spectral_location_stats(&model, &grid, seed, &meas)
                .map_err(|e| e.to_string())?;
            convdiff::estimator::observed_fisher_stats(&stats, &ws)
                .map(|f| f[0])
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut acc = 0.0;
    let mut count = 0usize;
    for s in sums {
        match s {
            Ok(v) => {
                acc += v;
                count += 1;
            }
            Err(_) => {}
        }
    }
    if count == 0 {
        return Err(LabError::Invalidated {
            delta,
            failures: replicates,
            replicates,
        });
    }
    let mean_fisher = acc / count as f64;
    let sigma = kernel.fisher_sigma(t_horizon, a)?[0];
    Ok(FisherStudyResult {
        mean_fisher,
        sigma_reference: sigma,
        rel_err: (mean_fisher - sigma).abs() / sigma,
        replicates: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::StudyConfig;

    fn small_rate_config(replicates: usize) -> StudyConfig {
        toml::from_str(&format!(
            r#"
kind = "rate"
seed = 99
replicates = {replicates}
out_dir = "out/test"

[model]
a = 1.0
t_horizon = 0.25
theta = {{ family = "poly1d", coeffs = [-0.3, 0.0, 1.5] }}
c = {{ family = "zero" }}
x0 = {{ mode = "zero" }}

[kernel]
name = "poly_bump"
radius = 1.0

[observation]
deltas = [0.0625, 0.03125]
layout = {{ rule = "max_packing", margin = 0.1 }}
domain = [0.2, 0.8]
guard_ratio = 8.0
time_refine = 2.0
n_t_floor = 64

[weights]
v = "epanechnikov"
h_rule = {{ rule = "delta_power", c = 0.5, exponent = 0.4 }}
"#
        ))
        .unwrap()
    }

    #[test]
    fn rate_study_runs_and_aggregates() {
        let cfg = small_rate_config(6);
        let result = run_rate_study(&cfg).unwrap();
        assert_eq!(result.cells.len(), 2);
        assert!(result.slope.is_some());
        let cell = &result.cells[0];
        assert_eq!(cell.replicates, 6);
        assert_eq!(cell.failures, 0);
        assert!(cell.rmse[0] > 0.0);
        assert!(cell.qv_scaled.is_finite());
        // RMSE² = bias² + std²·(R-1)/R
        let r = cell.replicates as f64;
        let lhs = cell.rmse[0].powi(2);
        let rhs = cell.bias[0].powi(2) + cell.std.as_ref().unwrap()[0].powi(2) * (r - 1.0) / r;
        assert!((lhs - rhs).abs() < 1e-10 * lhs.max(1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn replicate_results_are_index_local() {
        // Adding replicates must not change earlier replicates' rows.
        let small = run_rate_study(&small_rate_config(3)).unwrap();
        let large = run_rate_study(&small_rate_config(5)).unwrap();
        for cell_idx in 0..2 {
            let a = &small.cells[cell_idx].rows;
            let b = &large.cells[cell_idx].rows;
            for row in a {
                let twin = b
                    .iter()
                    .find(|r| r.replicate == row.replicate && r.component == row.component)
                    .unwrap();
                assert_eq!(row.theta_hat, twin.theta_hat);
                assert_eq!(row.seed, twin.seed);
            }
        }
    }

    #[test]
    fn single_replicate_study_flags_undefined_std_and_slope() {
        let mut cfg = small_rate_config(1);
        cfg.observation.deltas = vec![0.0625];
        let result = run_rate_study(&cfg).unwrap();
        assert!(result.slope.is_none());
        assert!(result.cells[0].std.is_none());
    }

    #[test]
    fn degenerate_bandwidth_invalidates_study() {
        // h far below the location spacing leaves a single active point
        // at the evaluation site: every replicate fails the design check
        // already at planning time (weights cannot be constructed).
        let mut cfg = small_rate_config(4);
        cfg.weights.h_rule = crate::config::HRule::Fixed { h: 0.01 };
        match run_rate_study(&cfg) {
            Err(LabError::Core(Error::DegenerateDesign { .. })) => {}
            other => panic!("expected degenerate design, got {other:?}"),
        }
    }

    #[test]
    fn sweep_reuses_replicates_and_reports_ratios() {
        let mut cfg = small_rate_config(5);
        cfg.kind = crate::config::StudyKind::Sweep;
        cfg.observation.deltas = vec![0.03125];
        cfg.sweep = Some(crate::config::SweepConfig {
            h_from: 0.08,
            h_factor: 2.0,
            h_count: 3,
        });
        let result = run_bandwidth_sweep(&cfg).unwrap();
        assert_eq!(result.cells.len(), 3);
        assert!(result.endpoint_ratios.0 >= 1.0);
        assert!(result.endpoint_ratios.1 >= 1.0);
    }

    #[test]
    fn trajectory_truth_column_matches_formula() {
        let mut cfg = small_rate_config(2);
        cfg.kind = crate::config::StudyKind::Trajectory;
        cfg.observation.deltas = vec![0.03125];
        cfg.eval_grid = 13;
        cfg.weights.h_rule = crate::config::HRule::DeltaPower {
            c: 0.8,
            exponent: 0.4,
        };
        let result = run_trajectory(&cfg).unwrap();
        let mid = result
            .rows
            .iter()
            .find(|r| (r.x - 0.5).abs() < 1e-12)
            .unwrap();
        assert!((mid.theta_true - 0.075).abs() < 1e-12);
        assert_eq!(result.rows.len(), 13 * 2);
    }

    #[test]
    fn risk_study_produces_decreasing_interior() {
        let mut cfg = small_rate_config(4);
        cfg.kind = crate::config::StudyKind::Risk;
        cfg.eval_grid = 9;
        cfg.risk_cells = 25;
        cfg.weights.h_rule = crate::config::HRule::DeltaPower {
            c: 0.8,
            exponent: 0.4,
        };
        let result = run_integrated_risk_study(&cfg).unwrap();
        assert_eq!(result.cells.len(), 2);
        assert!(result.interior_slope.is_some());
        assert!((result.d_max_sq - 0.04).abs() < 1e-12);
        for cell in &result.cells {
            assert!(cell.interior > 0.0);
            assert!(cell.boundary > 0.0);
            assert!((cell.total - cell.interior - cell.boundary).abs() < 1e-12);
        }
    }
}
