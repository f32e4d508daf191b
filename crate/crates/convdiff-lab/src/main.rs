//! Command-line interface for the Monte Carlo laboratory.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when a study
//! is invalidated by too many replicate failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use convdiff_lab::config::{StudyConfig, StudyKind};
use convdiff_lab::csvout;
use convdiff_lab::study::{self, LabError};
use convdiff_lab::svg::{Plot, Series};

#[derive(Parser)]
#[command(
    name = "convdiff-lab",
    about = "Monte Carlo studies for pointwise velocity estimation in a stochastic convection-diffusion equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Study configuration file (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicate scheduling (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additionally dump replicate 0 of each cell as a binary field file.
    #[arg(long)]
    dump_paths: bool,
}

#[derive(Subcommand)]
enum Command {
    /// RMSE against the resolution level δ with a fitted log-log slope.
    Rate(CommonArgs),
    /// RMSE against the bandwidth h at fixed δ (bias-variance U-shape).
    Sweep(CommonArgs),
    /// Estimated θ̂(x) against the truth over the evaluation window.
    Trajectory(CommonArgs),
    /// Integrated squared error over the whole domain.
    Risk(CommonArgs),
    /// Compute and validate local-linear weights for a configuration.
    ValidateWeights(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Rate(a) => (Some(StudyKind::Rate), a),
        Command::Sweep(a) => (Some(StudyKind::Sweep), a),
        Command::Trajectory(a) => (Some(StudyKind::Trajectory), a),
        Command::Risk(a) => (Some(StudyKind::Risk), a),
        Command::ValidateWeights(a) => (None, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(LabError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e @ LabError::Invalidated { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn run(kind: Option<StudyKind>, args: &CommonArgs) -> Result<(), LabError> {
    let mut cfg = StudyConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(workers) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| convdiff::Error::Config(format!("worker pool: {e}")))?;
    }
    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(convdiff::Error::Io)?;

    match kind {
        Some(StudyKind::Rate) => run_rate(&cfg, &out_dir, args)?,
        Some(StudyKind::Sweep) => run_sweep(&cfg, &out_dir)?,
        Some(StudyKind::Trajectory) => run_trajectory(&cfg, &out_dir)?,
        Some(StudyKind::Risk) => run_risk(&cfg, &out_dir)?,
        None => run_validate_weights(&cfg, &out_dir)?,
    }
    Ok(())
}

fn run_rate(cfg: &StudyConfig, out_dir: &Path, args: &CommonArgs) -> Result<(), LabError> {
    let result = study::run_rate_study(cfg)?;
    csvout::write_rate_cells(&result, &out_dir.join("rate_cells.csv"))?;
    csvout::write_rate_fit(&result, &out_dir.join("rate_fit.csv"))?;
    csvout::write_estimates(&result, &out_dir.join("estimates.csv"))?;
    let points: Vec<(f64, f64)> = result.cells.iter().map(|c| (c.delta, c.rmse[0])).collect();
    let mut series = vec![Series {
        label: "rmse".into(),
        points: points.clone(),
        markers: true,
    }];
    if let Some(slope) = result.slope {
        let (d0, r0) = points[0];
        series.push(Series {
            label: format!("slope {slope:.3}"),
            points: points
                .iter()
                .map(|&(d, _)| (d, r0 * (d / d0).powf(slope)))
                .collect(),
            markers: false,
        });
    }
    let plot = Plot {
        title: "RMSE vs resolution level".into(),
        x_label: "delta".into(),
        y_label: "rmse".into(),
        log_x: true,
        log_y: true,
        series,
    };
    std::fs::write(out_dir.join("rate_loglog.svg"), plot.render()).map_err(convdiff::Error::Io)?;
    if args.dump_paths {
        dump_paths(cfg, out_dir)?;
    }
    println!(
        "rate study: {} cells, slope = {}",
        result.cells.len(),
        result
            .slope
            .map(|s| format!("{s:.4}"))
            .unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

fn run_sweep(cfg: &StudyConfig, out_dir: &Path) -> Result<(), LabError> {
    let result = study::run_bandwidth_sweep(cfg)?;
    csvout::write_sweep(&result, &out_dir.join("sweep.csv"))?;
    let plot = Plot {
        title: format!("RMSE vs bandwidth at delta = {:.5}", result.delta),
        x_label: "h".into(),
        y_label: "rmse".into(),
        log_x: true,
        log_y: true,
        series: vec![Series {
            label: "rmse".into(),
            points: result.cells.iter().map(|c| (c.h, c.rmse[0])).collect(),
            markers: true,
        }],
    };
    std::fs::write(out_dir.join("sweep_ushape.svg"), plot.render())
        .map_err(convdiff::Error::Io)?;
    println!(
        "sweep: min at h = {:.4}, endpoint ratios {:.2}/{:.2}, interior minimum: {}",
        result.cells[result.min_index].h,
        result.endpoint_ratios.0,
        result.endpoint_ratios.1,
        result.interior_minimum
    );
    Ok(())
}

fn run_trajectory(cfg: &StudyConfig, out_dir: &Path) -> Result<(), LabError> {
    let result = study::run_trajectory(cfg)?;
    csvout::write_trajectory(&result, &out_dir.join("trajectory.csv"))?;
    let mut truth: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter(|r| r.replicate == 0)
        .map(|r| (r.x, r.theta_true))
        .collect();
    truth.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut series = vec![Series {
        label: "theta true".into(),
        points: truth,
        markers: false,
    }];
    for rep in 0..result.rows.iter().map(|r| r.replicate + 1).max().unwrap_or(0).min(3) {
        let mut pts: Vec<(f64, f64)> = result
            .rows
            .iter()
            .filter(|r| r.replicate == rep)
            .map(|r| (r.x, r.theta_hat))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        series.push(Series {
            label: format!("replicate {rep}"),
            points: pts,
            markers: true,
        });
    }
    let plot = Plot {
        title: format!("estimated trajectory, delta = {:.5}", result.delta),
        x_label: "x".into(),
        y_label: "theta".into(),
        log_x: false,
        log_y: false,
        series,
    };
    std::fs::write(out_dir.join("trajectory_theta.svg"), plot.render())
        .map_err(convdiff::Error::Io)?;
    println!(
        "trajectory: {} rows, {} failures",
        result.rows.len(),
        result.failures
    );
    Ok(())
}

fn run_risk(cfg: &StudyConfig, out_dir: &Path) -> Result<(), LabError> {
    let result = study::run_integrated_risk_study(cfg)?;
    csvout::write_risk(&result, &out_dir.join("risk_cells.csv"))?;
    let plot = Plot {
        title: "integrated squared error vs resolution".into(),
        x_label: "delta".into(),
        y_label: "interior contribution".into(),
        log_x: true,
        log_y: true,
        series: vec![Series {
            label: "interior".into(),
            points: result.cells.iter().map(|c| (c.delta, c.interior)).collect(),
            markers: true,
        }],
    };
    std::fs::write(out_dir.join("risk_loglog.svg"), plot.render())
        .map_err(convdiff::Error::Io)?;
    println!(
        "risk study: interior slope = {}",
        result
            .interior_slope
            .map(|s| format!("{s:.4}"))
            .unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

fn run_validate_weights(cfg: &StudyConfig, out_dir: &Path) -> Result<(), LabError> {
    let kernel = cfg.kernel.build()?;
    let delta = cfg.observation.deltas[0];
    let locations = cfg.locations(delta, &kernel)?;
    let h = cfg.weights.h_rule.bandwidth(delta, locations.len(), 1);
    let wcfg = convdiff::weights::WeightConfig {
        h,
        v: cfg.weights.v,
        ridge: cfg.weights.ridge,
    };
    for x in &cfg.eval_points {
        let ws = convdiff::weights::compute_weights(x, &locations, &wcfg)?;
        let report =
            convdiff::weights::validate_weights(&ws, &locations, convdiff::weights::DEFAULT_C_STAR);
        csvout::write_weight_diagnostics(
            x,
            &ws.weights,
            &locations,
            &out_dir.join(format!("weights_x{:.4}.csv", x[0])),
        )?;
        println!(
            "x = {:?}: {} active of {}, max|w|·Nh^d = {:.3}, sum|w| = {:.3}, residuals {:.2e}/{:.2e}, pass = {}",
            x,
            ws.active,
            locations.len(),
            report.max_scaled_weight,
            report.abs_sum,
            report.sum_residual,
            report.linear_residuals[0].abs(),
            report.pass
        );
    }
    let _ = Arc::new(kernel);
    Ok(())
}

fn dump_paths(cfg: &StudyConfig, out_dir: &Path) -> Result<(), LabError> {
    let kernel = Arc::new(cfg.kernel.build()?);
    let dir = out_dir.join("paths");
    std::fs::create_dir_all(&dir).map_err(convdiff::Error::Io)?;
    for (ci, &delta) in cfg.observation.deltas.iter().enumerate() {
        let m = cfg.grid_points(delta, &kernel);
        let n_t = cfg.time_steps(delta);
        let grid = convdiff::Grid::new(1, m, n_t, cfg.model.t_horizon)?;
        let seed = convdiff_lab::replicate_seed(cfg.seed, ci, 0);
        let path = convdiff::sim::simulate(&cfg.model, &grid, seed)?;
        let mut file = std::fs::File::create(dir.join(format!("cell{ci}_rep0.bin")))
            .map_err(convdiff::Error::Io)?;
        path.write_binary(&mut file)?;
    }
    Ok(())
}
