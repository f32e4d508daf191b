//! CSV writers. Every file starts with comment lines
//! `# convdiff-lab <kind>` / `# generated_at: <unix seconds>` /
//! `# master_seed: <seed>`; apart from the timestamp line the bytes are
//! deterministic for a fixed configuration.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use convdiff::Result;

use crate::study::{RateStudyResult, RiskStudyResult, SweepResult, TrajectoryResult};

fn header<W: Write>(w: &mut W, kind: &str, seed: u64) -> Result<()> {
    writeln!(w, "# convdiff-lab {kind}")?;
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(w, "# generated_at: {stamp}")?;
    writeln!(w, "# master_seed: {seed}")?;
    Ok(())
}

pub fn write_rate_cells(result: &RateStudyResult, path: &Path) -> Result<()> {
    let mut w = fs::File::create(path)?;
    header(&mut w, "rate cells", result.master_seed)?;
    writeln!(
        w,
        "delta,n_locations,h,m,n_t,replicates,failures,rmse,bias,std,qv_scaled,mean_a_hat"
    )?;
    for c in &result.cells {
        writeln!(
            w,
            "{:.10e},{},{:.10e},{},{},{},{},{:.10e},{:.10e},{},{:.10e},{}",
            c.delta,
            c.n_locations,
            c.h,
            c.m,
            c.n_t,
            c.replicates,
            c.failures,
            c.rmse[0],
            c.bias[0],
            c.std
                .as_ref()
                .map(|s| format!("{:.10e}", s[0]))
                .unwrap_or_else(|| "undefined".into()),
            c.qv_scaled,
            c.mean_a_hat
                .map(|a| format!("{a:.10e}"))
                .unwrap_or_else(|| "".into()),
        )?;
    }
    Ok(())
}

pub fn write_rate_fit(result: &RateStudyResult, path: &Path) -> Result<()> {
    let mut w = fs::File::create(path)?;
    header(&mut w, "rate fit", result.master_seed)?;
    writeln!(w, "slope,stderr,n_cells")?;
    writeln!(
        w,
        "{},{},{}",
        result
            .slope
            .map(|s| format!("{s:.8}"))
            .unwrap_or_else(|| "undefined".into()),
        result
            .slope_stderr
            .map(|s| format!("{s:.8}"))
            .unwrap_or_else(|| "undefined".into()),
        result.cells.len()
    )?;
    Ok(())
}

pub fn write_estimates(result: &RateStudyResult, path: &Path) -> Result<()> {
    let mut w = fs::File::create(path)?;
    header(&mut w, "estimates", result.master_seed)?;
    writeln!(
        w,
        "replicate,seed,delta,h,x,component,theta_hat,theta_true,fisher_cond,a_used,a_source"
    )?;
    for c in &result.cells {
        for r in &c.rows {
            writeln!(
                w,
                "{},{},{:.10e},{:.10e},{:.10e},{},{:.17e},{:.17e},{:.6e},{:.17e},{}",
                r.replicate,
                r.seed,
                r.delta,
                r.h,
                r.x[0],
                r.component,
                r.theta_hat,
                r.theta_true,
                r.fisher_cond,
                r.a_used,
                r.a_source
            )?;
        }
    }
    Ok(())
}

pub fn write_sweep(result: &SweepResult, path: &Path) -> Result<()> {
    let mut w = fs::File::create(path)?;
    header(&mut w, "bandwidth sweep", result.master_seed)?;
    writeln!(
        w,
        "# delta: {:.10e}, min_index: {}, interior_minimum: {}, endpoint_ratios: {:.4},{:.4}",
        result.delta,
        result.min_index,
        result.interior_minimum,
        result.endpoint_ratios.0,
        result.endpoint_ratios.1
    )?;
    writeln!(w, "h,replicates,failures,rmse,bias,std")?;
    for c in &result.cells {
        writeln!(
            w,
            "{:.10e},{},{},{:.10e},{:.10e},{}",
            c.h,
            c.replicates,
            c.failures,
            c.rmse[0],
            c.bias[0],
            c.std
                .as_ref()
                .map(|s| format!("{:.10e}", s[0]))
                .unwrap_or_else(|| "undefined".into()),
        )?;
    }
    Ok(())
}

pub fn write_trajectory(result: &TrajectoryResult, path: &Path) -> Result<()> {
    let mut w = fs::File::create(path)?;
    header(&mut w, "trajectory", result.master_seed)?;
    writeln!(
        w,
        "# delta: {:.10e}, h: {:.10e}, failures: {}",
        result.delta, result.h, result.failures
    )?;
    writeln!(w, "replicate,x,theta_hat,theta_true")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{:.10e},{:.17e},{:.17e}",
            r.replicate, r.x, r.theta_hat, r.theta_true
        )?;
    }
    Ok(())
}

pub fn write_risk(result: &RiskStudyResult, path: &Path) -> Result<()> {
    let mut w = fs::File::create(path)?;
    header(&mut w, "integrated risk", result.master_seed)?;
    writeln!(
        w,
        "# d_max_sq: {:.10e}, interior_slope: {}",
        result.d_max_sq,
        result
            .interior_slope
            .map(|s| format!("{s:.6}"))
            .unwrap_or_else(|| "undefined".into())
    )?;
    writeln!(
        w,
        "delta,h,n_locations,replicates,failures,interior,boundary,total"
    )?;
    for c in &result.cells {
        writeln!(
            w,
            "{:.10e},{:.10e},{},{},{},{:.10e},{:.10e},{:.10e}",
            c.delta, c.h, c.n_locations, c.replicates, c.failures, c.interior, c.boundary, c.total
        )?;
    }
    Ok(())
}

/// Weight diagnostics: x, k, w_k, active flag.
pub fn write_weight_diagnostics(
    x: &[f64],
    weights: &[f64],
    locations: &[Vec<f64>],
    path: &Path,
) -> Result<()> {
    let mut w = fs::File::create(path)?;
    writeln!(w, "x,k,location,w_k,active")?;
    for (k, (wk, loc)) in weights.iter().zip(locations.iter()).enumerate() {
        writeln!(
            w,
            "{:.10e},{k},{:.10e},{wk:.17e},{}",
            x[0],
            loc[0],
            (*wk != 0.0) as u8
        )?;
    }
    Ok(())
}
