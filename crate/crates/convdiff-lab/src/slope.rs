//! Ordinary least squares on (log x, log y) pairs.

use convdiff::{Error, Result};

/// Fit `log y = α + s·log x`; returns (s, stderr of s). The standard
/// error needs at least three points and is `None` for exactly two.
pub fn fit_loglog_slope(pairs: &[(f64, f64)]) -> Result<(f64, Option<f64>)> {
    if pairs.len() < 2 {
        return Err(Error::Contract(
            "slope fit needs at least two pairs".into(),
        ));
    }
    if pairs.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(Error::Contract(
            "slope fit requires strictly positive values".into(),
        ));
    }
    let n = pairs.len() as f64;
    let logs: Vec<(f64, f64)> = pairs.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("slope fit requires distinct x values".into()));
    }
    let sxy: f64 = logs
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let stderr = if pairs.len() >= 3 {
        let intercept = mean_y - slope * mean_x;
        let ss_res: f64 = logs
            .iter()
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        Some((ss_res / (n - 2.0) / sxx).sqrt())
    } else {
        None
    };
    Ok((slope, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let pairs: Vec<(f64, f64)> = (1..=5)
            .map(|k| {
                let x = 2.0f64.powi(-k);
                (x, x.powf(0.4))
            })
            .collect();
        let (slope, stderr) = fit_loglog_slope(&pairs).unwrap();
        assert!((slope - 0.4).abs() < 1e-12);
        assert!(stderr.unwrap() < 1e-12);
    }

    #[test]
    fn two_points_have_no_stderr() {
        let (slope, stderr) = fit_loglog_slope(&[(1.0, 2.0), (2.0, 4.0)]).unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
        assert!(stderr.is_none());
    }

    #[test]
    fn noisy_power_law_recovered_within_two_stderr() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let true_slope = 0.75;
        let pairs: Vec<(f64, f64)> = (1..=12)
            .map(|k| {
                let x = 2.0f64.powi(-k);
                let noise: f64 = rng.gen_range(-0.05..0.05);
                (x, (true_slope * x.ln() + noise).exp())
            })
            .collect();
        let (slope, stderr) = fit_loglog_slope(&pairs).unwrap();
        assert!((slope - true_slope).abs() < 2.0 * stderr.unwrap());
    }

    #[test]
    fn nonpositive_values_rejected() {
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, -0.5)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0)]).is_err());
    }
}
