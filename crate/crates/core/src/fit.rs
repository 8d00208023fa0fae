//! Log-log least squares.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `log y ≈ intercept + slope · log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("log-log fit needs two or more paired points"));
    }
    if x.iter().chain(y).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("log-log fit needs positive finite data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("log-log fit needs distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LogLogFit { slope, intercept, r2, points: x.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_power_law() {
        let x: Vec<f64> = (1..10).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-0.7)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_loglog(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(fit_loglog(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }
}
