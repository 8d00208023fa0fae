#![allow(dead_code)]

use std::sync::Arc;

use fracheat::kernel::spectral_decompose;
use fracheat::{Grid, OperatorMatrix, QuadratureScheme, SpatialDomain, SpectralDecomposition};

pub fn interval(n: usize) -> Arc<Grid> {
    Grid::new(SpatialDomain::interval(0.25), n).unwrap()
}

pub fn decomposition(n: usize, s: f64) -> SpectralDecomposition {
    let g = interval(n);
    let a = OperatorMatrix::assemble(&g, 2.0 * s, &QuadratureScheme::default()).unwrap();
    spectral_decompose(&Arc::new(a)).unwrap()
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
