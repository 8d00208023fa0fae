//! Mollified hyper-singular integrals
//! `G_λ(x,t) = ∫_Ω g(y) / (t^{1/2s} + |x−y|)^{N+λ} dy` and their
//! time-convolved parabolic counterparts `G_{α,λ}`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fit::{fit_loglog, LogLogFit};
use crate::grid::{write_table, GridField};
use crate::norms::lp_weighted;
use crate::quad::GaussRule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Elliptic,
    Parabolic { alpha: f64 },
}

/// Density `g`, either fixed in time or tabulated on increasing times
/// (linear in between, constant beyond the ends).
#[derive(Debug, Clone)]
pub enum Density {
    Steady(GridField),
    Table { times: Vec<f64>, slices: Vec<GridField> },
}

impl Density {
    fn field(&self) -> &GridField {
        match self {
            Density::Steady(f) => f,
            Density::Table { slices, .. } => &slices[0],
        }
    }

    fn interior_at(&self, tau: f64) -> Vec<f64> {
        match self {
            Density::Steady(f) => f.interior_values(),
            Density::Table { times, slices } => {
                let k = times.partition_point(|&t| t <= tau);
                if k == 0 {
                    return slices[0].interior_values();
                }
                if k == times.len() {
                    return slices[k - 1].interior_values();
                }
                let th = (tau - times[k - 1]) / (times[k] - times[k - 1]);
                let (a, b) = (slices[k - 1].interior_values(), slices[k].interior_values());
                a.iter().zip(&b).map(|(x, y)| (1.0 - th) * x + th * y).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperSingularSpec {
    pub mode: Mode,
    pub lambda: f64,
    pub s: f64,
    pub density: Density,
    /// Integrability index of `g` (∞ allowed).
    pub m: f64,
    /// Panels of the graded time mesh for the parabolic integral.
    pub time_panels: usize,
}

impl HyperSingularSpec {
    pub fn elliptic(g: GridField, lambda: f64, s: f64, m: f64) -> Result<Self> {
        let spec = Self { mode: Mode::Elliptic, lambda, s, density: Density::Steady(g), m, time_panels: 64 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parabolic(density: Density, alpha: f64, lambda: f64, s: f64, m: f64) -> Result<Self> {
        let spec = Self { mode: Mode::Parabolic { alpha }, lambda, s, density, m, time_panels: 64 };
        spec.validate()?;
        Ok(spec)
    }

    /// Parabolic spec that skips the integrability hypotheses, for
    /// demonstrating divergence outside them.
    pub fn parabolic_unchecked(density: Density, alpha: f64, lambda: f64, s: f64, m: f64) -> Self {
        Self { mode: Mode::Parabolic { alpha }, lambda, s, density, m, time_panels: 64 }
    }

    pub fn with_time_panels(mut self, panels: usize) -> Self {
        self.time_panels = panels;
        self
    }

    pub fn dim(&self) -> usize {
        self.density.field().grid().dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) || !self.lambda.is_finite() {
            return Err(invalid("need s ∈ (0,1) and finite λ"));
        }
        if !(self.m >= 1.0) {
            return Err(invalid("integrability index m must be ≥ 1"));
        }
        if self.time_panels == 0 {
            return Err(invalid("time mesh needs at least one panel"));
        }
        if let Density::Table { times, slices } = &self.density {
            if times.is_empty() || times.len() != slices.len() || times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("density table needs increasing times, one slice each"));
            }
            let spec = slices[0].grid().spec();
            if slices.iter().any(|f| f.grid().spec() != spec) {
                return Err(invalid("density slices must share one grid"));
            }
        }
        if let Mode::Parabolic { alpha } = self.mode {
            let n = self.dim() as f64;
            if !(alpha > -1.0) {
                return Err(invalid("parabolic mode needs α > −1"));
            }
            if !(2.0 * self.s * (alpha + 1.0) > self.lambda) {
                return Err(invalid("parabolic mode needs 2s(α+1) > λ"));
            }
            if !(n + self.lambda > 0f64.max(2.0 * self.s * alpha)) {
                return Err(invalid("parabolic mode needs N+λ > max{0, 2sα}"));
            }
        }
        Ok(())
    }
}

/// `∫_{r1}^{r2} (τ+u)^{−a} du`.
fn radial_1d(tau: f64, a: f64, r1: f64, r2: f64) -> f64 {
    if (a - 1.0).abs() < 1e-14 {
        ((tau + r2) / (tau + r1)).ln()
    } else {
        ((tau + r2).powf(1.0 - a) - (tau + r1).powf(1.0 - a)) / (1.0 - a)
    }
}

/// `∫_0^R (τ+r)^{−a} r dr`.
fn radial_2d(tau: f64, a: f64, big_r: f64) -> f64 {
    let p = |u: f64| {
        let first = if (a - 2.0).abs() < 1e-14 { u.ln() } else { u.powf(2.0 - a) / (2.0 - a) };
        let second = if (a - 1.0).abs() < 1e-14 { u.ln() } else { u.powf(1.0 - a) / (1.0 - a) };
        first - tau * second
    };
    p(tau + big_r) - p(tau)
}

/// Integrals of `(τ+|x−y|)^{−a}` over every interior cell.
fn cell_integrals(g: &GridField, x: &[f64], tau: f64, a: f64) -> Vec<f64> {
    let grid = g.grid();
    let h = grid.h();
    let half = 0.5 * h;
    let kernel = |r: f64| (tau + r).powf(-a);
    match grid.dim() {
        1 => grid
            .interior_indices()
            .iter()
            .map(|&j| {
                let c = grid.point(j)[0];
                let (lo, hi) = (c - half - x[0], c + half - x[0]);
                if lo >= 0.0 {
                    radial_1d(tau, a, lo, hi)
                } else if hi <= 0.0 {
                    radial_1d(tau, a, -hi, -lo)
                } else {
                    radial_1d(tau, a, 0.0, -lo) + radial_1d(tau, a, 0.0, hi)
                }
            })
            .collect(),
        _ => {
            let near = GaussRule::new(4);
            let far = GaussRule::new(2);
            let angular = GaussRule::new(16);
            grid.interior_indices()
                .iter()
                .map(|&j| {
                    let c = grid.point(j);
                    let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
                    if dx.abs() <= half && dy.abs() <= half {
                        // four triangles with apex x, one per edge
                        let edges = [(half - dx, half - dy, half + dy), (half + dx, half + dy, half - dy), (half - dy, half + dx, half - dx), (half + dy, half - dx, half + dx)];
                        edges
                            .iter()
                            .filter(|e| e.0 > 0.0)
                            .map(|&(d, left, right)| {
                                angular.integrate((-left / d).atan(), (right / d).atan(), |phi| radial_2d(tau, a, d / phi.cos()))
                            })
                            .sum()
                    } else {
                        let dist = dx.hypot(dy);
                        let (sub, rule) = if dist < 3.0 * h { (4, &near) } else { (1, &far) };
                        let w = h / sub as f64;
                        let mut acc = 0.0;
                        for bx in 0..sub {
                            for by in 0..sub {
                                let x0 = c[0] - half + bx as f64 * w;
                                let y0 = c[1] - half + by as f64 * w;
                                for (px, wx) in rule.on(x0, x0 + w) {
                                    for (py, wy) in rule.on(y0, y0 + w) {
                                        acc += wx * wy * kernel((x[0] - px).hypot(x[1] - py));
                                    }
                                }
                            }
                        }
                        acc
                    }
                })
                .collect()
        }
    }
}

fn g_lambda_with(g: &GridField, values: &[f64], x: &[f64], t: f64, lambda: f64, s: f64) -> f64 {
    let n = g.grid().dim() as f64;
    let tau = t.powf(1.0 / (2.0 * s));
    cell_integrals(g, x, tau, n + lambda).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// `G_λ(x,t)` with the density frozen at its first slice.
pub fn eval_g_lambda(spec: &HyperSingularSpec, x: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("G_λ needs t > 0"));
    }
    let g = spec.density.field();
    Ok(g_lambda_with(g, &g.interior_values(), x, t, spec.lambda, spec.s))
}

/// `G_{α,λ}(x,t) = ∫_0^t σ^α G_λ[g(·, t−σ)](x, σ) dσ` on the graded mesh
/// `σ_j = t (j/J)²` with three Gauss points per panel.
pub fn eval_g_alpha_lambda(spec: &HyperSingularSpec, x: &[f64], t: f64) -> Result<f64> {
    let Mode::Parabolic { alpha } = spec.mode else {
        return Err(invalid("G_{α,λ} needs a parabolic spec"));
    };
    if !(t > 0.0) {
        return Err(invalid("G_{α,λ} needs t > 0"));
    }
    let g = spec.density.field();
    let rule = GaussRule::new(3);
    let panels = spec.time_panels;
    let mesh: Vec<f64> = (0..=panels).map(|j| t * (j as f64 / panels as f64).powi(2)).collect();
    let steady = matches!(spec.density, Density::Steady(_));
    let frozen = g.interior_values();
    let total = mesh
        .par_windows(2)
        .map(|w| {
            rule.on(w[0], w[1])
                .map(|(sigma, wt)| {
                    let vals = if steady { frozen.clone() } else { spec.density.interior_at(t - sigma) };
                    wt * sigma.powf(alpha) * g_lambda_with(g, &vals, x, sigma, spec.lambda, spec.s)
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total)
}

/// `‖G(·,t)‖_{L^p(Ω)}` over interior nodes.
pub fn norm_at(spec: &HyperSingularSpec, p: f64, t: f64) -> Result<f64> {
    let g = spec.density.field();
    let grid = g.grid();
    let vals = grid
        .interior_indices()
        .par_iter()
        .map(|&i| match spec.mode {
            Mode::Elliptic => eval_g_lambda(spec, grid.point(i), t),
            Mode::Parabolic { .. } => eval_g_alpha_lambda(spec, grid.point(i), t),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(lp_weighted(vals, grid.cell_measure(), p))
}

/// Small-t exponent of the elliptic `L^p` bound, reading the target index as `p`.
/// For `λ ≥ 0` this is `−λ/2s − (N/2s)(1/m − 1/p)`; for `λ < 0` it is the
/// power multiplying `t^{−λ/2s}` in the negative-λ envelope, `−λ/2s − (N/2s)(1/p − 1/m)`.
pub fn predicted_exponent(dim: usize, s: f64, lambda: f64, m: f64, p: f64) -> f64 {
    let n = dim as f64;
    let (im, ip) = (1.0 / m, 1.0 / p);
    if lambda >= 0.0 {
        -lambda / (2.0 * s) - n / (2.0 * s) * (im - ip)
    } else {
        -lambda / (2.0 * s) - n / (2.0 * s) * (ip - im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub mode: Mode,
    pub lambda: f64,
    pub s: f64,
    pub m: f64,
    pub p: f64,
    /// Index convention used for the exponent's `1/ℓ` term.
    pub reading: String,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub fit: LogLogFit,
    pub predicted: Option<f64>,
    pub residual: Option<f64>,
}

impl ScalingReport {
    pub fn within(&self, tol: f64) -> bool {
        self.residual.is_some_and(|r| r.abs() <= tol)
    }

    /// Writes `<stem>.csv` with (t, norm) rows and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self.times.iter().zip(&self.norms).map(|(t, v)| vec![*t, *v]).collect();
        write_table(&stem.with_extension("csv"), &["t", "norm"], &rows)?;
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Least-squares slope of `log ‖G(·,t)‖_p` against `log t`.
pub fn scaling_slope(spec: &HyperSingularSpec, p: f64, times: &[f64]) -> Result<ScalingReport> {
    if times.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("scaling times must be positive"));
    }
    let norms = times.iter().map(|&t| norm_at(spec, p, t)).collect::<Result<Vec<_>>>()?;
    let fit = fit_loglog(times, &norms)?;
    let predicted = match spec.mode {
        Mode::Elliptic => Some(predicted_exponent(spec.dim(), spec.s, spec.lambda, spec.m, p)),
        Mode::Parabolic { .. } => None,
    };
    Ok(ScalingReport {
        mode: spec.mode,
        lambda: spec.lambda,
        s: spec.s,
        m: spec.m,
        p,
        reading: "l = p".into(),
        times: times.to_vec(),
        norms,
        fit,
        predicted,
        residual: predicted.map(|e| fit.slope - e),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementReport {
    pub panels: Vec<usize>,
    pub values: Vec<f64>,
    /// Ratios of successive increments under mesh doubling.
    pub increment_ratios: Vec<f64>,
    pub divergent: bool,
}

/// Evaluates `G_{α,λ}(x,t)` on meshes with `panels·2^k` panels. The value is
/// flagged divergent when it keeps growing and successive increments do not shrink.
pub fn parabolic_refinement(spec: &HyperSingularSpec, x: &[f64], t: f64, panels: usize, levels: usize) -> Result<RefinementReport> {
    if levels < 3 {
        return Err(invalid("refinement study needs three or more levels"));
    }
    let counts: Vec<usize> = (0..levels).map(|k| panels << k).collect();
    let values = counts
        .iter()
        .map(|&j| eval_g_alpha_lambda(&spec.clone().with_time_panels(j), x, t))
        .collect::<Result<Vec<_>>>()?;
    let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let increment_ratios: Vec<f64> = inc.windows(2).map(|w| w[1] / w[0]).collect();
    let divergent = inc.iter().all(|&d| d > 0.0) && increment_ratios.iter().all(|&r| r >= 1.0);
    Ok(RefinementReport { panels: counts, values, increment_ratios, divergent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, SpatialDomain};

    #[test]
    fn closed_form_anchor() {
        let g = Grid::new(SpatialDomain::interval(0.25), 64).unwrap();
        let spec = HyperSingularSpec::elliptic(GridField::dirichlet_from_fn(&g, |_| 1.0), 0.0, 0.5, f64::INFINITY).unwrap();
        let v = eval_g_lambda(&spec, &[0.0], 1.0).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-3, "{v}");
    }

    #[test]
    fn polar_cell_matches_fine_quadrature() {
        let g = Grid::new(SpatialDomain::square(0.25), 32).unwrap();
        let f = GridField::dirichlet_from_fn(&g, |_| 1.0);
        let i = g.interior_indices()[g.interior_len() / 2 + 3];
        let c = g.point(i).to_vec();
        let x = [c[0] + 0.2 * g.h(), c[1] - 0.1 * g.h()];
        let (tau, a) = (1e-3, 2.5);
        let slot = g.interior_slot(i).unwrap();
        let exact = cell_integrals(&f, &x, tau, a)[slot];
        let rule = GaussRule::new(40);
        let half = 0.5 * g.h();
        let split = |lo: f64, mid: f64, hi: f64| rule.on(lo, mid).chain(rule.on(mid, hi)).collect::<Vec<_>>();
        let xs = split(c[0] - half, x[0], c[0] + half);
        let ys = split(c[1] - half, x[1], c[1] + half);
        let mut fine = 0.0;
        for &(px, wx) in &xs {
            for &(py, wy) in &ys {
                fine += wx * wy * (tau + (x[0] - px).hypot(x[1] - py)).powf(-a);
            }
        }
        assert!((exact / fine - 1.0).abs() < 0.02, "{exact} vs {fine}");
    }

    #[test]
    fn parabolic_hypotheses_enforced() {
        let g = Grid::new(SpatialDomain::interval(0.25), 32).unwrap();
        let d = || Density::Steady(GridField::zeros(&g));
        assert!(HyperSingularSpec::parabolic(d(), -1.0, 0.0, 0.5, 2.0).is_err());
        assert!(HyperSingularSpec::parabolic(d(), 0.0, 1.0, 0.5, 2.0).is_err());
        assert!(HyperSingularSpec::parabolic(d(), 0.0, 0.5, 0.5, 2.0).is_ok());
    }

    #[test]
    fn exponent_closed_forms() {
        assert!((predicted_exponent(1, 0.5, 0.5, 8.0, 2.0) + 0.125).abs() < 1e-15);
        assert!((predicted_exponent(1, 0.5, 0.5, 1.0, 2.0) + 1.0).abs() < 1e-15);
        assert!((predicted_exponent(1, 0.5, -0.25, 1.0, 2.0) - 0.75).abs() < 1e-15);
    }
}
