//! Picard iteration for `u_t + (-Δ)^s u = |(-Δ)^{s/2} u|^q + f` with zero
//! exterior data, existence thresholds for `q`, and verdict scans.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fracop::OperatorMatrix;
use crate::grid::{write_table, Grid, GridField};
use crate::kernel::SpectralDecomposition;
use crate::solver::{solve_duhamel, Ladder, Source, SourceSpec, Trajectory};

/// Which data carries the singularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum ThresholdCase {
    /// `f ∈ L^m(Ω_T)`, `u₀ = 0`.
    Source { m: f64 },
    /// `u₀ ∈ L^σ(Ω)`, `f = 0`.
    InitialDatum { sigma: f64 },
}

/// Upper limit for `q`: inclusive in the source case, exclusive in the
/// initial-datum case; `+∞` when every `q > 1` is admissible.
pub fn q_threshold(case: ThresholdCase, s: f64, dim: usize) -> Result<f64> {
    let n = dim as f64;
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    match case {
        ThresholdCase::Source { m } => {
            if !(m >= 1.0) {
                return Err(invalid("m must be ≥ 1"));
            }
            if s <= 0.25 {
                return Err(Error::Refused(format!("existence with source data is only established for s > 1/4, got s = {s}")));
            }
            let gain = if s > 1.0 / 3.0 { s } else { 4.0 * s - 1.0 };
            if m > (n + 2.0 * s) / gain {
                Ok(f64::INFINITY)
            } else {
                let den = n + 2.0 * s - m * gain;
                Ok(if den > 0.0 { (n + 2.0 * s) / den } else { f64::INFINITY })
            }
        }
        ThresholdCase::InitialDatum { sigma } => {
            let cap = if 3.0 * s < 1.0 { n / (1.0 - 3.0 * s) } else { f64::INFINITY };
            if !(sigma >= 1.0 && sigma < cap) {
                return Err(invalid(format!("σ = {sigma} must lie in [1, {cap})")));
            }
            Ok((n + 2.0 * s * sigma) / (n + sigma * s))
        }
    }
}

/// Whether `q` lies in the admissible range of `case`.
pub fn q_admissible(case: ThresholdCase, q: f64, s: f64, dim: usize) -> Result<bool> {
    let top = q_threshold(case, s, dim)?;
    Ok(match case {
        ThresholdCase::Source { .. } => q > 1.0 && q <= top,
        ThresholdCase::InitialDatum { .. } => q >= 1.0 && q < top,
    })
}

#[derive(Debug, Clone)]
pub struct KpzConfig {
    pub q: f64,
    /// `f` as the source, `u₀` as the initial datum, labels `m` and `σ`.
    pub data: SourceSpec,
    pub ladder: Ladder,
    pub max_iterations: usize,
    /// Convergence threshold on successive differences.
    pub tol: f64,
    /// Divergence threshold on successive differences.
    pub budget: f64,
    /// Lebesgue index of the difference norm.
    pub r: f64,
    /// Drops `|(-Δ)^{s/2}u|^q`, leaving the linear problem.
    pub linear_only: bool,
}

impl KpzConfig {
    pub fn new(q: f64, data: SourceSpec, ladder: Ladder) -> Self {
        Self { q, data, ladder, max_iterations: 40, tol: 1e-10, budget: 1e8, r: 1.2, linear_only: false }
    }

    pub fn horizon(&self) -> f64 {
        self.ladder.horizon()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return Err(invalid("q must be finite and ≥ 1"));
        }
        if self.max_iterations < 2 {
            return Err(invalid("at least two iterations required"));
        }
        if !(self.tol > 0.0 && self.budget > self.tol) {
            return Err(invalid("need 0 < tol < budget"));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(invalid("difference norm index must be finite and ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    Diverged,
    BudgetExhausted,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "converged",
            Verdict::Diverged => "diverged",
            Verdict::BudgetExhausted => "budget-exhausted",
        })
    }
}

impl Verdict {
    /// Wording used in reports; divergence is never read as nonexistence.
    pub fn description(self) -> &'static str {
        match self {
            Verdict::Converged => "fixed point reached",
            Verdict::Diverged => "no convergence within budget (iterates blew up)",
            Verdict::BudgetExhausted => "no convergence within budget",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `‖(-Δ)^{s/2} u_j‖_{L^r(Ω × ladder)}` per iterate.
    pub gradient_norms: Vec<f64>,
    /// `d_j = ‖(-Δ)^{s/2}(u_{j+1} − u_j)‖_{L^r(Ω × ladder)}`.
    pub differences: Vec<f64>,
    pub verdict: Verdict,
    /// Geometric mean of `d_{j+1}/d_j`.
    pub contraction: Option<f64>,
    /// `‖(-Δ)^{s/2}(u* − Φ(u*))‖` for a converged iterate.
    pub residual: Option<f64>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.differences.len()
    }
}

/// Interior values `(m × ladder)` and the half-order matrix.
struct Workspace<'a> {
    dec: &'a SpectralDecomposition,
    half: DMatrix<f64>,
    weights: Vec<f64>,
    vol: f64,
}

impl<'a> Workspace<'a> {
    fn new(dec: &'a SpectralDecomposition, ladder: &Ladder) -> Result<Self> {
        let g = dec.grid();
        let s = 0.5 * dec.operator().order();
        let half = OperatorMatrix::assemble(g, s, dec.operator().scheme())?.matrix().clone();
        Ok(Self { dec, half, weights: ladder.trapezoid_weights(), vol: g.cell_measure() })
    }

    fn grid(&self) -> &std::sync::Arc<Grid> {
        self.dec.grid()
    }

    fn gradient(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.half * u
    }

    fn norm(&self, v: &DMatrix<f64>, r: f64) -> f64 {
        let sum: f64 = (0..v.ncols()).map(|k| self.weights[k] * v.column(k).iter().map(|x| x.abs().powf(r)).sum::<f64>()).sum();
        (sum * self.vol).powf(1.0 / r)
    }

    fn solve(&self, rows: Vec<Vec<f64>>, w0: &GridField, ladder: &Ladder) -> Result<DMatrix<f64>> {
        let src = SourceSpec::new(Source::Tabulated(rows), w0.clone());
        let traj = solve_duhamel(self.dec, &src, ladder)?;
        Ok(interior_matrix(&traj))
    }
}

fn interior_matrix(traj: &Trajectory) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = traj.fields().iter().map(GridField::interior_values).collect();
    DMatrix::from_fn(cols[0].len(), cols.len(), |i, k| cols[k][i])
}

/// `f` sampled on interior nodes at every ladder time.
fn tabulate(src: &SourceSpec, grid: &Grid, ladder: &Ladder) -> Result<Vec<Vec<f64>>> {
    let m = grid.interior_len();
    Ok(match &src.h {
        Source::Zero => vec![vec![0.0; m]; ladder.len()],
        Source::Steady(v) => vec![v.clone(); ladder.len()],
        Source::Tabulated(rows) => rows.clone(),
        Source::Callable(f) => ladder
            .times()
            .iter()
            .map(|&t| grid.interior_indices().iter().map(|&i| f(grid.point(i), t)).collect())
            .collect(),
    })
}

/// `|(-Δ)^{s/2}(u + shift)|^q + f` per ladder time.
fn nonlinear_rows(ws: &Workspace, u: &DMatrix<f64>, shift: Option<&DMatrix<f64>>, q: f64, f: &[Vec<f64>], linear_only: bool) -> Vec<Vec<f64>> {
    let mut grad = ws.gradient(u);
    if let Some(sh) = shift {
        grad += sh;
    }
    (0..u.ncols())
        .map(|k| {
            f[k].iter()
                .zip(grad.column(k).iter())
                .map(|(fv, gv)| if linear_only { *fv } else { fv + gv.abs().powf(q) })
                .collect()
        })
        .collect()
}

fn to_trajectory(grid: &std::sync::Arc<Grid>, ladder: &Ladder, u: &DMatrix<f64>, tag: &str) -> Result<Trajectory> {
    let fields = (0..u.ncols())
        .map(|k| GridField::from_interior(grid, u.column(k).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(ladder.clone(), fields, crate::solver::Provenance::Derived(tag.into()))
}

/// Core loop: `v_{j+1} = Duhamel(|(-Δ)^{s/2}(v_j + φ)|^q + f, w₀)`.
fn iterate(ws: &Workspace, cfg: &KpzConfig, w0: &GridField, shift: Option<&DMatrix<f64>>) -> Result<(DMatrix<f64>, IterationTrace)> {
    cfg.validate()?;
    let grid = ws.grid().clone();
    let f = tabulate(&cfg.data, &grid, &cfg.ladder)?;
    let mut u = ws.solve(f.clone(), w0, &cfg.ladder)?;
    let mut gradient_norms = vec![ws.norm(&ws.gradient(&u), cfg.r)];
    let mut differences: Vec<f64> = Vec::new();
    let mut verdict = Verdict::BudgetExhausted;
    for _ in 0..cfg.max_iterations {
        let rows = nonlinear_rows(ws, &u, shift, cfg.q, &f, cfg.linear_only);
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            verdict = Verdict::Diverged;
            break;
        }
        let next = ws.solve(rows, w0, &cfg.ladder)?;
        let d = ws.norm(&ws.gradient(&(&next - &u)), cfg.r);
        u = next;
        gradient_norms.push(ws.norm(&ws.gradient(&u), cfg.r));
        let prev = differences.last().copied();
        differences.push(d);
        if !d.is_finite() || d > cfg.budget {
            verdict = Verdict::Diverged;
            break;
        }
        if d < cfg.tol && (d == 0.0 || prev.is_some_and(|p| d < p)) {
            verdict = Verdict::Converged;
            break;
        }
    }
    let positive: Vec<f64> = differences.iter().copied().filter(|d| *d > 0.0 && d.is_finite()).collect();
    let contraction = (positive.len() >= 2)
        .then(|| (positive[positive.len() - 1] / positive[0]).powf(1.0 / (positive.len() - 1) as f64));
    let residual = if verdict == Verdict::Converged {
        let rows = nonlinear_rows(ws, &u, shift, cfg.q, &f, cfg.linear_only);
        let image = ws.solve(rows, w0, &cfg.ladder)?;
        Some(ws.norm(&ws.gradient(&(&image - &u)), cfg.r))
    } else {
        None
    };
    Ok((u, IterationTrace { gradient_norms, differences, verdict, contraction, residual }))
}

/// Plain Picard iteration started from the linear solve with source `f`.
pub fn picard_solve(cfg: &KpzConfig, dec: &SpectralDecomposition) -> Result<(Trajectory, IterationTrace)> {
    let ws = Workspace::new(dec, &cfg.ladder)?;
    let (u, trace) = iterate(&ws, cfg, &cfg.data.w0, None)?;
    Ok((to_trajectory(dec.grid(), &cfg.ladder, &u, "kpz-picard")?, trace))
}

/// Splits `u = ũ + φ` with `φ` the free evolution of `u₀`, iterates on `ũ`
/// (zero initial datum, source `|(-Δ)^{s/2}(ũ + φ)|^q + f`) and returns `ũ + φ`.
pub fn u0_case_solve(cfg: &KpzConfig, dec: &SpectralDecomposition) -> Result<(Trajectory, IterationTrace)> {
    let ws = Workspace::new(dec, &cfg.ladder)?;
    let grid = dec.grid();
    let free = ws.solve(vec![vec![0.0; grid.interior_len()]; cfg.ladder.len()], &cfg.data.w0, &cfg.ladder)?;
    let shift = ws.gradient(&free);
    let (v, trace) = iterate(&ws, cfg, &GridField::zeros(grid), Some(&shift))?;
    Ok((to_trajectory(grid, &cfg.ladder, &(v + free), "kpz-split")?, trace))
}

/// Closed-form weights of `∫_0^Δ e^{−λ(Δ−σ)} ℓ(σ) dσ` for `ℓ = 1 − σ/Δ` and `σ/Δ`.
fn linear_weights(lambda: f64, delta: f64) -> (f64, f64) {
    let x = lambda * delta;
    let (one, ramp) = if x < 1e-3 {
        (
            delta * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0),
            delta * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0),
        )
    } else {
        let em1 = (-x).exp_m1();
        (-em1 / lambda, (x + em1) / (lambda * x))
    };
    (one - ramp, ramp)
}

/// Largest relative defect of the modal recurrence
/// `c(t_{k+1}) = e^{−λΔ} c(t_k) + a ĥ(t_k) + b ĥ(t_{k+1})` with closed-form
/// weights, for `u` driven by its own KPZ source.
pub fn fixed_point_defect(cfg: &KpzConfig, dec: &SpectralDecomposition, u: &Trajectory) -> Result<f64> {
    let ws = Workspace::new(dec, &cfg.ladder)?;
    let grid = dec.grid();
    let um = interior_matrix(u);
    let f = tabulate(&cfg.data, grid, &cfg.ladder)?;
    let rows = nonlinear_rows(&ws, &um, None, cfg.q, &f, cfg.linear_only);
    let ts = cfg.ladder.times();
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    for k in 0..ts.len() - 1 {
        let delta = ts[k + 1] - ts[k];
        let (c0, c1) = (dec.project(um.column(k).as_slice()), dec.project(um.column(k + 1).as_slice()));
        let (h0, h1) = (dec.project(&rows[k]), dec.project(&rows[k + 1]));
        for (j, &l) in dec.values().iter().enumerate() {
            let (a, b) = linear_weights(l, delta);
            let predicted = (-l * delta).exp() * c0[j] + a * h0[j] + b * h1[j];
            worst = worst.max((c1[j] - predicted).abs());
            scale = scale.max(c1[j].abs());
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub q: f64,
    pub amplitude: f64,
    pub horizon: f64,
    pub verdict: Verdict,
    pub contraction: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseScan {
    pub s: f64,
    pub dim: usize,
    pub m: f64,
    /// `q` threshold for the template's source label.
    pub threshold: f64,
    pub cells: Vec<PhaseCell>,
    /// Along every `(q, T)` row, no convergence after a non-converged cell
    /// as the amplitude grows.
    pub monotone_in_amplitude: bool,
    pub note: String,
}

impl PhaseScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,amplitude,T,verdict,contraction,iterations\n");
        for c in &self.cells {
            let contraction = c.contraction.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{},{}\n", c.q, c.amplitude, c.horizon, c.verdict, contraction, c.iterations));
        }
        out
    }

    /// `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        std::fs::write(stem.with_extension("csv"), self.to_csv())?;
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Verdict table as `(q, amplitude, T)` rows with 1 for converged.
    pub fn write_table(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|c| vec![c.q, c.amplitude, c.horizon, f64::from(u8::from(c.verdict == Verdict::Converged))])
            .collect();
        write_table(path, &["q", "amplitude", "T", "converged"], &rows)
    }
}

fn scaled_source(h: &Source, a: f64) -> Source {
    match h {
        Source::Zero => Source::Zero,
        Source::Steady(v) => Source::Steady(v.iter().map(|x| a * x).collect()),
        Source::Tabulated(rows) => Source::Tabulated(rows.iter().map(|r| r.iter().map(|x| a * x).collect()).collect()),
        Source::Callable(f) => {
            let f = f.clone();
            Source::Callable(std::sync::Arc::new(move |x, t| a * f(x, t)))
        }
    }
}

/// Runs `template` over the cartesian product of `qs`, amplitudes (scaling
/// both `f` and `u₀`) and horizons (ladder stretched to each horizon).
pub fn phase_scan(dec: &SpectralDecomposition, template: &KpzConfig, qs: &[f64], amplitudes: &[f64], horizons: &[f64]) -> Result<PhaseScan> {
    let s = 0.5 * dec.operator().order();
    if !(s > 0.26 && s < 1.0) {
        return Err(Error::Refused(format!("phase scans are restricted to s ∈ (0.26, 1), got s = {s}")));
    }
    if qs.is_empty() || amplitudes.is_empty() || horizons.is_empty() {
        return Err(invalid("phase scan axes must be non-empty"));
    }
    if matches!(template.data.h, Source::Tabulated(_)) && horizons.iter().any(|&t| t != template.horizon()) {
        return Err(invalid("tabulated sources cannot be stretched to other horizons"));
    }
    let m = template.data.m.unwrap_or(1.0);
    let threshold = q_threshold(ThresholdCase::Source { m }, s, dec.grid().dim())?;
    let jobs: Vec<(f64, f64, f64)> = qs
        .iter()
        .flat_map(|&q| horizons.iter().flat_map(move |&t| amplitudes.iter().map(move |&a| (q, a, t))))
        .collect();
    let base = template.horizon();
    let cells = jobs
        .par_iter()
        .map(|&(q, a, t)| {
            let mut cfg = template.clone();
            cfg.q = q;
            cfg.data = SourceSpec::new(scaled_source(&template.data.h, a), template.data.w0.scaled(a))
                .with_labels(template.data.m, template.data.sigma);
            cfg.ladder = Ladder::new(template.ladder.times().iter().map(|x| x * t / base).collect())?;
            let (_, trace) = picard_solve(&cfg, dec)?;
            Ok(PhaseCell { q, amplitude: a, horizon: t, verdict: trace.verdict, contraction: trace.contraction, iterations: trace.iterations() })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut monotone = true;
    for &q in qs {
        for &t in horizons {
            let mut row: Vec<&PhaseCell> = cells.iter().filter(|c| c.q == q && c.horizon == t).collect();
            row.sort_by(|x, y| x.amplitude.total_cmp(&y.amplitude));
            let mut failed = false;
            for c in row {
                if c.verdict != Verdict::Converged {
                    failed = true;
                } else if failed {
                    monotone = false;
                }
            }
        }
    }
    Ok(PhaseScan {
        s,
        dim: dec.grid().dim(),
        m,
        threshold,
        cells,
        monotone_in_amplitude: monotone,
        note: "verdicts report Picard convergence only; no convergence within budget does not indicate nonexistence".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        let src = |m| ThresholdCase::Source { m };
        assert!((q_threshold(src(1.0), 0.5, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((q_threshold(src(1.0), 0.3, 1).unwrap() - 8.0 / 7.0).abs() < 1e-14);
        assert_eq!(q_threshold(src(5.0), 0.5, 1).unwrap(), f64::INFINITY);
        assert!(matches!(q_threshold(src(1.0), 0.25, 1), Err(Error::Refused(_))));
        let init = ThresholdCase::InitialDatum { sigma: 1.0 };
        assert!((q_threshold(init, 0.5, 1).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(q_threshold(ThresholdCase::InitialDatum { sigma: 3.0 }, 0.2, 1).is_err());
        assert!(q_admissible(src(1.0), 4.0 / 3.0, 0.5, 1).unwrap());
        assert!(!q_admissible(init, 4.0 / 3.0, 0.5, 1).unwrap());
    }

    #[test]
    fn linear_weights_match_quadrature() {
        let rule = crate::quad::GaussRule::new(40);
        for (l, d) in [(0.3, 0.1), (50.0, 0.2), (1e-9, 0.5)] {
            let (a, b) = linear_weights(l, d);
            let qa = rule.integrate(0.0, d, |s: f64| (-l * (d - s)).exp() * (1.0 - s / d));
            let qb = rule.integrate(0.0, d, |s: f64| (-l * (d - s)).exp() * s / d);
            assert!((a - qa).abs() < 1e-12 && (b - qb).abs() < 1e-12);
        }
    }
}
