//! Regularity checks on solver output: power-law slopes of smoothing
//! estimates, space-time norms of fractional gradients, the difference
//! quotient characterisation of Bessel potential spaces, Hardy and Sobolev
//! inequalities, and level-set bounds for difference quotients.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::fit_loglog;
use crate::fracop::{apply_half_gradient, OperatorMatrix, QuadratureScheme};
use crate::grid::{ExponentSet, Grid, GridField};
use crate::kernel::{heat_kernel, SpectralDecomposition};
use crate::norms::{gagliardo_seminorm_extended, lp_weighted, marcinkiewicz_quasinorm};
use crate::quad::GaussRule;
use crate::solver::{solve_duhamel, Ladder, Source, SourceSpec, Trajectory};

/// Fits with a coefficient of determination below this are flagged.
pub const MIN_R2: f64 = 0.98;

/// A nearly flat series has no variance for R² to explain; such a fit still
/// counts when every log residual stays below this.
pub const FLAT_RESIDUAL: f64 = 0.01;

/// Initial data for slope experiments.
#[derive(Debug, Clone)]
pub enum InitialData {
    /// Unit-mass one-cell spikes at every interior node; the largest response
    /// realises the `L¹ → L^r` operator norm.
    WorstSpike,
    /// Worst case over unit `L²` data (spectral norm); needs target index 2.
    WorstL2,
    /// A fixed datum labelled with its integrability index.
    Field { w0: GridField, sigma: f64 },
}

impl InitialData {
    pub fn sigma(&self) -> f64 {
        match self {
            InitialData::WorstSpike => 1.0,
            InitialData::WorstL2 => 2.0,
            InitialData::Field { sigma, .. } => *sigma,
        }
    }
}

/// Requested time range; the fitted window is clipped to
/// `[max(lo, 4h^{2s}), min(hi, 0.1/λ₁)]`, where the power law is visible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl TimeWindow {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || points < 3 {
            return Err(invalid("time window needs 0 < lo < hi and three or more points"));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn effective(&self, dec: &SpectralDecomposition) -> Result<[f64; 2]> {
        let g = dec.grid();
        let lo = self.lo.max(4.0 * g.h().powf(dec.operator().order()));
        let hi = self.hi.min(0.1 / dec.lambda1());
        if !(hi > lo) {
            return Err(invalid(format!("empty fit window [{lo}, {hi}]; refine the grid")));
        }
        Ok([lo, hi])
    }

    pub fn times(&self, dec: &SpectralDecomposition) -> Result<Vec<f64>> {
        let [lo, hi] = self.effective(dec)?;
        let k = self.points;
        Ok((0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect())
    }
}

/// Predicted small-time exponent of a norm, with its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeTarget {
    pub tag: String,
    pub quantity: String,
    pub predicted: f64,
    pub tolerance: f64,
}

impl SlopeTarget {
    /// `‖w(t)‖_r` for `w₀ ∈ L^σ`: `−(N/2s)(1/σ − 1/r)`.
    pub fn smoothing(e: &ExponentSet, tolerance: f64) -> Result<Self> {
        let predicted = smoothing_exponent(e.dim, e.s, e.sigma, e.r);
        Self::checked("smoothing", format!("||w(t)||_{}", e.r), predicted, tolerance)
    }

    /// `‖w(t)/δ^s‖_r`: `−(N/2s)(1/σ − 1/r) − 1/2`.
    pub fn weighted(e: &ExponentSet, tolerance: f64) -> Result<Self> {
        let predicted = smoothing_exponent(e.dim, e.s, e.sigma, e.r) - 0.5;
        Self::checked("weighted-smoothing", format!("||w(t)/delta^s||_{}", e.r), predicted, tolerance)
    }

    /// `‖(-Δ)^{ρ/2} w(t)‖_p`: dominant small-time power of the bound.
    pub fn gradient(e: &ExponentSet, tolerance: f64) -> Result<Self> {
        let predicted = gradient_exponent(e.dim, e.s, e.rho, e.sigma, e.p)?;
        Self::checked("gradient-smoothing", format!("||(-Laplacian)^(rho/2) w(t)||_{}", e.p), predicted, tolerance)
    }

    fn checked(tag: &str, quantity: String, predicted: f64, tolerance: f64) -> Result<Self> {
        if !predicted.is_finite() {
            return Err(invalid(format!("{tag}: exponent not finite for these parameters")));
        }
        Ok(Self { tag: tag.into(), quantity, predicted, tolerance })
    }
}

pub fn smoothing_exponent(dim: usize, s: f64, sigma: f64, r: f64) -> f64 {
    -(dim as f64) / (2.0 * s) * (1.0 / sigma - 1.0 / r)
}

/// `σ̂ = min{σ, 1/(ρ−s)}`, and for `2s+ρ < 1` additionally capped by `N/(1−2s−ρ)`.
pub fn sigma_hat(dim: usize, s: f64, rho: f64, sigma: f64) -> f64 {
    let mut v = if rho > s { sigma.min(1.0 / (rho - s)) } else { sigma };
    if 2.0 * s + rho < 1.0 {
        v = v.min(dim as f64 / (1.0 - 2.0 * s - rho));
    }
    v
}

/// `−(N/2s)(1/σ̂ − 1/p) − 1/2 − N(ρ−s)/2s`, the most singular power of the
/// bracket as `η → 0`.
pub fn gradient_exponent(dim: usize, s: f64, rho: f64, sigma: f64, p: f64) -> Result<f64> {
    if !(rho >= s && rho < (2.0 * s).max(1.0)) {
        return Err(invalid(format!("ρ = {rho} outside [s, max{{1, 2s}})")));
    }
    let n = dim as f64;
    let sh = sigma_hat(dim, s, rho, sigma);
    Ok(-n / (2.0 * s) * (1.0 / sh - 1.0 / p) - 0.5 - n * (rho - s) / (2.0 * s))
}

/// Result of one slope experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeCheck {
    #[serde(rename = "theorem_tag")]
    pub tag: String,
    pub params: serde_json::Value,
    pub predicted: f64,
    pub measured: f64,
    pub tolerance: f64,
    pub window: [f64; 2],
    #[serde(rename = "R2")]
    pub r2: f64,
    /// False when `R² < 0.98` on the window.
    pub reliable: bool,
    /// Largest `|log y − fit|` over the window.
    pub max_log_residual: f64,
    pub pass: bool,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SlopeCheck {
    fn new(target: &SlopeTarget, params: serde_json::Value, window: [f64; 2], times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let fit = fit_loglog(&times, &values)?;
        let reliable = fit.r2 >= MIN_R2;
        let max_log_residual = times
            .iter()
            .zip(&values)
            .map(|(t, v)| (v.ln() - fit.intercept - fit.slope * t.ln()).abs())
            .fold(0.0, f64::max);
        let trusted = reliable || max_log_residual <= FLAT_RESIDUAL;
        Ok(Self {
            tag: target.tag.clone(),
            params,
            predicted: target.predicted,
            measured: fit.slope,
            tolerance: target.tolerance,
            window,
            r2: fit.r2,
            reliable,
            max_log_residual,
            pass: trusted && (fit.slope - target.predicted).abs() <= target.tolerance,
            times,
            values,
        })
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        write_json(&stem.with_extension("json"), self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Linear map applied to `w(t)` on interior nodes before taking norms.
enum Post {
    Identity,
    Weight(Vec<f64>),
    Matrix(DMatrix<f64>),
}

impl Post {
    fn apply(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Post::Identity => m,
            Post::Weight(w) => {
                let mut m = m;
                for (i, wi) in w.iter().enumerate() {
                    m.row_mut(i).scale_mut(*wi);
                }
                m
            }
            Post::Matrix(b) => b * m,
        }
    }
}

fn inverse_delta_power(grid: &Grid, s: f64) -> Vec<f64> {
    grid.interior_indices().iter().map(|&i| grid.delta()[i].powf(-s)).collect()
}

fn norm_series(dec: &SpectralDecomposition, data: &InitialData, r: f64, post: &Post, times: &[f64]) -> Result<Vec<f64>> {
    let g = dec.grid();
    let vol = g.cell_measure();
    times
        .iter()
        .map(|&t| match data {
            InitialData::WorstSpike => {
                let m = post.apply(heat_kernel(dec, t)?.values().clone());
                Ok((0..m.ncols()).into_par_iter().map(|j| lp_weighted(m.column(j).iter().copied(), vol, r)).reduce(|| 0.0, f64::max))
            }
            InitialData::WorstL2 => {
                if r != 2.0 {
                    return Err(invalid("worst-case L² data needs target index 2"));
                }
                let q = dec.vectors() * vol.sqrt();
                let mut qe = q.clone();
                for (k, l) in dec.values().iter().enumerate() {
                    qe.column_mut(k).scale_mut((-l * t).exp());
                }
                let m = post.apply(qe * q.transpose());
                Ok(m.singular_values().max())
            }
            InitialData::Field { w0, .. } => {
                let w = dec.evolve(&w0.interior_values(), t);
                let m = post.apply(DMatrix::from_column_slice(w.len(), 1, &w));
                Ok(lp_weighted(m.column(0).iter().copied(), vol, r))
            }
        })
        .collect()
}

fn order_of(dec: &SpectralDecomposition) -> f64 {
    0.5 * dec.operator().order()
}

/// Slope of `‖w(·,t)‖_r` for `h = 0`.
pub fn smoothing_slope(dec: &SpectralDecomposition, data: &InitialData, r: f64, window: &TimeWindow, tolerance: f64) -> Result<SlopeCheck> {
    let s = order_of(dec);
    let mut e = ExponentSet::new(dec.grid().dim(), s);
    e.sigma = data.sigma();
    e.r = r;
    let target = SlopeTarget::smoothing(&e, tolerance)?;
    let times = window.times(dec)?;
    let values = norm_series(dec, data, r, &Post::Identity, &times)?;
    let params = serde_json::json!({ "N": e.dim, "s": s, "sigma": e.sigma, "r": r });
    SlopeCheck::new(&target, params, window.effective(dec)?, times, values)
}

/// Slope of `‖w(·,t)/δ^s‖_r` for `h = 0`.
pub fn weighted_smoothing_slope(dec: &SpectralDecomposition, data: &InitialData, r: f64, window: &TimeWindow, tolerance: f64) -> Result<SlopeCheck> {
    let s = order_of(dec);
    let mut e = ExponentSet::new(dec.grid().dim(), s);
    e.sigma = data.sigma();
    e.r = r;
    let target = SlopeTarget::weighted(&e, tolerance)?;
    let times = window.times(dec)?;
    let post = Post::Weight(inverse_delta_power(dec.grid(), s));
    let values = norm_series(dec, data, r, &post, &times)?;
    let params = serde_json::json!({ "N": e.dim, "s": s, "sigma": e.sigma, "r": r });
    SlopeCheck::new(&target, params, window.effective(dec)?, times, values)
}

/// Slope of `‖(-Δ)^{ρ/2} w(·,t)‖_{L^p(Ω)}` for `h = 0`.
pub fn gradient_regularity_slope(
    dec: &SpectralDecomposition,
    data: &InitialData,
    rho: f64,
    p: f64,
    window: &TimeWindow,
    tolerance: f64,
) -> Result<SlopeCheck> {
    let s = order_of(dec);
    let g = dec.grid();
    let mut e = ExponentSet::new(g.dim(), s);
    e.rho = rho;
    e.sigma = data.sigma();
    e.p = p;
    let target = SlopeTarget::gradient(&e, tolerance)?;
    let b = OperatorMatrix::assemble(g, rho, dec.operator().scheme())?;
    let post = Post::Matrix(b.matrix().clone());
    let times = window.times(dec)?;
    if let InitialData::Field { w0, sigma } = data {
        let once = norm_series(dec, data, p, &post, &times[..1])?[0];
        let doubled = InitialData::Field { w0: w0.scaled(2.0), sigma: *sigma };
        let twice = norm_series(dec, &doubled, p, &post, &times[..1])?[0];
        if (twice - 2.0 * once).abs() > 1e-10 * twice.abs().max(1e-300) {
            return Err(invalid("gradient norm is not linear in the datum"));
        }
    }
    let values = norm_series(dec, data, p, &post, &times)?;
    let params = serde_json::json!({ "N": g.dim(), "s": s, "rho": rho, "sigma": e.sigma, "sigma_hat": sigma_hat(g.dim(), s, rho, e.sigma), "p": p });
    SlopeCheck::new(&target, params, window.effective(dec)?, times, values)
}

/// Largest admissible `r` for `(-Δ)^{ρ/2} w ∈ L^r(Ω_T)` with `h ∈ L^m(Ω_T)`
/// (exclusive; `+∞` when unrestricted).
pub fn source_threshold(dim: usize, s: f64, rho: f64, m: f64) -> Result<f64> {
    let n = dim as f64;
    if !(s > 0.25 && s < 1.0) {
        return Err(Error::Refused(format!("source regularity needs s > 1/4, got s = {s}")));
    }
    let gap = rho - s;
    let limit = (s / (n + 2.0 * s)).min((4.0 * s - 1.0) / (n + 2.0 * s - 1.0));
    if !(gap >= 0.0 && gap < limit && rho < (2.0 * s).max(1.0)) {
        return Err(invalid(format!("ρ − s = {gap} must lie in [0, {limit})")));
    }
    let inv_gap = if gap > 0.0 { 1.0 / gap } else { f64::INFINITY };
    if 2.0 * s + rho >= 1.0 {
        if m <= (n + 2.0 * s) / (2.0 * s - rho) {
            Ok(m * (n + 2.0 * s) / ((n + 2.0 * s) * (m * gap + 1.0) - m * s))
        } else {
            Ok(inv_gap)
        }
    } else if m <= (n + 2.0 * s) / (4.0 * s - 1.0) {
        Ok(m * (n + 2.0 * s) / ((n + 2.0 * s) * (m * gap + 1.0) - m * (3.0 * s + rho - 1.0)))
    } else {
        Ok(inv_gap)
    }
}

/// Unit-mass space-time pulse: a one-cell spike at `at` whose amplitude
/// falls linearly to zero over the first ladder interval.
pub fn spike_pulse(grid: &std::sync::Arc<Grid>, at: &[f64], ladder: &Ladder) -> SourceSpec {
    let width = ladder.times()[1];
    let spike = GridField::spike(grid, at, 2.0 / width).interior_values();
    let mut rows = vec![vec![0.0; grid.interior_len()]; ladder.len()];
    rows[0] = spike;
    SourceSpec::forcing(grid, Source::Tabulated(rows)).with_labels(Some(1.0), None)
}

/// `‖h‖_{L^m(Ω × (0,T))}` for a tabulated source, linear in time.
pub fn source_norm(src: &SourceSpec, grid: &Grid, ladder: &Ladder, m: f64) -> Result<f64> {
    let rows = match &src.h {
        Source::Zero => return Ok(0.0),
        Source::Tabulated(rows) => rows,
        _ => return Err(invalid("source norm needs a tabulated source")),
    };
    let rule = GaussRule::new(8);
    let vol = grid.cell_measure();
    let ts = ladder.times();
    let mut total = 0.0;
    for k in 0..ts.len() - 1 {
        for (a, b) in rows[k].iter().zip(&rows[k + 1]) {
            if *a == 0.0 && *b == 0.0 {
                continue;
            }
            total += rule.integrate(ts[k], ts[k + 1], |t| {
                let th = (t - ts[k]) / (ts[k + 1] - ts[k]);
                ((1.0 - th) * a + th * b).abs().powf(m)
            }) * vol;
        }
    }
    Ok(total.powf(1.0 / m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceNormReport {
    #[serde(rename = "theorem_tag")]
    pub tag: String,
    pub s: f64,
    pub rho: f64,
    pub r: f64,
    pub m: f64,
    /// Exclusive upper bound on `r`.
    pub threshold: f64,
    pub below_threshold: bool,
    pub norm: f64,
    pub source_norm: f64,
    /// Empirical constant `norm / source_norm`.
    pub ratio: f64,
    pub horizon: f64,
}

/// `‖(-Δ)^{ρ/2} w‖_{L^r(Ω × ladder)}` for the trajectory driven by `src`.
pub fn source_spacetime_norm(dec: &SpectralDecomposition, src: &SourceSpec, ladder: &Ladder, rho: f64, r: f64) -> Result<SourceNormReport> {
    let s = order_of(dec);
    let g = dec.grid();
    let m = src.m.unwrap_or(1.0);
    let threshold = source_threshold(g.dim(), s, rho, m)?;
    let traj = solve_duhamel(dec, src, ladder)?;
    let norm = gradient_spacetime_norm(&traj, rho, r, dec.operator().scheme())?;
    let source_norm = source_norm(src, g, ladder, m)?;
    Ok(SourceNormReport {
        tag: "source-regularity".into(),
        s,
        rho,
        r,
        m,
        threshold,
        below_threshold: r < threshold,
        norm,
        source_norm,
        ratio: if source_norm > 0.0 { norm / source_norm } else { 0.0 },
        horizon: ladder.horizon(),
    })
}

/// `L^r(Ω × ladder)` norm of `(-Δ)^{ρ/2} w`, trapezoid weights in time.
pub fn gradient_spacetime_norm(traj: &Trajectory, rho: f64, r: f64, scheme: &QuadratureScheme) -> Result<f64> {
    let g = traj.grid();
    let b = OperatorMatrix::assemble(g, rho, scheme)?;
    let cols: Vec<Vec<f64>> = traj.fields().iter().map(GridField::interior_values).collect();
    let data = DMatrix::from_fn(g.interior_len(), cols.len(), |i, k| cols[k][i]);
    let out = b.matrix() * data;
    let wt = traj.ladder().trapezoid_weights();
    let vol = g.cell_measure();
    if r.is_infinite() {
        return Ok(out.amax());
    }
    let sum: f64 = (0..out.ncols()).map(|k| wt[k] * out.column(k).iter().map(|v| v.abs().powf(r)).sum::<f64>()).sum();
    Ok((sum * vol).powf(1.0 / r))
}

/// Coarse and fine space-time norms and their ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub coarse: SourceNormReport,
    pub fine: SourceNormReport,
    pub growth: f64,
}

impl RefinementStudy {
    pub fn new(coarse: SourceNormReport, fine: SourceNormReport) -> Self {
        let growth = fine.norm / coarse.norm;
        Self { coarse, fine, growth }
    }

    pub fn is_stable(&self, lo: f64, hi: f64) -> bool {
        self.growth.is_finite() && self.growth >= lo && self.growth <= hi
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GutReport {
    #[serde(rename = "theorem_tag")]
    pub tag: String,
    pub s: f64,
    pub p: f64,
    pub nodes_per_axis: usize,
    /// `p`-th root of the Marcinkiewicz quasi-norm of the difference quotient.
    pub quasinorm: f64,
    /// `‖(-Δ)^{s/2} f‖_p` over all grid nodes.
    pub gradient_norm: f64,
    pub ratio: f64,
}

/// Ratio of the weak-`L^p` size of `(f(x)−f(y))/|x−y|^{N/p+s}` on pairs of
/// grid nodes to `‖(-Δ)^{s/2} f‖_p`.
pub fn gut_check(f: &GridField, s: f64, p: f64, scheme: &QuadratureScheme) -> Result<GutReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid("p must be finite and ≥ 1"));
    }
    let g = f.grid();
    let grad = apply_half_gradient(f, s, scheme)?;
    let vol = g.cell_measure();
    let gradient_norm = lp_weighted(grad.values().iter().copied(), vol, p);
    let v = f.values();
    let h = g.h();
    let expo = g.dim() as f64 / p + s;
    let n = g.len();
    let samples: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).filter_map(move |j| {
                let r = g.distance(i, j);
                (r > 0.5 * h).then(|| ((v[i] - v[j]).abs() / r.powf(expo), vol * vol))
            })
        })
        .collect();
    let quasinorm = marcinkiewicz_quasinorm(&samples, p)?.powf(1.0 / p);
    let ratio = if gradient_norm > 0.0 { quasinorm / gradient_norm } else { 0.0 };
    Ok(GutReport { tag: "difference-quotient".into(), s, p, nodes_per_axis: g.n(), quasinorm, gradient_norm, ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalitySides {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl InequalitySides {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 } }
    }
}

/// `∫_Ω f²/δ^{2s}` against `∬ |f(x)−f(y)|²/|x−y|^{N+2s}`; needs `N ≥ 2s`.
pub fn hardy_inequality(f: &GridField, s: f64) -> Result<InequalitySides> {
    let g = f.grid();
    if (g.dim() as f64) < 2.0 * s {
        return Err(Error::Refused(format!("Hardy inequality needs N ≥ 2s (N = {}, s = {s})", g.dim())));
    }
    let lhs: f64 = g.interior_indices().iter().map(|&i| f.values()[i].powi(2) / g.delta()[i].powf(2.0 * s)).sum::<f64>() * g.cell_measure();
    let rhs = gagliardo_seminorm_extended(f, s, 2.0)?.value.powi(2);
    Ok(InequalitySides::new(lhs, rhs))
}

/// `‖f‖_{p*}` with `p* = pN/(N − ps)` against `[f]_{s,p}`; refused when `N ≤ ps`.
pub fn sobolev_inequality(f: &GridField, s: f64, p: f64) -> Result<InequalitySides> {
    let g = f.grid();
    let n = g.dim() as f64;
    if n <= p * s {
        return Err(Error::Refused(format!("fractional Sobolev embedding needs N > ps (N = {n}, p = {p}, s = {s})")));
    }
    let p_star = p * n / (n - p * s);
    let lhs = lp_weighted(f.values().iter().copied(), g.cell_measure(), p_star);
    let rhs = gagliardo_seminorm_extended(f, s, p)?.value;
    Ok(InequalitySides::new(lhs, rhs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub s: f64,
    pub p: f64,
    pub hardy: Option<InequalitySides>,
    pub sobolev: Option<InequalitySides>,
    pub refusals: Vec<String>,
}

/// Both inequalities; a refused precondition is recorded, not raised.
pub fn functional_inequalities(f: &GridField, s: f64, p: f64) -> Result<FunctionalReport> {
    let mut refusals = Vec::new();
    let mut keep = |r: Result<InequalitySides>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Refused(msg)) => {
            refusals.push(msg);
            Ok(None)
        }
        Err(e) => Err(e),
    };
    let hardy = keep(hardy_inequality(f, s))?;
    let sobolev = keep(sobolev_inequality(f, s, p))?;
    Ok(FunctionalReport { s, p, hardy, sobolev, refusals })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSetReport {
    #[serde(rename = "theorem_tag")]
    pub tag: String,
    pub s: f64,
    pub q: f64,
    pub r: f64,
    /// Level `ϱ` at which the ratio peaks.
    pub worst_level: f64,
    /// `max_ϱ ϱ |{|W| ≥ ϱ}|^{(2r+q)/2qr} / ((‖h‖₁ + ‖w₀‖₁)^{1/2} ‖w‖_r^{1/2})`.
    pub constant: f64,
}

/// Level sets of `W(x,y,t) = (w(x,t) − w(y,t))/|x−y|^{N/q+s}` over interior
/// pairs and the positive ladder times (weights `t_k − t_{k−1}`).
pub fn level_set_check(traj: &Trajectory, s: f64, q: f64, r: f64, data_l1: f64) -> Result<LevelSetReport> {
    let g = traj.grid();
    let n = g.dim() as f64;
    if !(s > 0.25 && s <= 0.5) {
        return Err(Error::Refused(format!("level-set bound needs 1/4 < s ≤ 1/2, got s = {s}")));
    }
    let q_cap = ((n + 2.0 * s) / (n + s)).min((n + 2.0 * s) / (n + 1.0 - 2.0 * s));
    if !(q > 1.0 && q < q_cap) {
        return Err(invalid(format!("q = {q} must lie in (1, {q_cap})")));
    }
    if !(r >= 1.0 && r < (n + 2.0 * s) / n) {
        return Err(invalid(format!("r = {r} must lie in [1, (N+2s)/N)")));
    }
    let idx = g.interior_indices();
    let vol = g.cell_measure();
    let h = g.h();
    let expo = n / q + s;
    let ts = traj.ladder().times();
    let mut samples = Vec::new();
    let mut lr = 0.0;
    for k in 1..ts.len() {
        let dt = ts[k] - ts[k - 1];
        let v = traj.fields()[k].values();
        lr += dt * idx.iter().map(|&i| v[i].abs().powf(r)).sum::<f64>() * vol;
        let slice: Vec<(f64, f64)> = idx
            .par_iter()
            .flat_map_iter(|&i| {
                idx.iter().filter_map(move |&j| {
                    let d = g.distance(i, j);
                    (d > 0.5 * h).then(|| ((v[i] - v[j]).abs() / d.powf(expo), vol * vol * dt))
                })
            })
            .collect();
        samples.extend(slice);
    }
    let rhs = data_l1.sqrt() * lr.powf(1.0 / r).sqrt();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let beta = (2.0 * r + q) / (2.0 * q * r);
    let mut tail = 0.0;
    let (mut best, mut worst_level) = (0.0_f64, 0.0);
    let mut i = 0;
    while i < samples.len() {
        let level = samples[i].0;
        while i < samples.len() && samples[i].0 == level {
            tail += samples[i].1;
            i += 1;
        }
        let lhs = level * tail.powf(beta);
        if level > 0.0 && lhs > best {
            best = lhs;
            worst_level = level;
        }
    }
    let constant = if rhs > 0.0 { best / rhs } else { 0.0 };
    Ok(LevelSetReport { tag: "level-set".into(), s, q, r, worst_level, constant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_exponents() {
        assert!((smoothing_exponent(1, 0.5, 1.0, 2.0) + 0.5).abs() < 1e-15);
        assert_eq!(smoothing_exponent(1, 0.5, 2.0, 2.0), 0.0);
        let mut e = ExponentSet::new(1, 0.5);
        e.sigma = 1.0;
        e.r = 2.0;
        assert!((SlopeTarget::weighted(&e, 0.15).unwrap().predicted + 1.0).abs() < 1e-15);
        assert!((gradient_exponent(1, 0.5, 0.5, 2.0, 2.0).unwrap() + 0.5).abs() < 1e-15);
        assert!((gradient_exponent(1, 0.5, 0.5, 1.0, 2.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(gradient_exponent(1, 0.5, 0.4, 1.0, 2.0).is_err());
    }

    #[test]
    fn source_thresholds() {
        assert!((source_threshold(1, 0.5, 0.5, 1.0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(source_threshold(1, 0.2, 0.2, 1.0).is_err());
        assert!(source_threshold(1, 0.5, 0.9, 1.0).is_err());
        assert_eq!(source_threshold(1, 0.5, 0.5, 100.0).unwrap(), f64::INFINITY);
    }
}
