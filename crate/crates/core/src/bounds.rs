//! Empirical constants for pointwise envelopes of the fractional gradient of
//! the Dirichlet heat kernel and Green function, and for two-sided kernel
//! comparability.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fracop::FractionalOperator;
use crate::grid::Grid;
use crate::kernel::{free_space_kernel, green_function, heat_kernel, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// s ≤ 1/2
    Low,
    /// s > 1/2
    High,
}

impl Regime {
    pub fn of(s: f64) -> Self {
        if s <= 0.5 {
            Regime::Low
        } else {
            Regime::High
        }
    }
}

fn check_order(s: f64, rho: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    let cap = (2.0 * s).min(1.0);
    if !(rho >= s && rho < cap) {
        return Err(invalid(format!("ρ = {rho} outside [s, min{{1, 2s}}) = [{s}, {cap})")));
    }
    Ok(())
}

/// Bracketed envelope for `|(-Δ_x)^{ρ/2} P_Ω(x, y, t)|` with unit constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpec {
    pub dim: usize,
    pub s: f64,
    pub rho: f64,
    pub regime: Regime,
    /// Scale `D` inside `log(D / |x − y|)`.
    pub log_scale: f64,
}

impl EnvelopeSpec {
    pub fn new(dim: usize, s: f64, rho: f64, log_scale: f64) -> Result<Self> {
        check_order(s, rho)?;
        if !(log_scale > 0.0) {
            return Err(invalid("log scale D must be positive"));
        }
        Ok(Self { dim, s, rho, regime: Regime::of(s), log_scale })
    }

    /// `(1 ∧ δ^s(y)/√t) / (t^{1/2s} + r)^k` with the regime's power k.
    pub fn prefactor(&self, dy: f64, r: f64, t: f64) -> f64 {
        let (n, s, rho) = (self.dim as f64, self.s, self.rho);
        let power = match self.regime {
            Regime::Low => n + 2.0 * s + rho - 1.0,
            Regime::High => n + rho,
        };
        (dy.powf(s) / t.sqrt()).min(1.0) / (t.powf(0.5 / s) + r).powf(power)
    }

    /// The five additive bracket terms, in the order they are written.
    pub fn terms(&self, dx: f64, r: f64, t: f64) -> [f64; 5] {
        let (s, rho) = (self.s, self.rho);
        let scale = t.powf(0.5 / s) + r;
        let log_r = (self.log_scale / r).ln();
        let log_d = dx.ln().abs();
        let tpow = t.powf((2.0 * s - 1.0) / (2.0 * s));
        match self.regime {
            Regime::Low => [
                dx.powf(s - rho) / scale.powf(1.0 - s - rho),
                tpow * log_r,
                t.powf((s + rho - 1.0) / (2.0 * s)) * dx.powf(s - rho),
                tpow * log_d,
                r.powf(2.0 * s - 1.0),
            ],
            Regime::High => [
                dx.powf(s - rho) / scale.powf(s - rho),
                tpow / r.powf(2.0 * s - 1.0),
                t.powf((rho - s) / (2.0 * s)) * dx.powf(s - rho),
                log_r,
                log_d,
            ],
        }
    }

    pub fn eval(&self, dx: f64, dy: f64, r: f64, t: f64) -> f64 {
        self.prefactor(dy, r, t) * self.terms(dx, r, t).iter().sum::<f64>()
    }

    /// Envelope with bracket term `skip` removed.
    pub fn eval_without(&self, skip: usize, dx: f64, dy: f64, r: f64, t: f64) -> f64 {
        let terms = self.terms(dx, r, t);
        let sum: f64 = terms.iter().enumerate().filter(|&(k, _)| k != skip).map(|(_, v)| v).sum();
        self.prefactor(dy, r, t) * sum
    }
}

/// Envelope for `|(-Δ_x)^{ρ/2} 𝒢(x, y)|` with unit constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenEnvelope {
    pub dim: usize,
    pub s: f64,
    pub rho: f64,
    pub log_scale: f64,
}

impl GreenEnvelope {
    pub fn new(dim: usize, s: f64, rho: f64, log_scale: f64) -> Result<Self> {
        if s <= 0.25 {
            return Err(Error::Refused(format!(
                "the Green-function gradient estimate assumes s > 1/4 (got s = {s})"
            )));
        }
        check_order(s, rho)?;
        Ok(Self { dim, s, rho, log_scale })
    }

    pub fn terms(&self, dx: f64, r: f64) -> [f64; 3] {
        let (s, rho) = (self.s, self.rho);
        [dx.powf(s - rho) / r.powf(s - rho), (self.log_scale / r).ln(), dx.ln().abs()]
    }

    pub fn eval(&self, dx: f64, r: f64) -> f64 {
        let n = self.dim as f64;
        self.terms(dx, r).iter().sum::<f64>() / r.powf(n - (2.0 * self.s - self.rho))
    }
}

/// Two-sided comparability envelope
/// `(1 ∧ δ^s(x)/√t)(1 ∧ δ^s(y)/√t) t / (t^{1/2s} + r)^{N+2s}`.
pub fn comparability_envelope(dim: usize, s: f64, dx: f64, dy: f64, r: f64, t: f64) -> f64 {
    let cut = |d: f64| (d.powf(s) / t.sqrt()).min(1.0);
    cut(dx) * cut(dy) * t / (t.powf(0.5 / s) + r).powf(dim as f64 + 2.0 * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Option<f64>,
}

/// Outcome of one certification on one grid, optionally compared to a coarser grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub tag: String,
    pub regime: Option<Regime>,
    pub s: f64,
    pub rho: f64,
    pub nodes_per_axis: usize,
    /// Empirical constant: the largest sampled ratio quantity / envelope.
    pub c_star: f64,
    pub argmax: SamplePoint,
    /// Smallest sampled ratio, recorded by two-sided checks.
    pub c_min: Option<f64>,
    pub argmin: Option<SamplePoint>,
    pub samples: usize,
    /// C* on this grid divided by C* on the next coarser grid.
    pub stability_ratio: Option<f64>,
    #[serde(rename = "D")]
    pub log_scale: f64,
    /// Pairs with |x − y| below this distance are excluded.
    pub exclusion: f64,
    pub times: Vec<f64>,
}

impl CertificationReport {
    /// Records the refinement ratio against a report from a coarser grid.
    pub fn with_coarse(mut self, coarse: &CertificationReport) -> Self {
        self.stability_ratio = Some(self.c_star / coarse.c_star);
        self
    }

    pub fn is_stable(&self, lo: f64, hi: f64) -> bool {
        self.stability_ratio.is_some_and(|r| r >= lo && r <= hi) && self.c_star.is_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    value: f64,
    i: usize,
    j: usize,
    k: usize,
}

/// Max (and min) of `quantity[(a, b)] / envelope(a, b)` over admissible pairs;
/// `envelope` returns `None` for excluded pairs. Ties keep the first index.
fn ratio_extrema(
    quantity: &DMatrix<f64>,
    k: usize,
    envelope: impl Fn(usize, usize) -> Option<f64> + Sync,
) -> Result<(Option<Extremum>, Option<Extremum>, usize)> {
    let cols: Vec<(Option<Extremum>, Option<Extremum>, usize, bool)> = (0..quantity.ncols())
        .into_par_iter()
        .map(|j| {
            let (mut hi, mut lo): (Option<Extremum>, Option<Extremum>) = (None, None);
            let mut count = 0;
            let mut zero_env = false;
            for i in 0..quantity.nrows() {
                let Some(e) = envelope(i, j) else { continue };
                if !(e > 0.0) {
                    zero_env = true;
                    continue;
                }
                count += 1;
                let v = quantity[(i, j)].abs() / e;
                if hi.is_none_or(|h| v > h.value) {
                    hi = Some(Extremum { value: v, i, j, k });
                }
                if lo.is_none_or(|l| v < l.value) {
                    lo = Some(Extremum { value: v, i, j, k });
                }
            }
            (hi, lo, count, zero_env)
        })
        .collect();
    if cols.iter().any(|c| c.3) {
        return Err(invalid("envelope vanished at a sample point"));
    }
    let mut hi: Option<Extremum> = None;
    let mut lo: Option<Extremum> = None;
    let mut count = 0;
    for (h, l, c, _) in cols {
        count += c;
        if let Some(h) = h {
            if hi.is_none_or(|x| h.value > x.value) {
                hi = Some(h);
            }
        }
        if let Some(l) = l {
            if lo.is_none_or(|x| l.value < x.value) {
                lo = Some(l);
            }
        }
    }
    Ok((hi, lo, count))
}

fn merge(best: &mut Option<Extremum>, cand: Option<Extremum>, larger: bool) {
    if let Some(c) = cand {
        let better = match best {
            None => true,
            Some(b) => if larger { c.value > b.value } else { c.value < b.value },
        };
        if better {
            *best = Some(c);
        }
    }
}

fn sample_point(grid: &Grid, e: &Extremum, times: &[f64]) -> SamplePoint {
    let idx = grid.interior_indices();
    SamplePoint {
        x: grid.point(idx[e.i]).to_vec(),
        y: grid.point(idx[e.j]).to_vec(),
        t: times.get(e.k).copied(),
    }
}

fn half_operator(dec: &SpectralDecomposition, rho: f64) -> Result<DMatrix<f64>> {
    let op = FractionalOperator::new(dec.grid(), rho, dec.operator().scheme())?;
    Ok(op.assemble().matrix().clone())
}

fn dirichlet_s(dec: &SpectralDecomposition) -> f64 {
    dec.operator().order() / 2.0
}

/// Sample geometry shared by the certifications: boundary distance of each
/// interior node and pair distances.
struct Geometry {
    delta: Vec<f64>,
    pts: Vec<[f64; 2]>,
    h: f64,
}

impl Geometry {
    fn new(grid: &Arc<Grid>) -> Self {
        let idx = grid.interior_indices();
        Self {
            delta: idx.iter().map(|&i| grid.delta()[i]).collect(),
            pts: idx.iter().map(|&i| grid.points()[i]).collect(),
            h: grid.h(),
        }
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.pts[a], self.pts[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }
}

/// C* for `|(-Δ_x)^{ρ/2} P_Ω(x, y, t)|` against the regime-correct envelope.
/// Samples all interior pairs with `|x − y| ≥ exclusion·h` and `δ(x) ≥ exclusion·h`.
pub fn certify_kernel_gradient(
    dec: &SpectralDecomposition,
    rho: f64,
    times: &[f64],
    exclusion: f64,
) -> Result<CertificationReport> {
    let grid = dec.grid();
    let s = dirichlet_s(dec);
    let env = EnvelopeSpec::new(grid.dim(), s, rho, grid.domain().log_scale())?;
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("times must be positive and non-empty"));
    }
    let b = half_operator(dec, rho)?;
    let geo = Geometry::new(grid);
    let cut = exclusion * geo.h - 1e-12;
    let (mut best, mut samples) = (None, 0);
    for (k, &t) in times.iter().enumerate() {
        let q = &b * heat_kernel(dec, t)?.values();
        let (hi, _, c) = ratio_extrema(&q, k, |i, j| {
            let r = geo.dist(i, j);
            (r >= cut && geo.delta[i] >= cut).then(|| env.eval(geo.delta[i], geo.delta[j], r, t))
        })?;
        samples += c;
        merge(&mut best, hi, true);
    }
    let best = best.ok_or_else(|| invalid("no admissible sample pairs"))?;
    Ok(CertificationReport {
        tag: "kernel-gradient".into(),
        regime: Some(env.regime),
        s,
        rho,
        nodes_per_axis: grid.n(),
        c_star: best.value,
        argmax: sample_point(grid, &best, times),
        c_min: None,
        argmin: None,
        samples,
        stability_ratio: None,
        log_scale: env.log_scale,
        exclusion: exclusion * geo.h,
        times: times.to_vec(),
    })
}

/// C* for `|(-Δ_x)^{ρ/2} 𝒢(x, y)|`; refuses s ≤ 1/4.
pub fn certify_green_gradient(dec: &SpectralDecomposition, rho: f64, exclusion: f64) -> Result<CertificationReport> {
    let grid = dec.grid();
    let s = dirichlet_s(dec);
    let env = GreenEnvelope::new(grid.dim(), s, rho, grid.domain().log_scale())?;
    let b = half_operator(dec, rho)?;
    let q = &b * green_function(dec).values();
    let geo = Geometry::new(grid);
    let cut = exclusion * geo.h - 1e-12;
    let (hi, _, samples) = ratio_extrema(&q, 0, |i, j| {
        let r = geo.dist(i, j);
        (r >= cut && geo.delta[i] >= cut).then(|| env.eval(geo.delta[i], r))
    })?;
    let best = hi.ok_or_else(|| invalid("no admissible sample pairs"))?;
    Ok(CertificationReport {
        tag: "green-gradient".into(),
        regime: Some(Regime::of(s)),
        s,
        rho,
        nodes_per_axis: grid.n(),
        c_star: best.value,
        argmax: sample_point(grid, &best, &[]),
        c_min: None,
        argmin: None,
        samples,
        stability_ratio: None,
        log_scale: env.log_scale,
        exclusion: exclusion * geo.h,
        times: vec![],
    })
}

/// Min and max of `P_Ω / comparability envelope` over pairs with `|x − y| ≥ exclusion·h`.
pub fn certify_comparability(dec: &SpectralDecomposition, times: &[f64], exclusion: f64) -> Result<CertificationReport> {
    let grid = dec.grid();
    let s = dirichlet_s(dec);
    let geo = Geometry::new(grid);
    let cut = exclusion * geo.h - 1e-12;
    let (mut hi, mut lo, mut samples) = (None, None, 0);
    for (k, &t) in times.iter().enumerate() {
        let p = heat_kernel(dec, t)?;
        let (h, l, c) = ratio_extrema(p.values(), k, |i, j| {
            let r = geo.dist(i, j);
            (r >= cut).then(|| comparability_envelope(grid.dim(), s, geo.delta[i], geo.delta[j], r, t))
        })?;
        samples += c;
        merge(&mut hi, h, true);
        merge(&mut lo, l, false);
    }
    let hi = hi.ok_or_else(|| invalid("no admissible sample pairs"))?;
    let lo = lo.expect("min exists when max does");
    Ok(CertificationReport {
        tag: "kernel-comparability".into(),
        regime: None,
        s,
        rho: 2.0 * s,
        nodes_per_axis: grid.n(),
        c_star: hi.value,
        argmax: sample_point(grid, &hi, times),
        c_min: Some(lo.value),
        argmin: Some(sample_point(grid, &lo, times)),
        samples,
        stability_ratio: None,
        log_scale: grid.domain().log_scale(),
        exclusion: exclusion * geo.h,
        times: times.to_vec(),
    })
}

/// Largest relative excess `(P_Ω − P_free) / P_free` over pairs with
/// `|x − y| ≥ exclusion·h`, where `P_free` is the free-space kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub max_excess: f64,
    pub at: SamplePoint,
    pub samples: usize,
    pub free_space_converged: bool,
}

pub fn free_space_domination(dec: &SpectralDecomposition, times: &[f64], exclusion: f64) -> Result<DominationReport> {
    let grid = dec.grid();
    let s = dirichlet_s(dec);
    let geo = Geometry::new(grid);
    let cut = exclusion * geo.h - 1e-12;
    let mut best: Option<Extremum> = None;
    let (mut samples, mut converged) = (0, true);
    for (k, &t) in times.iter().enumerate() {
        let p = heat_kernel(dec, t)?;
        // pair distances on a uniform grid come from a small set of offsets
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let m = geo.pts.len();
        for i in 0..m {
            for j in 0..m {
                let r = geo.dist(i, j);
                if r >= cut {
                    let key = (r / geo.h * 1e6).round() as u64;
                    if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(key) {
                        let v = free_space_kernel(&[r, 0.0][..grid.dim()], t, s)?;
                        converged &= v.converged;
                        e.insert(v.value);
                    }
                }
            }
        }
        let free = |i: usize, j: usize| cache[&((geo.dist(i, j) / geo.h * 1e6).round() as u64)];
        for i in 0..m {
            for j in 0..m {
                if geo.dist(i, j) >= cut {
                    samples += 1;
                    let f = free(i, j);
                    let v = (p.values()[(i, j)] - f) / f;
                    if best.is_none_or(|b| v > b.value) {
                        best = Some(Extremum { value: v, i, j, k });
                    }
                }
            }
        }
    }
    let best = best.ok_or_else(|| invalid("no admissible sample pairs"))?;
    Ok(DominationReport {
        max_excess: best.value,
        at: sample_point(grid, &best, times),
        samples,
        free_space_converged: converged,
    })
}
