//! Riemann-sum norms, the Gagliardo seminorm, Marcinkiewicz quasi-norms and truncation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, Region, SpatialDomain};
use crate::quad::GaussRule;

/// `(Σ |v|^p w)^{1/p}` with a common cell weight `w`; `p = ∞` gives the max.
pub fn lp_weighted(values: impl IntoIterator<Item = f64>, weight: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.into_iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let sum: f64 = values.into_iter().map(|v| v.abs().powf(p)).sum();
    (sum * weight).powf(1.0 / p)
}

/// Riemann-sum L^p norm of `f` over the nodes of `region`.
pub fn lp_norm(f: &GridField, p: f64, region: Region) -> Result<f64> {
    lp_norm_on(f, p, &f.grid().nodes_in(region))
}

/// Riemann-sum L^p norm of `f` over an explicit node subset.
pub fn lp_norm_on(f: &GridField, p: f64, nodes: &[usize]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("p = {p} must be ≥ 1")));
    }
    if nodes.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let v = f.values();
    Ok(lp_weighted(nodes.iter().map(|&i| v[i]), f.grid().cell_measure(), p))
}

/// Gagliardo seminorm together with a reliability flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seminorm {
    pub value: f64,
    /// Set when the omitted near-diagonal part decays slower than O(h),
    /// i.e. when p(1 − s) < 1.
    pub unreliable: bool,
}

/// `[f]_{s,p} = (∬ |f(x) − f(y)|^p / |x − y|^{N+sp})^{1/p}` as a double sum
/// over the sampled node set. Pairs closer than h/2 are skipped.
pub fn gagliardo_seminorm(f: &GridField, s: f64, p: f64) -> Result<Seminorm> {
    let pair = pair_sum(f, s, p)?;
    Ok(Seminorm { value: pair.powf(1.0 / p), unreliable: p * (1.0 - s) < 1.0 })
}

/// Seminorm over ℝ^N × ℝ^N of `f` extended by zero beyond the grid; the
/// region beyond the grid is integrated exactly.
pub fn gagliardo_seminorm_extended(f: &GridField, s: f64, p: f64) -> Result<Seminorm> {
    let pair = pair_sum(f, s, p)?;
    let g = f.grid();
    let v = f.values();
    let cover = covered_box(g.domain(), g.padding(), g.h());
    let tail: f64 = (0..g.len())
        .into_par_iter()
        .filter(|&i| v[i] != 0.0)
        .map(|i| v[i].abs().powf(p) * outside_box_integral(&cover, g.point(i), s * p))
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        * g.cell_measure();
    Ok(Seminorm { value: (pair + 2.0 * tail).powf(1.0 / p), unreliable: p * (1.0 - s) < 1.0 })
}

fn pair_sum(f: &GridField, s: f64, p: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p = {p} must be finite and ≥ 1")));
    }
    let g = f.grid();
    let beta = g.dim() as f64 + s * p;
    let vol = g.cell_measure();
    let h = g.h();
    let v = f.values();
    let pts = g.points();
    let sum: f64 = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let (xi, fi) = (pts[i], v[i]);
            let mut acc = 0.0;
            for j in 0..g.len() {
                let d = fi - v[j];
                if d == 0.0 {
                    continue;
                }
                let r = ((xi[0] - pts[j][0]).powi(2) + (xi[1] - pts[j][1]).powi(2)).sqrt();
                if r >= 0.5 * h {
                    acc += d.abs().powf(p) / r.powf(beta);
                }
            }
            acc
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(sum * vol * vol)
}

/// Box covered by the grid cells, i.e. Ω plus the snapped padding and half a cell.
pub(crate) fn covered_box(domain: &SpatialDomain, padding: f64, h: f64) -> SpatialDomain {
    let w = padding + 0.5 * h;
    SpatialDomain {
        dim: domain.dim,
        lower: domain.lower.iter().map(|l| l - w).collect(),
        upper: domain.upper.iter().map(|u| u + w).collect(),
        padding: domain.padding,
    }
}

/// `∫_{y ∉ B} |x − y|^{−(N+γ)} dy` for a point `x` inside the box `B`, γ > 0.
pub(crate) fn outside_box_integral(b: &SpatialDomain, x: &[f64], gamma: f64) -> f64 {
    if b.dim == 1 {
        return ((x[0] - b.lower[0]).powf(-gamma) + (b.upper[0] - x[0]).powf(-gamma)) / gamma;
    }
    // polar form: (1/γ) ∫ r_b(θ)^{−γ} dθ with r_b the ray length to ∂B;
    // split at the corner directions so each piece is smooth
    let corners = [
        (b.upper[0] - x[0], b.upper[1] - x[1]),
        (b.lower[0] - x[0], b.upper[1] - x[1]),
        (b.lower[0] - x[0], b.lower[1] - x[1]),
        (b.upper[0] - x[0], b.lower[1] - x[1]),
    ];
    let mut angles: Vec<f64> = corners.iter().map(|&(dx, dy)| dy.atan2(dx).rem_euclid(std::f64::consts::TAU)).collect();
    angles.push(0.0);
    angles.push(std::f64::consts::TAU);
    angles.sort_by(f64::total_cmp);
    let rule = GaussRule::new(24);
    let ray = |th: f64| {
        let (c, sn) = (th.cos(), th.sin());
        let mut r = f64::INFINITY;
        if c > 1e-300 {
            r = r.min((b.upper[0] - x[0]) / c);
        } else if c < -1e-300 {
            r = r.min((b.lower[0] - x[0]) / c);
        }
        if sn > 1e-300 {
            r = r.min((b.upper[1] - x[1]) / sn);
        } else if sn < -1e-300 {
            r = r.min((b.lower[1] - x[1]) / sn);
        }
        r
    };
    let total: f64 = angles
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| rule.integrate(w[0], w[1], |th| ray(th).powf(-gamma)))
        .sum();
    total / gamma
}

/// `inf{C : |{|f| > k}| ≤ C k^{−p} for all k > 0}` for a finite sample of
/// (value, cell measure) pairs; the supremum is attained as k ↑ |v_i|.
pub fn marcinkiewicz_quasinorm(samples: &[(f64, f64)], p: f64) -> Result<f64> {
    if samples.iter().any(|&(_, m)| !(m > 0.0)) {
        return Err(invalid("cell measures must be positive"));
    }
    let mut sorted: Vec<(f64, f64)> = samples.iter().map(|&(v, m)| (v.abs(), m)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = 0.0_f64;
    let mut tail = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let level = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == level {
            tail += sorted[i].1;
            i += 1;
        }
        if level > 0.0 {
            best = best.max(level.powf(p) * tail);
        }
    }
    Ok(best)
}

/// Pointwise truncation T_k, clamping values to [−k, k].
pub fn truncate(f: &GridField, k: f64) -> Result<GridField> {
    if !(k > 0.0) {
        return Err(invalid(format!("truncation level k = {k} must be positive")));
    }
    Ok(f.map(|v| truncate_value(v, k)))
}

pub fn truncate_value(v: f64, k: f64) -> f64 {
    v.clamp(-k, k)
}
