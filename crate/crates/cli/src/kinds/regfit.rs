//! Slope fits and regularity checks.

use std::sync::Arc;

use fracheat::regfit::{
    functional_inequalities, gradient_regularity_slope, gut_check, level_set_check, smoothing_slope, source_spacetime_norm, source_threshold,
    spike_pulse, weighted_smoothing_slope, InitialData, RefinementStudy, SlopeCheck, SourceNormReport, TimeWindow,
};
use fracheat::solver::solve_duhamel;
use fracheat::{Grid, GridField, Ladder, SourceSpec};
use serde_json::{json, Value};

use super::{positive, validate_field, Context};
use crate::artifacts::{Check, Stage};
use crate::failure::{AtField, Failure, Outcome};
use crate::manifest::{DataBlock, FieldSpec, RegfitCheck, RegfitParams, WindowBlock};

fn window(w: &WindowBlock, field: &str) -> Outcome<TimeWindow> {
    TimeWindow::new(w.lo, w.hi, w.points).at(field)
}

fn data(ctx: &Context, d: &DataBlock) -> Outcome<InitialData> {
    Ok(match d {
        DataBlock::WorstSpike => InitialData::WorstSpike,
        DataBlock::WorstL2 => InitialData::WorstL2,
        DataBlock::Field { field, sigma } => InitialData::Field { w0: ctx.field(field)?, sigma: sigma.0 },
    })
}

fn validate_data(ctx: &Context, d: &DataBlock, field: &str) -> Outcome<()> {
    if let DataBlock::Field { field: f, sigma } = d {
        validate_field(f, &ctx.grid, &format!("{field}.field"))?;
        if !(sigma.0 >= 1.0) {
            return Err(Failure::manifest(format!("{field}.sigma: must be ≥ 1")));
        }
    }
    Ok(())
}

fn pulse_ladder(grid: &Grid, horizon: f64, points: usize) -> fracheat::Result<Ladder> {
    let mut times = vec![0.0];
    times.extend(super::geometric(grid.h(), horizon, points));
    Ladder::new(times)
}

fn level_set_ranges(dim: usize, s: f64, q: f64, r: f64, field: &str) -> Outcome<()> {
    let n = dim as f64;
    if !(s > 0.25 && s <= 0.5) {
        return Err(Failure::Refused(format!("level-set bound needs 1/4 < s ≤ 1/2, got s = {s}")));
    }
    let q_cap = ((n + 2.0 * s) / (n + s)).min((n + 2.0 * s) / (n + 1.0 - 2.0 * s));
    if !(q > 1.0 && q < q_cap) {
        return Err(Failure::manifest(format!("{field}.q: {q} must lie in (1, {q_cap})")));
    }
    let r_cap = (n + 2.0 * s) / n;
    if !(r >= 1.0 && r < r_cap) {
        return Err(Failure::manifest(format!("{field}.r: {r} must lie in [1, {r_cap})")));
    }
    Ok(())
}

pub fn validate(ctx: &Context, p: &RegfitParams) -> Outcome<()> {
    if p.checks.is_empty() {
        return Err(Failure::manifest("params.checks: must not be empty"));
    }
    let e = ctx.exps();
    for (i, c) in p.checks.iter().enumerate() {
        let f = format!("params.checks[{i}]");
        match c {
            RegfitCheck::Smoothing { data, r, window: w, tolerance } | RegfitCheck::Weighted { data, r, window: w, tolerance } => {
                validate_data(ctx, data, &format!("{f}.data"))?;
                window(w, &format!("{f}.window"))?;
                positive(*tolerance, &format!("{f}.tolerance"))?;
                if !(r.0 >= 1.0) {
                    return Err(Failure::manifest(format!("{f}.r: must be ≥ 1")));
                }
                if matches!(data, DataBlock::WorstL2) && r.0 != 2.0 {
                    return Err(Failure::manifest(format!("{f}.r: worst-l2 data needs r = 2")));
                }
            }
            RegfitCheck::Gradient { data, rho, p: q, window: w, tolerance } => {
                validate_data(ctx, data, &format!("{f}.data"))?;
                window(w, &format!("{f}.window"))?;
                positive(*tolerance, &format!("{f}.tolerance"))?;
                let mut ex = *e;
                ex.rho = rho.unwrap_or(e.rho);
                ex.p = q.0;
                ex.validate().at(&f)?;
                if matches!(data, DataBlock::WorstL2) && q.0 != 2.0 {
                    return Err(Failure::manifest(format!("{f}.p: worst-l2 data needs p = 2")));
                }
            }
            RegfitCheck::Source { rho, r, at, horizon, points, coarse_nodes, stability } => {
                let rho = rho.unwrap_or(e.rho);
                let threshold = source_threshold(ctx.dim(), e.s, rho, 1.0).at(&f)?;
                if !(*r >= 1.0) {
                    return Err(Failure::manifest(format!("{f}.r: must be ≥ 1")));
                }
                if *r >= threshold {
                    return Err(Failure::Refused(format!("{f}: r = {r} is not below the integrability threshold {threshold:.6}")));
                }
                validate_field(&FieldSpec::Spike { at: at.clone(), mass: 1.0 }, &ctx.grid, &format!("{f}.at"))?;
                positive(*horizon, &format!("{f}.horizon"))?;
                if *points < 2 {
                    return Err(Failure::manifest(format!("{f}.points: need at least 2")));
                }
                if *coarse_nodes >= ctx.grid.n() {
                    return Err(Failure::manifest(format!("{f}.coarse_nodes: must be below grid.nodes_per_axis")));
                }
                let coarse = ctx.manifest.grid_with(*coarse_nodes, &format!("{f}.coarse_nodes"))?;
                pulse_ladder(&coarse, *horizon, *points).at(&format!("{f}.horizon"))?;
                if !(stability[0] < stability[1]) {
                    return Err(Failure::manifest(format!("{f}.stability: need lower < upper")));
                }
            }
            RegfitCheck::DifferenceQuotient { p: q, field, coarse_nodes, stability, regression } => {
                if !(*q >= 1.0 && q.is_finite()) {
                    return Err(Failure::manifest(format!("{f}.p: must be finite and ≥ 1")));
                }
                validate_field(field, &ctx.grid, &format!("{f}.field"))?;
                if let Some(n) = coarse_nodes {
                    let coarse = ctx.manifest.grid_with(*n, &format!("{f}.coarse_nodes"))?;
                    validate_field(field, &coarse, &format!("{f}.field"))?;
                }
                positive(*stability, &format!("{f}.stability"))?;
                if let Some(reg) = regression {
                    positive(reg.tolerance, &format!("{f}.regression.tolerance"))?;
                }
            }
            RegfitCheck::Inequalities { s, p: q, field, hardy_bound, sobolev_bound } => {
                let s = s.unwrap_or(e.s);
                if !(s > 0.0 && s < 1.0) {
                    return Err(Failure::manifest(format!("{f}.s: {s} outside (0, 1)")));
                }
                if !(*q >= 1.0) {
                    return Err(Failure::manifest(format!("{f}.p: must be ≥ 1")));
                }
                validate_field(field, &ctx.grid, &format!("{f}.field"))?;
                for (name, b) in [("hardy_bound", hardy_bound), ("sobolev_bound", sobolev_bound)] {
                    if let Some(b) = b {
                        positive(*b, &format!("{f}.{name}"))?;
                    }
                }
            }
            RegfitCheck::LevelSet { q, r, ladder, at, mass, bound } => {
                level_set_ranges(ctx.dim(), e.s, *q, *r, &f)?;
                ladder.build().at(&format!("{f}.ladder"))?;
                validate_field(&FieldSpec::Spike { at: at.clone(), mass: *mass }, &ctx.grid, &format!("{f}.at"))?;
                positive(*mass, &format!("{f}.mass"))?;
                if let Some(b) = bound {
                    positive(*b, &format!("{f}.bound"))?;
                }
            }
        }
    }
    Ok(())
}

fn slope(stage: &Stage, suffix: &str, c: &SlopeCheck) -> Outcome<(Check, Value)> {
    let rows: Vec<Vec<f64>> = c.times.iter().zip(&c.values).map(|(t, v)| vec![*t, *v]).collect();
    stage.table(suffix, &["t", "norm"], &rows)?;
    let detail = format!(
        "slope {:.4} vs predicted {:.4} (tolerance {}), R² {:.4}, window [{:.4}, {:.4}]",
        c.measured, c.predicted, c.tolerance, c.r2, c.window[0], c.window[1]
    );
    Ok((Check::new(c.tag.clone(), c.pass, detail), serde_json::to_value(c)?))
}

fn source_study(ctx: &Context, grid: &Arc<Grid>, rho: f64, r: f64, at: &[f64], horizon: f64, points: usize) -> Outcome<SourceNormReport> {
    let dec = ctx.spectrum_on(grid)?;
    let ladder = pulse_ladder(grid, horizon, points)?;
    let src = spike_pulse(grid, at, &ladder);
    Ok(source_spacetime_norm(&dec, &src, &ladder, rho, r)?)
}

pub fn execute(ctx: &Context, p: &RegfitParams, stage: &Stage) -> Outcome<(Vec<Check>, Value)> {
    let e = *ctx.exps();
    let mut checks = Vec::new();
    let mut results = Vec::new();
    for (i, c) in p.checks.iter().enumerate() {
        let suffix = format!("_{i:02}_{}", c.label());
        let mut out = json!({ "type": c.label() });
        match c {
            RegfitCheck::Smoothing { data: d, r, window: w, tolerance } => {
                let dec = ctx.spectrum()?;
                let rep = smoothing_slope(&dec, &data(ctx, d)?, r.0, &window(w, "window")?, *tolerance)?;
                let (chk, v) = slope(stage, &format!("{suffix}.csv"), &rep)?;
                checks.push(chk);
                out["slope"] = v;
            }
            RegfitCheck::Weighted { data: d, r, window: w, tolerance } => {
                let dec = ctx.spectrum()?;
                let rep = weighted_smoothing_slope(&dec, &data(ctx, d)?, r.0, &window(w, "window")?, *tolerance)?;
                let (chk, v) = slope(stage, &format!("{suffix}.csv"), &rep)?;
                checks.push(chk);
                out["slope"] = v;
            }
            RegfitCheck::Gradient { data: d, rho, p: q, window: w, tolerance } => {
                let dec = ctx.spectrum()?;
                let rep = gradient_regularity_slope(&dec, &data(ctx, d)?, rho.unwrap_or(e.rho), q.0, &window(w, "window")?, *tolerance)?;
                let (chk, v) = slope(stage, &format!("{suffix}.csv"), &rep)?;
                checks.push(chk);
                out["slope"] = v;
            }
            RegfitCheck::Source { rho, r, at, horizon, points, coarse_nodes, stability } => {
                let rho = rho.unwrap_or(e.rho);
                let coarse_grid = ctx.manifest.grid_with(*coarse_nodes, "coarse_nodes")?;
                let coarse = source_study(ctx, &coarse_grid, rho, *r, at, *horizon, *points)?;
                let fine = source_study(ctx, &ctx.grid, rho, *r, at, *horizon, *points)?;
                let study = RefinementStudy::new(coarse, fine);
                let [lo, hi] = *stability;
                let pass = study.fine.below_threshold && study.is_stable(lo, hi);
                let rows = vec![
                    vec![*coarse_nodes as f64, study.coarse.norm, study.coarse.source_norm],
                    vec![ctx.grid.n() as f64, study.fine.norm, study.fine.source_norm],
                ];
                stage.table(&format!("{suffix}.csv"), &["nodes_per_axis", "norm", "source_norm"], &rows)?;
                let detail = format!(
                    "r = {r} below threshold {:.4}; norm growth {:.4} under refinement (band [{lo}, {hi}])",
                    study.fine.threshold, study.growth
                );
                checks.push(Check::new(study.fine.tag.clone(), pass, detail));
                out["study"] = serde_json::to_value(&study)?;
            }
            RegfitCheck::DifferenceQuotient { p: q, field, coarse_nodes, stability, regression } => {
                let f = ctx.field(field)?;
                let rep = gut_check(&f, e.s, *q, &ctx.manifest.scheme)?;
                let mut rows = vec![vec![ctx.grid.n() as f64, rep.quasinorm, rep.gradient_norm, rep.ratio]];
                let mut pass = rep.ratio.is_finite() && rep.ratio > 0.0;
                let mut detail = format!("ratio {:.6}", rep.ratio);
                if let Some(n) = coarse_nodes {
                    let grid = ctx.manifest.grid_with(*n, "coarse_nodes")?;
                    let coarse = gut_check(&ctx.field_on(field, &grid)?, e.s, *q, &ctx.manifest.scheme)?;
                    rows.insert(0, vec![*n as f64, coarse.quasinorm, coarse.gradient_norm, coarse.ratio]);
                    let change = rep.ratio / coarse.ratio;
                    pass &= (change - 1.0).abs() <= *stability;
                    detail.push_str(&format!(", refinement change {change:.4} (within {stability})"));
                    out["coarse"] = serde_json::to_value(&coarse)?;
                }
                if let Some(reg) = regression {
                    let ok = (rep.ratio - reg.value).abs() <= reg.tolerance;
                    pass &= ok;
                    detail.push_str(&format!(", regression value {} ± {}", reg.value, reg.tolerance));
                }
                stage.table(&format!("{suffix}.csv"), &["nodes_per_axis", "quasinorm", "gradient_norm", "ratio"], &rows)?;
                checks.push(Check::new(rep.tag.clone(), pass, detail));
                out["report"] = serde_json::to_value(&rep)?;
            }
            RegfitCheck::Inequalities { s, p: q, field, hardy_bound, sobolev_bound } => {
                let f = ctx.field(field)?;
                let rep = functional_inequalities(&f, s.unwrap_or(e.s), *q)?;
                let mut rows = Vec::new();
                for (k, (tag, sides, bound)) in [("hardy", rep.hardy, hardy_bound), ("sobolev", rep.sobolev, sobolev_bound)].into_iter().enumerate() {
                    let Some(sides) = sides else { continue };
                    rows.push(vec![k as f64, sides.lhs, sides.rhs, sides.ratio]);
                    let pass = sides.lhs.is_finite() && bound.map_or(true, |b| sides.lhs <= b * sides.rhs);
                    let detail = match bound {
                        Some(b) => format!("lhs/rhs = {:.6} (bound {b})", sides.ratio),
                        None => format!("lhs/rhs = {:.6}", sides.ratio),
                    };
                    checks.push(Check::new(tag, pass, detail));
                }
                stage.table(&format!("{suffix}.csv"), &["inequality", "lhs", "rhs", "ratio"], &rows)?;
                out["report"] = serde_json::to_value(&rep)?;
            }
            RegfitCheck::LevelSet { q, r, ladder, at, mass, bound } => {
                let ladder = ladder.build()?;
                let w0 = GridField::spike(&ctx.grid, at, *mass);
                let traj = solve_duhamel(&*ctx.spectrum()?, &SourceSpec::initial(w0), &ladder)?;
                let rep = level_set_check(&traj, e.s, *q, *r, *mass)?;
                let pass = rep.constant.is_finite() && bound.map_or(true, |b| rep.constant <= b);
                let detail = match bound {
                    Some(b) => format!("constant {:.6} at level {:.4e} (bound {b})", rep.constant, rep.worst_level),
                    None => format!("constant {:.6} at level {:.4e}", rep.constant, rep.worst_level),
                };
                stage.table(&format!("{suffix}.csv"), &["worst_level", "constant"], &[vec![rep.worst_level, rep.constant]])?;
                checks.push(Check::new(rep.tag.clone(), pass, detail));
                out["report"] = serde_json::to_value(&rep)?;
            }
        }
        results.push(out);
    }
    Ok((checks, json!({ "checks": results.len(), "results": results })))
}
