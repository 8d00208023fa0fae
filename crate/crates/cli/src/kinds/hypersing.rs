//! Hyper-singular integrals: point values, small-time scaling, divergence.

use fracheat::hypersing::{eval_g_alpha_lambda, eval_g_lambda, parabolic_refinement, scaling_slope, Density, HyperSingularSpec};
use serde_json::json;

use super::{geometric, positive, validate_field, Context};
use crate::artifacts::{Check, Stage};
use crate::failure::{AtField, Failure, Outcome};
use crate::manifest::{HyperMode, HypersingParams};

fn alpha(ctx: &Context, p: &HypersingParams) -> f64 {
    p.alpha.unwrap_or(ctx.exps().alpha)
}

fn point(ctx: &Context, x: &[f64], field: &str) -> Outcome<()> {
    if x.len() != ctx.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(Failure::manifest(format!("{field}: expected {} finite coordinates", ctx.dim())));
    }
    Ok(())
}

fn spec(ctx: &Context, p: &HypersingParams, checked: bool) -> Outcome<HyperSingularSpec> {
    let e = ctx.exps();
    let g = ctx.field(&p.density)?;
    let spec = match p.mode {
        HyperMode::Elliptic => HyperSingularSpec::elliptic(g, e.lambda, e.s, e.m).at("exponents")?,
        HyperMode::Parabolic if checked => HyperSingularSpec::parabolic(Density::Steady(g), alpha(ctx, p), e.lambda, e.s, e.m).at("exponents")?,
        HyperMode::Parabolic => HyperSingularSpec::parabolic_unchecked(Density::Steady(g), alpha(ctx, p), e.lambda, e.s, e.m),
    };
    Ok(match p.time_panels {
        Some(j) => spec.with_time_panels(j),
        None => spec,
    })
}

pub fn validate(ctx: &Context, p: &HypersingParams) -> Outcome<()> {
    validate_field(&p.density, &ctx.grid, "params.density")?;
    if p.time_panels == Some(0) {
        return Err(Failure::manifest("params.time_panels: must be positive"));
    }
    for (i, ev) in p.evaluate.iter().enumerate() {
        point(ctx, &ev.x, &format!("params.evaluate[{i}].x"))?;
        positive(ev.t, &format!("params.evaluate[{i}].t"))?;
        positive(ev.tolerance, &format!("params.evaluate[{i}].tolerance"))?;
    }
    if let Some(sc) = &p.scaling {
        positive(sc.lo, "params.scaling.lo")?;
        if !(sc.hi > sc.lo) || sc.count < 3 {
            return Err(Failure::manifest("params.scaling: need hi > lo and count ≥ 3"));
        }
    }
    if let Some(rf) = &p.refinement {
        if p.mode != HyperMode::Parabolic {
            return Err(Failure::manifest("params.refinement: only meaningful in parabolic mode"));
        }
        point(ctx, &rf.x, "params.refinement.x")?;
        positive(rf.t, "params.refinement.t")?;
        if rf.panels == 0 || rf.levels < 3 {
            return Err(Failure::manifest("params.refinement: need panels ≥ 1 and levels ≥ 3"));
        }
    }
    // Outside the refinement study the integrability hypotheses must hold.
    if !p.evaluate.is_empty() || p.scaling.is_some() {
        let e = ctx.exps();
        let g = fracheat::GridField::zeros(&ctx.grid);
        match p.mode {
            HyperMode::Elliptic => HyperSingularSpec::elliptic(g, e.lambda, e.s, e.m).map(|_| ()),
            HyperMode::Parabolic => HyperSingularSpec::parabolic(Density::Steady(g), alpha(ctx, p), e.lambda, e.s, e.m).map(|_| ()),
        }
        .at("exponents")?;
    }
    Ok(())
}

pub fn execute(ctx: &Context, p: &HypersingParams, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    let mut checks = Vec::new();
    let mut result = json!({});
    if !p.evaluate.is_empty() {
        let sp = spec(ctx, p, true)?;
        let mut rows = Vec::new();
        let mut values = Vec::new();
        for ev in &p.evaluate {
            let v = match p.mode {
                HyperMode::Elliptic => eval_g_lambda(&sp, &ev.x, ev.t)?,
                HyperMode::Parabolic => eval_g_alpha_lambda(&sp, &ev.x, ev.t)?,
            };
            let mut row = ev.x.clone();
            row.extend([ev.t, v]);
            rows.push(row);
            values.push(v);
            if let Some(want) = ev.expected {
                let err = (v - want).abs();
                checks.push(Check::new(
                    "hyper-singular-anchor",
                    err <= ev.tolerance,
                    format!("G({:?}, {}) = {v:.8}, expected {want:.8}, error {err:e}", ev.x, ev.t),
                ));
            }
        }
        let header: &[&str] = if ctx.dim() == 1 { &["x", "t", "G"] } else { &["x", "y", "t", "G"] };
        stage.table("_values.csv", header, &rows)?;
        result["values"] = json!(values);
    }
    if let Some(sc) = &p.scaling {
        let sp = spec(ctx, p, true)?;
        let rep = scaling_slope(&sp, ctx.exps().p, &geometric(sc.lo, sc.hi, sc.count))?;
        stage.table("_scaling.csv", &["t", "norm"], &rep.times.iter().zip(&rep.norms).map(|(t, v)| vec![*t, *v]).collect::<Vec<_>>())?;
        let detail = match rep.predicted {
            Some(e) => format!("slope {:.4} vs predicted {e:.4} (tolerance {}), R² {:.4}", rep.fit.slope, sc.tolerance, rep.fit.r2),
            None => format!("slope {:.4}, R² {:.4}; no closed-form exponent in parabolic mode", rep.fit.slope, rep.fit.r2),
        };
        let pass = match rep.predicted {
            Some(_) => rep.within(sc.tolerance),
            None => rep.fit.slope.is_finite(),
        };
        checks.push(Check::new("hyper-singular-scaling", pass, detail));
        result["scaling"] = serde_json::to_value(&rep)?;
    }
    if let Some(rf) = &p.refinement {
        let sp = spec(ctx, p, false)?;
        let rep = parabolic_refinement(&sp, &rf.x, rf.t, rf.panels, rf.levels)?;
        let rows: Vec<Vec<f64>> = rep.panels.iter().zip(&rep.values).map(|(&j, &v)| vec![j as f64, v]).collect();
        stage.table("_refinement.csv", &["panels", "value"], &rows)?;
        let pass = rep.divergent == rf.expect_divergent;
        let detail = format!("divergent = {} (expected {}), increment ratios {:?}", rep.divergent, rf.expect_divergent, rep.increment_ratios);
        checks.push(Check::new("hyper-singular-divergence", pass, detail));
        result["refinement"] = serde_json::to_value(&rep)?;
    }
    Ok((checks, result))
}
