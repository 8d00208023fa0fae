//! Linear heat-equation solves with optional cross-validation.

use fracheat::solver::{fractional_gradient_field, slice_norm, solve_duhamel, solve_implicit_euler, weighted_trace};
use fracheat::{Ladder, SourceSpec, Trajectory};
use serde_json::json;

use super::{positive, validate_field, validate_source, Context};
use crate::artifacts::{Check, Stage};
use crate::failure::{AtField, Failure, Outcome};
use crate::manifest::{Method, SolveParams};

pub fn validate(ctx: &Context, p: &SolveParams) -> Outcome<()> {
    let ladder = p.ladder.build().at("params.ladder")?;
    validate_field(&p.initial, &ctx.grid, "params.initial")?;
    validate_source(&p.source, &ctx.grid, "params.source")?;
    if matches!(p.source, crate::manifest::SourceBlock::Pulse { .. }) && ladder.len() < 2 {
        return Err(Failure::manifest("params.ladder: a pulse needs at least one interval"));
    }
    if let Some(rho) = p.gradient {
        if !(rho > 0.0 && rho < 2.0) {
            return Err(Failure::manifest(format!("params.gradient: order {rho} outside (0, 2)")));
        }
    }
    for (i, q) in p.norms.iter().enumerate() {
        if !(q.0 >= 1.0) {
            return Err(Failure::manifest(format!("params.norms[{i}]: {} must be ≥ 1", q.0)));
        }
    }
    if let Some(cv) = &p.cross_validate {
        positive(cv.horizon, "params.cross_validate.horizon")?;
        positive(cv.tolerance, "params.cross_validate.tolerance")?;
        if cv.steps == 0 {
            return Err(Failure::manifest("params.cross_validate.steps: must be positive"));
        }
    }
    Ok(())
}

fn run(ctx: &Context, p: &SolveParams, ladder: &Ladder, method: Method) -> Outcome<Trajectory> {
    let w0 = ctx.field(&p.initial)?;
    let src = SourceSpec::new(ctx.source(&p.source, ladder)?, w0);
    Ok(match method {
        Method::Duhamel => solve_duhamel(&*ctx.spectrum()?, &src, ladder)?,
        Method::ImplicitEuler => solve_implicit_euler(&*ctx.operator_on(&ctx.grid, 2.0 * ctx.s())?, &src, ladder)?,
    })
}

pub fn execute(ctx: &Context, p: &SolveParams, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    let ladder = p.ladder.build()?;
    let traj = run(ctx, p, &ladder, p.method)?;
    let name = &ctx.manifest.name;
    traj.export(stage.dir(), &format!("{name}_w"))?;
    if p.trace {
        weighted_trace(&traj, ctx.s())?.export(stage.dir(), &format!("{name}_trace"))?;
    }
    if let Some(rho) = p.gradient {
        fractional_gradient_field(&traj, rho, &ctx.manifest.scheme)?.export(stage.dir(), &format!("{name}_grad"))?;
    }
    let mut header = vec!["t".to_string()];
    header.extend(p.norms.iter().map(|q| format!("L{}", q.0)));
    let rows: Vec<Vec<f64>> = ladder
        .times()
        .iter()
        .zip(traj.fields())
        .map(|(&t, f)| std::iter::once(t).chain(p.norms.iter().map(|q| slice_norm(f, q.0))).collect())
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    stage.table("_norms.csv", &header, &rows)?;

    let mut checks = Vec::new();
    let mut result = json!({ "steps": ladder.len() - 1, "horizon": ladder.horizon(), "max_abs": traj.max_abs() });
    if let Some(cv) = &p.cross_validate {
        let mut errors = Vec::new();
        for steps in [cv.steps, 2 * cv.steps] {
            let l = Ladder::uniform(cv.horizon, steps)?;
            let exact = run(ctx, p, &l, Method::Duhamel)?;
            let euler = run(ctx, p, &l, Method::ImplicitEuler)?;
            errors.push(euler.max_gap(&exact));
        }
        let ratio = errors[0] / errors[1];
        let pass = (ratio - 2.0).abs() <= cv.tolerance;
        checks.push(Check::new(
            "solver-cross-validation",
            pass,
            format!("error ratio {ratio:.4} between {} and {} steps (target 2 ± {})", cv.steps, 2 * cv.steps, cv.tolerance),
        ));
        result["cross_validation"] = json!({ "errors": errors, "ratio": ratio });
    }
    Ok((checks, result))
}
