//! Operator assembly with row-sum and symmetry diagnostics.

use serde_json::json;

use super::Context;
use crate::artifacts::{Check, Stage};
use crate::failure::{Failure, Outcome};
use crate::manifest::AssembleParams;

fn order(ctx: &Context, p: &AssembleParams) -> Outcome<f64> {
    let order = match (p.order, ctx.exps_opt()) {
        (Some(o), _) => o,
        (None, Some(e)) => 2.0 * e.s,
        (None, None) => return Err(Failure::manifest("params.order: required when exponents.s is absent")),
    };
    if !(order > 0.0 && order < 2.0) {
        return Err(Failure::manifest(format!("params.order: {order} outside (0, 2)")));
    }
    Ok(order)
}

pub fn validate(ctx: &Context, p: &AssembleParams) -> Outcome<()> {
    order(ctx, p).map(|_| ())
}

fn range(v: &[f64]) -> [f64; 2] {
    v.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], &x| [lo.min(x), hi.max(x)])
}

pub fn execute(ctx: &Context, p: &AssembleParams, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    let order = order(ctx, p)?;
    let a = ctx.operator_on(&ctx.grid, order)?;
    let sums = a.row_sums();
    let tail = a.tail();
    let rows: Vec<Vec<f64>> = ctx
        .grid
        .interior_indices()
        .iter()
        .zip(sums.iter().zip(tail))
        .map(|(&i, (&sum, &t))| {
            let mut row = ctx.grid.point(i).to_vec();
            row.extend([sum, t]);
            row
        })
        .collect();
    let header: &[&str] = if ctx.dim() == 1 { &["x", "row_sum", "tail"] } else { &["x", "y", "row_sum", "tail"] };
    stage.table("_rowsums.csv", header, &rows)?;
    let defect = a.symmetry_defect();
    let [sum_lo, sum_hi] = range(&sums);
    let [tail_lo, tail_hi] = range(tail);
    // Row sums of a Dirichlet operator are the exterior tails plus a positive remainder.
    let positive = sums.iter().all(|&v| v > 0.0);
    let checks = vec![
        Check::new("operator-symmetry", defect == 0.0, format!("max |A - Aᵀ| = {defect:e}")),
        Check::new("operator-row-sums", positive, format!("row sums in [{sum_lo:e}, {sum_hi:e}]")),
    ];
    let result = json!({
        "cache_key": a.cache_key(),
        "order": order,
        "size": a.size(),
        "symmetry_defect": defect,
        "row_sum_range": [sum_lo, sum_hi],
        "tail_range": [tail_lo, tail_hi],
    });
    Ok((checks, result))
}
