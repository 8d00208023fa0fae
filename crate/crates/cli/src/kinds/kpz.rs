//! Picard iteration for the fractional KPZ problem and phase scans.

use fracheat::kpz::{phase_scan, picard_solve, q_threshold, u0_case_solve, KpzConfig, ThresholdCase, Verdict};
use fracheat::{GridField, Ladder, SourceSpec};
use serde_json::json;

use super::{positive_times, validate_field, validate_source, Context};
use crate::artifacts::{Check, Stage};
use crate::failure::{AtField, Failure, Outcome};
use crate::manifest::{Expect, KpzMode, KpzParams, SourceBlock};

fn configure(ctx: &Context, p: &KpzParams, data: SourceSpec, ladder: Ladder) -> KpzConfig {
    let mut cfg = KpzConfig::new(p.q.unwrap_or(ctx.exps().q), data, ladder);
    if let Some(v) = p.max_iterations {
        cfg.max_iterations = v;
    }
    if let Some(v) = p.tol {
        cfg.tol = v;
    }
    if let Some(v) = p.budget {
        cfg.budget = v;
    }
    if let Some(v) = p.r {
        cfg.r = v;
    }
    cfg.linear_only = p.linear_only;
    cfg
}

pub fn validate(ctx: &Context, p: &KpzParams) -> Outcome<()> {
    let ladder = p.ladder.build().at("params.ladder")?;
    validate_field(&p.initial, &ctx.grid, "params.initial")?;
    validate_source(&p.source, &ctx.grid, "params.source")?;
    let cfg = configure(ctx, p, SourceSpec::initial(GridField::zeros(&ctx.grid)), ladder);
    cfg.validate().at("params")?;
    if !(p.max_contraction > 0.0 && p.max_contraction < 1.0) {
        return Err(Failure::manifest("params.max_contraction: must lie in (0, 1)"));
    }
    let s = ctx.s();
    match p.mode {
        KpzMode::Picard => {}
        KpzMode::InitialDatum => {
            if p.source != SourceBlock::Zero {
                return Err(Failure::manifest("params.source: the initial-datum case needs a zero source"));
            }
            q_threshold(ThresholdCase::InitialDatum { sigma: ctx.exps().sigma }, s, ctx.dim()).at("exponents")?;
        }
        KpzMode::Scan => {
            let scan = p.scan.as_ref().ok_or_else(|| Failure::manifest("params.scan: required in scan mode"))?;
            if !(s > 0.26 && s < 1.0) {
                return Err(Failure::Refused(format!("phase scans are restricted to s ∈ (0.26, 1), got s = {s}")));
            }
            if scan.qs.is_empty() || scan.amplitudes.is_empty() {
                return Err(Failure::manifest("params.scan: axes must be non-empty"));
            }
            for (i, q) in scan.qs.iter().enumerate() {
                if !(*q >= 1.0 && q.is_finite()) {
                    return Err(Failure::manifest(format!("params.scan.qs[{i}]: must be finite and ≥ 1")));
                }
            }
            for (i, a) in scan.amplitudes.iter().enumerate() {
                if !(*a >= 0.0 && a.is_finite()) {
                    return Err(Failure::manifest(format!("params.scan.amplitudes[{i}]: must be finite and ≥ 0")));
                }
            }
            positive_times(&scan.horizons, "params.scan.horizons")?;
            if matches!(p.source, SourceBlock::Pulse { .. }) {
                return Err(Failure::manifest("params.source: a pulse cannot be stretched across horizons"));
            }
        }
    }
    Ok(())
}

fn data(ctx: &Context, p: &KpzParams, ladder: &Ladder) -> Outcome<SourceSpec> {
    let e = ctx.exps();
    let h = ctx.source(&p.source, ladder)?;
    Ok(SourceSpec::new(h, ctx.field(&p.initial)?).with_labels(Some(e.m), Some(e.sigma)))
}

pub fn execute(ctx: &Context, p: &KpzParams, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    let ladder = p.ladder.build()?;
    let cfg = configure(ctx, p, data(ctx, p, &ladder)?, ladder);
    let dec = ctx.spectrum()?;
    let (s, dim) = (ctx.s(), ctx.dim());
    let e = ctx.exps();
    let name = &ctx.manifest.name;

    if p.mode == KpzMode::Scan {
        let scan = p.scan.as_ref().expect("validated");
        let rep = phase_scan(&dec, &cfg, &scan.qs, &scan.amplitudes, &scan.horizons)?;
        stage.write("_scan.csv", rep.to_csv())?;
        let zero_ok = rep.cells.iter().filter(|c| c.amplitude == 0.0).all(|c| c.verdict == Verdict::Converged);
        let pass = rep.monotone_in_amplitude && zero_ok;
        let converged = rep.cells.iter().filter(|c| c.verdict == Verdict::Converged).count();
        let detail = format!(
            "{converged} of {} cells converged, monotone in amplitude {}, zero-amplitude cells converged {zero_ok}",
            rep.cells.len(),
            rep.monotone_in_amplitude
        );
        return Ok((vec![Check::new("kpz-phase-scan", pass, detail)], serde_json::to_value(&rep)?));
    }

    let (tag, case) = match p.mode {
        KpzMode::InitialDatum => ("kpz-initial-datum", ThresholdCase::InitialDatum { sigma: e.sigma }),
        _ => ("kpz-fixed-point", ThresholdCase::Source { m: e.m }),
    };
    let (u, trace) = match p.mode {
        KpzMode::InitialDatum => u0_case_solve(&cfg, &dec)?,
        _ => picard_solve(&cfg, &dec)?,
    };
    u.export(stage.dir(), &format!("{name}_u"))?;
    let rows: Vec<Vec<f64>> = trace
        .differences
        .iter()
        .enumerate()
        .map(|(j, d)| vec![j as f64, trace.gradient_norms.get(j).copied().unwrap_or(f64::NAN), *d])
        .collect();
    stage.table("_trace.csv", &["iteration", "gradient_norm", "difference"], &rows)?;
    let threshold = q_threshold(case, s, dim).ok();
    let converged = trace.verdict == Verdict::Converged;
    let (pass, detail) = match p.expect {
        Expect::Converged => {
            // A single step means the data are already a fixed point; there is no rate to measure.
            let contraction_ok = trace.contraction.map_or(trace.iterations() <= 1, |c| c < p.max_contraction);
            let residual_ok = trace.residual.is_some_and(|r| r <= 2.0 * cfg.tol);
            let detail = format!(
                "{} after {} iterations, contraction {:?} (max {}), residual {:?}",
                trace.verdict.description(),
                trace.iterations(),
                trace.contraction,
                p.max_contraction,
                trace.residual
            );
            (converged && contraction_ok && residual_ok, detail)
        }
        Expect::NotConverged => {
            (!converged, format!("{} after {} iterations (expected no convergence)", trace.verdict.description(), trace.iterations()))
        }
    };
    let result = json!({
        "q": cfg.q,
        "q_threshold": threshold,
        "verdict": trace.verdict,
        "description": trace.verdict.description(),
        "trace": trace,
    });
    Ok((vec![Check::new(tag, pass, detail)], result))
}
