//! Empirical constants for the pointwise kernel envelopes.

use fracheat::bounds::{
    certify_comparability, certify_green_gradient, certify_kernel_gradient, free_space_domination, CertificationReport, EnvelopeSpec,
    GreenEnvelope,
};
use fracheat::SpectralDecomposition;
use serde_json::json;

use super::{positive, positive_times, Context};
use crate::artifacts::{Check, Stage};
use crate::failure::{AtField, Failure, Outcome};
use crate::manifest::{CertifyParams, Target};

pub fn validate(ctx: &Context, p: &CertifyParams) -> Outcome<()> {
    let e = ctx.exps();
    let d = ctx.grid.domain().log_scale();
    match p.target {
        Target::KernelGradient => {
            EnvelopeSpec::new(ctx.dim(), e.s, e.rho, d).at("exponents.rho")?;
        }
        Target::GreenGradient => {
            GreenEnvelope::new(ctx.dim(), e.s, e.rho, d).at("exponents.rho")?;
        }
        Target::Comparability | Target::Domination => {}
    }
    if p.target != Target::GreenGradient {
        positive_times(&p.times, "params.times")?;
    }
    positive(p.exclusion, "params.exclusion")?;
    positive(p.domination_tolerance, "params.domination_tolerance")?;
    if !(p.stability[0] < p.stability[1]) {
        return Err(Failure::manifest("params.stability: need lower < upper"));
    }
    if let Some(n) = p.coarse_nodes {
        if n >= ctx.grid.n() {
            return Err(Failure::manifest(format!("params.coarse_nodes: {n} must be below grid.nodes_per_axis = {}", ctx.grid.n())));
        }
        ctx.manifest.grid_with(n, "params.coarse_nodes")?;
    }
    Ok(())
}

fn certify(dec: &SpectralDecomposition, p: &CertifyParams, rho: f64) -> fracheat::Result<CertificationReport> {
    match p.target {
        Target::KernelGradient => certify_kernel_gradient(dec, rho, &p.times, p.exclusion),
        Target::GreenGradient => certify_green_gradient(dec, rho, p.exclusion),
        Target::Comparability => certify_comparability(dec, &p.times, p.exclusion),
        Target::Domination => unreachable!(),
    }
}

pub fn execute(ctx: &Context, p: &CertifyParams, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    let dec = ctx.spectrum()?;
    if p.target == Target::Domination {
        let rep = free_space_domination(&dec, &p.times, p.exclusion)?;
        let pass = rep.max_excess <= p.domination_tolerance && rep.free_space_converged;
        let detail = format!("max relative excess {:e} (tolerance {:e}) over {} pairs", rep.max_excess, p.domination_tolerance, rep.samples);
        stage.json("_certificate.json", &rep)?;
        return Ok((vec![Check::new("free-space-domination", pass, detail)], serde_json::to_value(&rep)?));
    }
    let rho = ctx.exps().rho;
    let mut rep = certify(&dec, p, rho)?;
    let mut rows = vec![vec![ctx.grid.n() as f64, rep.c_star, rep.c_min.unwrap_or(f64::NAN)]];
    if let Some(n) = p.coarse_nodes {
        let coarse_grid = ctx.manifest.grid_with(n, "params.coarse_nodes")?;
        let coarse = certify(&*ctx.spectrum_on(&coarse_grid)?, p, rho)?;
        rows.insert(0, vec![n as f64, coarse.c_star, coarse.c_min.unwrap_or(f64::NAN)]);
        rep = rep.with_coarse(&coarse);
    }
    stage.table("_constants.csv", &["nodes_per_axis", "c_star", "c_min"], &rows)?;
    stage.json("_certificate.json", &rep)?;
    let [lo, hi] = p.stability;
    let finite = rep.c_star.is_finite() && rep.c_star > 0.0 && rep.c_min.map_or(true, |c| c > 0.0);
    let (pass, detail) = match rep.stability_ratio {
        Some(r) => (finite && rep.is_stable(lo, hi), format!("C* = {:.6e}, refinement ratio {r:.4} (band [{lo}, {hi}])", rep.c_star)),
        None => (finite, format!("C* = {:.6e} on a single grid", rep.c_star)),
    };
    let result = json!({ "certificate": rep });
    Ok((vec![Check::new(rep.tag.clone(), pass, detail)], result))
}
