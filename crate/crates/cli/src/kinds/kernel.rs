//! Heat kernel, Green function and the free-space anchor.

use std::f64::consts::PI;

use fracheat::kernel::{free_space_kernel, green_function, heat_kernel};
use serde_json::json;

use super::{positive, positive_times, Context};
use crate::artifacts::{Check, Stage};
use crate::failure::{Failure, Outcome};
use crate::manifest::KernelParams;

pub fn validate(ctx: &Context, p: &KernelParams) -> Outcome<()> {
    positive_times(&p.times, "params.times")?;
    positive_times(&p.semigroup, "params.semigroup")?;
    if let Some(fs) = &p.free_space {
        if ctx.dim() != 1 || ctx.s() != 0.5 {
            return Err(Failure::manifest("params.free_space: the closed-form anchor needs dim = 1 and s = 0.5"));
        }
        positive(fs.half_width, "params.free_space.half_width")?;
        positive(fs.tolerance, "params.free_space.tolerance")?;
        positive_times(&fs.times, "params.free_space.times")?;
        if fs.points < 2 {
            return Err(Failure::manifest("params.free_space.points: need at least 2"));
        }
    }
    Ok(())
}

pub fn execute(ctx: &Context, p: &KernelParams, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    let dec = ctx.spectrum()?;
    let mut checks = Vec::new();
    stage.table("_eigenvalues.csv", &["k", "lambda"], &dec.values().iter().enumerate().map(|(k, &l)| vec![k as f64, l]).collect::<Vec<_>>())?;

    let mut times = p.times.clone();
    times.sort_by(f64::total_cmp);
    let mut symmetry = 0.0f64;
    let mut mass_rows = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let (mut max_mass, mut increasing) = (0.0f64, 0usize);
    for (i, &t) in times.iter().enumerate() {
        let k = heat_kernel(&dec, t)?;
        symmetry = symmetry.max((k.values() - k.values().transpose()).amax());
        let mass: Vec<f64> = (0..k.values().ncols()).map(|j| k.column_mass(j)).collect();
        max_mass = max_mass.max(mass.iter().cloned().fold(0.0, f64::max));
        if let Some(prev) = &prev {
            increasing += mass.iter().zip(prev).filter(|(m, p)| **m > **p * (1.0 + 1e-12) + 1e-14).count();
        }
        for (j, &m) in mass.iter().enumerate() {
            mass_rows.push(vec![t, j as f64, m]);
        }
        if p.write_kernels {
            stage.write(&format!("_kernel_{i:02}.csv"), k.to_csv())?;
        }
        prev = Some(mass);
    }
    stage.table("_mass.csv", &["t", "column", "mass"], &mass_rows)?;
    checks.push(Check::new("kernel-symmetry", symmetry == 0.0, format!("max |P - Pᵀ| = {symmetry:e}")));
    let mass_ok = max_mass <= 1.0 + 1e-8 && increasing == 0;
    checks.push(Check::new("kernel-mass", mass_ok, format!("max column mass {max_mass:.12}, {increasing} increases in t")));

    let [t1, t2] = p.semigroup;
    let (a, b, ab) = (heat_kernel(&dec, t1)?, heat_kernel(&dec, t2)?, heat_kernel(&dec, t1 + t2)?);
    let prod = a.values() * b.values() * ctx.grid.cell_measure();
    let gap = (&prod - ab.values()).amax();
    let scale = ab.values().amax();
    let semigroup = gap / scale;
    checks.push(Check::new("kernel-semigroup", semigroup <= 1e-8, format!("relative gap {semigroup:e} at t = {t1}, τ = {t2}")));

    let mut result = json!({
        "lambda1": dec.lambda1(),
        "eigen_residual": dec.max_residual(),
        "orthonormality_defect": dec.orthonormality_defect(),
        "symmetry_defect": symmetry,
        "max_column_mass": max_mass,
        "semigroup_gap": semigroup,
    });

    if p.green {
        let g = green_function(&dec);
        let n = g.values().nrows();
        let rows: Vec<Vec<f64>> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| vec![i as f64, j as f64, g.values()[(i, j)]]).collect();
        stage.table("_green.csv", &["i", "j", "G"], &rows)?;
        let gmin = g.values().min();
        checks.push(Check::new("green-positivity", gmin >= 0.0, format!("min G = {gmin:e}")));
        result["green_min"] = json!(gmin);
    }

    if let Some(fs) = &p.free_space {
        let mut rows = Vec::new();
        let (mut worst, mut converged) = (0.0f64, true);
        for &t in &fs.times {
            for i in 0..fs.points {
                let x = -fs.half_width + 2.0 * fs.half_width * i as f64 / (fs.points - 1) as f64;
                let v = free_space_kernel(&[x], t, 0.5)?;
                let exact = t / (PI * (t * t + x * x));
                worst = worst.max((v.value - exact).abs());
                converged &= v.converged;
                rows.push(vec![t, x, v.value, exact]);
            }
        }
        stage.table("_free_space.csv", &["t", "x", "computed", "exact"], &rows)?;
        let pass = worst <= fs.tolerance && converged;
        checks.push(Check::new("free-space-anchor", pass, format!("max error {worst:e} (tolerance {:e}), converged {converged}", fs.tolerance)));
        result["free_space_error"] = json!(worst);
    }
    Ok((checks, result))
}
