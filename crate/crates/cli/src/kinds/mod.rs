//! Per-kind validation and execution.
//!
//! Every kind exposes `validate`, which must not compute anything beyond
//! grids, and `execute`, which writes into a [`Stage`] and returns checks.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use fracheat::regfit::spike_pulse;
use fracheat::solver::Source;
use fracheat::{ExponentSet, Grid, GridField, Ladder, OperatorMatrix, SpectralDecomposition};

use crate::artifacts::{Check, Stage};
use crate::cache::{Cache, Status};
use crate::failure::{Failure, Outcome};
use crate::manifest::{FieldSpec, Manifest, Params, SourceBlock};

mod assemble;
mod certify;
mod hypersing;
mod kernel;
mod kpz;
mod regfit;
mod solve;

pub struct Context<'a> {
    pub manifest: &'a Manifest,
    pub grid: Arc<Grid>,
    exps: Option<ExponentSet>,
    cache: &'a Cache,
    operators: RefCell<HashMap<String, Arc<OperatorMatrix>>>,
    spectra: RefCell<HashMap<String, Arc<SpectralDecomposition>>>,
}

impl<'a> Context<'a> {
    pub fn new(manifest: &'a Manifest, grid: Arc<Grid>, exps: Option<ExponentSet>, cache: &'a Cache) -> Self {
        Self { manifest, grid, exps, cache, operators: RefCell::default(), spectra: RefCell::default() }
    }

    /// Exponents; only `assemble` runs without them.
    pub fn exps(&self) -> &ExponentSet {
        self.exps.as_ref().expect("exponents resolved for this kind")
    }

    pub fn exps_opt(&self) -> Option<&ExponentSet> {
        self.exps.as_ref()
    }

    pub fn s(&self) -> f64 {
        self.exps().s
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn operator_on(&self, grid: &Arc<Grid>, order: f64) -> Outcome<Arc<OperatorMatrix>> {
        let scheme = &self.manifest.scheme;
        let key = OperatorMatrix::cache_key_for(grid, order, scheme);
        if let Some(a) = self.operators.borrow().get(&key) {
            return Ok(a.clone());
        }
        let (a, status) = self.cache.operator(grid, order, scheme).map_err(Failure::Runtime)?;
        note(status, "operator", &key);
        let a = Arc::new(a);
        self.operators.borrow_mut().insert(key, a.clone());
        Ok(a)
    }

    /// Decomposition of the order-`2s` operator on `grid`.
    pub fn spectrum_on(&self, grid: &Arc<Grid>) -> Outcome<Arc<SpectralDecomposition>> {
        let a = self.operator_on(grid, 2.0 * self.s())?;
        let key = a.cache_key();
        if let Some(d) = self.spectra.borrow().get(&key) {
            return Ok(d.clone());
        }
        let (dec, status) = self.cache.spectrum(&a).map_err(Failure::Runtime)?;
        note(status, "spectrum", &key);
        let dec = Arc::new(dec);
        self.spectra.borrow_mut().insert(key, dec.clone());
        Ok(dec)
    }

    pub fn spectrum(&self) -> Outcome<Arc<SpectralDecomposition>> {
        self.spectrum_on(&self.grid)
    }

    pub fn field(&self, spec: &FieldSpec) -> Outcome<GridField> {
        self.field_on(spec, &self.grid)
    }

    pub fn field_on(&self, spec: &FieldSpec, grid: &Arc<Grid>) -> Outcome<GridField> {
        Ok(match spec {
            FieldSpec::Zero => GridField::zeros(grid),
            FieldSpec::Constant { value } => GridField::dirichlet_from_fn(grid, |_| *value),
            FieldSpec::Spike { at, mass } => GridField::spike(grid, at, *mass),
            FieldSpec::Eigenfunction { index, scale } => self.spectrum_on(grid)?.eigenfunction(*index).scaled(*scale),
            FieldSpec::Indicator { lower, upper, value } => GridField::dirichlet_from_fn(grid, |x| {
                let inside = x.iter().zip(lower).zip(upper).all(|((v, lo), hi)| v >= lo && v <= hi);
                if inside {
                    *value
                } else {
                    0.0
                }
            }),
        })
    }

    pub fn source(&self, spec: &SourceBlock, ladder: &Ladder) -> Outcome<Source> {
        Ok(match spec {
            SourceBlock::Zero => Source::Zero,
            SourceBlock::Steady { field } => Source::Steady(self.field(field)?.interior_values()),
            SourceBlock::Pulse { at } => spike_pulse(&self.grid, at, ladder).h,
        })
    }
}

fn note(status: Status, what: &str, key: &str) {
    let verb = match status {
        Status::Hit => "reused",
        Status::Built => "built",
    };
    eprintln!("{verb} {what} {}", &key[..12.min(key.len())]);
}

/// Field-spec checks that need only the grid.
pub fn validate_field(spec: &FieldSpec, grid: &Grid, field: &str) -> Outcome<()> {
    let point = |p: &[f64], what: &str| -> Outcome<()> {
        if p.len() != grid.dim() {
            return Err(Failure::manifest(format!("{field}.{what}: expected {} coordinates, found {}", grid.dim(), p.len())));
        }
        if !grid.domain().contains(p) {
            return Err(Failure::manifest(format!("{field}.{what}: {p:?} lies outside the domain")));
        }
        Ok(())
    };
    match spec {
        FieldSpec::Zero => Ok(()),
        FieldSpec::Constant { value } => finite(*value, &format!("{field}.value")),
        FieldSpec::Spike { at, mass } => {
            point(at, "at")?;
            finite(*mass, &format!("{field}.mass"))
        }
        FieldSpec::Eigenfunction { index, scale } => {
            if *index >= grid.interior_len() {
                return Err(Failure::manifest(format!("{field}.index: {index} exceeds the {} interior nodes", grid.interior_len())));
            }
            finite(*scale, &format!("{field}.scale"))
        }
        FieldSpec::Indicator { lower, upper, value } => {
            if lower.len() != grid.dim() || upper.len() != grid.dim() || lower.iter().zip(upper).any(|(a, b)| !(a < b)) {
                return Err(Failure::manifest(format!("{field}: need lower < upper with {} coordinates each", grid.dim())));
            }
            finite(*value, &format!("{field}.value"))
        }
    }
}

pub fn validate_source(spec: &SourceBlock, grid: &Grid, field: &str) -> Outcome<()> {
    match spec {
        SourceBlock::Zero => Ok(()),
        SourceBlock::Steady { field: f } => validate_field(f, grid, &format!("{field}.field")),
        SourceBlock::Pulse { at } => validate_field(&FieldSpec::Spike { at: at.clone(), mass: 1.0 }, grid, field),
    }
}

pub fn finite(v: f64, field: &str) -> Outcome<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Failure::manifest(format!("{field}: must be finite")))
    }
}

pub fn positive(v: f64, field: &str) -> Outcome<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::manifest(format!("{field}: must be positive, found {v}")))
    }
}

pub fn positive_times(ts: &[f64], field: &str) -> Outcome<()> {
    if ts.is_empty() {
        return Err(Failure::manifest(format!("{field}: must not be empty")));
    }
    for (i, &t) in ts.iter().enumerate() {
        positive(t, &format!("{field}[{i}]"))?;
    }
    Ok(())
}

/// `k` points from `lo` to `hi`, evenly spaced in log.
pub fn geometric(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

pub fn validate(ctx: &Context) -> Outcome<()> {
    match &ctx.manifest.params {
        Params::Assemble(p) => assemble::validate(ctx, p),
        Params::Kernel(p) => kernel::validate(ctx, p),
        Params::Certify(p) => certify::validate(ctx, p),
        Params::Solve(p) => solve::validate(ctx, p),
        Params::Hypersing(p) => hypersing::validate(ctx, p),
        Params::Regfit(p) => regfit::validate(ctx, p),
        Params::Kpz(p) => kpz::validate(ctx, p),
        Params::Report(_) => Ok(()),
    }
}

/// Runs the kind and returns its checks together with the sidecar payload.
pub fn execute(ctx: &Context, stage: &Stage) -> Outcome<(Vec<Check>, serde_json::Value)> {
    match &ctx.manifest.params {
        Params::Assemble(p) => assemble::execute(ctx, p, stage),
        Params::Kernel(p) => kernel::execute(ctx, p, stage),
        Params::Certify(p) => certify::execute(ctx, p, stage),
        Params::Solve(p) => solve::execute(ctx, p, stage),
        Params::Hypersing(p) => hypersing::execute(ctx, p, stage),
        Params::Regfit(p) => regfit::execute(ctx, p, stage),
        Params::Kpz(p) => kpz::execute(ctx, p, stage),
        Params::Report(_) => unreachable!("report manifests are handled by the driver"),
    }
}
