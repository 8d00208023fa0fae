//! Manifest execution: parse, validate, compute, stage, commit.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::artifacts::{Check, Stage};
use crate::cache::Cache;
use crate::failure::{Failure, Outcome};
use crate::kinds::{self, Context};
use crate::manifest::{parse, CachePolicy, Kind, Manifest, Params};
use crate::report;

#[derive(Debug, Clone)]
pub struct Options {
    /// Overrides the manifest's output directory.
    pub out: Option<PathBuf>,
    /// Overrides the manifest's cache policy.
    pub cache: Option<CachePolicy>,
    pub cache_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

pub fn run_path(path: &Path, opts: &Options) -> Outcome<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::manifest(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let stem: String = stem.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    let manifest = parse(&text, &path.display().to_string(), &stem)?;
    run_manifest(&manifest, opts)
}

pub fn output_dir(manifest: &Manifest, opts: &Options) -> PathBuf {
    opts.out.clone().or_else(|| manifest.output.clone()).unwrap_or_else(|| Path::new("runs").join(&manifest.name))
}

pub fn run_manifest(manifest: &Manifest, opts: &Options) -> Outcome<RunSummary> {
    if let Params::Report(p) = &manifest.params {
        let rep = report::collect(&p.dir).map_err(|e| Failure::manifest(format!("params.dir: {e:#}")))?;
        let out = opts.out.clone().or_else(|| manifest.output.clone()).unwrap_or_else(|| p.dir.clone());
        report::write(&out, &rep).map_err(Failure::Runtime)?;
        let checks = rep.entries.into_iter().map(|e| e.check).collect();
        let files = vec![out.join(report::REPORT_CSV), out.join(report::REPORT_JSON)];
        return Ok(RunSummary { out, files, checks });
    }
    let grid = manifest.build_grid()?;
    let exps = match (manifest.kind, manifest.exponents.s) {
        (Kind::Assemble, None) => None,
        _ => Some(manifest.exponents.resolve(grid.dim(), manifest.kind)?),
    };
    let cache = Cache::new(&opts.cache_dir, opts.cache.unwrap_or(manifest.cache));
    let ctx = Context::new(manifest, grid.clone(), exps, &cache);
    kinds::validate(&ctx)?;

    let out = output_dir(manifest, opts);
    let stage = Stage::new(&out, &manifest.name)?;
    let (checks, result) = kinds::execute(&ctx, &stage)?;
    let sidecar = json!({
        "kind": manifest.kind.as_str(),
        "name": manifest.name,
        "grid": grid.spec(),
        "exponents": exps,
        "scheme": manifest.scheme,
        "checks": checks,
        "result": result,
    });
    stage.json(".json", &sidecar)?;
    let files = stage.commit()?;
    Ok(RunSummary { out, files, checks })
}
