//! Experiment manifests.
//!
//! A manifest is a JSON object:
//!
//! ```json
//! {
//!   "kind": "certify",
//!   "name": "kernel-gradient-low",
//!   "domain": { "dim": 1, "lower": [-1], "upper": [1], "padding": 0.25 },
//!   "grid": { "nodes_per_axis": 192 },
//!   "exponents": { "s": 0.5, "rho": 0.6 },
//!   "params": { "target": "kernel-gradient", "coarse_nodes": 128 },
//!   "output": "runs/default",
//!   "cache": "use"
//! }
//! ```
//!
//! Everything except `kind` has a default. `params` is specific to the kind;
//! unknown fields are rejected everywhere. Integrability indices accept the
//! string `"inf"`.

use std::path::PathBuf;

use fracheat::{ExponentSet, Grid, QuadratureScheme, SpatialDomain};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::value::RawValue;

use crate::failure::{AtField, Failure, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Assemble,
    Kernel,
    Certify,
    Solve,
    Hypersing,
    Regfit,
    Kpz,
    Report,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Assemble => "assemble",
            Kind::Kernel => "kernel",
            Kind::Certify => "certify",
            Kind::Solve => "solve",
            Kind::Hypersing => "hypersing",
            Kind::Regfit => "regfit",
            Kind::Kpz => "kpz",
            Kind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CachePolicy {
    /// Reuse a cache file when present, build and store it otherwise.
    #[default]
    Use,
    /// Always rebuild and overwrite.
    Rebuild,
}

/// A Lebesgue index; `"inf"` stands for +∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Index(pub f64);

impl<'de> Deserialize<'de> for Index {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Index(v)),
            Repr::Word(w) if w == "inf" => Ok(Index(f64::INFINITY)),
            Repr::Word(w) => Err(D::Error::custom(format!("expected a number or \"inf\", found \"{w}\""))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    #[serde(default = "one")]
    pub dim: usize,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    #[serde(default = "quarter")]
    pub padding: f64,
}

impl Default for DomainBlock {
    fn default() -> Self {
        Self { dim: 1, lower: None, upper: None, padding: 0.25 }
    }
}

impl DomainBlock {
    pub fn build(&self) -> Outcome<SpatialDomain> {
        let lower = self.lower.clone().unwrap_or_else(|| vec![-1.0; self.dim]);
        let upper = self.upper.clone().unwrap_or_else(|| vec![1.0; self.dim]);
        SpatialDomain::new(self.dim, lower, upper, self.padding).at("domain")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "default_nodes")]
    pub nodes_per_axis: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { nodes_per_axis: default_nodes() }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentBlock {
    pub s: Option<f64>,
    pub rho: Option<f64>,
    pub p: Option<Index>,
    pub q: Option<f64>,
    pub m: Option<Index>,
    pub sigma: Option<Index>,
    pub r: Option<Index>,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub k: Option<f64>,
}

impl ExponentBlock {
    /// Defaults from [`ExponentSet::new`] overridden by the given entries.
    pub fn resolve(&self, dim: usize, kind: Kind) -> Outcome<ExponentSet> {
        let s = self.s.ok_or_else(|| Failure::manifest(format!("exponents.s: required for kind `{}`", kind.as_str())))?;
        let mut e = ExponentSet::new(dim, s);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { e.$f = v.into_f64(); } )* };
        }
        set!(rho, p, q, m, sigma, r, eta, alpha, lambda, k);
        e.validate().at("exponents")?;
        Ok(e)
    }
}

trait IntoF64 {
    fn into_f64(self) -> f64;
}

impl IntoF64 for f64 {
    fn into_f64(self) -> f64 {
        self
    }
}

impl IntoF64 for Index {
    fn into_f64(self) -> f64 {
        self.0
    }
}

/// Data on the grid, zero outside the domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// Unit-mass one-cell spike scaled by `mass`.
    Spike {
        at: Vec<f64>,
        #[serde(default = "unit")]
        mass: f64,
    },
    /// `scale · φ_k`, with `k = index` counted from 0.
    Eigenfunction {
        #[serde(default)]
        index: usize,
        #[serde(default = "unit")]
        scale: f64,
    },
    /// `value` on the box `[lower, upper]`.
    Indicator {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default = "unit")]
        value: f64,
    },
}

/// Right-hand side of the heat equation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceBlock {
    #[default]
    Zero,
    /// Time-independent source.
    Steady { field: FieldSpec },
    /// Unit-mass spike in space, hat in time on the first ladder interval.
    Pulse { at: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LadderSpec {
    Uniform { horizon: f64, steps: usize },
    /// `0` followed by `count` geometrically spaced times from `first` to `last`.
    Geometric { first: f64, last: f64, count: usize },
    Explicit { times: Vec<f64> },
}

impl LadderSpec {
    pub fn build(&self) -> fracheat::Result<fracheat::Ladder> {
        match self {
            LadderSpec::Uniform { horizon, steps } => fracheat::Ladder::uniform(*horizon, *steps),
            LadderSpec::Geometric { first, last, count } => fracheat::Ladder::geometric(*first, *last, *count),
            LadderSpec::Explicit { times } => fracheat::Ladder::new(times.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssembleParams {
    /// Kernel order ρ of `(-Δ)^{ρ/2}`; defaults to `2s`.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// `(t₁, t₂)` for the check `P(t₁)P(t₂) = P(t₁+t₂)`.
    #[serde(default = "default_semigroup")]
    pub semigroup: [f64; 2],
    /// Write the full kernel matrix at every time.
    #[serde(default)]
    pub write_kernels: bool,
    /// Write the Green matrix.
    #[serde(default)]
    pub green: bool,
    pub free_space: Option<FreeSpaceBlock>,
}

/// Free-space kernel on `|x| ≤ half_width` against the Poisson kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeSpaceBlock {
    #[serde(default = "two")]
    pub half_width: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    pub times: Vec<f64>,
    #[serde(default = "default_anchor_tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    KernelGradient,
    GreenGradient,
    Comparability,
    Domination,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    pub target: Target,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Pairs closer than `exclusion·h` are skipped.
    #[serde(default = "two")]
    pub exclusion: f64,
    /// Nodes per axis of the coarser grid for the refinement ratio.
    pub coarse_nodes: Option<usize>,
    #[serde(default = "default_band")]
    pub stability: [f64; 2],
    /// Largest admitted relative excess over the free-space kernel.
    #[serde(default = "default_domination")]
    pub domination_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Duhamel,
    ImplicitEuler,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub initial: FieldSpec,
    #[serde(default)]
    pub source: SourceBlock,
    pub ladder: LadderSpec,
    /// Also export `w/δ^s`.
    #[serde(default)]
    pub trace: bool,
    /// Also export `(-Δ)^{ρ/2} w` for this kernel order ρ.
    pub gradient: Option<f64>,
    /// Indices of the per-slice norms table.
    #[serde(default = "default_norms")]
    pub norms: Vec<Index>,
    pub cross_validate: Option<CrossValidate>,
}

/// Duhamel against implicit Euler on uniform ladders with `steps` and `2·steps`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossValidate {
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "default_ratio_tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperMode {
    #[default]
    Elliptic,
    Parabolic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypersingParams {
    #[serde(default)]
    pub mode: HyperMode,
    /// Defaults to `exponents.alpha`.
    pub alpha: Option<f64>,
    #[serde(default = "unit_density")]
    pub density: FieldSpec,
    pub time_panels: Option<usize>,
    #[serde(default)]
    pub evaluate: Vec<EvalPoint>,
    pub scaling: Option<ScalingBlock>,
    pub refinement: Option<RefinementBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub expected: Option<f64>,
    #[serde(default = "default_eval_tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBlock {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_slope_tol")]
    pub tolerance: f64,
}

/// Time-mesh refinement of `G_{α,λ}(x,t)`; runs without the standing
/// hypotheses so that divergent parameters can be demonstrated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementBlock {
    pub x: Vec<f64>,
    pub t: f64,
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    pub expect_divergent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegfitParams {
    pub checks: Vec<RegfitCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegfitCheck {
    Smoothing {
        data: DataBlock,
        r: Index,
        window: WindowBlock,
        #[serde(default = "default_smoothing_tol")]
        tolerance: f64,
    },
    Weighted {
        data: DataBlock,
        r: Index,
        window: WindowBlock,
        #[serde(default = "default_slope_tol")]
        tolerance: f64,
    },
    Gradient {
        data: DataBlock,
        rho: Option<f64>,
        p: Index,
        window: WindowBlock,
        #[serde(default = "default_gradient_tol")]
        tolerance: f64,
    },
    /// Space-time norm driven by a pulse source, refined against a coarser grid.
    Source {
        rho: Option<f64>,
        r: f64,
        at: Vec<f64>,
        horizon: f64,
        #[serde(default = "default_pulse_points")]
        points: usize,
        coarse_nodes: usize,
        #[serde(default = "default_band")]
        stability: [f64; 2],
    },
    DifferenceQuotient {
        p: f64,
        #[serde(default = "first_mode")]
        field: FieldSpec,
        coarse_nodes: Option<usize>,
        #[serde(default = "quarter")]
        stability: f64,
        regression: Option<Regression>,
    },
    Inequalities {
        s: Option<f64>,
        p: f64,
        #[serde(default = "first_mode")]
        field: FieldSpec,
        hardy_bound: Option<f64>,
        sobolev_bound: Option<f64>,
    },
    LevelSet {
        q: f64,
        r: f64,
        ladder: LadderSpec,
        at: Vec<f64>,
        #[serde(default = "unit")]
        mass: f64,
        bound: Option<f64>,
    },
}

impl RegfitCheck {
    pub fn label(&self) -> &'static str {
        match self {
            RegfitCheck::Smoothing { .. } => "smoothing",
            RegfitCheck::Weighted { .. } => "weighted",
            RegfitCheck::Gradient { .. } => "gradient",
            RegfitCheck::Source { .. } => "source",
            RegfitCheck::DifferenceQuotient { .. } => "difference-quotient",
            RegfitCheck::Inequalities { .. } => "inequalities",
            RegfitCheck::LevelSet { .. } => "level-set",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataBlock {
    WorstSpike,
    WorstL2,
    Field { field: FieldSpec, sigma: Index },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowBlock {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_count")]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regression {
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KpzMode {
    #[default]
    Picard,
    /// Split off the free evolution of `u₀` and iterate on the remainder.
    InitialDatum,
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    #[default]
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpzParams {
    #[serde(default)]
    pub mode: KpzMode,
    /// Defaults to `exponents.q`.
    pub q: Option<f64>,
    #[serde(default)]
    pub source: SourceBlock,
    #[serde(default)]
    pub initial: FieldSpec,
    pub ladder: LadderSpec,
    pub max_iterations: Option<usize>,
    pub tol: Option<f64>,
    pub budget: Option<f64>,
    pub r: Option<f64>,
    #[serde(default)]
    pub linear_only: bool,
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub expect: Expect,
    /// Largest admitted contraction factor for a converged run.
    #[serde(default = "default_contraction")]
    pub max_contraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub qs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub horizons: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub enum Params {
    Assemble(AssembleParams),
    Kernel(KernelParams),
    Certify(CertifyParams),
    Solve(SolveParams),
    Hypersing(HypersingParams),
    Regfit(RegfitParams),
    Kpz(KpzParams),
    Report(ReportParams),
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub kind: Kind,
    pub name: String,
    pub domain: DomainBlock,
    pub grid: GridBlock,
    pub exponents: ExponentBlock,
    pub scheme: QuadratureScheme,
    pub params: Params,
    pub output: Option<PathBuf>,
    pub cache: CachePolicy,
}

impl Manifest {
    pub fn build_grid(&self) -> Outcome<std::sync::Arc<Grid>> {
        let domain = self.domain.build()?;
        Grid::new(domain, self.grid.nodes_per_axis).at("grid.nodes_per_axis")
    }

    pub fn grid_with(&self, nodes_per_axis: usize, field: &str) -> Outcome<std::sync::Arc<Grid>> {
        Grid::new(self.domain.build()?, nodes_per_axis).at(field)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest<'a> {
    kind: Kind,
    name: Option<String>,
    #[serde(default)]
    domain: DomainBlock,
    #[serde(default)]
    grid: GridBlock,
    #[serde(default)]
    exponents: ExponentBlock,
    scheme: Option<QuadratureScheme>,
    #[serde(borrow)]
    params: Option<&'a RawValue>,
    output: Option<PathBuf>,
    #[serde(default)]
    cache: CachePolicy,
}

/// Parses manifest text. `origin` prefixes diagnostics; `default_name`
/// names the artifacts when the manifest has no `name`.
pub fn parse(text: &str, origin: &str, default_name: &str) -> Outcome<Manifest> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawManifest = serde_path_to_error::deserialize(&mut de).map_err(|e| diagnose(origin, text, 0, "", e))?;
    de.end().map_err(|e| Failure::manifest(format!("{origin}:{}:{}: trailing characters", e.line(), e.column())))?;
    let (body, offset) = match raw.params {
        Some(p) => (p.get(), p.get().as_ptr() as usize - text.as_ptr() as usize),
        None => ("{}", usize::MAX),
    };
    let params = match raw.kind {
        Kind::Assemble => Params::Assemble(sub(origin, text, body, offset)?),
        Kind::Kernel => Params::Kernel(sub(origin, text, body, offset)?),
        Kind::Certify => Params::Certify(sub(origin, text, body, offset)?),
        Kind::Solve => Params::Solve(sub(origin, text, body, offset)?),
        Kind::Hypersing => Params::Hypersing(sub(origin, text, body, offset)?),
        Kind::Regfit => Params::Regfit(sub(origin, text, body, offset)?),
        Kind::Kpz => Params::Kpz(sub(origin, text, body, offset)?),
        Kind::Report => Params::Report(sub(origin, text, body, offset)?),
    };
    let name = raw.name.unwrap_or_else(|| default_name.to_string());
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(Failure::manifest(format!("{origin}: name: `{name}` must be non-empty and use only [A-Za-z0-9_-]")));
    }
    let scheme = raw.scheme.unwrap_or_default();
    scheme.validate().at("scheme")?;
    Ok(Manifest {
        kind: raw.kind,
        name,
        domain: raw.domain,
        grid: raw.grid,
        exponents: raw.exponents,
        scheme,
        params,
        output: raw.output,
        cache: raw.cache,
    })
}

fn sub<T: serde::de::DeserializeOwned>(origin: &str, text: &str, body: &str, offset: usize) -> Outcome<T> {
    let mut de = serde_json::Deserializer::from_str(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        if offset == usize::MAX {
            diagnose(origin, "", 0, "params", e).without_position()
        } else {
            diagnose(origin, text, offset, "params", e).into()
        }
    })
}

struct Diagnostic {
    origin: String,
    line: usize,
    column: usize,
    field: String,
    message: String,
}

impl Diagnostic {
    fn without_position(self) -> Failure {
        Failure::manifest(format!("{}: {}: {}", self.origin, self.field, self.message))
    }
}

impl From<Diagnostic> for Failure {
    fn from(d: Diagnostic) -> Self {
        Failure::manifest(format!("{}:{}:{}: {}: {}", d.origin, d.line, d.column, d.field, d.message))
    }
}

fn diagnose(origin: &str, text: &str, offset: usize, prefix: &str, err: serde_path_to_error::Error<serde_json::Error>) -> Diagnostic {
    let path = err.path().to_string();
    let field = match (prefix.is_empty(), path.as_str()) {
        (true, ".") => "(root)".to_string(),
        (true, p) => p.to_string(),
        (false, ".") => prefix.to_string(),
        (false, p) => format!("{prefix}.{p}"),
    };
    let inner = err.into_inner();
    let (l, c) = (inner.line(), inner.column());
    let head = &text[..offset.min(text.len())];
    let base_line = head.matches('\n').count() + 1;
    let base_col = offset - head.rfind('\n').map_or(0, |p| p + 1) + 1;
    let (line, column) = if l <= 1 { (base_line, base_col + c.saturating_sub(1)) } else { (base_line + l - 1, c) };
    let full = inner.to_string();
    let message = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m).to_string();
    Diagnostic { origin: origin.to_string(), line, column, field, message }
}

fn one() -> usize {
    1
}

fn quarter() -> f64 {
    0.25
}

fn two() -> f64 {
    2.0
}

fn unit() -> f64 {
    1.0
}

fn default_nodes() -> usize {
    128
}

fn default_times() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

fn default_semigroup() -> [f64; 2] {
    [0.1, 0.2]
}

fn default_points() -> usize {
    41
}

fn default_anchor_tol() -> f64 {
    1e-4
}

fn default_band() -> [f64; 2] {
    [0.8, 1.25]
}

fn default_domination() -> f64 {
    0.02
}

fn default_norms() -> Vec<Index> {
    vec![Index(2.0)]
}

fn default_ratio_tol() -> f64 {
    0.3
}

fn unit_density() -> FieldSpec {
    FieldSpec::Constant { value: 1.0 }
}

fn first_mode() -> FieldSpec {
    FieldSpec::Eigenfunction { index: 0, scale: 1.0 }
}

fn default_eval_tol() -> f64 {
    1e-3
}

fn default_count() -> usize {
    8
}

fn default_slope_tol() -> f64 {
    0.15
}

fn default_smoothing_tol() -> f64 {
    0.1
}

fn default_gradient_tol() -> f64 {
    0.2
}

fn default_panels() -> usize {
    8
}

fn default_levels() -> usize {
    5
}

fn default_pulse_points() -> usize {
    24
}

fn default_contraction() -> f64 {
    0.9
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(text: &str) -> Manifest {
        parse(text, "m.json", "m").unwrap()
    }

    fn parse_err(text: &str) -> String {
        match parse(text, "m.json", "m") {
            Err(Failure::Manifest(msg)) => msg,
            other => panic!("expected a manifest error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let m = parse_ok(r#"{"kind": "assemble", "params": {"order": 1.0}}"#);
        assert_eq!(m.kind, Kind::Assemble);
        assert_eq!(m.name, "m");
        assert_eq!(m.grid.nodes_per_axis, 128);
        assert_eq!(m.cache, CachePolicy::Use);
        assert!(matches!(m.params, Params::Assemble(AssembleParams { order: Some(o) }) if o == 1.0));
    }

    #[test]
    fn unknown_top_level_field_reports_position() {
        let msg = parse_err("{\n  \"kind\": \"kernel\",\n  \"gird\": {}\n}");
        assert!(msg.starts_with("m.json:3:"), "{msg}");
        assert!(msg.contains("gird"), "{msg}");
    }

    #[test]
    fn params_errors_carry_path_and_absolute_line() {
        let text = "{\n  \"kind\": \"certify\",\n  \"params\": {\n    \"target\": \"kernel-gradient\",\n    \"times\": [0.1, \"x\"]\n  }\n}";
        let msg = parse_err(text);
        assert!(msg.starts_with("m.json:5:"), "{msg}");
        assert!(msg.contains("params.times[1]"), "{msg}");
    }

    #[test]
    fn missing_params_of_a_kind_that_needs_them() {
        let msg = parse_err(r#"{"kind": "solve"}"#);
        assert!(msg.contains("params") && msg.contains("ladder"), "{msg}");
    }

    #[test]
    fn infinite_index_and_bad_word() {
        let m = parse_ok(r#"{"kind": "hypersing", "exponents": {"s": 0.5, "m": "inf"}}"#);
        assert_eq!(m.exponents.m, Some(Index(f64::INFINITY)));
        let msg = parse_err(r#"{"kind": "hypersing", "exponents": {"s": 0.5, "m": "infinity"}}"#);
        assert!(msg.contains("exponents.m"), "{msg}");
    }

    #[test]
    fn exponent_resolution_validates() {
        let m = parse_ok(r#"{"kind": "kernel", "exponents": {"s": 0.5, "rho": 1.2}}"#);
        assert!(matches!(m.exponents.resolve(1, m.kind), Err(Failure::Manifest(_))));
        let m = parse_ok(r#"{"kind": "kernel"}"#);
        assert!(matches!(m.exponents.resolve(1, m.kind), Err(Failure::Manifest(msg)) if msg.contains("exponents.s")));
    }

    #[test]
    fn bad_names_are_rejected() {
        let msg = parse_err(r#"{"kind": "assemble", "name": "../x"}"#);
        assert!(msg.contains("name"), "{msg}");
    }

    #[test]
    fn tagged_data_specs() {
        let m = parse_ok(
            r#"{"kind": "solve", "exponents": {"s": 0.5},
                "params": {"initial": {"type": "spike", "at": [0.1]},
                           "source": {"type": "steady", "field": {"type": "eigenfunction"}},
                           "ladder": {"type": "uniform", "horizon": 1.0, "steps": 4}}}"#,
        );
        let Params::Solve(p) = m.params else { panic!() };
        assert_eq!(p.initial, FieldSpec::Spike { at: vec![0.1], mass: 1.0 });
        assert_eq!(p.source, SourceBlock::Steady { field: FieldSpec::Eigenfunction { index: 0, scale: 1.0 } });
    }
}
