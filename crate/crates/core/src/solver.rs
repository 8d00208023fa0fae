//! Solutions of `w_t + (-Δ)^s w = h` with zero exterior data, by the
//! spectral Duhamel formula and by implicit Euler.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fracop::{FractionalOperator, OperatorMatrix, QuadratureScheme};
use crate::grid::{Grid, GridField, Region};
use crate::kernel::SpectralDecomposition;
use crate::norms::lp_weighted;
use crate::quad::GaussRule;

/// Strictly increasing times starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    times: Vec<f64>,
}

impl Ladder {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(invalid("ladder must start at 0 and contain a later time"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(invalid("ladder times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    /// `steps` equal steps on [0, horizon].
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(invalid("uniform ladder needs a positive horizon and steps"));
        }
        Self::new((0..=steps).map(|k| horizon * k as f64 / steps as f64).collect())
    }

    /// 0 followed by `count` geometrically spaced times in [first, last].
    pub fn geometric(first: f64, last: f64, count: usize) -> Result<Self> {
        if !(first > 0.0 && last > first) || count < 2 {
            return Err(invalid("geometric ladder needs 0 < first < last and two points"));
        }
        let ratio = (last / first).powf(1.0 / (count - 1) as f64);
        let mut times = vec![0.0];
        times.extend((0..count).map(|k| first * ratio.powi(k as i32)));
        *times.last_mut().expect("non-empty") = last;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("ladder is non-empty")
    }

    /// Trapezoid weights for integrals over [0, horizon].
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let t = &self.times;
        let m = t.len();
        (0..m)
            .map(|k| {
                let left = if k > 0 { t[k] - t[k - 1] } else { 0.0 };
                let right = if k + 1 < m { t[k + 1] - t[k] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }

    /// Halves every step.
    pub fn refined(&self) -> Self {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push(0.5 * (w[0] + w[1]));
        }
        times.push(self.horizon());
        Self { times }
    }
}

pub type SourceFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Right-hand side `h` of the heat equation on interior nodes.
#[derive(Clone)]
pub enum Source {
    Zero,
    /// Time-independent interior values.
    Steady(Vec<f64>),
    /// `h(x, t)` evaluated on interior nodes.
    Callable(SourceFn),
    /// Interior values at each ladder time, linear in between.
    Tabulated(Vec<Vec<f64>>),
}

impl std::fmt::Debug for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Zero => write!(f, "Zero"),
            Source::Steady(v) => write!(f, "Steady({} values)", v.len()),
            Source::Callable(_) => write!(f, "Callable"),
            Source::Tabulated(v) => write!(f, "Tabulated({} slices)", v.len()),
        }
    }
}

/// Data `(h, w₀)` together with the integrability labels used in reports.
#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub h: Source,
    pub w0: GridField,
    pub m: Option<f64>,
    pub sigma: Option<f64>,
}

impl SourceSpec {
    pub fn new(h: Source, w0: GridField) -> Self {
        Self { h, w0, m: None, sigma: None }
    }

    pub fn initial(w0: GridField) -> Self {
        Self::new(Source::Zero, w0)
    }

    pub fn forcing(grid: &Arc<Grid>, h: Source) -> Self {
        Self::new(h, GridField::zeros(grid))
    }

    pub fn with_labels(mut self, m: Option<f64>, sigma: Option<f64>) -> Self {
        self.m = m;
        self.sigma = sigma;
        self
    }

    fn validate(&self, grid: &Arc<Grid>, ladder: &Ladder) -> Result<()> {
        if self.w0.grid().spec() != grid.spec() {
            return Err(invalid("initial datum lives on another grid"));
        }
        let m = grid.interior_len();
        match &self.h {
            Source::Steady(v) if v.len() != m => Err(invalid("steady source length does not match grid")),
            Source::Tabulated(rows) if rows.len() != ladder.len() || rows.iter().any(|r| r.len() != m) => {
                Err(invalid("tabulated source must have one interior slice per ladder time"))
            }
            _ => Ok(()),
        }
    }

    fn at(&self, grid: &Grid, ladder: &Ladder, interval: usize, t: f64) -> Option<Vec<f64>> {
        match &self.h {
            Source::Zero => None,
            Source::Steady(v) => Some(v.clone()),
            Source::Callable(f) => Some(grid.interior_indices().iter().map(|&i| f(grid.point(i), t)).collect()),
            Source::Tabulated(rows) => {
                let ts = ladder.times();
                let (a, b) = (ts[interval], ts[interval + 1]);
                let th = ((t - a) / (b - a)).clamp(0.0, 1.0);
                Some(rows[interval].iter().zip(&rows[interval + 1]).map(|(x, y)| (1.0 - th) * x + th * y).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Duhamel,
    ImplicitEuler,
    Derived(String),
}

/// One field per ladder time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    ladder: Ladder,
    fields: Vec<GridField>,
    provenance: Provenance,
    labels: (Option<f64>, Option<f64>),
}

#[derive(Serialize)]
struct TrajectoryManifest<'a> {
    ladder: &'a [f64],
    provenance: &'a Provenance,
    m: Option<f64>,
    sigma: Option<f64>,
    slices: Vec<String>,
}

impl Trajectory {
    pub fn new(ladder: Ladder, fields: Vec<GridField>, provenance: Provenance) -> Result<Self> {
        if fields.len() != ladder.len() {
            return Err(invalid("one field per ladder time required"));
        }
        let fields = fields.into_iter().zip(ladder.times()).map(|(f, &t)| f.with_time(t)).collect();
        Ok(Self { ladder, fields, provenance, labels: (None, None) })
    }

    fn from_interior(grid: &Arc<Grid>, ladder: &Ladder, rows: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let fields = rows.iter().map(|r| GridField::from_interior(grid, r)).collect::<Result<Vec<_>>>()?;
        Self::new(ladder.clone(), fields, provenance)
    }

    pub fn ladder(&self) -> &Ladder {
        &self.ladder
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn last(&self) -> &GridField {
        self.fields.last().expect("trajectory is non-empty")
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.fields[0].grid()
    }

    /// Integrability labels (m, σ) of the data that produced this trajectory.
    pub fn labels(&self) -> (Option<f64>, Option<f64>) {
        self.labels
    }

    pub fn max_abs(&self) -> f64 {
        self.fields.iter().map(GridField::max_abs).fold(0.0, f64::max)
    }

    /// Largest pointwise gap to another trajectory on the same ladder.
    pub fn max_gap(&self, other: &Trajectory) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .flat_map(|(a, b)| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// `L^r(region × (0, T))` norm with trapezoid weights in time.
    pub fn spacetime_norm(&self, r: f64, region: Region) -> Result<f64> {
        if !(r >= 1.0) {
            return Err(invalid("r must be ≥ 1"));
        }
        let g = self.grid();
        let nodes = g.nodes_in(region);
        let wt = self.ladder.trapezoid_weights();
        if r.is_infinite() {
            return Ok(self.fields.iter().flat_map(|f| nodes.iter().map(move |&i| f.values()[i].abs())).fold(0.0, f64::max));
        }
        let sum: f64 = self
            .fields
            .iter()
            .zip(&wt)
            .map(|(f, w)| w * nodes.iter().map(|&i| f.values()[i].abs().powf(r)).sum::<f64>())
            .sum();
        Ok((sum * g.cell_measure()).powf(1.0 / r))
    }

    /// Writes one CSV per time slice plus a JSON manifest into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut slices = Vec::with_capacity(self.fields.len());
        for (k, f) in self.fields.iter().enumerate() {
            let name = format!("{stem}_{k:04}");
            f.write(&dir.join(&name))?;
            slices.push(name);
        }
        let manifest = TrajectoryManifest {
            ladder: self.ladder.times(),
            provenance: &self.provenance,
            m: self.labels.0,
            sigma: self.labels.1,
            slices,
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

const GAUSS3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];

/// `∫_0^Δ e^{−λ(Δ−σ)} L_q(σ) dσ` for the Lagrange basis through `nodes`.
fn exponential_weights(lambda: f64, delta: f64, nodes: &[f64], rule: &GaussRule) -> Vec<f64> {
    let top = delta.min(40.0 / lambda);
    let mut w = vec![0.0; nodes.len()];
    for (u, wu) in rule.on(0.0, top) {
        let sigma = delta - u;
        let e = (-lambda * u).exp() * wu;
        for (q, wq) in w.iter_mut().enumerate() {
            let mut l = 1.0;
            for (p, &np) in nodes.iter().enumerate() {
                if p != q {
                    l *= (sigma - np) / (nodes[q] - np);
                }
            }
            *wq += e * l;
        }
    }
    w
}

/// Duhamel solution: exact exponentials for `w₀`, and on each ladder
/// interval the source is replaced by its interpolant through three Gauss
/// points (callable sources) or its two endpoint values (tabulated sources),
/// integrated exactly against `e^{−λ(t−τ)}`.
pub fn solve_duhamel(dec: &SpectralDecomposition, src: &SourceSpec, ladder: &Ladder) -> Result<Trajectory> {
    let grid = dec.grid();
    src.validate(grid, ladder)?;
    let lambdas = dec.values();
    let rule = GaussRule::new(32);
    let mut c = dec.project(&src.w0.interior_values());
    let mut rows = vec![dec.synthesize(&c)];
    let mut cache: HashMap<(u64, bool), Vec<Vec<f64>>> = HashMap::new();
    let ts = ladder.times();
    for m in 0..ts.len() - 1 {
        let delta = ts[m + 1] - ts[m];
        for (k, v) in c.iter_mut().enumerate() {
            *v *= (-lambdas[k] * delta).exp();
        }
        let tabulated = matches!(src.h, Source::Tabulated(_));
        let nodes: Vec<f64> = if tabulated {
            vec![0.0, delta]
        } else {
            GAUSS3.iter().map(|g| 0.5 * delta * (g + 1.0)).collect()
        };
        let samples: Vec<Option<Vec<f64>>> = nodes.iter().map(|&sg| src.at(grid, ladder, m, ts[m] + sg)).collect();
        if samples.iter().all(Option::is_some) && !matches!(src.h, Source::Zero) {
            let weights = cache.entry((delta.to_bits(), tabulated)).or_insert_with(|| {
                lambdas.par_iter().map(|&l| exponential_weights(l, delta, &nodes, &rule)).collect()
            });
            for (q, sample) in samples.into_iter().enumerate() {
                let hat = dec.project(&sample.expect("checked above"));
                for k in 0..c.len() {
                    c[k] += weights[k][q] * hat[k];
                }
            }
        }
        rows.push(dec.synthesize(&c));
    }
    let mut traj = Trajectory::from_interior(grid, ladder, rows, Provenance::Duhamel)?;
    traj.labels = (src.m, src.sigma);
    Ok(traj)
}

/// `(I + Δt A) w^{m+1} = w^m + Δt h(t_{m+1})` with dense Cholesky solves.
pub fn solve_implicit_euler(a: &OperatorMatrix, src: &SourceSpec, ladder: &Ladder) -> Result<Trajectory> {
    let grid = a.grid();
    src.validate(grid, ladder)?;
    let m = a.size();
    let ts = ladder.times();
    let mut w = DVector::from_vec(src.w0.interior_values());
    let mut rows = vec![w.as_slice().to_vec()];
    let mut factors: HashMap<u64, nalgebra::Cholesky<f64, nalgebra::Dyn>> = HashMap::new();
    for k in 0..ts.len() - 1 {
        let dt = ts[k + 1] - ts[k];
        let chol = match factors.entry(dt.to_bits()) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let sys = DMatrix::identity(m, m) + a.matrix() * dt;
                e.insert(sys.cholesky().ok_or(crate::error::Error::Singular)?)
            }
        };
        let mut rhs = w.clone();
        if let Some(h) = src.at(grid, ladder, k, ts[k + 1]) {
            rhs += DVector::from_vec(h) * dt;
        }
        w = chol.solve(&rhs);
        rows.push(w.as_slice().to_vec());
    }
    let mut traj = Trajectory::from_interior(grid, ladder, rows, Provenance::ImplicitEuler)?;
    traj.labels = (src.m, src.sigma);
    Ok(traj)
}

/// `w / δ^s` on interior nodes, zero outside Ω.
pub fn weighted_trace(traj: &Trajectory, s: f64) -> Result<Trajectory> {
    let g = traj.grid();
    let fields = traj
        .fields()
        .iter()
        .map(|f| {
            let vals = (0..g.len())
                .map(|i| if g.is_interior(i) { f.values()[i] / g.delta()[i].powf(s) } else { 0.0 })
                .collect();
            GridField::new(g.clone(), vals)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Trajectory::new(traj.ladder.clone(), fields, Provenance::Derived(format!("w/delta^{s}")))?;
    out.labels = traj.labels;
    Ok(out)
}

/// `(-Δ)^{ρ/2} w` at every grid node (interior and padding) for each slice.
pub fn fractional_gradient_field(traj: &Trajectory, rho: f64, scheme: &QuadratureScheme) -> Result<Trajectory> {
    let g = traj.grid();
    let op = FractionalOperator::new(g, rho, scheme)?;
    let e = op.evaluation_matrix();
    let cols: Vec<Vec<f64>> = traj.fields().iter().map(GridField::interior_values).collect();
    let data = DMatrix::from_fn(g.interior_len(), cols.len(), |i, k| cols[k][i]);
    let out = e * data;
    let fields = (0..cols.len())
        .map(|k| GridField::new(g.clone(), out.column(k).as_slice().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let mut res = Trajectory::new(traj.ladder.clone(), fields, Provenance::Derived(format!("half-laplacian order {rho}")))?;
    res.labels = traj.labels;
    Ok(res)
}

/// `(-Δ)^{ρ/2} w(·, t)` at points beyond the grid, by the plain exterior integral.
pub fn far_exterior_values(field: &GridField, rho: f64, points: &[Vec<f64>], scheme: &QuadratureScheme) -> Result<Vec<f64>> {
    let op = FractionalOperator::new(field.grid(), rho, scheme)?;
    Ok(points.iter().map(|p| op.apply_at_far_point(field, p)).collect())
}

/// L^p norm of one slice over interior nodes.
pub fn slice_norm(f: &GridField, p: f64) -> f64 {
    let g = f.grid();
    lp_weighted(g.interior_indices().iter().map(|&i| f.values()[i]), g.cell_measure(), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_validation_and_weights() {
        assert!(Ladder::new(vec![0.0]).is_err());
        assert!(Ladder::new(vec![0.1, 0.2]).is_err());
        assert!(Ladder::new(vec![0.0, 0.2, 0.2]).is_err());
        let l = Ladder::uniform(1.0, 4).unwrap();
        let w = l.trapezoid_weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(l.refined().len(), 9);
        let g = Ladder::geometric(0.01, 0.3, 6).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.horizon(), 0.3);
    }

    #[test]
    fn exponential_weights_reproduce_polynomials() {
        // ∫_0^Δ e^{−λ(Δ−σ)} σ dσ for the Lagrange interpolant of σ ↦ σ
        let (lambda, delta) = (3.0, 0.4);
        let nodes: Vec<f64> = GAUSS3.iter().map(|g| 0.5 * delta * (g + 1.0)).collect();
        let w = exponential_weights(lambda, delta, &nodes, &GaussRule::new(32));
        let approx: f64 = w.iter().zip(&nodes).map(|(a, b)| a * b).sum();
        let exact = delta / lambda - (1.0 - (-lambda * delta).exp()) / (lambda * lambda);
        assert!((approx - exact).abs() < 1e-14);
    }
}
