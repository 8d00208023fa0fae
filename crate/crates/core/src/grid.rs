//! Domains, uniform grids, and sampled fields.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

/// Axis-aligned box Ω together with the padding layer of exterior nodes
/// that surrounds it on the computational grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDomain {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Requested width of the exterior layer. The grid snaps it so that
    /// ∂Ω falls exactly on cell faces.
    pub padding: f64,
}

impl SpatialDomain {
    pub fn new(dim: usize, lower: Vec<f64>, upper: Vec<f64>, padding: f64) -> Result<Self> {
        let d = Self { dim, lower, upper, padding };
        d.validate()?;
        Ok(d)
    }

    /// Ω = (-1, 1).
    pub fn interval(padding: f64) -> Self {
        Self { dim: 1, lower: vec![-1.0], upper: vec![1.0], padding }
    }

    /// Ω = (-1, 1)².
    pub fn square(padding: f64) -> Self {
        Self { dim: 2, lower: vec![-1.0; 2], upper: vec![1.0; 2], padding }
    }

    pub fn unit_box(dim: usize, padding: f64) -> Result<Self> {
        Self::new(dim, vec![-1.0; dim], vec![1.0; dim], padding)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(invalid(format!("dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.lower.len() != self.dim || self.upper.len() != self.dim {
            return Err(invalid("bounds must have one entry per axis"));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(invalid(format!("bad axis bounds [{lo}, {hi}]")));
            }
        }
        let len0 = self.upper[0] - self.lower[0];
        if self.axis_lengths().any(|l| (l - len0).abs() > 1e-12 * len0) {
            return Err(invalid("all axes of the box must have the same length"));
        }
        if !(self.padding > 0.0 && self.padding.is_finite()) {
            return Err(invalid("padding must be positive"));
        }
        Ok(())
    }

    fn axis_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo)
    }

    pub fn side(&self) -> f64 {
        self.upper[0] - self.lower[0]
    }

    pub fn diam(&self) -> f64 {
        self.axis_lengths().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// Constant `D` of the logarithmic envelope terms, fixed at four diameters.
    pub fn log_scale(&self) -> f64 {
        4.0 * self.diam()
    }

    pub fn measure(&self) -> f64 {
        self.axis_lengths().product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        (0..self.dim).all(|k| p[k] > self.lower[k] && p[k] < self.upper[k])
    }

    /// Distance to ∂Ω, from inside or outside.
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        if self.contains(p) {
            (0..self.dim)
                .map(|k| (p[k] - self.lower[k]).min(self.upper[k] - p[k]))
                .fold(f64::INFINITY, f64::min)
        } else {
            (0..self.dim)
                .map(|k| {
                    let e = (self.lower[k] - p[k]).max(p[k] - self.upper[k]).max(0.0);
                    e * e
                })
                .sum::<f64>()
                .sqrt()
        }
    }
}

/// Serializable description from which a [`Grid`] is rebuilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub domain: SpatialDomain,
    pub nodes_per_axis: usize,
}

/// Uniform tensor grid covering Ω plus its padding layer. Ω is the union of
/// the cells of its interior nodes.
#[derive(Debug, Clone)]
pub struct Grid {
    spec: GridSpec,
    h: f64,
    layers: usize,
    axis: Vec<f64>,
    coords: Vec<[f64; 2]>,
    interior: Vec<bool>,
    delta: Vec<f64>,
    interior_idx: Vec<usize>,
    slot: Vec<Option<usize>>,
}

impl Grid {
    pub fn new(domain: SpatialDomain, nodes_per_axis: usize) -> Result<Arc<Self>> {
        domain.validate()?;
        let n = nodes_per_axis;
        if n < 16 {
            return Err(invalid(format!("need at least 16 nodes per axis, got {n}")));
        }
        let len = domain.side();
        // choose the number of exterior layers per side whose snapped width
        // (layers - 1/2)·h is closest to the requested padding
        let mut best: Option<(usize, f64)> = None;
        for layers in 1..n / 2 {
            let n_in = n - 2 * layers;
            if n_in < 2 {
                break;
            }
            let pad = (layers as f64 - 0.5) * len / n_in as f64;
            let err = (pad - domain.padding).abs();
            if best.is_none_or(|(_, e)| err < e) {
                best = Some((layers, err));
            }
        }
        let (layers, _) = best.ok_or_else(|| invalid("grid too small for padding"))?;
        let n_in = n - 2 * layers;
        let h = len / n_in as f64;
        let dim = domain.dim;

        let mut axis_all = Vec::with_capacity(dim);
        for k in 0..dim {
            let start = domain.lower[k] - (layers as f64 - 0.5) * h;
            axis_all.push((0..n).map(|j| start + j as f64 * h).collect::<Vec<_>>());
        }
        let total = n.pow(dim as u32);
        let mut coords = Vec::with_capacity(total);
        let mut interior = Vec::with_capacity(total);
        let mut delta = Vec::with_capacity(total);
        for i in 0..total {
            let mut p = [0.0; 2];
            let mut inside = true;
            for (k, ax) in axis_all.iter().enumerate() {
                let j = (i / n.pow(k as u32)) % n;
                p[k] = ax[j];
                inside &= j >= layers && j < n - layers;
            }
            coords.push(p);
            interior.push(inside);
            delta.push(domain.boundary_distance(&p[..dim]));
        }
        let interior_idx: Vec<usize> = (0..total).filter(|&i| interior[i]).collect();
        let mut slot = vec![None; total];
        for (s, &i) in interior_idx.iter().enumerate() {
            slot[i] = Some(s);
        }
        Ok(Arc::new(Self {
            spec: GridSpec { domain, nodes_per_axis: n },
            h,
            layers,
            axis: axis_all.swap_remove(0),
            coords,
            interior,
            delta,
            interior_idx,
            slot,
        }))
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Arc<Self>> {
        Self::new(spec.domain.clone(), spec.nodes_per_axis)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn domain(&self) -> &SpatialDomain {
        &self.spec.domain
    }

    pub fn dim(&self) -> usize {
        self.spec.domain.dim
    }

    pub fn n(&self) -> usize {
        self.spec.nodes_per_axis
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Exterior node layers on each side of Ω.
    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Snapped padding width actually realized by the grid.
    pub fn padding(&self) -> f64 {
        (self.layers as f64 - 0.5) * self.h
    }

    /// Node coordinates along one axis (all axes coincide).
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn interior_len(&self) -> usize {
        self.interior_idx.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i][..self.dim()]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.interior[i]
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    /// Node indices of interior nodes, in node order.
    pub fn interior_indices(&self) -> &[usize] {
        &self.interior_idx
    }

    /// Position of node `i` within [`Self::interior_indices`].
    pub fn interior_slot(&self, i: usize) -> Option<usize> {
        self.slot[i]
    }

    /// Distance of every node to ∂Ω (exterior nodes measure from outside).
    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Per-axis integer index of node `i`.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        let n = self.n();
        if self.dim() == 1 {
            [i, 0]
        } else {
            [i % n, i / n]
        }
    }

    pub fn index(&self, mi: [usize; 2]) -> usize {
        if self.dim() == 1 {
            mi[0]
        } else {
            mi[0] + self.n() * mi[1]
        }
    }

    /// Neighbour of node `i` one step along `axis` in direction `dir` (±1).
    pub fn neighbor(&self, i: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut mi = self.multi_index(i);
        let j = mi[axis] as isize + dir;
        if j < 0 || j >= self.n() as isize {
            return None;
        }
        mi[axis] = j as usize;
        Some(self.index(mi))
    }

    pub fn nodes_in(&self, region: Region) -> Vec<usize> {
        (0..self.len()).filter(|&i| region.contains(self.interior[i])).collect()
    }

    /// Node closest to `p`.
    pub fn nearest(&self, p: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() {
            let d: f64 = self.point(i).iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Content hash of the grid specification.
    pub fn key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.spec).expect("grid spec serializes"));
        hex::encode(&hasher.finalize()[..16])
    }
}

/// Node subset used by norms and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Interior,
    Exterior,
    All,
}

impl Region {
    pub fn contains(self, interior: bool) -> bool {
        match self {
            Region::Interior => interior,
            Region::Exterior => !interior,
            Region::All => true,
        }
    }
}

/// One real value per grid node, optionally tagged with a time.
#[derive(Debug, Clone)]
pub struct GridField {
    grid: Arc<Grid>,
    values: Vec<f64>,
    time: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    grid: GridSpec,
    time: Option<f64>,
    nodes: usize,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        Ok(Self { grid, values, time: None })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()], time: None }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid: grid.clone(), values, time: None }
    }

    /// Samples `f` on Ω and sets exterior nodes to zero.
    pub fn dirichlet_from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| if grid.is_interior(i) { f(grid.point(i)) } else { 0.0 })
            .collect();
        Self { grid: grid.clone(), values, time: None }
    }

    /// Expands a vector over interior nodes into a field that vanishes outside Ω.
    pub fn from_interior(grid: &Arc<Grid>, interior: &[f64]) -> Result<Self> {
        if interior.len() != grid.interior_len() {
            return Err(invalid("interior vector length does not match grid"));
        }
        let mut values = vec![0.0; grid.len()];
        for (&i, &v) in grid.interior_indices().iter().zip(interior) {
            values[i] = v;
        }
        Self::new(grid.clone(), values)
    }

    /// One-cell indicator at the node nearest `p`, scaled to unit mass.
    pub fn spike(grid: &Arc<Grid>, p: &[f64], mass: f64) -> Self {
        let mut f = Self::zeros(grid);
        let i = grid.nearest(p);
        f.values[i] = mass / grid.cell_measure();
        f
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior_indices().iter().map(|&i| self.values[i]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            time: self.time,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `a·self + b·other` on the same grid.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.spec() != other.grid.spec() {
            return Err(invalid("fields live on different grids"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { grid: self.grid.clone(), values, time: self.time })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `<stem>.csv` (index, coordinates, value) and `<stem>.json` (grid header).
    pub fn write(&self, stem: &Path) -> Result<()> {
        let header = FieldHeader {
            grid: self.grid.spec().clone(),
            time: self.time,
            nodes: self.values.len(),
        };
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
        std::fs::write(stem.with_extension("csv"), self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let dim = self.grid.dim();
        let mut out = String::from(if dim == 1 { "index,x,value\n" } else { "index,x,y,value\n" });
        for (i, v) in self.values.iter().enumerate() {
            let p = self.grid.point(i);
            let _ = match dim {
                1 => writeln!(out, "{i},{},{v}", p[0]),
                _ => writeln!(out, "{i},{},{},{v}", p[0], p[1]),
            };
        }
        out
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let header: FieldHeader =
            serde_json::from_str(&std::fs::read_to_string(stem.with_extension("json"))?)?;
        let grid = Grid::from_spec(&header.grid)?;
        let file = std::fs::File::open(stem.with_extension("csv"))?;
        let mut values = vec![f64::NAN; grid.len()];
        for (ln, line) in BufReader::new(file).lines().enumerate().skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Malformed(format!("line {}: {line}", ln + 1));
            let idx: usize = cols.first().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            let v: f64 = cols.last().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            *values.get_mut(idx).ok_or_else(bad)? = v;
        }
        let mut f = Self::new(grid, values)?;
        f.time = header.time;
        Ok(f)
    }
}

/// Writes a plain CSV table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(file, "{}", line.join(","))?;
    }
    file.flush()?;
    Ok(())
}

/// Exponents and integrability indices shared by the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentSet {
    pub dim: usize,
    pub s: f64,
    pub rho: f64,
    pub p: f64,
    pub q: f64,
    pub m: f64,
    pub sigma: f64,
    pub r: f64,
    pub eta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub k: f64,
}

impl ExponentSet {
    /// Defaults: ρ = s, all integrability indices 2, η = 0.01.
    pub fn new(dim: usize, s: f64) -> Self {
        Self {
            dim,
            s,
            rho: s,
            p: 2.0,
            q: 2.0,
            m: 2.0,
            sigma: 2.0,
            r: 2.0,
            eta: 0.01,
            alpha: 0.0,
            lambda: 0.0,
            k: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(invalid("dimension must be 1 or 2"));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(invalid(format!("s = {} outside (0, 1)", self.s)));
        }
        if !(self.rho >= self.s && self.rho < self.rho_cap()) {
            return Err(invalid(format!(
                "ρ = {} outside [s, max{{1, 2s}}) = [{}, {})",
                self.rho,
                self.s,
                self.rho_cap()
            )));
        }
        for (name, v) in [("p", self.p), ("q", self.q), ("m", self.m), ("σ", self.sigma), ("r", self.r)] {
            if !(v >= 1.0) {
                return Err(invalid(format!("{name} = {v} must be ≥ 1")));
            }
        }
        if !(self.eta > 0.0) {
            return Err(invalid("η must be positive"));
        }
        if !(self.alpha > -1.0) {
            return Err(invalid("α must exceed -1"));
        }
        if !(self.k > 0.0) {
            return Err(invalid("truncation level must be positive"));
        }
        Ok(())
    }

    /// Upper end of the admissible ρ range, max{1, 2s}.
    pub fn rho_cap(&self) -> f64 {
        (2.0 * self.s).max(1.0)
    }

    /// κ̂_{s,ρ}: integrability threshold of the solution map on L¹ data.
    pub fn kappa_hat(&self) -> f64 {
        let (n, s, rho) = (self.dim as f64, self.s, self.rho);
        let a = (n + 2.0 * s) / ((n + 2.0 * s) * (rho - s) + n + s);
        let b = (n + 2.0 * s) / ((n + 2.0 * s) * (rho - s) + n + 1.0 - s - rho);
        a.min(b)
    }

    /// m̄_s = m(N+2s)/(N+2s-ms), +∞ once ms ≥ N+2s.
    pub fn m_bar(&self) -> f64 {
        let (n, s, m) = (self.dim as f64, self.s, self.m);
        let den = n + 2.0 * s - m * s;
        if den <= 0.0 {
            f64::INFINITY
        } else {
            m * (n + 2.0 * s) / den
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_falls_on_cell_faces() {
        let g = Grid::new(SpatialDomain::interval(0.25), 128).unwrap();
        let h = g.h();
        let first = g.interior_indices()[0];
        assert!((g.point(first)[0] - (-1.0 + h / 2.0)).abs() < 1e-12);
        assert!((g.interior_len() as f64 * h - 2.0).abs() < 1e-12);
        assert!(((g.n() - 1) as f64 * h - (2.0 + 2.0 * g.padding())).abs() < 1e-12);
    }

    #[test]
    fn masks_partition_and_delta_positive_inside() {
        let g = Grid::new(SpatialDomain::square(0.3), 24).unwrap();
        let interior = g.nodes_in(Region::Interior).len();
        let exterior = g.nodes_in(Region::Exterior).len();
        assert_eq!(interior + exterior, g.len());
        for i in 0..g.len() {
            if g.is_interior(i) {
                assert!(g.delta()[i] > 0.0);
            }
        }
    }

    #[test]
    fn exterior_delta_is_distance_from_outside() {
        let d = SpatialDomain::square(0.5);
        assert!((d.boundary_distance(&[1.3, 0.0]) - 0.3).abs() < 1e-12);
        assert!((d.boundary_distance(&[1.3, 1.4]) - 0.5).abs() < 1e-12);
        assert!((d.boundary_distance(&[0.9, -0.2]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_or_invalid_grids() {
        assert!(Grid::new(SpatialDomain::interval(0.25), 8).is_err());
        assert!(SpatialDomain::new(1, vec![1.0], vec![-1.0], 0.1).is_err());
        assert!(SpatialDomain::new(1, vec![-1.0], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn field_roundtrip_through_disk() {
        let g = Grid::new(SpatialDomain::interval(0.25), 20).unwrap();
        let f = GridField::from_fn(&g, |p| p[0].sin()).with_time(0.5);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("f");
        f.write(&stem).unwrap();
        let back = GridField::read(&stem).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.time(), Some(0.5));
    }

    #[test]
    fn exponent_thresholds() {
        let mut e = ExponentSet::new(1, 0.5);
        // κ̂_{s,s} = (N+2s)/(N+s) for s > 1/3
        assert!((e.kappa_hat() - 4.0 / 3.0).abs() < 1e-12);
        e.m = 1.0;
        assert!((e.m_bar() - 4.0 / 3.0).abs() < 1e-12);
        e.rho = 1.0;
        assert!(e.validate().is_err());
    }
}
