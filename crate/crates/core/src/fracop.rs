//! Discrete fractional Laplacian with exterior Dirichlet condition.
//!
//! The `order` parameter is ρ in (-Δ)^{ρ/2}, whose kernel is
//! `a_{N,ρ/2} |z|^{−(N+ρ)}`. So ρ = 2s gives (-Δ)^s and ρ = s gives the
//! half-s Laplacian (-Δ)^{s/2}.
//!
//! Discretization: inside the square `|z|_∞ < h` the difference
//! `u(x) − u(x+z)` is replaced by its second-order Taylor polynomial and
//! integrated exactly; outside it, `u` is replaced by its piecewise
//! (bi)linear interpolant, giving one weight per node offset. Nodes beyond the
//! grid carry zero, so the part of the kernel mass beyond the grid acts only
//! on `u(x)` and is computed exactly from a partition-of-unity argument.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridField};
use crate::quad::GaussRule;
use crate::special::gamma;

/// a_{N,s} = s 2^{2s} Γ((N+2s)/2) / (π^{N/2} Γ(1−s)).
pub fn normalization_constant(dim: usize, s: f64) -> Result<f64> {
    if !(1..=2).contains(&dim) {
        return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    let n = dim as f64;
    Ok(s * 4f64.powf(s) * gamma((n + 2.0 * s) / 2.0)
        / (std::f64::consts::PI.powf(n / 2.0) * gamma(1.0 - s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NearRule {
    /// Second-order Taylor surrogate over the square `|z|_∞ < h`,
    /// second derivatives by central differences.
    TaylorSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailRule {
    /// Kernel mass beyond the grid integrated exactly (no truncation radius).
    ExactComplement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureScheme {
    /// Half-width of the near square in units of h.
    pub near_cutoff: f64,
    pub near_rule: NearRule,
    pub tail: TailRule,
    /// Gauss points per axis on cells touching the near square.
    pub near_points: usize,
    /// Gauss points per axis on all other cells.
    pub far_points: usize,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        Self {
            near_cutoff: 1.0,
            near_rule: NearRule::TaylorSquare,
            tail: TailRule::ExactComplement,
            near_points: 16,
            far_points: 8,
        }
    }
}

impl QuadratureScheme {
    pub fn validate(&self) -> Result<()> {
        if self.near_cutoff != 1.0 {
            return Err(invalid("near cutoff must be exactly one grid spacing"));
        }
        if self.near_points < 2 || self.far_points < 2 {
            return Err(invalid("quadrature needs at least two points per axis"));
        }
        Ok(())
    }
}

fn angular(a: f64) -> f64 {
    GaussRule::new(32).integrate(0.0, std::f64::consts::FRAC_PI_4, |t| t.cos().powf(a))
}

/// `∫_{|z|_∞<h} z_1² |z|^{−(N+ρ)} dz`, finite for ρ < 2.
pub fn second_moment(dim: usize, h: f64, rho: f64) -> f64 {
    match dim {
        1 => 2.0 * h.powf(2.0 - rho) / (2.0 - rho),
        _ => 4.0 / (2.0 - rho) * h.powf(2.0 - rho) * angular(rho - 2.0),
    }
}

/// `∫_{|z|_∞≥h} |z|^{−(N+ρ)} dz`, finite for ρ > 0.
pub fn far_mass(dim: usize, h: f64, rho: f64) -> f64 {
    match dim {
        1 => 2.0 * h.powf(-rho) / rho,
        _ => 8.0 / rho * h.powf(-rho) * angular(rho),
    }
}

/// Dimensionless hat-function weights over the far region for offsets
/// `k ≥ 0` per axis. With `odd`, the integrand carries the factor `u_1`.
fn hat_table(dim: usize, kmax: usize, beta: f64, odd: bool, scheme: &QuadratureScheme) -> Vec<f64> {
    let near = GaussRule::new(scheme.near_points);
    let far = GaussRule::new(scheme.far_points);
    let is_near_cell = |a: i64| a == -1 || a == 0;
    let touches = |a: i64| a >= -2 && a <= 1;
    match dim {
        1 => (0..=kmax)
            .into_par_iter()
            .map(|k| {
                let k = k as i64;
                let mut acc = 0.0;
                for a in [k - 1, k] {
                    if is_near_cell(a) {
                        continue;
                    }
                    let rule = if touches(a) { &near } else { &far };
                    let kf = k as f64;
                    acc += rule.integrate(a as f64, a as f64 + 1.0, |u| {
                        let hat = 1.0 - (u - kf).abs();
                        let kern = u.abs().powf(-beta);
                        if odd { hat * u * kern } else { hat * kern }
                    });
                }
                acc
            })
            .collect(),
        _ => {
            let m = kmax + 1;
            (0..m * m)
                .into_par_iter()
                .map(|idx| {
                    let (k1, k2) = ((idx % m) as i64, (idx / m) as i64);
                    let mut acc = 0.0;
                    for a in [k1 - 1, k1] {
                        for b in [k2 - 1, k2] {
                            if is_near_cell(a) && is_near_cell(b) {
                                continue;
                            }
                            let rule = if touches(a) && touches(b) { &near } else { &far };
                            let (kf1, kf2) = (k1 as f64, k2 as f64);
                            for (u1, w1) in rule.on(a as f64, a as f64 + 1.0) {
                                let h1 = 1.0 - (u1 - kf1).abs();
                                for (u2, w2) in rule.on(b as f64, b as f64 + 1.0) {
                                    let h2 = 1.0 - (u2 - kf2).abs();
                                    let r2 = u1 * u1 + u2 * u2;
                                    let mut v = h1 * h2 * r2.powf(-0.5 * beta);
                                    if odd {
                                        v *= u1;
                                    }
                                    acc += w1 * w2 * v;
                                }
                            }
                        }
                    }
                    acc
                })
                .collect()
        }
    }
}

/// Offset-indexed weights for one kernel exponent on one grid.
#[derive(Debug, Clone)]
struct WeightTable {
    dim: usize,
    m: usize,
    values: Vec<f64>,
    odd: bool,
}

impl WeightTable {
    fn new(grid: &Grid, beta: f64, odd: bool, scheme: &QuadratureScheme) -> Self {
        let dim = grid.dim();
        let m = grid.n();
        let scale = grid.h().powf(dim as f64 + if odd { 1.0 } else { 0.0 } - beta);
        let mut values = hat_table(dim, m - 1, beta, odd, scheme);
        values.iter_mut().for_each(|v| *v *= scale);
        Self { dim, m, values, odd }
    }

    /// Weight for offset `(d1, d2)`; for odd tables this is component 1 of
    /// the vector weight, component 2 is `get(d2, d1)`.
    fn get(&self, d1: i64, d2: i64) -> f64 {
        let (a1, a2) = (d1.unsigned_abs() as usize, d2.unsigned_abs() as usize);
        let v = if self.dim == 1 { self.values[a1] } else { self.values[a1 + self.m * a2] };
        if self.odd && d1 < 0 {
            -v
        } else {
            v
        }
    }
}

fn offset(grid: &Grid, i: usize, j: usize) -> (i64, i64) {
    let (a, b) = (grid.multi_index(i), grid.multi_index(j));
    (b[0] as i64 - a[0] as i64, b[1] as i64 - a[1] as i64)
}

/// Central difference along `axis` with zero values beyond the grid.
fn central_difference(grid: &Grid, u: &[f64], i: usize, axis: usize) -> f64 {
    let up = grid.neighbor(i, axis, 1).map_or(0.0, |j| u[j]);
    let dn = grid.neighbor(i, axis, -1).map_or(0.0, |j| u[j]);
    (up - dn) / (2.0 * grid.h())
}

/// Discrete (-Δ)^{ρ/2} on a grid, acting on node values extended by zero.
#[derive(Debug, Clone)]
pub struct FractionalOperator {
    grid: Arc<Grid>,
    order: f64,
    scheme: QuadratureScheme,
    constant: f64,
    near: f64,
    far: f64,
    weights: WeightTable,
}

impl FractionalOperator {
    pub fn new(grid: &Arc<Grid>, order: f64, scheme: &QuadratureScheme) -> Result<Self> {
        if !(order > 0.0 && order < 2.0) {
            return Err(invalid(format!("order ρ = {order} outside (0, 2)")));
        }
        scheme.validate()?;
        let dim = grid.dim();
        let h = grid.h();
        Ok(Self {
            grid: grid.clone(),
            order,
            scheme: scheme.clone(),
            constant: normalization_constant(dim, order / 2.0)?,
            near: 0.5 * second_moment(dim, h, order) / (h * h),
            far: far_mass(dim, h, order),
            weights: WeightTable::new(grid, dim as f64 + order, false, scheme),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }

    /// Normalization constant a_{N,ρ/2}.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Un-normalized interaction weight between nodes `i` and `j ≠ i`.
    fn coupling(&self, i: usize, j: usize) -> f64 {
        let (d1, d2) = offset(&self.grid, i, j);
        let mut w = self.weights.get(d1, d2);
        if d1.abs() + d2.abs() == 1 {
            w += self.near;
        }
        w
    }

    /// Un-normalized diagonal: near-field stencil centre plus total far mass.
    fn diagonal(&self) -> f64 {
        2.0 * self.grid.dim() as f64 * self.near + self.far
    }

    /// Kernel mass at node `i` not carried by other nodes of `nodes`.
    fn leftover(&self, i: usize, nodes: &[usize]) -> f64 {
        let carried: f64 = nodes.iter().filter(|&&j| j != i).map(|&j| self.weights.get_pair(&self.grid, i, j)).sum();
        self.far - carried
    }

    /// Dirichlet matrix over interior nodes.
    pub fn assemble(&self) -> OperatorMatrix {
        let g = &self.grid;
        let idx = g.interior_indices();
        let a = self.constant;
        let diag = self.diagonal();
        let rows: Vec<(Vec<f64>, f64)> = idx
            .par_iter()
            .map(|&i| {
                let row = idx
                    .iter()
                    .map(|&j| if j == i { a * diag } else { -a * self.coupling(i, j) })
                    .collect();
                (row, a * self.leftover(i, idx))
            })
            .collect();
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        let mut tail = Vec::with_capacity(m);
        for (row, t) in rows {
            data.extend(row);
            tail.push(t);
        }
        let mut matrix = DMatrix::from_row_slice(m, m, &data);
        // remove round-off asymmetry from the pairwise weights
        let sym = (&matrix + matrix.transpose()) * 0.5;
        matrix.copy_from(&sym);
        OperatorMatrix {
            grid: g.clone(),
            order: self.order,
            scheme: self.scheme.clone(),
            matrix,
            tail,
        }
    }

    /// Matrix mapping interior values (zero outside Ω) to the operator at every node.
    pub fn evaluation_matrix(&self) -> DMatrix<f64> {
        let g = &self.grid;
        let idx = g.interior_indices();
        let a = self.constant;
        let diag = self.diagonal();
        let rows: Vec<Vec<f64>> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                idx.iter()
                    .map(|&j| if j == i { a * diag } else { -a * self.coupling(i, j) })
                    .collect()
            })
            .collect();
        DMatrix::from_row_slice(g.len(), idx.len(), &rows.concat())
    }

    /// Applies the operator at every node to a field that vanishes beyond the grid.
    pub fn apply(&self, f: &GridField) -> Result<GridField> {
        let g = &self.grid;
        if f.grid().spec() != g.spec() {
            return Err(invalid("field grid does not match operator grid"));
        }
        let u = f.values();
        let a = self.constant;
        let diag = self.diagonal();
        let support: Vec<usize> = (0..g.len()).filter(|&j| u[j] != 0.0).collect();
        let out: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = diag * u[i];
                for &j in &support {
                    if j != i {
                        acc -= self.coupling(i, j) * u[j];
                    }
                }
                a * acc
            })
            .collect();
        let mut res = GridField::new(g.clone(), out)?;
        if let Some(t) = f.time() {
            res = res.with_time(t);
        }
        Ok(res)
    }

    /// Value at a point `x` outside the grid, where no principal value is needed:
    /// `−a Σ_j u_j h^N / |x − y_j|^{N+ρ}`.
    pub fn apply_at_far_point(&self, f: &GridField, x: &[f64]) -> f64 {
        let g = &self.grid;
        let beta = g.dim() as f64 + self.order;
        let sum: f64 = f
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| {
                let y = g.point(j);
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                v * r2.powf(-0.5 * beta)
            })
            .sum();
        -self.constant * g.cell_measure() * sum
    }
}

impl WeightTable {
    fn get_pair(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        let (d1, d2) = offset(grid, i, j);
        self.get(d1, d2)
    }
}

/// (-Δ)^{s/2} f at every node, for f extended by zero beyond the grid.
pub fn apply_half_gradient(f: &GridField, s: f64, scheme: &QuadratureScheme) -> Result<GridField> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    FractionalOperator::new(f.grid(), s, scheme)?.apply(f)
}

/// Riesz gradient `∫ (f(x) − f(y)) (x − y) / |x − y|^{N+1+s} dy`, one field per axis.
pub fn riesz_gradient(f: &GridField, s: f64, scheme: &QuadratureScheme) -> Result<Vec<GridField>> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1)")));
    }
    scheme.validate()?;
    let g = f.grid();
    let dim = g.dim();
    let beta = dim as f64 + 1.0 + s;
    let table = WeightTable::new(g, beta, true, scheme);
    let moment = second_moment(dim, g.h(), 1.0 + s);
    let u = f.values();
    let support: Vec<usize> = (0..g.len()).filter(|&j| u[j] != 0.0).collect();
    (0..dim)
        .map(|c| {
            let vals: Vec<f64> = (0..g.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = moment * central_difference(g, u, i, c);
                    for &j in &support {
                        if j != i {
                            let (d1, d2) = offset(g, i, j);
                            let w = if c == 0 { table.get(d1, d2) } else { table.get(d2, d1) };
                            acc += u[j] * w;
                        }
                    }
                    acc
                })
                .collect();
            GridField::new(g.clone(), vals)
        })
        .collect()
}

/// Pointwise `(a_{N,s}/2 ∫ |f(x) − f(y)|² / |x − y|^{N+2s} dy)^{1/2}`.
pub fn ds_magnitude(f: &GridField, s: f64, scheme: &QuadratureScheme) -> Result<GridField> {
    let op = FractionalOperator::new(f.grid(), 2.0 * s, scheme)?;
    let g = f.grid();
    let u = f.values();
    let all: Vec<usize> = (0..g.len()).collect();
    let near_moment = 2.0 * op.near * g.h() * g.h();
    let vals: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let grad2: f64 = (0..g.dim()).map(|c| central_difference(g, u, i, c).powi(2)).sum();
            let mut acc = near_moment * grad2 + u[i] * u[i] * op.leftover(i, &all);
            for j in 0..g.len() {
                if j != i {
                    let d = u[i] - u[j];
                    if d != 0.0 {
                        acc += d * d * op.weights.get_pair(g, i, j);
                    }
                }
            }
            (0.5 * op.constant * acc).max(0.0).sqrt()
        })
        .collect();
    GridField::new(g.clone(), vals)
}

/// `∫_{ℝ^N} D_s(f)² dx`: the grid sum of [`ds_magnitude`] squared plus the
/// exact contribution of points beyond the grid, where `f` vanishes.
pub fn ds_energy(f: &GridField, s: f64, scheme: &QuadratureScheme) -> Result<f64> {
    let op = FractionalOperator::new(f.grid(), 2.0 * s, scheme)?;
    let g = f.grid();
    let u = f.values();
    let all: Vec<usize> = (0..g.len()).collect();
    let inside: f64 = ds_magnitude(f, s, scheme)?.values().iter().map(|v| v * v).sum();
    let beyond: f64 = (0..g.len())
        .into_par_iter()
        .filter(|&i| u[i] != 0.0)
        .map(|i| u[i] * u[i] * op.leftover(i, &all))
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok((inside + 0.5 * op.constant * beyond) * g.cell_measure())
}

/// Dirichlet matrix of (-Δ)^{ρ/2} over the interior nodes.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    order: f64,
    scheme: QuadratureScheme,
    matrix: DMatrix<f64>,
    tail: Vec<f64>,
}

const CACHE_MAGIC: &[u8; 8] = b"FHOPMAT1";

impl OperatorMatrix {
    pub fn assemble(grid: &Arc<Grid>, order: f64, scheme: &QuadratureScheme) -> Result<Self> {
        if grid.interior_len() < 2 {
            return Err(invalid("grid needs at least two interior nodes"));
        }
        Ok(FractionalOperator::new(grid, order, scheme)?.assemble())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn scheme(&self) -> &QuadratureScheme {
        &self.scheme
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Kernel mass from beyond Ω acting on each diagonal entry.
    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    /// `max |A − Aᵀ|`.
    pub fn symmetry_defect(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn apply_interior(&self, u: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// Applies the matrix to a Dirichlet field, returning interior values
    /// embedded in a zero-exterior field.
    pub fn apply(&self, f: &GridField) -> Result<GridField> {
        GridField::from_interior(&self.grid, &self.apply_interior(&f.interior_values()))
    }

    /// Content hash of (grid, order, scheme).
    pub fn cache_key_for(grid: &Grid, order: f64, scheme: &QuadratureScheme) -> String {
        let payload = serde_json::json!({
            "grid": grid.spec(),
            "order": order.to_bits(),
            "scheme": scheme,
        });
        let mut hasher = Sha256::new();
        hasher.update(payload.to_string().as_bytes());
        hex::encode(hasher.finalize())
    }

    pub fn cache_key(&self) -> String {
        Self::cache_key_for(&self.grid, self.order, &self.scheme)
    }

    /// Binary dump: magic, key, size, row-major entries, tail; little endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let m = self.size();
        let mut buf = Vec::with_capacity(16 + 64 + 8 * (m * m + m + 1));
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(self.cache_key().as_bytes());
        buf.extend_from_slice(&(m as u64).to_le_bytes());
        for i in 0..m {
            for j in 0..m {
                buf.extend_from_slice(&self.matrix[(i, j)].to_le_bytes());
            }
        }
        for t in &self.tail {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        file.sync_all()?;
        Ok(())
    }

    /// Loads a dump, refusing it unless its key matches (grid, order, scheme).
    pub fn load(path: &Path, grid: &Arc<Grid>, order: f64, scheme: &QuadratureScheme) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let expected = Self::cache_key_for(grid, order, scheme);
        let key_end = CACHE_MAGIC.len() + expected.len();
        if buf.len() < key_end + 8 || &buf[..CACHE_MAGIC.len()] != CACHE_MAGIC {
            return Err(Error::Malformed(format!("{} is not an operator cache", path.display())));
        }
        let found = String::from_utf8_lossy(&buf[CACHE_MAGIC.len()..key_end]).into_owned();
        if found != expected {
            return Err(Error::CacheKey { expected, found });
        }
        let mut words = buf[key_end..].chunks_exact(8).map(|c| {
            let mut b = [0u8; 8];
            b.copy_from_slice(c);
            b
        });
        let m = words.next().map(u64::from_le_bytes).unwrap_or(0) as usize;
        if m != grid.interior_len() || buf.len() != key_end + 8 * (1 + m * m + m) {
            return Err(Error::Malformed("operator cache has wrong size".into()));
        }
        let vals: Vec<f64> = words.map(f64::from_le_bytes).collect();
        Ok(Self {
            grid: grid.clone(),
            order,
            scheme: scheme.clone(),
            matrix: DMatrix::from_row_slice(m, m, &vals[..m * m]),
            tail: vals[m * m..].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialDomain;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_constant_values() {
        assert_relative_eq!(normalization_constant(1, 0.5).unwrap(), 1.0 / std::f64::consts::PI, max_relative = 1e-13);
        assert_relative_eq!(
            normalization_constant(2, 0.5).unwrap(),
            0.5 / std::f64::consts::PI,
            max_relative = 1e-13
        );
        assert!(normalization_constant(1, 1e-9).unwrap() < 1e-8);
        assert!(normalization_constant(1, 1.0).is_err());
        assert!(normalization_constant(3, 0.5).is_err());
    }

    #[test]
    fn moments_match_quadrature() {
        // 2D: compare closed forms against brute-force polar quadrature
        let rho = 0.8;
        let h = 0.1;
        let rule = GaussRule::new(64);
        let quarter = std::f64::consts::FRAC_PI_4;
        // over the square |z|_∞ < h: ∫ z_1² |z|^{-2-ρ} = ½ ∫ |z|^{-ρ}
        let m = 0.5 * 8.0 * rule.integrate(0.0, quarter, |t| (h / t.cos()).powf(2.0 - rho) / (2.0 - rho));
        assert_relative_eq!(second_moment(2, h, rho), m, max_relative = 1e-12);
        let s = 8.0 * rule.integrate(0.0, quarter, |t| (h / t.cos()).powf(-rho) / rho);
        assert_relative_eq!(far_mass(2, h, rho), s, max_relative = 1e-12);
    }

    #[test]
    fn hat_weights_partition_the_far_mass() {
        // Σ_k W_k over all offsets equals the far mass (1D: tail beyond K by asymptotics)
        let rho = 0.6;
        let scheme = QuadratureScheme::default();
        let kmax = 4000;
        let w = hat_table(1, kmax, 1.0 + rho, false, &scheme);
        let tail = 2.0 * (kmax as f64 + 0.5).powf(-rho) / rho;
        let total = 2.0 * w[1..].iter().sum::<f64>() + tail;
        assert_relative_eq!(total, far_mass(1, 1.0, rho), max_relative = 1e-6);
    }

    #[test]
    fn dirichlet_matrix_sign_structure() {
        let g = Grid::new(SpatialDomain::interval(0.25), 128).unwrap();
        let a = OperatorMatrix::assemble(&g, 1.0, &QuadratureScheme::default()).unwrap();
        let m = a.matrix();
        assert!(a.symmetry_defect() <= 1e-12 * m.amax());
        for i in 0..a.size() {
            assert!(m[(i, i)] > 0.0);
            for j in 0..a.size() {
                if i != j {
                    assert!(m[(i, j)] <= 0.0);
                }
            }
        }
        for (r, t) in a.row_sums().iter().zip(a.tail()) {
            assert!(*r >= 0.0 && *t >= 0.0);
        }
    }

    #[test]
    fn two_dimensional_sign_structure() {
        let g = Grid::new(SpatialDomain::square(0.25), 20).unwrap();
        let a = OperatorMatrix::assemble(&g, 0.7, &QuadratureScheme::default()).unwrap();
        assert!(a.symmetry_defect() <= 1e-12 * a.matrix().amax());
        assert!(a.row_sums().iter().all(|&r| r >= 0.0));
    }

    #[test]
    fn apply_agrees_with_matrix_on_interior() {
        let g = Grid::new(SpatialDomain::interval(0.25), 48).unwrap();
        let scheme = QuadratureScheme::default();
        let op = FractionalOperator::new(&g, 0.9, &scheme).unwrap();
        let f = GridField::dirichlet_from_fn(&g, |x| (1.0 - x[0] * x[0]).powf(0.45));
        let full = op.apply(&f).unwrap();
        let via_matrix = op.assemble().apply(&f).unwrap();
        let ev = op.evaluation_matrix() * DVector::from_vec(f.interior_values());
        for &i in g.interior_indices() {
            assert_relative_eq!(full.values()[i], via_matrix.values()[i], max_relative = 1e-10);
        }
        for i in 0..g.len() {
            assert_relative_eq!(full.values()[i], ev[i], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Grid::new(SpatialDomain::interval(0.25), 32).unwrap();
        let z = GridField::zeros(&g);
        let scheme = QuadratureScheme::default();
        assert_eq!(apply_half_gradient(&z, 0.5, &scheme).unwrap().max_abs(), 0.0);
        assert_eq!(ds_magnitude(&z, 0.5, &scheme).unwrap().max_abs(), 0.0);
        assert!(FractionalOperator::new(&g, 2.0, &scheme).is_err());
    }

    #[test]
    fn cache_roundtrip_and_key_check() {
        let g = Grid::new(SpatialDomain::interval(0.25), 24).unwrap();
        let scheme = QuadratureScheme::default();
        let a = OperatorMatrix::assemble(&g, 1.0, &scheme).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("op.bin");
        a.save(&path).unwrap();
        let b = OperatorMatrix::load(&path, &g, 1.0, &scheme).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_eq!(a.tail(), b.tail());
        assert!(matches!(OperatorMatrix::load(&path, &g, 0.9, &scheme), Err(Error::CacheKey { .. })));
    }
}
