//! Dirichlet heat kernel, Green function and the free-space kernel, all
//! realized through a full eigendecomposition of the Dirichlet matrix.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fracop::OperatorMatrix;
use crate::grid::{Grid, GridField};
use crate::quad::GaussRule;
use crate::special::bessel_j0;

/// Modes with `e^{−λt}` below this are dropped from kernel sums.
pub const TRUNCATION: f64 = 1e-14;

/// Eigenpairs of a Dirichlet matrix, eigenvectors scaled to be orthonormal
/// in the `h^N`-weighted inner product.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    operator: Arc<OperatorMatrix>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// Full dense decomposition; fails if the matrix is not positive definite.
pub fn spectral_decompose(a: &Arc<OperatorMatrix>) -> Result<SpectralDecomposition> {
    let m = a.size();
    let eig = SymmetricEigen::try_new(a.matrix().clone(), f64::EPSILON, 1000 * m.max(10))
        .ok_or(Error::Eigen { residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let scale = a.grid().cell_measure().powf(-0.5);
    let mut vectors = DMatrix::zeros(m, m);
    let mut values = Vec::with_capacity(m);
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned() * scale;
        // deterministic sign: positive mean, or positive leading entry if the mean vanishes
        let sum = col.sum();
        let lead = col.iter().copied().find(|v| v.abs() > 1e-8 * col.amax()).unwrap_or(1.0);
        let flip = if sum.abs() > 1e-10 * col.amax() * m as f64 { sum < 0.0 } else { lead < 0.0 };
        if flip {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
        values.push(eig.eigenvalues[src]);
    }
    let dec = SpectralDecomposition { operator: a.clone(), values, vectors };
    let residual = dec.max_residual();
    if !(residual <= 1e-6) {
        return Err(Error::Eigen { residual });
    }
    if !(dec.values[0] > 0.0) {
        return Err(Error::Refused(format!(
            "matrix is not positive definite (smallest eigenvalue {})",
            dec.values[0]
        )));
    }
    Ok(dec)
}

impl SpectralDecomposition {
    pub fn operator(&self) -> &Arc<OperatorMatrix> {
        &self.operator
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.operator.grid()
    }

    /// Eigenvalues in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Eigenvectors as columns, one value per interior node.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lambda1(&self) -> f64 {
        self.values[0]
    }

    /// Largest relative residual `|Aφ_k − λ_k φ_k| / λ_k` over all modes.
    pub fn max_residual(&self) -> f64 {
        let av = self.operator.matrix() * &self.vectors;
        (0..self.len())
            .map(|k| {
                let r = av.column(k) - self.vectors.column(k) * self.values[k];
                r.amax() / (self.values[k].abs() * self.vectors.column(k).amax()).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of the weighted Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors * self.grid().cell_measure();
        (gram - DMatrix::identity(self.len(), self.len())).amax()
    }

    pub fn eigenfunction(&self, k: usize) -> GridField {
        GridField::from_interior(self.grid(), self.vectors.column(k).as_slice()).expect("eigenvector fits grid")
    }

    /// Coefficients `⟨u, φ_k⟩` of interior values `u`.
    pub fn project(&self, u: &[f64]) -> DVector<f64> {
        self.vectors.tr_mul(&DVector::from_column_slice(u)) * self.grid().cell_measure()
    }

    /// Interior values `Σ_k c_k φ_k`.
    pub fn synthesize(&self, c: &DVector<f64>) -> Vec<f64> {
        (&self.vectors * c).as_slice().to_vec()
    }

    /// `e^{−tA} u` for interior values `u`.
    pub fn evolve(&self, u: &[f64], t: f64) -> Vec<f64> {
        let mut c = self.project(u);
        for (k, v) in c.iter_mut().enumerate() {
            *v *= (-self.values[k] * t).exp();
        }
        self.synthesize(&c)
    }

    fn spectral_matrix(&self, weight: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let keep: Vec<(usize, f64)> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &l)| (k, weight(l)))
            .filter(|&(_, w)| w >= TRUNCATION)
            .collect();
        let m = self.len();
        let mut scaled = DMatrix::zeros(m, keep.len());
        let mut plain = DMatrix::zeros(m, keep.len());
        for (c, &(k, w)) in keep.iter().enumerate() {
            scaled.set_column(c, &(self.vectors.column(k) * w));
            plain.set_column(c, &self.vectors.column(k));
        }
        let mut out = scaled * plain.transpose();
        let sym = (&out + out.transpose()) * 0.5;
        out.copy_from(&sym);
        out
    }

    /// Writes eigenvalues and eigenvectors, keyed by the operator cache key.
    pub fn save(&self, path: &Path) -> Result<()> {
        let m = self.len();
        let mut buf = Vec::with_capacity(8 * (m * m + m + 1) + 80);
        buf.extend_from_slice(SPECTRAL_MAGIC);
        buf.extend_from_slice(self.operator.cache_key().as_bytes());
        buf.extend_from_slice(&(m as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.vectors.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        file.sync_all()?;
        Ok(())
    }

    /// Loads a decomposition saved for exactly this operator.
    pub fn load(path: &Path, a: &Arc<OperatorMatrix>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let expected = a.cache_key();
        let key_end = SPECTRAL_MAGIC.len() + expected.len();
        if buf.len() < key_end + 8 || &buf[..SPECTRAL_MAGIC.len()] != SPECTRAL_MAGIC {
            return Err(Error::Malformed(format!("{} is not a spectral cache", path.display())));
        }
        let found = String::from_utf8_lossy(&buf[SPECTRAL_MAGIC.len()..key_end]).into_owned();
        if found != expected {
            return Err(Error::CacheKey { expected, found });
        }
        let words: Vec<f64> = buf[key_end..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let m = words.first().map(|w| w.to_bits() as usize).unwrap_or(0);
        if m != a.size() || words.len() != 1 + m + m * m {
            return Err(Error::Malformed("spectral cache has wrong size".into()));
        }
        Ok(Self {
            operator: a.clone(),
            values: words[1..=m].to_vec(),
            vectors: DMatrix::from_column_slice(m, m, &words[1 + m..]),
        })
    }
}

const SPECTRAL_MAGIC: &[u8; 8] = b"FHSPEC01";

/// `P(x_i, y_j, t)` over interior node pairs.
#[derive(Debug, Clone)]
pub struct HeatKernelField {
    grid: Arc<Grid>,
    t: f64,
    values: DMatrix<f64>,
}

/// `P(t) = Σ_k e^{−λ_k t} φ_k ⊗ φ_k`, dropping modes with `e^{−λ_k t} < 1e−14`.
pub fn heat_kernel(dec: &SpectralDecomposition, t: f64) -> Result<HeatKernelField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time t = {t} must be positive")));
    }
    Ok(HeatKernelField {
        grid: dec.grid().clone(),
        t,
        values: dec.spectral_matrix(|l| (-l * t).exp()),
    })
}

impl HeatKernelField {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Rows index x, columns index y, both over interior nodes.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `∫_Ω P(x, y_j, t) dx`.
    pub fn column_mass(&self, j: usize) -> f64 {
        self.values.column(j).sum() * self.grid.cell_measure()
    }

    /// CSV with columns i, j, x, y, t, value (2D points as two columns each).
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let idx = g.interior_indices();
        let mut out = String::from(if g.dim() == 1 { "i,j,x,y,t,value\n" } else { "i,j,x1,x2,y1,y2,t,value\n" });
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let (x, y, v) = (g.point(i), g.point(j), self.values[(a, b)]);
                let _ = if g.dim() == 1 {
                    writeln!(out, "{a},{b},{},{},{},{v}", x[0], y[0], self.t)
                } else {
                    writeln!(out, "{a},{b},{},{},{},{},{},{v}", x[0], x[1], y[0], y[1], self.t)
                };
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `𝒢(x_i, y_j)` over interior node pairs.
#[derive(Debug, Clone)]
pub struct GreenField {
    grid: Arc<Grid>,
    values: DMatrix<f64>,
}

/// `G = Σ_k λ_k^{−1} φ_k ⊗ φ_k`, i.e. `A G = I / h^N`.
pub fn green_function(dec: &SpectralDecomposition) -> GreenField {
    GreenField {
        grid: dec.grid().clone(),
        values: dec.spectral_matrix(|l| 1.0 / l),
    }
}

impl GreenField {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
}

/// Value of the free-space kernel with its reliability flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeSpaceValue {
    pub value: f64,
    /// False when two quadrature orders disagree by more than 1e−6 or the
    /// neglected frequency tail exceeds 1e−6.
    pub converged: bool,
}

/// Free-space kernel `(2π)^{−N} ∫ e^{i x·ξ} e^{−t|ξ|^{2s}} dξ` by radial
/// inversion: a cosine transform in 1D and a Hankel transform of order zero in 2D.
pub fn free_space_kernel(x: &[f64], t: f64, s: f64) -> Result<FreeSpaceValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("time t = {t} must be positive")));
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(invalid(format!("s = {s} outside (0, 1]")));
    }
    let dim = x.len();
    if !(1..=2).contains(&dim) {
        return Err(invalid("point must have one or two coordinates"));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    // e^{−tΞ^{2s}} = e^{−40} bounds the neglected tail
    let cutoff = (40.0 / t).powf(0.5 / s);
    let integrand = |xi: f64| {
        let damp = (-t * xi.powf(2.0 * s)).exp();
        if dim == 1 {
            (r * xi).cos() * damp
        } else {
            bessel_j0(r * xi) * damp * xi
        }
    };
    // geometric panels resolve the cusp of ξ^{2s} at the origin; uniform
    // panels no wider than half an oscillation period cover the rest
    let decay = t.powf(-0.5 / s);
    let width = if r > 0.0 { (std::f64::consts::PI / r).min(decay) } else { decay };
    let first = width.min(cutoff);
    let mut breaks = vec![0.0];
    let mut b = 1e-12 * first;
    while b < first {
        breaks.push(b);
        b *= 2.0;
    }
    let mut b = first;
    while b < cutoff {
        breaks.push(b);
        b += width;
    }
    breaks.push(cutoff);
    let (lo, hi) = (GaussRule::new(12), GaussRule::new(20));
    let (a, c): (f64, f64) = breaks
        .par_windows(2)
        .map(|w| (lo.integrate(w[0], w[1], integrand), hi.integrate(w[0], w[1], integrand)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |p, q| (p.0 + q.0, p.1 + q.1));
    let norm = if dim == 1 { std::f64::consts::PI } else { 2.0 * std::f64::consts::PI };
    let tail = (-40.0f64).exp() * cutoff.powi(dim as i32 - 1) / norm;
    Ok(FreeSpaceValue {
        value: c / norm,
        converged: (a - c).abs() / norm <= 1e-6 && tail <= 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracop::QuadratureScheme;
    use crate::grid::SpatialDomain;

    fn decomposition(n: usize, order: f64) -> SpectralDecomposition {
        let g = Grid::new(SpatialDomain::interval(0.25), n).unwrap();
        let a = Arc::new(OperatorMatrix::assemble(&g, order, &QuadratureScheme::default()).unwrap());
        spectral_decompose(&a).unwrap()
    }

    #[test]
    fn eigenpairs_are_orthonormal_and_sorted() {
        let dec = decomposition(64, 1.0);
        assert!(dec.lambda1() > 0.0);
        assert!(dec.values().windows(2).all(|w| w[0] <= w[1]));
        assert!(dec.orthonormality_defect() < 1e-8);
        assert!(dec.max_residual() < 1e-6);
    }

    #[test]
    fn kernel_is_symmetric_and_a_semigroup() {
        let dec = decomposition(64, 1.0);
        let (t, tau) = (0.07, 0.11);
        let p = heat_kernel(&dec, t + tau).unwrap();
        let pt = heat_kernel(&dec, t).unwrap();
        let ptau = heat_kernel(&dec, tau).unwrap();
        assert_eq!(p.values(), &p.values().transpose());
        let prod = pt.values() * ptau.values() * dec.grid().cell_measure();
        assert!((prod - p.values()).amax() <= 1e-8 * p.values().amax());
        assert!(heat_kernel(&dec, 0.0).is_err());
    }

    #[test]
    fn green_function_inverts_the_matrix() {
        let dec = decomposition(64, 1.0);
        let g = green_function(&dec);
        let a = dec.operator().matrix();
        let m = a.nrows();
        let prod = a * g.values() * dec.grid().cell_measure();
        assert!((prod - DMatrix::identity(m, m)).amax() < 1e-8);
        assert!(g.values().min() >= 0.0);
    }

    #[test]
    fn poisson_kernel_anchor() {
        for (x, t) in [(0.0, 1.0), (1.0, 1.0), (2.0, 0.5), (-1.3, 2.0)] {
            let v = free_space_kernel(&[x], t, 0.5).unwrap();
            let exact = t / (std::f64::consts::PI * (t * t + x * x));
            assert!(v.converged);
            assert!((v.value - exact).abs() < 1e-8, "{x} {t}: {} vs {exact}", v.value);
        }
    }

    #[test]
    fn gaussian_limit_in_two_dimensions() {
        // s = 1: (4πt)^{−1} e^{−r²/4t}
        let t = 0.3;
        let r: f64 = 0.7;
        let v = free_space_kernel(&[r, 0.0], t, 1.0).unwrap();
        let exact = (-r * r / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t);
        assert!((v.value - exact).abs() < 1e-9, "{} vs {exact}", v.value);
    }

    #[test]
    fn spectral_cache_roundtrip() {
        let dec = decomposition(24, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.bin");
        dec.save(&path).unwrap();
        let back = SpectralDecomposition::load(&path, dec.operator()).unwrap();
        assert_eq!(back.values(), dec.values());
        assert_eq!(back.vectors(), dec.vectors());
    }
}
