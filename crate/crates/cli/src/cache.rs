//! Operator and spectral caches keyed by content hash.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use fracheat::kernel::spectral_decompose;
use fracheat::{Grid, OperatorMatrix, QuadratureScheme, SpectralDecomposition};

use crate::manifest::CachePolicy;

/// Environment variable naming the default cache directory.
pub const CACHE_DIR_ENV: &str = "FRACHEAT_CACHE_DIR";

/// Fallback cache directory, relative to the working directory.
pub const DEFAULT_CACHE_DIR: &str = ".fracheat-cache";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Hit,
    Built,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
    policy: CachePolicy,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>, policy: CachePolicy) -> Self {
        Self { dir: dir.into(), policy }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn policy(&self) -> CachePolicy {
        self.policy
    }

    pub fn operator_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.op"))
    }

    pub fn spectrum_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.spec"))
    }

    pub fn operator(&self, grid: &Arc<Grid>, order: f64, scheme: &QuadratureScheme) -> anyhow::Result<(OperatorMatrix, Status)> {
        let path = self.operator_path(&OperatorMatrix::cache_key_for(grid, order, scheme));
        if self.policy == CachePolicy::Use && path.exists() {
            let a = OperatorMatrix::load(&path, grid, order, scheme)
                .with_context(|| format!("reading {}; rerun with --cache rebuild", path.display()))?;
            return Ok((a, Status::Hit));
        }
        let a = OperatorMatrix::assemble(grid, order, scheme)?;
        self.store(&path, |p| a.save(p))?;
        Ok((a, Status::Built))
    }

    pub fn spectrum(&self, a: &Arc<OperatorMatrix>) -> anyhow::Result<(SpectralDecomposition, Status)> {
        let path = self.spectrum_path(&a.cache_key());
        if self.policy == CachePolicy::Use && path.exists() {
            let dec = SpectralDecomposition::load(&path, a)
                .with_context(|| format!("reading {}; rerun with --cache rebuild", path.display()))?;
            return Ok((dec, Status::Hit));
        }
        let dec = spectral_decompose(a)?;
        self.store(&path, |p| dec.save(p))?;
        Ok((dec, Status::Built))
    }

    /// Writes through a temporary file in the cache directory, then renames.
    fn store(&self, path: &Path, save: impl FnOnce(&Path) -> fracheat::Result<()>) -> anyhow::Result<()> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating cache directory {}", self.dir.display()))?;
        let tmp = tempfile::Builder::new().prefix(".partial-").tempfile_in(&self.dir)?;
        save(tmp.path())?;
        tmp.persist(path).with_context(|| format!("moving cache file into {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracheat::SpatialDomain;

    fn grid() -> Arc<Grid> {
        Grid::new(SpatialDomain::interval(0.25), 24).unwrap()
    }

    #[test]
    fn second_lookup_hits_and_matches() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path(), CachePolicy::Use);
        let scheme = QuadratureScheme::default();
        let (a, first) = cache.operator(&grid(), 1.0, &scheme).unwrap();
        let (b, second) = cache.operator(&grid(), 1.0, &scheme).unwrap();
        assert_eq!((first, second), (Status::Built, Status::Hit));
        assert_eq!(a.matrix(), b.matrix());
        let a = Arc::new(a);
        let (d1, s1) = cache.spectrum(&a).unwrap();
        let (d2, s2) = cache.spectrum(&a).unwrap();
        assert_eq!((s1, s2), (Status::Built, Status::Hit));
        assert_eq!(d1.values(), d2.values());
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with('.'))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn rebuild_ignores_existing_files() {
        let dir = tempfile::tempdir().unwrap();
        let scheme = QuadratureScheme::default();
        Cache::new(dir.path(), CachePolicy::Use).operator(&grid(), 1.0, &scheme).unwrap();
        let (_, status) = Cache::new(dir.path(), CachePolicy::Rebuild).operator(&grid(), 1.0, &scheme).unwrap();
        assert_eq!(status, Status::Built);
    }

    #[test]
    fn different_orders_use_different_files() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path(), CachePolicy::Use);
        let scheme = QuadratureScheme::default();
        cache.operator(&grid(), 1.0, &scheme).unwrap();
        let (_, status) = cache.operator(&grid(), 0.8, &scheme).unwrap();
        assert_eq!(status, Status::Built);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
