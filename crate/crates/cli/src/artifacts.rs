//! Staged output: artifacts are written to a hidden directory inside the
//! target and renamed into place only after the whole run succeeded.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// One pass/fail verdict, keyed by a descriptive tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub tag: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(tag: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { tag: tag.into(), pass, detail: detail.into() }
    }
}

pub struct Stage {
    tmp: tempfile::TempDir,
    target: PathBuf,
    prefix: String,
}

impl Stage {
    pub fn new(target: &Path, prefix: &str) -> std::io::Result<Self> {
        std::fs::create_dir_all(target)?;
        let tmp = tempfile::Builder::new().prefix(".stage-").tempdir_in(target)?;
        Ok(Self { tmp, target: target.to_path_buf(), prefix: prefix.to_string() })
    }

    /// Staging directory, for writers that take a directory.
    pub fn dir(&self) -> &Path {
        self.tmp.path()
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// `<prefix><suffix>`, the name an artifact receives.
    pub fn name(&self, suffix: &str) -> String {
        format!("{}{suffix}", self.prefix)
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.tmp.path().join(self.name(suffix))
    }

    pub fn write(&self, suffix: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        std::fs::write(self.path(suffix), contents)
    }

    pub fn json<T: Serialize>(&self, suffix: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(suffix, text)
    }

    /// Writes a CSV table with the given header.
    pub fn table(&self, suffix: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        let mut out = header.join(",");
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        self.write(suffix, out)
    }

    /// Moves every staged file into the target directory, sorted by name.
    pub fn commit(self) -> std::io::Result<Vec<PathBuf>> {
        let mut names: Vec<_> = std::fs::read_dir(self.tmp.path())?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()?;
        names.sort();
        let mut out = Vec::with_capacity(names.len());
        for name in names {
            let dest = self.target.join(&name);
            std::fs::rename(self.tmp.path().join(&name), &dest)?;
            out.push(dest);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_lands_before_commit() {
        let dir = tempfile::tempdir().unwrap();
        let stage = Stage::new(dir.path(), "run").unwrap();
        stage.write(".csv", "a\n1\n").unwrap();
        stage.json(".json", &Check::new("x", true, "")).unwrap();
        let visible = |p: &Path| {
            std::fs::read_dir(p).unwrap().filter_map(|e| e.ok()).filter(|e| !e.file_name().to_string_lossy().starts_with('.')).count()
        };
        assert_eq!(visible(dir.path()), 0);
        let files = stage.commit().unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(visible(dir.path()), 2);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn dropped_stage_leaves_no_trace() {
        let dir = tempfile::tempdir().unwrap();
        {
            let stage = Stage::new(dir.path(), "run").unwrap();
            stage.write(".csv", "x").unwrap();
        }
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn table_format() {
        let dir = tempfile::tempdir().unwrap();
        let stage = Stage::new(dir.path(), "t").unwrap();
        stage.table(".csv", &["a", "b"], &[vec![1.0, 0.5], vec![2.0, f64::INFINITY]]).unwrap();
        assert_eq!(std::fs::read_to_string(stage.path(".csv")).unwrap(), "a,b\n1,0.5\n2,inf\n");
    }
}
