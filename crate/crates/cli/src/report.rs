//! Consolidation of run sidecars into one pass/fail table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::Serialize;
use serde_json::Value;

use crate::artifacts::Check;

/// File names written by [`write`]; skipped when collecting.
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub file: String,
    #[serde(flatten)]
    pub check: Check,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Row {
    pub tag: String,
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    /// JSON files that contributed at least one check.
    pub files: usize,
    pub rows: Vec<Row>,
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn failed(&self) -> usize {
        self.rows.iter().map(|r| r.failed).sum()
    }

    pub fn passed(&self) -> usize {
        self.rows.iter().map(|r| r.passed).sum()
    }

    pub fn all_pass(&self) -> bool {
        self.failed() == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tag,checks,passed,failed,status\n");
        for r in &self.rows {
            let status = if r.failed == 0 { "pass" } else { "fail" };
            let _ = writeln!(out, "{},{},{},{},{status}", r.tag, r.checks, r.passed, r.failed);
        }
        out
    }

    /// Aligned text table followed by the failing entries.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.tag.len()).max().unwrap_or(3).max(3);
        let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}  status\n", "tag", "checks", "passed", "failed");
        for r in &self.rows {
            let status = if r.failed == 0 { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {status}", r.tag, r.checks, r.passed, r.failed);
        }
        let _ = writeln!(out, "{} checks from {} files: {} passed, {} failed", self.entries.len(), self.files, self.passed(), self.failed());
        for e in self.entries.iter().filter(|e| !e.check.pass) {
            let _ = writeln!(out, "FAIL {} ({}): {}", e.check.tag, e.file, e.check.detail);
        }
        out
    }

    fn from_entries(files: usize, entries: Vec<Entry>) -> Self {
        let mut rows: BTreeMap<&str, Row> = BTreeMap::new();
        for e in &entries {
            let row = rows.entry(&e.check.tag).or_insert_with(|| Row { tag: e.check.tag.clone(), checks: 0, passed: 0, failed: 0 });
            row.checks += 1;
            if e.check.pass {
                row.passed += 1;
            } else {
                row.failed += 1;
            }
        }
        let rows = rows.into_values().collect();
        Self { files, rows, entries }
    }
}

/// Checks carried by one JSON document: a `checks` array of
/// `{tag, pass, detail}`, or a single record with `theorem_tag` and `pass`.
pub fn checks_in(doc: &Value) -> Vec<Check> {
    if let Some(list) = doc.get("checks").and_then(Value::as_array) {
        return list.iter().filter_map(|c| serde_json::from_value(c.clone()).ok()).collect();
    }
    match (doc.get("theorem_tag").and_then(Value::as_str), doc.get("pass").and_then(Value::as_bool)) {
        (Some(tag), Some(pass)) => vec![Check::new(tag, pass, "")],
        _ => Vec::new(),
    }
}

/// Reads every `*.json` below `dir`, skipping hidden entries and earlier reports.
pub fn collect(dir: &Path) -> anyhow::Result<Report> {
    if !dir.is_dir() {
        anyhow::bail!("{} is not a directory", dir.display());
    }
    let mut paths = Vec::new();
    walk(dir, &mut paths)?;
    paths.sort();
    let mut files = 0;
    let mut entries = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let Ok(doc) = serde_json::from_str::<Value>(&text) else { continue };
        let checks = checks_in(&doc);
        if checks.is_empty() {
            continue;
        }
        files += 1;
        let file = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().into_owned();
        entries.extend(checks.into_iter().map(|check| Entry { file: file.clone(), check }));
    }
    Ok(Report::from_entries(files, entries))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with('.') {
            continue;
        }
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            walk(&path, out)?;
        } else if name.ends_with(".json") && name != REPORT_JSON {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes `report.csv` and `report.json` into `dir` atomically.
pub fn write(dir: &Path, report: &Report) -> anyhow::Result<()> {
    let stage = crate::artifacts::Stage::new(dir, "")?;
    stage.write(REPORT_CSV, report.to_csv())?;
    stage.json(REPORT_JSON, report)?;
    stage.commit()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn put(dir: &Path, name: &str, v: Value) {
        std::fs::write(dir.join(name), serde_json::to_string(&v).unwrap()).unwrap();
    }

    #[test]
    fn empty_directory_is_an_empty_passing_table() {
        let dir = tempfile::tempdir().unwrap();
        let r = collect(dir.path()).unwrap();
        assert_eq!((r.files, r.rows.len(), r.entries.len()), (0, 0, 0));
        assert!(r.all_pass());
        assert_eq!(r.to_csv(), "tag,checks,passed,failed,status\n");
    }

    #[test]
    fn one_failing_slope_marks_the_table() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "a.json", json!({"theorem_tag": "smoothing", "pass": false, "measured": -0.3}));
        let r = collect(dir.path()).unwrap();
        assert!(!r.all_pass());
        assert_eq!(r.rows, vec![Row { tag: "smoothing".into(), checks: 1, passed: 0, failed: 1 }]);
        assert!(r.to_table().contains("FAIL smoothing (a.json)"));
    }

    #[test]
    fn mixed_directory_counts() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "a.json", json!({"checks": [
            {"tag": "kernel-mass", "pass": true, "detail": ""},
            {"tag": "kernel-semigroup", "pass": true, "detail": ""}]}));
        put(dir.path(), "b.json", json!({"checks": [{"tag": "kernel-mass", "pass": false, "detail": "x"}]}));
        put(dir.path(), "c.json", json!({"ladder": [0.0, 1.0]}));
        std::fs::write(dir.path().join("d.csv"), "x\n").unwrap();
        std::fs::write(dir.path().join("broken.json"), "{").unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        put(&dir.path().join("sub"), "e.json", json!({"theorem_tag": "level-set", "pass": true}));
        std::fs::create_dir(dir.path().join(".stage-x")).unwrap();
        put(&dir.path().join(".stage-x"), "f.json", json!({"theorem_tag": "level-set", "pass": false}));
        put(dir.path(), REPORT_JSON, json!({"checks": [{"tag": "z", "pass": false, "detail": ""}]}));
        let r = collect(dir.path()).unwrap();
        assert_eq!(r.files, 3);
        assert_eq!(r.entries.len(), 4);
        assert_eq!(r.passed() + r.failed(), r.entries.len());
        let mass = r.rows.iter().find(|x| x.tag == "kernel-mass").unwrap();
        assert_eq!((mass.checks, mass.passed, mass.failed), (2, 1, 1));
        assert_eq!(r.rows.iter().map(|x| x.tag.as_str()).collect::<Vec<_>>(), ["kernel-mass", "kernel-semigroup", "level-set"]);
    }

    #[test]
    fn missing_directory_is_an_error() {
        assert!(collect(Path::new("/nonexistent/fracheat")).is_err());
    }
}
