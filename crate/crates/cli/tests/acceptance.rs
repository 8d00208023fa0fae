//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! The default manifest suite is executed twice through the binary with
//! fresh caches; run-based criteria read the resulting sidecars, and the
//! remaining properties are computed through the library.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fracheat::fracop::FractionalOperator;
use fracheat::kernel::spectral_decompose;
use fracheat::solver::{solve_duhamel, solve_implicit_euler, Source};
use fracheat::{Grid, GridField, Ladder, OperatorMatrix, QuadratureScheme, SourceSpec, SpatialDomain};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_fracheat");

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// One execution of the manifest suite.
struct SuiteRun {
    out: PathBuf,
    sidecars: BTreeMap<String, Value>,
    times: BTreeMap<String, Duration>,
    exits: BTreeMap<String, Option<i32>>,
    total: Duration,
}

impl SuiteRun {
    fn execute(manifests: &[PathBuf], root: &Path) -> Self {
        let out = root.join("out");
        let cache = root.join("cache");
        let (mut sidecars, mut times, mut exits) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
        let start = Instant::now();
        for m in manifests {
            let stem = m.file_stem().unwrap().to_string_lossy().into_owned();
            let dir = out.join(&stem);
            let t0 = Instant::now();
            let o = Command::new(BIN)
                .args(["run", m.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--cache-dir", cache.to_str().unwrap()])
                .output()
                .expect("binary runs");
            times.insert(stem.clone(), t0.elapsed());
            exits.insert(stem.clone(), o.status.code());
            if !o.status.success() {
                eprintln!("{stem}: {}", String::from_utf8_lossy(&o.stderr));
            }
            let text: Value = serde_json::from_str(&std::fs::read_to_string(m).unwrap()).unwrap();
            let name = text["name"].as_str().map(str::to_string).unwrap_or_else(|| stem.clone());
            if let Ok(s) = std::fs::read_to_string(dir.join(format!("{name}.json"))) {
                sidecars.insert(stem, serde_json::from_str(&s).unwrap());
            }
        }
        Self { out, sidecars, times, exits, total: start.elapsed() }
    }

    fn checks(&self, stem: &str) -> Vec<(String, bool, String)> {
        self.sidecars
            .get(stem)
            .and_then(|s| s["checks"].as_array())
            .map(|a| {
                a.iter()
                    .map(|c| (c["tag"].as_str().unwrap_or("").to_string(), c["pass"] == true, c["detail"].as_str().unwrap_or("").to_string()))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// All named checks of one manifest pass; the detail lists each.
    fn require(&self, stem: &str, tags: &[&str]) -> Outcome {
        let checks = self.checks(stem);
        let mut pass = self.exits.get(stem) == Some(&Some(0));
        let mut parts = Vec::new();
        for tag in tags {
            match checks.iter().find(|c| c.0 == *tag) {
                Some((_, ok, detail)) => {
                    pass &= *ok;
                    parts.push(format!("{tag} {} ({detail})", if *ok { "ok" } else { "failed" }));
                }
                None => {
                    pass = false;
                    parts.push(format!("{tag} missing from {stem}"));
                }
            }
        }
        Outcome::new(pass, parts.join("; "))
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let pass = parts.iter().all(|o| o.pass);
    Outcome::new(pass, parts.into_iter().map(|o| o.detail).collect::<Vec<_>>().join(" | "))
}

fn plane_wave() -> Outcome {
    let start = Instant::now();
    let g = Grid::new(SpatialDomain::new(1, vec![-32.0], vec![32.0], 1e-3).unwrap(), 256).unwrap();
    let mut center: Vec<usize> = (0..g.len()).collect();
    center.sort_by(|&a, &b| g.point(a)[0].abs().total_cmp(&g.point(b)[0].abs()));
    center.truncate(4);
    let mut worst = 0.0f64;
    for s in [0.3, 0.5, 0.75] {
        let op = FractionalOperator::new(&g, 2.0 * s, &QuadratureScheme::default()).unwrap();
        for xi in [1.0f64, 2.0] {
            let f = GridField::from_fn(&g, |x| (xi * x[0]).cos());
            let out = op.apply(&f).unwrap();
            for &i in &center {
                let exact = xi.powf(2.0 * s) * f.values()[i];
                worst = worst.max((out.values()[i] / exact - 1.0).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst < 0.03 && elapsed < Duration::from_secs(30),
        format!("max relative symbol error {worst:.4} (limit 0.03) in {:.1}s (limit 30s)", elapsed.as_secs_f64()),
    )
}

fn refusal(root: &Path) -> Outcome {
    let m = root.join("green-small-order.json");
    std::fs::write(
        &m,
        r#"{ "kind": "certify", "name": "green-small", "grid": { "nodes_per_axis": 64 }, "exponents": { "s": 0.25 }, "params": { "target": "green-gradient" } }"#,
    )
    .unwrap();
    let out = root.join("refused");
    let o = Command::new(BIN)
        .args(["run", m.to_str().unwrap(), "--out", out.to_str().unwrap(), "--cache-dir", root.join("cache-refusal").to_str().unwrap()])
        .output()
        .unwrap();
    let empty = std::fs::read_dir(&out).map(|d| d.count() == 0).unwrap_or(true);
    Outcome::new(o.status.code() == Some(3) && empty, format!("s = 0.25 green certificate exit {:?}, artifacts written {}", o.status.code(), !empty))
}

fn regimes(run: &SuiteRun) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (stem, want) in [("03-certify-low", "low"), ("04-certify-low-rho", "low"), ("05-certify-high", "high")] {
        let got = run.sidecars.get(stem).map(|s| s["result"]["certificate"]["regime"].clone()).unwrap_or(Value::Null);
        let t = run.times.get(stem).copied().unwrap_or(Duration::MAX);
        let ok = got == want && t < Duration::from_secs(300);
        pass &= ok;
        parts.push(format!("{stem} regime {got} in {:.1}s", t.as_secs_f64()));
    }
    Outcome::new(pass, parts.join(", "))
}

fn linearity_and_comparison() -> Outcome {
    let g = Grid::new(SpatialDomain::interval(0.25), 48).unwrap();
    let a = OperatorMatrix::assemble(&g, 1.2, &QuadratureScheme::default()).unwrap();
    let dec = spectral_decompose(&Arc::new(a)).unwrap();
    let m = g.interior_len();
    let ladder = Ladder::uniform(0.3, 6).unwrap();
    let cases = 16;
    let mut runner = TestRunner::new_with_rng(Config { cases, failure_persistence: None, ..Config::default() }, TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]));
    let strategy = (
        proptest::collection::vec(0.0f64..1.0, m),
        proptest::collection::vec(0.0f64..1.0, m),
        -2.0f64..2.0,
        -2.0f64..2.0,
    );
    let result = runner.run(&strategy, |(u, v, a, b)| {
        let fu = GridField::from_interior(&g, &u).unwrap();
        let fv = GridField::from_interior(&g, &v).unwrap();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let hmix: Vec<f64> = v.iter().zip(&u).map(|(x, y)| a * x + b * y).collect();
        let w1 = solve_duhamel(&dec, &SourceSpec::new(Source::Steady(v.clone()), fu.clone()), &ladder).unwrap();
        let w2 = solve_duhamel(&dec, &SourceSpec::new(Source::Steady(u.clone()), fv), &ladder).unwrap();
        let w12 = solve_duhamel(&dec, &SourceSpec::new(Source::Steady(hmix), GridField::from_interior(&g, &mix).unwrap()), &ladder).unwrap();
        let mut gap = 0.0f64;
        for ((x, y), z) in w1.fields().iter().zip(w2.fields()).zip(w12.fields()) {
            for i in 0..g.len() {
                gap = gap.max((z.values()[i] - (a * x.values()[i] + b * y.values()[i])).abs());
            }
        }
        prop_assert!(gap < 1e-10, "linearity gap {gap}");
        let hi: Vec<f64> = u.iter().zip(&v).map(|(x, y)| x + y).collect();
        let lo = SourceSpec::new(Source::Steady(v.clone()), fu.clone());
        let up = SourceSpec::new(Source::Steady(hi.clone()), GridField::from_interior(&g, &hi).unwrap());
        let pairs = [
            (solve_duhamel(&dec, &lo, &ladder).unwrap(), solve_duhamel(&dec, &up, &ladder).unwrap()),
            (solve_implicit_euler(dec.operator(), &lo, &ladder).unwrap(), solve_implicit_euler(dec.operator(), &up, &ladder).unwrap()),
        ];
        let mut excess = f64::NEG_INFINITY;
        for (l, h) in &pairs {
            for (x, y) in l.fields().iter().zip(h.fields()) {
                for (p, q) in x.values().iter().zip(y.values()) {
                    excess = excess.max(p - q);
                }
            }
        }
        prop_assert!(excess <= 1e-10, "comparison violated by {excess}");
        Ok(())
    });
    let detail = match &result {
        Ok(()) => format!("{cases} seeded cases, linearity and comparison within 1e-10"),
        Err(e) => format!("seeded property failed: {e}"),
    };
    Outcome::new(result.is_ok(), detail)
}

fn determinism(first: &SuiteRun, second: &SuiteRun) -> Outcome {
    let list = |root: &Path| {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
                let p = e.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };
    let (a, b) = (list(&first.out), list(&second.out));
    let mut differing = Vec::new();
    for f in &a {
        if std::fs::read(first.out.join(f)).ok() != std::fs::read(second.out.join(f)).ok() {
            differing.push(f.display().to_string());
        }
    }
    let failed_runs: Vec<&String> = first.exits.iter().filter(|(_, c)| **c != Some(0)).map(|(k, _)| k).collect();
    let limit = Duration::from_secs(30 * 60);
    let pass = a == b && differing.is_empty() && failed_runs.is_empty() && first.total < limit && second.total < limit;
    Outcome::new(
        pass,
        format!(
            "{} manifests, {} files, {} differing, same file set {}, unsuccessful runs {:?}, wall time {:.1}s and {:.1}s (limit 1800s)",
            first.exits.len(),
            a.len(),
            differing.len(),
            a == b,
            failed_runs,
            first.total.as_secs_f64(),
            second.total.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().unwrap();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests");
    let mut manifests: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("default manifests")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    manifests.sort();

    let c1 = plane_wave();
    let first = SuiteRun::execute(&manifests, &root.path().join("first"));
    let second = SuiteRun::execute(&manifests, &root.path().join("second"));
    let run = &first;

    let results = [
        c1,
        run.require("02-kernel", &["free-space-anchor", "kernel-symmetry", "kernel-semigroup", "kernel-mass"]),
        all(vec![
            run.require("03-certify-low", &["kernel-gradient"]),
            run.require("04-certify-low-rho", &["kernel-gradient"]),
            run.require("05-certify-high", &["kernel-gradient"]),
            regimes(run),
        ]),
        all(vec![run.require("06-certify-green", &["green-gradient"]), refusal(root.path())]),
        run.require("15-regfit-smoothing", &["smoothing", "weighted-smoothing", "gradient-smoothing"]),
        all(vec![
            run.require("10-hypersing-anchor", &["hyper-singular-anchor"]),
            run.require("11-hypersing-flat", &["hyper-singular-scaling"]),
            run.require("12-hypersing-spike", &["hyper-singular-scaling"]),
            run.require("13-hypersing-divergence", &["hyper-singular-divergence"]),
        ]),
        all(vec![run.require("09-solve-first-mode", &["solver-cross-validation"]), linearity_and_comparison()]),
        all(vec![
            run.require("17-regfit-difference-quotient", &["difference-quotient"]),
            run.require("19-regfit-level-set", &["level-set"]),
        ]),
        all(vec![
            run.require("20-kpz-zero", &["kpz-fixed-point"]),
            run.require("21-kpz-reference", &["kpz-fixed-point"]),
            run.require("23-kpz-initial-datum", &["kpz-initial-datum"]),
        ]),
        determinism(&first, &second),
    ];

    // Both smoothing checks in the suite share a tag; every instance must pass.
    let smoothing_all = run.checks("15-regfit-smoothing").iter().all(|c| c.1);
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        let pass = if i == 4 { r.pass && smoothing_all } else { r.pass };
        if !pass {
            failed += 1;
        }
        println!("criterion {}: {}: {}", i + 1, if pass { "PASS" } else { "FAIL" }, r.detail);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
