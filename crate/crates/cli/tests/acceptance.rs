//! Full-size acceptance run: one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use bismut_cli::{run, Check, ExperimentConfig, SuiteName};

fn describe(c: &Check) -> String {
    let r = &c.row;
    format!(
        "{}@{} q={} value={:.4e} se={:.2e} target={:.4e} [{}]",
        r.formula_id, r.manifold, r.q, r.value, r.stderr, r.target, c.criterion
    )
}

fn suite_checks(suite: SuiteName) -> Result<Vec<Check>, String> {
    let out = run(&ExperimentConfig::new(suite)).map_err(|e| e.to_string())?;
    Ok(out.suites.into_iter().flat_map(|s| s.checks).collect())
}

fn criterion(n: usize, suite: SuiteName) -> bool {
    let start = Instant::now();
    let (ok, detail) = match suite_checks(suite) {
        Ok(checks) => {
            let ok = !checks.is_empty() && checks.iter().all(|c| c.row.pass);
            let parts: Vec<String> = checks
                .iter()
                .map(|c| format!("{} {}", if c.row.pass { "ok" } else { "FAILED" }, describe(c)))
                .collect();
            (ok, parts.join("; "))
        }
        Err(e) => (false, format!("error: {e}")),
    };
    report(n, suite.name(), ok, &detail, start);
    ok
}

fn report(n: usize, name: &str, ok: bool, detail: &str, start: Instant) {
    println!(
        "{} criterion {n} ({name}, {:.0} s): {detail}",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
}

fn csv_with_threads(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<u8>, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| run(cfg).and_then(|o| o.csv_bytes())).map_err(|e| e.to_string())
}

fn determinism() -> bool {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::new(SuiteName::All);
    cfg.n_paths = Some(3000);
    cfg.h = Some(5e-3);
    let mut detail = Vec::new();
    let mut ok = true;
    let base = csv_with_threads(&cfg, 1);
    for threads in [2, 4, 7] {
        let same = match (&base, csv_with_threads(&cfg, threads)) {
            (Ok(a), Ok(b)) => a == &b,
            _ => false,
        };
        ok &= same;
        detail.push(format!("1 vs {threads} threads {}", if same { "identical" } else { "DIFFER" }));
    }
    if let Ok(bytes) = &base {
        detail.push(format!("{} bytes, all suites, N=3000", bytes.len()));
    }
    report(9, "all suites", ok, &detail.join(", "), start);
    ok
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let plan = [
        (1, SuiteName::BismutQ0),
        (2, SuiteName::BismutQ1),
        (3, SuiteName::BismutFlow),
        (4, SuiteName::Bracket),
        (5, SuiteName::Ibp),
        (6, SuiteName::H2identity),
        (7, SuiteName::H2divergence),
        (8, SuiteName::Liegroup),
    ];
    let mut all = true;
    for (n, suite) in plan {
        all &= criterion(n, suite);
    }
    all &= determinism();
    all &= criterion(10, SuiteName::Filtering);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
