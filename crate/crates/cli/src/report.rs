use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{Resolved, Tolerances};
use crate::error::CliError;

/// One row of the results table, in its fixed column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub formula_id: String,
    pub manifold: String,
    pub q: usize,
    pub t: f64,
    pub h: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub value: f64,
    pub stderr: f64,
    pub target: f64,
    pub target_provenance: String,
    pub pass: bool,
}

/// A row together with the rule that decided `pass`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    #[serde(flatten)]
    pub row: CheckRow,
    pub criterion: String,
}

#[derive(Serialize)]
struct Record<'a> {
    suite: &'a str,
    config_digest: &'a str,
    #[serde(flatten)]
    check: &'a Check,
    tolerances: &'a Tolerances,
    overrides: &'a [String],
}

/// Checks of one suite run.
#[derive(Clone, Debug)]
pub struct SuiteOutput {
    pub config: Resolved,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub digest: String,
    pub suites: Vec<SuiteOutput>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.suites.iter().flat_map(|s| &s.checks).all(|c| c.row.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in self.suites.iter().flat_map(|s| &s.checks) {
            w.serialize(&c.row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn jsonl_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        for s in &self.suites {
            for c in &s.checks {
                let rec = Record {
                    suite: s.config.suite.name(),
                    config_digest: &self.digest,
                    check: c,
                    tolerances: &s.config.tolerances,
                    overrides: &s.config.overrides,
                };
                serde_json::to_writer(&mut out, &rec).map_err(|e| CliError::Io(e.to_string()))?;
                out.push(b'\n');
            }
        }
        Ok(out)
    }

    /// Writes `results.csv` and `results.jsonl` into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let io = |what: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", what.display()));
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, bytes) in [("results.csv", self.csv_bytes()?), ("results.jsonl", self.jsonl_bytes()?)] {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| io(&path, e))?;
            f.write_all(&bytes).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = format!("config digest {}\n", self.digest);
        out.push_str(&format!(
            "{:<13} {:<44} {:<16} {:>2} {:>14} {:>11} {:>14}  {}\n",
            "suite", "formula_id", "manifold", "q", "value", "stderr", "target", "pass"
        ));
        let (mut n, mut ok) = (0, 0);
        for s in &self.suites {
            for c in &s.checks {
                let r = &c.row;
                n += 1;
                ok += r.pass as usize;
                out.push_str(&format!(
                    "{:<13} {:<44} {:<16} {:>2} {:>14.6e} {:>11.3e} {:>14.6e}  {}\n",
                    s.config.suite.name(),
                    r.formula_id,
                    r.manifold,
                    r.q,
                    r.value,
                    r.stderr,
                    r.target,
                    if r.pass { "PASS" } else { "FAIL" }
                ));
            }
        }
        out.push_str(&format!("{ok}/{n} checks passed\n"));
        out
    }
}
