//! Traceability matrix: every verdict found under a results directory, one row per claim.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pam_core::stats::Verdict;
use serde::Deserialize;
use serde_json::json;
use walkdir::WalkDir;

use crate::output::{table_csv, write_atomic};
use crate::record::{ResultRecord, Table, VerdictEntry};

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub claim: String,
    pub criterion: String,
    pub experiment: String,
    pub source: PathBuf,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Deserialize)]
struct StoredRecord {
    experiment: String,
    verdicts: Vec<VerdictEntry>,
}

/// Collects verdict rows from every `results.json` below `dir`, sorted by claim then experiment.
pub fn collect(dir: &Path) -> Result<Vec<MatrixRow>> {
    let mut rows = vec![];
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("scanning {}", dir.display()))?;
        if !entry.file_type().is_file() || entry.file_name() != "results.json" {
            continue;
        }
        let raw = std::fs::read_to_string(entry.path())
            .with_context(|| format!("reading {}", entry.path().display()))?;
        let rec: StoredRecord = serde_json::from_str(&raw)
            .with_context(|| format!("parsing {}", entry.path().display()))?;
        let source = entry
            .path()
            .strip_prefix(dir)
            .unwrap_or(entry.path())
            .to_path_buf();
        for v in rec.verdicts {
            rows.push(MatrixRow {
                claim: v.claim,
                criterion: v.criterion,
                experiment: rec.experiment.clone(),
                source: source.clone(),
                verdict: v.verdict,
                detail: v.detail,
            });
        }
    }
    rows.sort_by(|a, b| {
        (&a.claim, &a.experiment, &a.source).cmp(&(&b.claim, &b.experiment, &b.source))
    });
    Ok(rows)
}

pub fn matrix_table(rows: &[MatrixRow]) -> Table {
    let mut t = Table::new(&[
        "claim",
        "criterion",
        "experiment",
        "source",
        "verdict",
        "detail",
    ]);
    for r in rows {
        t.push(vec![
            json!(r.claim),
            json!(r.criterion),
            json!(r.experiment),
            json!(r.source.to_string_lossy()),
            json!(r.verdict.as_str()),
            json!(r.detail),
        ]);
    }
    t
}

pub fn counts(rows: &[MatrixRow]) -> (usize, usize, usize) {
    let n = |v| rows.iter().filter(|r| r.verdict == v).count();
    (n(Verdict::Pass), n(Verdict::Fail), n(Verdict::Inconclusive))
}

pub fn matrix_text(rows: &[MatrixRow]) -> String {
    let (p, f, i) = counts(rows);
    let mut s = format!(
        "traceability matrix: {} rows, {p} pass, {f} fail, {i} inconclusive\n",
        rows.len()
    );
    let width = rows.iter().map(|r| r.claim.len()).max().unwrap_or(0);
    let exp_width = rows.iter().map(|r| r.experiment.len()).max().unwrap_or(0);
    for r in rows {
        s.push_str(&format!(
            "{:<width$}  {:<exp_width$}  {:<12}  {}\n",
            r.claim,
            r.experiment,
            r.verdict.as_str(),
            r.detail
        ));
    }
    s
}

/// Writes `traceability.csv` and `traceability.txt` into `dir`.
pub fn write_report(dir: &Path) -> Result<Vec<MatrixRow>> {
    let rows = collect(dir)?;
    write_atomic(
        &dir.join("traceability.csv"),
        &table_csv(&matrix_table(&rows))?,
    )?;
    write_atomic(&dir.join("traceability.txt"), matrix_text(&rows).as_bytes())?;
    Ok(rows)
}

/// The `report` experiment kind: the matrix becomes a table of the record.
pub fn into_record(rec: &mut ResultRecord, dir: &Path) -> Result<()> {
    let rows = collect(dir)?;
    let (p, f, i) = counts(&rows);
    rec.output("rows", rows.len());
    rec.output("pass", p);
    rec.output("fail", f);
    rec.output("inconclusive", i);
    rec.table("traceability", matrix_table(&rows));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::output::write_record;

    fn record(id: &str, verdicts: &[(&str, Verdict)]) -> ResultRecord {
        let mut r = ResultRecord::new(id, "simulate", "00", serde_json::Value::Null);
        for (claim, v) in verdicts {
            r.verdict("positivity", claim, *v, "detail");
        }
        r
    }

    #[test]
    fn empty_directory_gives_an_empty_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let rows = write_report(dir.path()).unwrap();
        assert!(rows.is_empty());
        let csv = std::fs::read_to_string(dir.path().join("traceability.csv")).unwrap();
        assert_eq!(csv, "claim,criterion,experiment,source,verdict,detail\r\n");
    }

    #[test]
    fn counts_match_rows() {
        let dir = tempfile::tempdir().unwrap();
        write_record(
            &dir.path().join("a"),
            &record("a", &[("x.one", Verdict::Pass), ("x.two", Verdict::Fail)]),
        )
        .unwrap();
        write_record(
            &dir.path().join("b/c"),
            &record("b", &[("x.one", Verdict::Inconclusive)]),
        )
        .unwrap();
        let rows = write_report(dir.path()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(counts(&rows), (1, 1, 1));
        assert_eq!(rows[0].claim, "x.one");
        assert_eq!(rows[0].experiment, "a");
        let text = std::fs::read_to_string(dir.path().join("traceability.txt")).unwrap();
        assert!(text.starts_with("traceability matrix: 3 rows, 1 pass, 1 fail, 1 inconclusive"));
        assert_eq!(text.lines().count(), 4);
    }
}
