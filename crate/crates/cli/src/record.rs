//! The result record written as `results.json`.

use std::collections::BTreeMap;

use pam_core::stats::Verdict;
use serde::Serialize;
use serde_json::Value;

/// Named acceptance criteria a verdict can reference.
pub const CRITERIA: &[&str] = &[
    "heat-kernel-oracle",
    "three-distance-sweep",
    "decomposition-identity",
    "zeta-scale",
    "noise-kernel",
    "envelope-suite",
    "series-mc-crosscheck",
    "lyapunov-lower-bound",
    "comparison-principle",
    "moment-envelope",
    "reproducibility",
    "mean-consistency",
    "series-convergence",
    "positivity",
    "holder-regularity",
    "weak-time-zero",
];

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct VerdictEntry {
    pub criterion: String,
    pub claim: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// A line plot of two numeric table columns, optionally split by a third.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotSpec {
    pub table: String,
    pub x: String,
    pub y: String,
    pub series: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub kind: String,
    pub config_hash: String,
    pub config: Value,
    pub outputs: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
    pub verdicts: Vec<VerdictEntry>,
    #[serde(skip)]
    pub plots: Vec<PlotSpec>,
    /// Extra binary artifacts: file name and contents.
    #[serde(skip)]
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl ResultRecord {
    pub fn new(experiment: &str, kind: &str, config_hash: &str, config: Value) -> Self {
        ResultRecord {
            experiment: experiment.into(),
            kind: kind.into(),
            config_hash: config_hash.into(),
            config,
            outputs: BTreeMap::new(),
            tables: BTreeMap::new(),
            verdicts: vec![],
            plots: vec![],
            artifacts: vec![],
        }
    }

    pub fn output(&mut self, name: &str, value: impl Serialize) {
        self.outputs.insert(
            name.into(),
            serde_json::to_value(value).expect("outputs serialize"),
        );
    }

    pub fn table(&mut self, name: &str, table: Table) {
        self.tables.insert(name.into(), table);
    }

    pub fn plot(
        &mut self,
        table: &str,
        x: &str,
        y: &str,
        series: Option<&str>,
        log_x: bool,
        log_y: bool,
    ) {
        self.plots.push(PlotSpec {
            table: table.into(),
            x: x.into(),
            y: y.into(),
            series: series.map(String::from),
            log_x,
            log_y,
        });
    }

    pub fn verdict(
        &mut self,
        criterion: &str,
        claim: &str,
        verdict: Verdict,
        detail: impl Into<String>,
    ) {
        debug_assert!(
            CRITERIA.contains(&criterion),
            "unknown criterion {criterion}"
        );
        self.verdicts.push(VerdictEntry {
            criterion: criterion.into(),
            claim: claim.into(),
            verdict,
            detail: detail.into(),
        });
    }

    pub fn check(&mut self, criterion: &str, claim: &str, ok: bool, detail: impl Into<String>) {
        self.verdict(criterion, claim, Verdict::from_bool(ok), detail);
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |v| self.verdicts.iter().filter(|e| e.verdict == v).count();
        (n(Verdict::Pass), n(Verdict::Fail), n(Verdict::Inconclusive))
    }

    /// 0 when everything passes, 1 on any failure, 2 when the rest are only inconclusive.
    pub fn exit_code(&self) -> u8 {
        match self.counts() {
            (_, f, _) if f > 0 => 1,
            (_, _, i) if i > 0 => 2,
            _ => 0,
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("records serialize");
        let (p, f, i) = self.counts();
        if let Some(o) = v.as_object_mut() {
            o.insert(
                "summary".into(),
                serde_json::json!({"pass": p, "fail": f, "inconclusive": i}),
            );
        }
        let mut s = serde_json::to_string_pretty(&v).expect("records serialize");
        s.push('\n');
        s
    }
}

/// JSON number for a float, `null` when not finite.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_worst_verdict() {
        let mut r = ResultRecord::new("e", "simulate", "00", Value::Null);
        assert_eq!(r.exit_code(), 0);
        r.verdict("positivity", "a", Verdict::Pass, "");
        assert_eq!(r.exit_code(), 0);
        r.verdict("positivity", "b", Verdict::Inconclusive, "");
        assert_eq!(r.exit_code(), 2);
        r.verdict("positivity", "c", Verdict::Fail, "");
        assert_eq!(r.exit_code(), 1);
        assert_eq!(r.counts(), (1, 1, 1));
    }

    #[test]
    fn json_is_sorted_and_non_finite_numbers_are_null() {
        let mut r = ResultRecord::new("e", "simulate", "00", Value::Null);
        r.output("zeta", num(f64::NAN));
        r.output("alpha", 1.5);
        let s = r.to_json();
        assert!(s.find("\"alpha\"").unwrap() < s.find("\"zeta\"").unwrap());
        assert!(s.contains("\"zeta\": null"));
        assert!(s.ends_with("}\n"));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["summary"]["pass"], 0);
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
