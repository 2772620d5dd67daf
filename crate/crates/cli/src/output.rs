//! Writing result files: atomic replacement, RFC-4180 CSV, and SVG plots drawn from CSV content.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::record::{PlotSpec, ResultRecord, Table};

/// Writes `bytes` to `path` through a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn table_csv(t: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(vec![]);
    w.write_record(&t.columns)?;
    for row in &t.rows {
        w.write_record(row.iter().map(cell))?;
    }
    Ok(w.into_inner()?)
}

/// Reads a CSV table back; numeric cells become numbers.
pub fn parse_csv(bytes: &[u8]) -> Result<Table> {
    let mut r = csv::Reader::from_reader(bytes);
    let columns = r.headers()?.iter().map(String::from).collect();
    let mut rows = vec![];
    for rec in r.records() {
        rows.push(
            rec?.iter()
                .map(|c| match c.parse::<f64>() {
                    Ok(x) => crate::record::num(x),
                    Err(_) if c.is_empty() => Value::Null,
                    Err(_) => Value::String(c.into()),
                })
                .collect(),
        );
    }
    Ok(Table { columns, rows })
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Renders an SVG line plot from CSV bytes alone.
pub fn svg_from_csv(csv_bytes: &[u8], spec: &PlotSpec) -> Result<String> {
    let t = parse_csv(csv_bytes)?;
    let col = |name: &str| {
        t.columns
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("no column {name}"))
    };
    let (xi, yi) = (col(&spec.x)?, col(&spec.y)?);
    let si = spec.series.as_deref().map(col).transpose()?;
    let tx = |v: f64| if spec.log_x { v.log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &t.rows {
        let (Some(x), Some(y)) = (row[xi].as_f64(), row[yi].as_f64()) else {
            continue;
        };
        let (x, y) = (tx(x), ty(y));
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        let key = si.map_or(String::new(), |i| cell(&row[i]));
        series.entry(key).or_default().push((x, y));
    }
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (w, h, m) = (640.0, 400.0, 60.0);
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    s += &format!(
        "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        w - 2.0 * m,
        h - 2.0 * m
    );
    let lx = if spec.log_x {
        format!("log10 {}", spec.x)
    } else {
        spec.x.clone()
    };
    let ly = if spec.log_y {
        format!("log10 {}", spec.y)
    } else {
        spec.y.clone()
    };
    s += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        h - 15.0,
        lx
    );
    s += &format!("<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">{}</text>\n", h / 2.0, h / 2.0, ly);
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        s += &format!(
            "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{v:.3}</text>\n",
            h - m + 15.0
        );
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        s += &format!(
            "<text x=\"{}\" y=\"{y:.1}\" text-anchor=\"end\">{v:.3}</text>\n",
            m - 5.0
        );
    }
    for (k, (name, pts)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s += &format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" points=\"{}\"/>\n",
            path.join(" ")
        );
        if !name.is_empty() {
            s += &format!(
                "<text x=\"{}\" y=\"{}\" fill=\"{colour}\">{}</text>\n",
                w - m + 5.0,
                m + 15.0 * (k as f64 + 1.0),
                escape(name)
            );
        }
    }
    s += "</svg>\n";
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes `results.json`, one CSV per table, the plots, and any binary artifacts.
pub fn write_record(dir: &Path, record: &ResultRecord) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut csvs = BTreeMap::new();
    for (name, t) in &record.tables {
        let bytes = table_csv(t)?;
        write_atomic(&dir.join(format!("{name}.csv")), &bytes)?;
        csvs.insert(name.clone(), bytes);
    }
    for p in &record.plots {
        let bytes = csvs
            .get(&p.table)
            .with_context(|| format!("plot of missing table {}", p.table))?;
        let svg = svg_from_csv(bytes, p)?;
        write_atomic(
            &dir.join(format!("{}-{}.svg", p.table, p.y)),
            svg.as_bytes(),
        )?;
    }
    for (name, bytes) in &record.artifacts {
        write_atomic(&dir.join(name), bytes)?;
    }
    write_atomic(&dir.join("results.json"), record.to_json().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Table {
        let mut t = Table::new(&["x", "y", "label"]);
        t.push(vec![json!(1.0), json!(2.5), json!("a, \"quoted\"")]);
        t.push(vec![json!(2.0), Value::Null, json!("b")]);
        t.push(vec![json!(3.0), json!(4.0), json!("b")]);
        t
    }

    #[test]
    fn csv_is_rfc4180() {
        let bytes = table_csv(&sample()).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(
            text,
            "x,y,label\r\n1.0,2.5,\"a, \"\"quoted\"\"\"\r\n2.0,,b\r\n3.0,4.0,b\r\n"
        );
        let back = parse_csv(&bytes).unwrap();
        assert_eq!(back.columns, ["x", "y", "label"]);
        assert_eq!(back.rows[0][2], json!("a, \"quoted\""));
        assert_eq!(back.rows[1][1], Value::Null);
    }

    #[test]
    fn svg_depends_only_on_csv() {
        let spec = PlotSpec {
            table: "t".into(),
            x: "x".into(),
            y: "y".into(),
            series: Some("label".into()),
            log_x: false,
            log_y: true,
        };
        let bytes = table_csv(&sample()).unwrap();
        let svg = svg_from_csv(&bytes, &spec).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a, \"quoted\""));
        assert_eq!(svg, svg_from_csv(&bytes, &spec).unwrap());
        let missing = PlotSpec {
            y: "nope".into(),
            ..spec
        };
        assert!(svg_from_csv(&bytes, &missing).is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(
            std::fs::read_dir(path.parent().unwrap()).unwrap().count(),
            1
        );
    }
}
