//! Artifact writers: CSV tables, SVG line charts and reproducibility manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// A numeric table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comma-separated, header first, shortest round-trip decimal for every value.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_number(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub(crate) fn push_number(out: &mut String, v: f64) {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        write!(out, "{v}").expect("writing to a String");
    } else {
        write!(out, "{v:e}").expect("writing to a String");
    }
}

/// Hex SHA-256 of the canonical JSON form of `value`. Object keys are sorted,
/// so the digest does not depend on the order keys were written in.
pub fn config_digest<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_value(value)?;
    Ok(sha256_hex(serde_json::to_string(&canonical)?.as_bytes()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub name: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub module_versions: BTreeMap<String, String>,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub runtime_s: f64,
    pub outputs: Vec<OutputEntry>,
}

pub fn module_versions() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("kflow".to_string(), env!("CARGO_PKG_VERSION").to_string());
    m.insert("parallel".to_string(), crate::par::is_parallel().to_string());
    m
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Collects files written into one directory and records them for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), entries: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)?;
        let entry = OutputEntry { path: name.to_string(), sha256: sha256_hex(contents), bytes: contents.len() };
        // A rewrite replaces the earlier entry for the same file.
        match self.entries.iter_mut().find(|e| e.path == name) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
        Ok(path)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        self.write(name, table.to_csv().as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }

    /// Write `manifest.json` listing every file written so far (itself excluded).
    #[allow(clippy::too_many_arguments)]
    pub fn finish<T: Serialize>(
        mut self,
        name: &str,
        config: &T,
        seed: u64,
        started: String,
        runtime_s: f64,
    ) -> Result<ExperimentManifest> {
        let manifest = ExperimentManifest {
            name: name.to_string(),
            config_digest: config_digest(config)?,
            config: serde_json::to_value(config)?,
            module_versions: module_versions(),
            seed,
            started,
            finished: timestamp(),
            runtime_s,
            outputs: self.entries.clone(),
        };
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

/// Axis scaling for [`line_chart`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.to_string(), points }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG line chart. Points that cannot be drawn on a log axis are skipped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], x_scale: Scale, y_scale: Scale) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (80.0, 160.0, 40.0, 60.0);
    let map = |v: f64, s: Scale| match s {
        Scale::Linear => Some(v),
        Scale::Log if v > 0.0 && v.is_finite() => Some(v.log10()),
        Scale::Log => None,
    };
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter_map(|&(x, y)| Some((map(x, x_scale)?, map(y, y_scale)?)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = mapped.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;
    let tick = |v: f64, s: Scale| match s {
        Scale::Linear => format!("{v:.3}"),
        Scale::Log => format!("1e{v:.1}"),
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (gx, gy) = (px(xv), py(yv));
        let _ = writeln!(svg, r##"<line x1="{gx:.1}" y1="{top}" x2="{gx:.1}" y2="{:.1}" stroke="#ddd"/>"##, top + ph);
        let _ = writeln!(svg, r##"<line x1="{left}" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(svg, r#"<text x="{gx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, top + ph + 16.0, tick(xv, x_scale));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, gy + 4.0, tick(yv, y_scale));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 16.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (s, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["t", "value"]);
        t.push(vec![0.5, -2.0]);
        t.push(vec![1.0, 1e-20]);
        assert_eq!(t.to_csv(), "t,value\n0.5,-2\n1,1e-20\n");
        assert_eq!(t.column("value").unwrap(), vec![-2.0, 1e-20]);
    }

    #[test]
    fn digest_ignores_key_order() {
        let a: toml::Value = toml::from_str("x = 1\ny = [1.5, 2.0]\n[z]\np = 'q'\nr = 2\n").unwrap();
        let b: toml::Value = toml::from_str("[z]\nr = 2\np = 'q'\n").map(|mut v: toml::Value| {
            let t = v.as_table_mut().unwrap();
            t.insert("y".into(), toml::Value::Array(vec![1.5.into(), 2.0.into()]));
            t.insert("x".into(), 1.into());
            v
        }).unwrap();
        assert_eq!(config_digest(&a).unwrap(), config_digest(&b).unwrap());
        let c: toml::Value = toml::from_str("x = 2\ny = [1.5, 2.0]\n[z]\np = 'q'\nr = 2\n").unwrap();
        assert_ne!(config_digest(&a).unwrap(), config_digest(&c).unwrap());
    }

    #[test]
    fn chart_is_well_formed() {
        let s = Series::new("a<b", vec![(1.0, 1.0), (10.0, 0.1), (0.0, 5.0)]);
        let svg = line_chart("decay", "t", "norm", &[s], Scale::Log, Scale::Log);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn manifest_lists_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.csv", b"t\n1\n").unwrap();
        let m = out.finish("demo", &serde_json::json!({"k": 2}), 7, timestamp(), 0.0).unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"t\n1\n"));
        assert!(dir.path().join("manifest.json").exists());
    }
}
