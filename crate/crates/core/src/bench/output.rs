//! CSV, JSON and SVG renderings of experiment results.

use std::fmt::Write as _;

use crate::bench::experiment::{ExperimentResult, ExperimentSpec};
use crate::error::{Result, SimError};

fn csv_err(e: impl std::fmt::Display) -> SimError {
    SimError::Config(format!("csv: {e}"))
}

/// Shortest decimal that reads back to the same f64; NaN for missing points.
fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// One datapoint per row under a header of the result's columns.
pub fn result_csv(r: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_string()];
    header.extend(r.columns.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for row in &r.rows {
        let mut rec = vec![row.label.clone()];
        rec.extend(row.values.iter().map(|v| num(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

/// Long format over many results: one value per row, suitable for
/// external plotting.
pub fn results_csv(results: &[ExperimentResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["experiment", "kind", "label", "quantity", "value"]).map_err(csv_err)?;
    for (i, r) in results.iter().enumerate() {
        for row in &r.rows {
            for (c, v) in r.columns.iter().zip(&row.values) {
                w.write_record([i.to_string(), r.spec.kind().to_string(), row.label.clone(), c.clone(), num(*v)])
                    .map_err(csv_err)?;
            }
        }
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

/// JSON array, one object per experiment.
pub fn results_json(results: &[ExperimentResult]) -> Result<String> {
    serde_json::to_string_pretty(results).map_err(|e| SimError::Config(format!("json: {e}")))
}

/// Reads what [`results_json`] wrote; a single object is accepted too.
pub fn parse_results_json(text: &str) -> Result<Vec<ExperimentResult>> {
    let err = |e: serde_json::Error| SimError::Config(format!("json: {e}"));
    let v: serde_json::Value = serde_json::from_str(text).map_err(err)?;
    if v.is_array() {
        serde_json::from_value(v).map_err(err)
    } else {
        Ok(vec![serde_json::from_value(v).map_err(err)?])
    }
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log2() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|p| p.0.is_finite() && p.1.is_finite() && (!self.log_x || p.0 > 0.0))
            .map(|(x, y)| (tx(x), y))
            .collect();
        let span = |v: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
        let (y0, y1) = span(&mut pts.iter().map(|p| p.1).chain([0.0]));
        let (l, r, t, b) = MARGIN;
        let px = |x: f64| l + (tx(x) - x0) / (x1 - x0) * (W - l - r);
        let py = |y: f64| H - b - (y - y0) / (y1 - y0) * (H - t - b);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<path d="M{l} {t} V{} H{}" fill="none" stroke="black"/>"#,
            H - b,
            W - r
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let yv = y0 + f * (y1 - y0);
            let xv = x0 + f * (x1 - x0);
            let xs = if self.log_x { xv.exp2() } else { xv };
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                l - 6.0,
                py(yv) + 4.0,
                tick(yv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                l + f * (W - l - r),
                H - b + 16.0,
                tick(xs)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (l + W - r) / 2.0,
            H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (i, se) in self.series.iter().enumerate() {
            let c = COLOURS[i % COLOURS.len()];
            let d: Vec<String> = se
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite() && (!self.log_x || p.0 > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            if d.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
                d.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
                l + 10.0,
                t + 16.0 * (i as f64 + 1.0),
                escape(&se.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3e}")
    }
}

fn col(r: &ExperimentResult, name: &str) -> Vec<f64> {
    r.column(name).unwrap_or_default()
}

/// Series grouped by the value of `key`, plotting `x` against `y`.
fn grouped(r: &ExperimentResult, key: &str, x: &str, y: &str, name: impl Fn(f64, &str) -> String) -> Vec<Series> {
    let (k, xs, ys) = (col(r, key), col(r, x), col(r, y));
    let mut out: Vec<(f64, Series)> = Vec::new();
    for i in 0..k.len() {
        let label = r.rows[i].label.as_str();
        match out.iter_mut().find(|s| s.0 == k[i]) {
            Some(s) => s.1.points.push((xs[i], ys[i])),
            None => out.push((
                k[i],
                Series {
                    name: name(k[i], label),
                    points: vec![(xs[i], ys[i])],
                },
            )),
        }
    }
    out.into_iter().map(|s| s.1).collect()
}

/// Chart for curve-like results; `None` for single-point experiments.
pub fn chart_for(r: &ExperimentResult) -> Option<Chart> {
    let s = |name: &str, x: &str, y: &str| Series {
        name: name.into(),
        points: col(r, x).into_iter().zip(col(r, y)).collect(),
    };
    match &r.spec {
        ExperimentSpec::Bandwidth { .. } => Some(Chart {
            title: "Point-to-point bandwidth".into(),
            x_label: "message size (bytes)".into(),
            y_label: "bandwidth (GB/s)".into(),
            log_x: true,
            series: vec![
                s("direct write", "bytes", "direct_write_gbps"),
                s("DMA", "bytes", "dma_gbps"),
            ],
        }),
        ExperimentSpec::Latency { .. } => Some(Chart {
            title: "Latency against distance".into(),
            x_label: "hops".into(),
            y_label: "time per transfer (ns)".into(),
            log_x: false,
            series: vec![s("80-byte direct write", "distance", "ns_per_transfer")],
        }),
        ExperimentSpec::WeakScaling { .. } if r.columns.iter().any(|c| c == "grid_rows") => Some(Chart {
            title: "Weak scaling".into(),
            x_label: "cores".into(),
            y_label: "time (s)".into(),
            log_x: true,
            series: vec![s("stencil", "cores", "seconds")],
        }),
        ExperimentSpec::StrongScaling { .. } if r.columns.iter().any(|c| c == "grid_rows") => Some(Chart {
            title: "Strong scaling".into(),
            x_label: "cores".into(),
            y_label: "speedup".into(),
            log_x: true,
            series: {
                let rows = col(r, "grid_rows");
                let cols = col(r, "grid_cols");
                let mut keyed = r.clone();
                keyed.columns.push("grid_key".into());
                for (i, row) in keyed.rows.iter_mut().enumerate() {
                    row.values.push(rows[i] * 1e4 + cols[i]);
                }
                grouped(&keyed, "grid_key", "cores", "speedup", |k, _| {
                    format!("{}x{}", (k / 1e4).floor(), k % 1e4)
                })
            },
        }),
        ExperimentSpec::WeakScaling { .. } | ExperimentSpec::StrongScaling { .. } => Some(Chart {
            title: "Matmul scaling".into(),
            x_label: "cores".into(),
            y_label: "GFLOPS".into(),
            log_x: true,
            series: grouped(r, "m", "cores", "gflops", |_, label| {
                label.split(" on ").next().unwrap_or(label).to_string()
            }),
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::experiment::Row;

    fn sample() -> ExperimentResult {
        ExperimentResult {
            spec: ExperimentSpec::bandwidth(),
            columns: vec!["bytes".into(), "direct_write_gbps".into(), "dma_gbps".into()],
            rows: vec![
                Row {
                    label: "4, \"small\"".into(),
                    values: vec![4.0, 0.1, 0.01],
                },
                Row {
                    label: "8".into(),
                    values: vec![8.0, 0.2, f64::NAN],
                },
            ],
            measurements: vec![],
        }
    }

    #[test]
    fn csv_quotes_and_header() {
        let csv = result_csv(&sample()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "label,bytes,direct_write_gbps,dma_gbps");
        assert_eq!(lines.next().unwrap(), r#""4, ""small""",4,0.1,0.01"#);
        assert_eq!(lines.next().unwrap(), "8,8,0.2,NaN");
    }

    #[test]
    fn json_round_trip() {
        let a = vec![sample()];
        let text = results_json(&a).unwrap();
        let b = parse_results_json(&text).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].rows[0], a[0].rows[0]);
        assert!(text.contains("null"));
        assert!(b[0].rows[1].values[2].is_nan());
    }

    #[test]
    fn svg_has_one_line_per_series() {
        let svg = chart_for(&sample()).unwrap().to_svg();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn long_csv_counts() {
        let csv = results_csv(&[sample()]).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
    }
}
