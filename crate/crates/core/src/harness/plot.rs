//! Plot files. Every image is written next to a CSV of exactly the points it
//! shows; the CSVs are the stable output, the SVGs a convenience.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::evaluate::{EvaluationReport, ReportScores};
use super::sweep::{analysis_points, fit_analysis, SweepRow, XField};
use crate::error::{Error, Result};

pub const SWEEP_CSV: &str = "sweep_points.csv";

/// One line of `sweep_points.csv`; failed rows have empty score cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma_a: f64,
    pub gamma_s: f64,
    pub ba: Option<f64>,
    pub distance: Option<f64>,
    pub diversity: Option<f64>,
}

impl From<&SweepRow> for SweepPoint {
    fn from(r: &SweepRow) -> Self {
        SweepPoint {
            gamma_a: r.gamma_a,
            gamma_s: r.gamma_s,
            ba: r.ba,
            distance: r.distance,
            diversity: r.diversity,
        }
    }
}

impl From<SweepPoint> for SweepRow {
    fn from(p: SweepPoint) -> Self {
        SweepRow {
            gamma_a: p.gamma_a,
            gamma_s: p.gamma_s,
            ba: p.ba,
            distance: p.distance,
            diversity: p.diversity,
            negatives: 0,
            error: None,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize::<SweepPoint>()
        .map(|r| r.map(SweepRow::from).map_err(Error::from))
        .collect()
}

/// Blue (low) to red (high).
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t).round() as u8;
    let b = (255.0 - 215.0 * t).round() as u8;
    format!("#{r:02x}50{b:02x}")
}

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn heatmap_svg(rows: &[SweepRow]) -> String {
    let xs = sorted_unique(rows.iter().map(|r| r.gamma_a));
    let ys = sorted_unique(rows.iter().map(|r| r.gamma_s));
    let scores: Vec<f64> = rows.iter().filter_map(|r| r.ba).collect();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cell = 60.0;
    let (left, top) = (70.0, 30.0);
    let width = left + cell * xs.len() as f64 + 20.0;
    let height = top + cell * ys.len() as f64 + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="18">validation score by (gamma_a, gamma_s)</text>"#
    );
    for r in rows {
        let i = xs.iter().position(|&x| x == r.gamma_a).unwrap_or(0) as f64;
        // gamma_s grows upwards
        let j = (ys.len() - 1 - ys.iter().position(|&y| y == r.gamma_s).unwrap_or(0)) as f64;
        let (x, y) = (left + i * cell, top + j * cell);
        let (fill, label) = match r.ba {
            Some(v) => {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                (color(t), format!("{v:.3}"))
            }
            None => ("#cccccc".to_string(), "fail".to_string()),
        };
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle" fill="white">{label}</text>"#,
            x + cell / 2.0,
            y + cell / 2.0 + 4.0
        );
    }
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#,
            left + (i as f64 + 0.5) * cell,
            top + cell * ys.len() as f64 + 15.0
        );
    }
    for (j, y) in ys.iter().rev().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{y}</text>"#,
            left - 6.0,
            top + (j as f64 + 0.5) * cell + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">gamma_a</text>"#,
        left + cell * xs.len() as f64 / 2.0,
        height - 10.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub ba: f64,
    pub fitted: f64,
}

fn scatter_svg(points: &[ScatterPoint], field: XField, r_squared: f64) -> String {
    let (w, h, pad) = (420.0, 300.0, 45.0);
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = v.collect();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut points.iter().map(|p| p.x));
    let (y0, y1) = span(&mut points.iter().flat_map(|p| [p.ba, p.fitted]));
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let name = match field {
        XField::Distance => "distance",
        XField::Diversity => "diversity",
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="20">validation score vs {name} (R2 = {r_squared:.3})</text>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let path: Vec<String> = sorted
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.fitted)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="red"/>"#,
        path.join(" ")
    );
    for p in points {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            sx(p.x),
            sy(p.ba)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{name} [{x0:.3}, {x1:.3}]</text>"#,
        w / 2.0,
        h - 12.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap of the sweep plus a scatter-with-fit per analysis field that has
/// at least 3 complete rows. Returns the written paths.
pub fn emit_sweep_plots(rows: &[SweepRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::invalid("no sweep rows to plot"));
    }
    create_dir(out_dir)?;
    let mut written = Vec::new();
    let csv_path = out_dir.join(SWEEP_CSV);
    let points: Vec<SweepPoint> = rows.iter().map(SweepPoint::from).collect();
    write_csv(&csv_path, &points)?;
    written.push(csv_path);
    let heatmap = out_dir.join("sweep_heatmap.svg");
    write_file(&heatmap, &heatmap_svg(rows))?;
    written.push(heatmap);

    for (field, stem) in [
        (XField::Distance, "distance"),
        (XField::Diversity, "diversity"),
    ] {
        let fit = match fit_analysis(rows, field) {
            Ok(fit) => fit,
            Err(e) => {
                log::warn!("no {stem} plot: {e}");
                continue;
            }
        };
        let scatter: Vec<ScatterPoint> = analysis_points(rows, field)
            .into_iter()
            .map(|(x, ba)| ScatterPoint {
                x,
                ba,
                fitted: fit.predict(x),
            })
            .collect();
        let csv_path = out_dir.join(format!("{stem}_fit.csv"));
        write_csv(&csv_path, &scatter)?;
        let svg_path = out_dir.join(format!("{stem}_fit.svg"));
        write_file(&svg_path, &scatter_svg(&scatter, field, fit.r_squared))?;
        written.push(csv_path);
        written.push(svg_path);
    }
    Ok(written)
}

/// One metric value per line of `reports.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub benchmark: String,
    pub model: String,
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub p_value: Option<f64>,
}

pub fn report_points(reports: &[EvaluationReport]) -> Vec<ReportPoint> {
    let mut out = Vec::new();
    for r in reports {
        let mut push = |metric: &str, value: f64, p_value: Option<f64>| {
            out.push(ReportPoint {
                benchmark: r.benchmark.clone(),
                model: r.model.clone(),
                metric: metric.into(),
                value,
                n: r.n,
                p_value,
            })
        };
        match r.scores {
            ReportScores::Classification {
                macro_f1,
                balanced_accuracy,
            } => {
                push("macro_f1", macro_f1, None);
                push("balanced_accuracy", balanced_accuracy, None);
            }
            ReportScores::Correlation {
                pearson,
                pearson_p,
                spearman,
                spearman_p,
            } => {
                push("pearson", pearson, Some(pearson_p));
                push("spearman", spearman, Some(spearman_p));
            }
        }
    }
    out
}

fn bars_svg(points: &[ReportPoint]) -> String {
    let bar = 16.0;
    let (left, label_w) = (10.0, 300.0);
    let h = 30.0 + bar * 1.25 * points.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="11">"#,
        left + label_w + 260.0
    );
    for (i, p) in points.iter().enumerate() {
        let y = 20.0 + i as f64 * bar * 1.25;
        let len = 200.0 * p.value.abs().min(1.0);
        let _ = writeln!(
            svg,
            r#"<text x="{left}" y="{}">{} / {} / {}</text><rect x="{}" y="{y}" width="{len:.2}" height="{bar}" fill="steelblue"/><text x="{}" y="{}">{:.3}</text>"#,
            y + bar * 0.75,
            p.benchmark,
            p.model,
            p.metric,
            left + label_w,
            left + label_w + len + 4.0,
            y + bar * 0.75,
            p.value
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_report_plots(reports: &[EvaluationReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to plot"));
    }
    create_dir(out_dir)?;
    let points = report_points(reports);
    let csv_path = out_dir.join("reports.csv");
    write_csv(&csv_path, &points)?;
    let svg_path = out_dir.join("reports.svg");
    write_file(&svg_path, &bars_svg(&points))?;
    Ok(vec![csv_path, svg_path])
}
