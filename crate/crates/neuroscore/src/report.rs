//! CSV tables and SVG plots for analysis results.
//!
//! Output depends only on the inputs: numbers are printed with fixed
//! precision and nothing time- or host-dependent is embedded.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use neuroscore_core::analysis::{CategoryScoreTable, ConvergenceCurve};

use crate::csv_io::{csv_error, float, writer};
use crate::error::{Error, Result};

pub const SCORES_FILE: &str = "scores.csv";

/// One figure. Each plot is written as `<name>.csv` and `<name>.svg`.
#[derive(Debug, Clone, PartialEq)]
pub enum Plot {
    /// Mean and standard deviation of the subsample mean against sample
    /// size, one polyline per statistic.
    Convergence { name: String, curve: ConvergenceCurve },
    /// Labelled points, one per row.
    Scatter {
        name: String,
        x_label: String,
        y_label: String,
        points: Vec<(String, f64, f64)>,
    },
}

impl Plot {
    pub fn name(&self) -> &str {
        match self {
            Plot::Convergence { name, .. } | Plot::Scatter { name, .. } => name,
        }
    }
}

/// Writes the score table (when given) and every plot into `dir`, creating
/// it if needed, and returns the written paths in order.
pub fn emit_report(table: Option<&CategoryScoreTable>, plots: &[Plot], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if let Some(t) = table {
        let path = dir.join(SCORES_FILE);
        write_scores(&path, t)?;
        written.push(path);
    }
    for plot in plots {
        let name = plot.name();
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::Config(format!("plot name {name:?} is not a plain file stem")));
        }
        let csv_path = dir.join(format!("{name}.csv"));
        let svg_path = dir.join(format!("{name}.svg"));
        let svg = match plot {
            Plot::Convergence { curve, .. } => {
                write_convergence(&csv_path, curve)?;
                convergence_svg(curve)
            }
            Plot::Scatter { x_label, y_label, points, .. } => {
                write_scatter(&csv_path, x_label, y_label, points)?;
                scatter_svg(x_label, y_label, points)
            }
        };
        fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
        written.push(csv_path);
        written.push(svg_path);
    }
    Ok(written)
}

/// Header `category,neuroscore,synthetic_neuroscore,be_accuracy,is,mmd,fid`;
/// absent scores are empty cells.
pub fn write_scores(path: &Path, table: &CategoryScoreTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["category", "neuroscore", "synthetic_neuroscore", "be_accuracy", "is", "mmd", "fid"])
        .map_err(|e| csv_error(path, e))?;
    let opt = |v: Option<f64>| v.map(float).unwrap_or_default();
    for r in table.rows() {
        w.write_record([
            r.category.clone(),
            float(r.neuroscore),
            opt(r.synthetic_neuroscore),
            opt(r.be_accuracy),
            opt(r.is),
            opt(r.mmd),
            opt(r.fid),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header `sample_size,mean,std`.
pub fn write_convergence(path: &Path, curve: &ConvergenceCurve) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["sample_size", "mean", "std"]).map_err(|e| csv_error(path, e))?;
    for ((n, m), s) in curve.sample_sizes.iter().zip(&curve.means).zip(&curve.stds) {
        w.write_record([n.to_string(), float(*m), float(*s)]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_scatter(path: &Path, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["label", x_label, y_label]).map_err(|e| csv_error(path, e))?;
    for (label, x, y) in points {
        w.write_record([label.clone(), float(*x), float(*y)]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 480.0;
const PANEL: f64 = 300.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data values onto `[lo_px, hi_px]`, padding a degenerate range.
struct Axis {
    lo: f64,
    hi: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, lo_px: f64, hi_px: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            (lo, hi) = (lo - 0.5, hi + 0.5);
        }
        Axis { lo, hi, lo_px, hi_px }
    }

    fn map(&self, v: f64) -> f64 {
        self.lo_px + (v - self.lo) / (self.hi - self.lo) * (self.hi_px - self.lo_px)
    }
}

fn frame(svg: &mut String, top: f64, x: &Axis, y: &Axis, x_label: &str, y_label: &str, x_ticks: &[(f64, String)]) {
    let bottom = top + PANEL - MARGIN;
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        MARGIN,
        top + 16.0,
        WIDTH - 1.5 * MARGIN,
        PANEL - MARGIN - 16.0
    );
    for (v, text) in x_ticks {
        let px = x.map(*v);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            bottom + 14.0,
            escape(text)
        );
    }
    for v in [y.lo, y.hi] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            y.map(v) + 3.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        MARGIN + (WIDTH - 1.5 * MARGIN) / 2.0,
        bottom + 32.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        top + PANEL / 2.0,
        top + PANEL / 2.0,
        escape(y_label)
    );
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn header(height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {WIDTH:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Two stacked panels over a logarithmic sample-size axis: the mean of the
/// subsample means, then their standard deviation.
pub fn convergence_svg(curve: &ConvergenceCurve) -> String {
    let mut svg = header(2.0 * PANEL);
    let log_n: Vec<f64> = curve.sample_sizes.iter().map(|&n| (n.max(1) as f64).ln()).collect();
    let ticks: Vec<(f64, String)> = curve.sample_sizes.iter().zip(&log_n).map(|(n, l)| (*l, n.to_string())).collect();
    for (panel, (values, label, colour)) in
        [(&curve.means, "mean", "#1f77b4"), (&curve.stds, "std", "#d62728")].into_iter().enumerate()
    {
        let top = panel as f64 * PANEL;
        let x = Axis::new(log_n.iter().copied(), MARGIN + 8.0, WIDTH - MARGIN / 2.0 - 8.0);
        let y = Axis::new(values.iter().copied(), top + PANEL - MARGIN - 8.0, top + 24.0);
        frame(&mut svg, top, &x, &y, "sample size", label, &ticks);
        let points: Vec<String> =
            log_n.iter().zip(values).map(|(l, v)| format!("{:.2},{:.2}", x.map(*l), y.map(*v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{label}" fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Labelled points on linear axes.
pub fn scatter_svg(x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let mut svg = header(PANEL);
    let x = Axis::new(points.iter().map(|p| p.1), MARGIN + 12.0, WIDTH - MARGIN / 2.0 - 12.0);
    let y = Axis::new(points.iter().map(|p| p.2), PANEL - MARGIN - 12.0, 28.0);
    let ticks = [(x.lo, format_tick(x.lo)), (x.hi, format_tick(x.hi))];
    frame(&mut svg, 0.0, &x, &y, x_label, y_label, &ticks);
    for (label, px, py) in points {
        let (cx, cy) = (x.map(*px), y.map(*py));
        let _ = writeln!(svg, r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="#1f77b4"/>"##);
        if !label.is_empty() {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
                cx + 6.0,
                cy - 6.0,
                escape(label)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use neuroscore_core::analysis::CategoryScoreRow;

    fn curve() -> ConvergenceCurve {
        ConvergenceCurve {
            sample_sizes: vec![2, 5, 10],
            means: vec![1.0, 1.1, 1.05],
            stds: vec![0.5, 0.3, 0.0],
            repeats: 4,
            seed: 0,
        }
    }

    #[test]
    fn empty_plot_list_writes_csv_only() {
        let dir = tempfile::tempdir().unwrap();
        let table = CategoryScoreTable::new(vec![CategoryScoreRow::new("a", 1.0)]).unwrap();
        let written = emit_report(Some(&table), &[], dir.path()).unwrap();
        assert_eq!(written, [dir.path().join(SCORES_FILE)]);
        assert_eq!(
            fs::read_to_string(&written[0]).unwrap(),
            "category,neuroscore,synthetic_neuroscore,be_accuracy,is,mmd,fid\na,1,,,,,\n"
        );
    }

    #[test]
    fn convergence_svg_has_one_polyline_per_statistic() {
        let svg = convergence_svg(&curve());
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"class="mean""#) && svg.contains(r#"class="std""#));
    }

    #[test]
    fn rejects_path_like_names() {
        let dir = tempfile::tempdir().unwrap();
        let plot = Plot::Convergence { name: "../x".into(), curve: curve() };
        assert!(emit_report(None, &[plot], dir.path()).is_err());
    }

    #[test]
    fn scatter_escapes_labels() {
        let svg = scatter_svg("x", "y", &[("<a&b>".into(), 1.0, 2.0)]);
        assert!(svg.contains("&lt;a&amp;b&gt;"));
    }
}
