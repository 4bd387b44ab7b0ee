use std::fs;
use std::path::{Path, PathBuf};

use super::{AnalysisError, SensitivityReport};

/// Serialize a sensitivity report into a directory: the full report as
/// JSON, the (label, delta) pairs as CSV, and a descending bar chart as
/// SVG. Returns the three paths written.
pub fn export_report(report: &SensitivityReport, dir: &Path) -> Result<[PathBuf; 3], AnalysisError> {
    fs::create_dir_all(dir)?;
    let json_path = dir.join("sensitivity.json");
    let csv_path = dir.join("sensitivity.csv");
    let svg_path = dir.join("sensitivity.svg");

    let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    fs::write(&json_path, json)?;

    let mut csv = String::from("label,delta_mse\n");
    for entry in &report.entries {
        csv.push_str(&format!("{},{}\n", entry.label, entry.delta_mse));
    }
    fs::write(&csv_path, csv)?;

    fs::write(&svg_path, render_svg(report))?;
    Ok([json_path, csv_path, svg_path])
}

/// Bar chart of delta-MSE per label, already sorted descending. Negative
/// deltas render as zero-height bars.
fn render_svg(report: &SensitivityReport) -> String {
    let bar_w = 34.0;
    let gap = 10.0;
    let plot_h = 220.0;
    let label_h = 60.0;
    let margin = 30.0;
    let n = report.entries.len();
    let width = margin * 2.0 + n as f64 * (bar_w + gap);
    let height = plot_h + label_h + margin;
    let max_delta = report.max_delta().max(1e-12);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n"
    );
    svg.push_str(&format!(
        "  <text x=\"{margin}\" y=\"18\" font-size=\"12\" font-family=\"sans-serif\">error increase per removed label ({})</text>\n",
        report.model_id
    ));
    for (i, entry) in report.entries.iter().enumerate() {
        let h = (entry.delta_mse.max(0.0) / max_delta) * (plot_h - 30.0);
        let x = margin + i as f64 * (bar_w + gap);
        let y = plot_h - h;
        svg.push_str(&format!(
            "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.3}\" fill=\"#4477aa\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" font-family=\"sans-serif\" transform=\"rotate(45 {:.1} {:.1})\">{}</text>\n",
            x,
            plot_h + 12.0,
            x,
            plot_h + 12.0,
            entry.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
