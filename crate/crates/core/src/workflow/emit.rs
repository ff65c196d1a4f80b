use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::analysis::{ClassCounts, StabilityReport, TeGridReport};
use super::study::StudyReport;
use crate::error::{Error, Result};
use crate::features::table::csv_field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
    All,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" => Ok(OutputFormat::Svg),
            "all" => Ok(OutputFormat::All),
            _ => Err(Error::invalid("format", format!("{s:?} is not one of csv, json, svg, all"))),
        }
    }
}

impl OutputFormat {
    fn wants(self, other: OutputFormat) -> bool {
        self == OutputFormat::All || self == other
    }
}

fn slug(label: &str) -> String {
    let mut s: String = label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row(fields: &[String]) -> String {
    let mut line = fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",");
    line.push_str("\r\n");
    line
}

fn counts_fields(c: &ClassCounts) -> Vec<String> {
    vec![
        c.excellent.to_string(),
        c.good.to_string(),
        c.moderate.to_string(),
        c.poor.to_string(),
        c.total.to_string(),
        format!("{:.1}", c.excellent_pct),
        format!("{:.1}", c.good_pct),
        format!("{:.1}", c.moderate_pct),
        format!("{:.1}", c.poor_pct),
    ]
}

const COUNT_HEADER: [&str; 9] = ["excellent", "good", "moderate", "poor", "total", "excellent_pct", "good_pct", "moderate_pct", "poor_pct"];

/// Per-feature records of one report.
pub fn records_csv(report: &StabilityReport) -> String {
    let mut out = row(&["key", "metric", "value", "ci_lo", "ci_hi", "class", "flag"].map(String::from));
    for r in &report.records {
        let flag = r.flag.map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        out.push_str(&row(&[
            r.key.to_string(),
            serde_json::to_value(r.metric).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            r.value.to_string(),
            opt(r.ci_lo),
            opt(r.ci_hi),
            r.class.label().to_string(),
            flag.unwrap_or_default(),
        ]));
    }
    out
}

/// Class counts of every stability report in the bundle.
pub fn summary_csv(report: &StudyReport) -> String {
    let mut header = vec!["scenario".to_string(), "label".to_string(), "metric_mean".to_string()];
    header.extend(COUNT_HEADER.map(String::from));
    let mut out = row(&header);
    for r in report.repeatability.iter().chain(&report.reproducibility).chain(&report.tr_pair) {
        let mut f = vec![r.scenario.label().to_string(), r.label.clone(), r.mean_value().to_string()];
        f.extend(counts_fields(&r.counts));
        out.push_str(&row(&f));
    }
    out
}

pub fn te_grid_csv(grid: &TeGridReport) -> String {
    let mut header = vec!["te_a_ms".to_string(), "te_b_ms".to_string(), "gap_ms".to_string(), "mean_ccc".to_string()];
    header.extend(COUNT_HEADER.map(String::from));
    let mut out = row(&header);
    for c in &grid.cells {
        let mut f = vec![c.te_a_ms.to_string(), c.te_b_ms.to_string(), c.gap_ms.to_string(), c.mean_ccc.to_string()];
        f.extend(counts_fields(&c.counts));
        out.push_str(&row(&f));
    }
    out
}

fn band(pct: f64) -> &'static str {
    match pct {
        p if p >= 90.0 => "#1a9850",
        p if p >= 75.0 => "#91cf60",
        p if p >= 50.0 => "#fee08b",
        p if p >= 25.0 => "#fc8d59",
        _ => "#d73027",
    }
}

/// Upper-triangle heatmap of the Excellent percentage for every TE pair.
pub fn te_grid_svg(grid: &TeGridReport) -> String {
    const CELL: usize = 56;
    const LEFT: usize = 80;
    const TOP: usize = 70;
    let n = grid.te_ms.len();
    let width = LEFT + n * CELL + 180;
    let height = TOP + n * CELL + 40;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="24" font-size="15">Features with excellent CCC (%) by TE pair, TR {} ms</text>"#, grid.tr_ms);
    for (i, te) in grid.te_ms.iter().enumerate() {
        let c = i * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{te}</text>"#, LEFT + c, TOP - 8);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{te}</text>"#, LEFT - 8, TOP + c + 4);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">TE (ms)</text>"#, LEFT + n * CELL / 2, TOP - 28);
    let index = |te: f64| grid.te_ms.iter().position(|&t| t == te);
    for cell in &grid.cells {
        let (Some(i), Some(j)) = (index(cell.te_a_ms), index(cell.te_b_ms)) else { continue };
        let (x, y) = (LEFT + j * CELL, TOP + i * CELL);
        let p = cell.counts.excellent_pct;
        let _ = writeln!(
            s,
            r##"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ffffff"><title>TE {} vs {}: {p:.1}%</title></rect>"##,
            band(p),
            cell.te_a_ms,
            cell.te_b_ms
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{p:.1}</text>"#, x + CELL / 2, y + CELL / 2 + 4);
    }
    let lx = LEFT + n * CELL + 30;
    for (k, (label, lo)) in [("90-100", 90.0), ("75-90", 75.0), ("50-75", 50.0), ("25-50", 25.0), ("0-25", 0.0)].iter().enumerate() {
        let y = TOP + k * 24;
        let _ = writeln!(s, r#"<rect class="legend" x="{lx}" y="{y}" width="18" height="18" fill="{}"/>"#, band(*lo));
        let _ = writeln!(s, r#"<text x="{}" y="{}">{label} %</text>"#, lx + 26, y + 14);
    }
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the bundle into `dir`, returning the files written in order.
/// Output bytes depend only on the report.
pub fn emit_report(report: &StudyReport, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if format.wants(OutputFormat::Json) {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        write(dir, "report.json", &text, &mut written)?;
    }
    if format.wants(OutputFormat::Csv) {
        if !report.repeatability.is_empty() || !report.reproducibility.is_empty() || report.tr_pair.is_some() {
            write(dir, "summary.csv", &summary_csv(report), &mut written)?;
        }
        for r in report.repeatability.iter().chain(&report.reproducibility).chain(&report.tr_pair) {
            write(dir, &format!("{}_{}.csv", r.scenario.label(), slug(&r.label)), &records_csv(r), &mut written)?;
        }
        if let Some(g) = &report.te_grid {
            write(dir, "te_grid.csv", &te_grid_csv(g), &mut written)?;
        }
        if let Some(sc) = &report.screens {
            let mut out = row(&["key", "shape_correlated", "shuffle_flagged", "excluded"].map(String::from));
            let mut keys: Vec<_> = sc.shape_correlated.iter().chain(&sc.shuffle_flagged).map(|k| k.to_string()).collect();
            keys.sort();
            keys.dedup();
            let has = |v: &[crate::features::FeatureKey], k: &str| v.iter().any(|x| x.to_string() == k).to_string();
            for k in &keys {
                out.push_str(&row(&[k.clone(), has(&sc.shape_correlated, k), has(&sc.shuffle_flagged, k), has(&sc.excluded, k)]));
            }
            write(dir, "screens.csv", &out, &mut written)?;
        }
        if let Some(rs) = &report.robust {
            let mut out = row(&["key", "shape"].map(String::from));
            for k in &rs.with_shape {
                out.push_str(&row(&[k.to_string(), (k.class == crate::features::FeatureClass::Shape).to_string()]));
            }
            write(dir, "robust_set.csv", &out, &mut written)?;
        }
        if !report.quality.is_empty() {
            let mut out = row(&["acquisition", "cnr", "snr"].map(String::from));
            for q in &report.quality {
                out.push_str(&row(&[q.acquisition.clone(), format!("{:.2}", q.cnr), format!("{:.2}", q.snr)]));
            }
            write(dir, "quality.csv", &out, &mut written)?;
        }
        for (name, table) in &report.tables {
            write(dir, &format!("features_{}.csv", slug(name)), &table.to_csv(), &mut written)?;
        }
    }
    if format.wants(OutputFormat::Svg) {
        if let Some(g) = &report.te_grid {
            write(dir, "te_grid.svg", &te_grid_svg(g), &mut written)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robustness::StabilityClass;
    use crate::workflow::analysis::TeCell;

    fn grid(n: usize) -> TeGridReport {
        let te: Vec<f64> = (0..n).map(|i| 80.0 + 5.0 * i as f64).collect();
        let mut cells = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let k = 10usize.saturating_sub(j - i);
                let classes = (0..10).map(|m| if m < k { StabilityClass::Excellent } else { StabilityClass::Poor });
                cells.push(TeCell { te_a_ms: te[i], te_b_ms: te[j], gap_ms: te[j] - te[i], mean_ccc: 0.9, counts: ClassCounts::from_classes(classes) });
            }
        }
        TeGridReport { te_ms: te, tr_ms: 5000.0, n_features: 10, cells, gaps: Vec::new(), gap_spearman: None }
    }

    #[test]
    fn svg_has_one_cell_per_pair() {
        let svg = te_grid_svg(&grid(9));
        assert_eq!(svg.matches(r#"class="cell""#).count(), 36);
        assert_eq!(svg, te_grid_svg(&grid(9)));
        assert!(svg.contains("#1a9850") && svg.contains("#d73027"));
    }

    #[test]
    fn formats_parse_and_slugs_are_plain() {
        assert_eq!("all".parse::<OutputFormat>().unwrap(), OutputFormat::All);
        assert!("xml".parse::<OutputFormat>().is_err());
        assert_eq!(slug("TR 5000 vs 4405 at TE 100"), "TR_5000_vs_4405_at_TE_100");
        assert_eq!(slug("A vs B_AB"), "A_vs_B_AB");
    }

    #[test]
    fn te_grid_csv_rows() {
        let text = te_grid_csv(&grid(3));
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("te_a_ms,te_b_ms,gap_ms,mean_ccc,excellent"));
        assert!(text.ends_with("\r\n"));
    }
}
