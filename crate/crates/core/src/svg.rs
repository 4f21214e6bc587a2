//! Minimal SVG line charts. Output depends only on the inputs, so reruns are
//! byte-identical.

use std::fmt::Write as _;

use crate::evalmetrics::EvalReport;
use crate::error::{Error, Result};

type Measure = fn(&crate::evalmetrics::InstanceScore) -> f64;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 36.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Stacked panels sharing an x axis of point indices; y is fixed to [0, 1].
pub fn render(title: &str, x_label: &str, panels: &[Panel]) -> String {
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + MARGIN_BOTTOM);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - 28.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN_TOP + p as f64 * (PANEL_HEIGHT + MARGIN_BOTTOM) + 20.0;
        let bottom = top + plot_h;
        let points = panel.series.iter().map(|s| s.values.len()).max().unwrap_or(0);
        let x_at = |i: usize| {
            if points <= 1 {
                MARGIN_LEFT + plot_w / 2.0
            } else {
                MARGIN_LEFT + plot_w * i as f64 / (points - 1) as f64
            }
        };
        let y_at = |v: f64| bottom - plot_h * v.clamp(0.0, 1.0);

        let _ = writeln!(
            out,
            r#"<text x="{MARGIN_LEFT}" y="{:.1}" font-size="12">{}</text>"#,
            top - 6.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{top:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
        );
        for tick in 0..=4 {
            let v = tick as f64 / 4.0;
            let y = y_at(v);
            let _ = writeln!(
                out,
                r##"<line x1="{MARGIN_LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 4.0,
                y + 4.0
            );
        }
        let step = (points / 10).max(1);
        for i in (0..points).step_by(step) {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x_at(i),
                bottom + 14.0,
                i + 1
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
            top + plot_h / 2.0,
            top + plot_h / 2.0,
            escape(&panel.y_label)
        );
        if p + 1 == panels.len() {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                MARGIN_LEFT + plot_w / 2.0,
                bottom + 30.0,
                escape(x_label)
            );
        }
        for (k, s) in panel.series.iter().enumerate() {
            let coords: Vec<String> = s
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| format!("{:.1},{:.1}", x_at(i), y_at(*v)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                s.color,
                coords.join(" ")
            );
            let ly = top + 12.0 + 16.0 * k as f64;
            let lx = MARGIN_LEFT + plot_w + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 18.0,
                s.color,
                lx + 24.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Per-instance C-of-ED, Second Correct and All Correct on one panel.
pub fn instance_chart(report: &EvalReport, max_instances: usize) -> String {
    let take = report.instances.len().min(max_instances);
    let pick = |f: fn(&crate::evalmetrics::InstanceScore) -> f64| report.instances[..take].iter().map(f).collect();
    let panel = Panel {
        title: format!("{} ({} runs)", report.dataset, report.runs),
        y_label: "score".into(),
        series: vec![
            Series {
                name: "C-of-ED".into(),
                color: "#d62728".into(),
                values: pick(|s| s.c_of_ed.mean),
            },
            Series {
                name: "Second Correct".into(),
                color: "#2ca02c".into(),
                values: pick(|s| s.second_correct.mean),
            },
            Series {
                name: "All Correct".into(),
                color: "#000000".into(),
                values: pick(|s| s.all_correct.mean),
            },
        ],
    };
    render(&format!("Explanation quality per instance: {}", report.dataset), "instance", &[panel])
}

/// One panel per measure; each labelled report is one series, shaded from
/// light (first) to dark (last).
pub fn sweep_chart(reports: &[(String, EvalReport)]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Config("no evaluations to plot".into()));
    }
    let shade = |k: usize| {
        let t = if reports.len() == 1 { 1.0 } else { k as f64 / (reports.len() - 1) as f64 };
        let mix = |light: f64, dark: f64| (light + (dark - light) * t).round() as u8;
        format!("#{:02x}{:02x}{:02x}", mix(158.0, 8.0), mix(202.0, 48.0), mix(225.0, 107.0))
    };
    let measures: [(&str, Measure); 3] = [
        ("C-of-ED", |s| s.c_of_ed.mean),
        ("Second Correct", |s| s.second_correct.mean),
        ("All Correct", |s| s.all_correct.mean),
    ];
    let panels: Vec<Panel> = measures
        .iter()
        .map(|(name, f)| Panel {
            title: name.to_string(),
            y_label: name.to_string(),
            series: reports
                .iter()
                .enumerate()
                .map(|(k, (label, r))| Series {
                    name: label.clone(),
                    color: shade(k),
                    values: r.instances.iter().map(f).collect(),
                })
                .collect(),
        })
        .collect();
    Ok(render(&format!("Sweep: {}", reports[0].1.dataset), "instance", &panels))
}

/// CSV of dataset averages, one row per labelled report.
pub fn summary_table(reports: &[(String, EvalReport)]) -> String {
    let mut out = String::from("label,dataset,ave_c_of_ed,ave_second,ave_all,invariance_p\n");
    for (label, r) in reports {
        let p = r.invariance.as_ref().map(|t| format!("{:.6}", t.test.p_value)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{label},{},{:.6},{:.6},{:.6},{p}",
            r.dataset, r.averages.c_of_ed, r.averages.second_correct, r.averages.all_correct
        );
    }
    out
}
