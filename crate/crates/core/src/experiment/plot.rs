//! Recall-vs-mAP scatter as standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use super::ResultRow;
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const KNOWN: [(&str, &str); 4] = [
    ("supervised", "#1f77b4"),
    ("pretrain", "#7f7f7f"),
    ("two-stage", "#ff7f0e"),
    ("hybrid", "#2ca02c"),
];

fn color(strategy: &str) -> &'static str {
    KNOWN
        .iter()
        .find(|(s, _)| *s == strategy)
        .map_or("#9467bd", |(_, c)| c)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// x = recall at the FPR target, y = mAP, one marker per row coloured by strategy;
/// Pareto rows get larger markers. The legend lists only strategies present.
pub fn render_tradeoff_svg(rows: &[ResultRow]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + v.clamp(0.0, 1.0) * plot_w;
    let sy = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Explainability vs decision performance</text>"#,
        LEFT + plot_w / 2.0
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let (x, y) = (sx(v), sy(v));
        let _ = writeln!(
            svg,
            r##"<line x1="{x}" y1="{TOP}" x2="{x}" y2="{}" stroke="#ddd"/><text x="{x}" y="{}" text-anchor="middle">{v:.1}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 16.0
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">recall at FPR target</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">mAP</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    // front members last so they sit on top
    let mut order: Vec<&ResultRow> = rows.iter().collect();
    order.sort_by_key(|r| r.pareto);
    let _ = writeln!(svg, r#"<g id="points">"#);
    for r in order {
        let radius = if r.pareto { 7.0 } else { 3.5 };
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{}" fill-opacity="0.8" stroke="#222" stroke-width="{}" data-strategy="{}"><title>{}</title></circle>"##,
            sx(r.recall_at_fpr),
            sy(r.map),
            color(&r.strategy),
            if r.pareto { 1.0 } else { 0.3 },
            escape(&r.strategy),
            escape(&r.model_id)
        );
    }
    let _ = writeln!(svg, "</g>");

    let mut groups: Vec<&str> = KNOWN
        .iter()
        .map(|(s, _)| *s)
        .filter(|s| rows.iter().any(|r| r.strategy == *s))
        .collect();
    let mut others: Vec<&str> = rows
        .iter()
        .map(|r| r.strategy.as_str())
        .filter(|s| !KNOWN.iter().any(|(k, _)| k == s))
        .collect();
    others.sort_unstable();
    others.dedup();
    groups.extend(others);
    let _ = writeln!(svg, r#"<g id="legend">"#);
    for (i, s) in groups.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x}" cy="{y}" r="5" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            color(s),
            x + 12.0,
            y + 4.0,
            escape(s)
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_tradeoff_plot(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("nothing to plot".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, render_tradeoff_svg(rows)).map_err(|e| Error::io(path, e))
}
