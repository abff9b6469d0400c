//! FDR-vs-power scatter panels rendered as a standalone SVG.

use std::fmt::Write as _;

use serde::Deserialize;
use sgbh::simulate::CSV_HEADER;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
pub struct Row {
    pub m: usize,
    pub sigma: String,
    pub sided: String,
    pub pi_tilde0: f64,
    pub alpha: f64,
    pub procedure: String,
    pub estimator: Option<String>,
    pub selector: Option<String>,
    pub lambda: Option<f64>,
    pub level: Option<f64>,
    pub fdr: f64,
    pub power: f64,
}

pub fn parse_rows(text: &str) -> CliResult<Vec<Row>> {
    let header = text.lines().next().unwrap_or_default();
    if header.trim_end() != CSV_HEADER {
        return Err(CliError::usage(format!("not a simulation table: header `{header}`")));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let rows = reader
        .deserialize::<Row>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::usage(format!("simulation table: {e}")))?;
    if rows.is_empty() {
        return Err(CliError::usage("simulation table has no rows"));
    }
    Ok(rows)
}

fn series_key(r: &Row) -> String {
    let mut key = r.procedure.clone();
    for part in [r.estimator.clone(), r.selector.clone()].into_iter().flatten() {
        key.push(' ');
        key.push_str(&part);
    }
    if let Some(level) = r.level {
        let _ = write!(key, ":{level}");
    }
    if let Some(l) = r.lambda {
        let _ = write!(key, " lambda={l}");
    }
    let _ = write!(key, " ({}-sided)", r.sided);
    key
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

const PALETTE: [&str; 8] =
    ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];
const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 44.0;

fn marker(shape: usize, x: f64, y: f64, color: &str) -> String {
    match shape % 4 {
        0 => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#),
        1 => format!(
            r#"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="{color}"/>"#,
            x - 3.5,
            y - 3.5
        ),
        2 => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y + 4.0,
            x - 4.0,
            y - 3.0,
            x + 4.0,
            y - 3.0
        ),
        _ => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - 4.5,
            x + 4.5,
            y,
            x,
            y + 4.5,
            x - 4.5,
            y
        ),
    }
}

/// One panel per distinct `(m, pi_tilde0, sigma)` in order of first
/// appearance; x is FDR, y is power, one marker style per series.
pub fn render(rows: &[Row]) -> String {
    let panels = first_seen(rows.iter().map(|r| (r.m, r.pi_tilde0.to_bits(), r.sigma.clone())));
    let series = first_seen(rows.iter().map(series_key));
    let alphas = {
        let mut a = first_seen(rows.iter().map(|r| r.alpha.to_bits()));
        a.sort_by(|x, y| f64::from_bits(*x).total_cmp(&f64::from_bits(*y)));
        a.into_iter().map(f64::from_bits).collect::<Vec<_>>()
    };
    let max_x = rows
        .iter()
        .map(|r| r.fdr)
        .chain(alphas.iter().copied())
        .fold(0.0f64, f64::max)
        * 1.1;
    let max_x = if max_x > 0.0 { max_x } else { 1.0 };

    let cols = (panels.len() as f64).sqrt().ceil() as usize;
    let grid_rows = panels.len().div_ceil(cols);
    let legend_h = 18.0 * series.len() as f64 + 16.0;
    let width = cols as f64 * PANEL_W;
    let height = grid_rows as f64 * PANEL_H + legend_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (p, (m, pi_bits, sigma)) in panels.iter().enumerate() {
        let ox = (p % cols) as f64 * PANEL_W;
        let oy = (p / cols) as f64 * PANEL_H;
        let (x0, y0) = (ox + MARGIN, oy + PANEL_H - MARGIN);
        let (w, h) = (PANEL_W - MARGIN - 12.0, PANEL_H - MARGIN - 28.0);
        let sx = |v: f64| x0 + v / max_x * w;
        let sy = |v: f64| y0 - v * h;
        let _ = writeln!(svg, r#"<g class="panel">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">m={m}, pi_tilde0={}, {sigma}</text>"#,
            ox + PANEL_W / 2.0,
            oy + 16.0,
            f64::from_bits(*pi_bits)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="black"/>"#,
            y0 - h
        );
        for &a in &alphas {
            let _ = writeln!(
                svg,
                r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
                sx(a),
                y0,
                y0 - h
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{a}</text>"#,
                sx(a),
                y0 + 13.0
            );
        }
        for t in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t}</text>"#,
                x0 - 4.0,
                sy(t) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">FDR</text>"#,
            x0 + w / 2.0,
            y0 + 28.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" transform="rotate(-90 {0:.2} {1:.2})" text-anchor="middle">power</text>"#,
            ox + 12.0,
            y0 - h / 2.0
        );
        for (s, key) in series.iter().enumerate() {
            let mut pts: Vec<&Row> = rows
                .iter()
                .filter(|r| {
                    r.m == *m && r.pi_tilde0.to_bits() == *pi_bits && &r.sigma == sigma && &series_key(r) == key
                })
                .collect();
            pts.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            let color = PALETTE[s % PALETTE.len()];
            if pts.len() > 1 {
                let path: Vec<String> =
                    pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.fdr), sy(r.power))).collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1"/>"#,
                    path.join(" ")
                );
            }
            for r in pts {
                let _ = writeln!(svg, "{}", marker(s, sx(r.fdr), sy(r.power), color));
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    let ly = grid_rows as f64 * PANEL_H + 8.0;
    for (s, key) in series.iter().enumerate() {
        let y = ly + 18.0 * s as f64 + 6.0;
        let color = PALETTE[s % PALETTE.len()];
        let _ = writeln!(svg, "{}", marker(s, 16.0, y, color));
        let _ = writeln!(svg, r#"<text x="28" y="{:.2}">{}</text>"#, y + 4.0, escape(key));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
