//! Minimal static SVG plots.

use std::fmt::Write;

use crate::stats::{average_ranks, SelectorReport};

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn color(category: &str) -> &'static str {
    match category {
        "uniform" => "#1f77b4",
        "increasing" => "#ff7f0e",
        "decreasing" => "#2ca02c",
        "bottleneck" => "#d62728",
        "spindle" => "#9467bd",
        "random" => "#8c564b",
        _ => "#7f7f7f",
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64), log_x: bool) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN / 2.0, MARGIN / 1.5);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_range.0 + f * (x_range.1 - x_range.0);
        let yv = y_range.0 + f * (y_range.1 - y_range.0);
        let xl = if log_x { format!("{:.3e}", 10f64.powf(xv)) } else { format!("{xv:.2}") };
        let px = x0 + f * (x1 - x0);
        let py = y0 - f * (y0 - y1);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="10">{xl}</text>"#, y0 + 14.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{py:.1}" text-anchor="end" font-size="10">{yv:.3}</text>"#, x0 - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#, (x0 + x1) / 2.0, H - 18.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn project(v: f64, r: (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - r.0) / (r.1 - r.0) * (b - a)
}

/// ADS (log axis) against observed shift; each point carries its ADS rank.
/// Points are `(ads, shift, category)`.
pub fn scatter_svg(title: &str, points: &[(f64, f64, String)]) -> String {
    let mut s = open(title);
    let lx: Vec<f64> = points.iter().map(|p| p.0.max(f64::MIN_POSITIVE).log10()).collect();
    let xr = range(lx.iter().copied());
    let yr = range(points.iter().map(|p| p.1));
    axes(&mut s, "ADS (log scale)", "observed logit shift", xr, yr, true);
    let ranks = average_ranks(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    for (i, p) in points.iter().enumerate() {
        let x = project(lx[i], xr, MARGIN, W - MARGIN / 2.0);
        let y = project(p.1, yr, H - MARGIN, MARGIN / 1.5);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#, color(&p.2), escape(&p.2));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="8">{}</text>"#, x + 5.0, y - 3.0, ranks[i]);
    }
    let cats: Vec<&str> = {
        let mut c: Vec<&str> = points.iter().map(|p| p.2.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    for (i, c) in cats.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="{}"/>"#, MARGIN + 10.0, color(c));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#, MARGIN + 18.0, y + 3.0, escape(c));
    }
    s.push_str("</svg>\n");
    s
}

/// Precision against recall over the selection grid, with the random
/// baseline drawn as a dashed line.
pub fn pr_svg(title: &str, report: &SelectorReport, baseline: f64) -> String {
    let mut s = open(title);
    let (xr, yr) = ((0.0, 1.0), (0.0, 1.0));
    axes(&mut s, "recall", "precision", xr, yr, false);
    let pts: Vec<String> = report
        .recall
        .iter()
        .zip(&report.precision)
        .map(|(r, p)| format!("{:.2},{:.2}", project(*r, xr, MARGIN, W - MARGIN / 2.0), project(*p, yr, H - MARGIN, MARGIN / 1.5)))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, pts.join(" "));
    for p in &pts {
        let (x, y) = p.split_once(',').unwrap();
        let _ = writeln!(s, r##"<circle cx="{x}" cy="{y}" r="3" fill="#1f77b4"/>"##);
    }
    let by = project(baseline, yr, H - MARGIN, MARGIN / 1.5);
    let _ = writeln!(s, r##"<line x1="{MARGIN}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}" stroke="#d62728" stroke-dasharray="6 4"/>"##, W - MARGIN / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="11">AUC-PR {:.3}, random baseline {:.3}</text>"#,
        MARGIN + 10.0,
        MARGIN,
        report.auc_pr,
        baseline
    );
    s.push_str("</svg>\n");
    s
}
