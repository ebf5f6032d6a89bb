//! Minimal standalone SVG plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, xlabel: &str, ylabel: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) {
    let _ = write!(
        out,
        r#"<g stroke="black"><line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}"/></g>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = write!(
        out,
        r#"<text x="{PAD}" y="{}" text-anchor="start">{x0:.3}</text><text x="{}" y="{}" text-anchor="end">{x1:.3}</text>"#,
        H - PAD + 16.0,
        W - PAD,
        H - PAD + 16.0
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{y0:.3}</text><text x="{}" y="{}" text-anchor="end">{y1:.3}</text>"#,
        PAD - 4.0,
        H - PAD,
        PAD - 4.0,
        PAD + 4.0
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = write!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

/// Shape curve with density bars along the bottom.
pub fn shape_plot(title: &str, xlabel: &str, points: &[(f64, f64)], density: &[f64]) -> String {
    let xr = extent(points.iter().map(|p| p.0));
    let yr = extent(points.iter().map(|p| p.1));
    let sx = |x: f64| PAD + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
    let mut out = String::new();
    open(&mut out, title);
    let dmax = density.iter().cloned().fold(0.0, f64::max);
    if dmax > 0.0 && !points.is_empty() {
        let bw = (W - 2.0 * PAD) / points.len() as f64;
        out.push_str(r#"<g fill="red" fill-opacity="0.35">"#);
        for (p, d) in points.iter().zip(density) {
            let h = d / dmax * 0.25 * (H - 2.0 * PAD);
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                sx(p.0) - bw / 2.0,
                H - PAD - h,
                bw,
                h
            );
        }
        out.push_str("</g>");
    }
    axes(&mut out, xlabel, "contribution", xr, yr);
    let pts: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = write!(
        out,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        pts.join(" ")
    );
    out.push_str("</svg>\n");
    out
}

fn diverging(v: f64, scale: f64) -> String {
    let a = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: f64| (255.0 - a.abs() * (255.0 - c)).round() as u8;
    if a >= 0.0 {
        format!("rgb({},{},{})", 255, fade(40.0), fade(40.0))
    } else {
        format!("rgb({},{},{})", fade(40.0), fade(40.0), 255)
    }
}

/// Heat map of `values[u][v]` over `xs[u]` (horizontal) and `ys[v]` (vertical).
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], ys: &[f64], values: &[Vec<f64>]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    let scale = values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let cw = (W - 2.0 * PAD) / xs.len().max(1) as f64;
    let ch = (H - 2.0 * PAD) / ys.len().max(1) as f64;
    out.push_str("<g>");
    for (u, row) in values.iter().enumerate() {
        for (v, &val) in row.iter().enumerate() {
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                PAD + u as f64 * cw,
                H - PAD - (v + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                diverging(val, scale)
            );
        }
    }
    out.push_str("</g>");
    axes(&mut out, xlabel, ylabel, extent(xs.iter().copied()), extent(ys.iter().copied()));
    out.push_str("</svg>\n");
    out
}

/// Horizontal bars, one per labelled value.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    let height = (PAD * 2.0 + 22.0 * bars.len() as f64).max(H);
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{height}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let scale = bars.iter().fold(0.0f64, |a, b| a.max(b.1.abs()));
    let left = 220.0;
    let mid = left + (W - left - PAD) / 2.0;
    let half = (W - left - PAD) / 2.0;
    let _ = write!(
        out,
        r#"<line x1="{mid}" y1="{PAD}" x2="{mid}" y2="{}" stroke="black"/>"#,
        height - PAD
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = PAD + 22.0 * i as f64;
        let len = if scale > 0.0 { v.abs() / scale * half } else { 0.0 };
        let x = if *v >= 0.0 { mid } else { mid - len };
        let _ = write!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text><rect x="{x:.2}" y="{:.1}" width="{len:.2}" height="16" fill="{}"/>"#,
            left - 8.0,
            y + 12.0,
            escape(label),
            y,
            if *v >= 0.0 { "indianred" } else { "steelblue" }
        );
    }
    out.push_str("</svg>\n");
    out
}
