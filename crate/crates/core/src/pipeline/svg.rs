//! Minimal hand-written SVG charts.

use std::fmt::Write as _;

use super::report::Series;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of `series` against epoch number.
pub(crate) fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let max_epoch = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).max().unwrap_or(1);
    let (x0, x1) = if max_epoch <= 1 { (0.5, 1.5) } else { (1.0, max_epoch as f64) };
    let values = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(|v| v.is_finite());
    let (mut y0, mut y1) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, H - BOTTOM, W - RIGHT, H - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let ticks: Vec<usize> = if max_epoch <= 1 {
        vec![1]
    } else {
        let step = (max_epoch as f64 / 8.0).ceil().max(1.0) as usize;
        let mut t: Vec<usize> = (1..=max_epoch).step_by(step).collect();
        if *t.last().unwrap() != max_epoch {
            t.push(max_epoch);
        }
        t
    };
    for t in ticks {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#, px(t as f64), H - BOTTOM + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#, (W - RIGHT + LEFT) / 2.0, H - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#, H / 2.0, H / 2.0, escape(y_label));

    for (i, series) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(e, v)| format!("{:.2},{:.2}", px(e as f64), py(v)))
            .collect();
        if pts.len() == 1 {
            let (x, y) = pts[0].split_once(',').unwrap();
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        } else {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(series.name));
    }
    s.push_str("</svg>\n");
    s
}

/// Matrix heatmap; rows are true classes, columns predictions.
pub(crate) fn heatmap(title: &str, labels: &[&str], values: &[Vec<f64>], normalized: bool) -> String {
    let k = labels.len().max(1);
    let cell = 80.0;
    let (left, top) = (110.0, 60.0);
    let w = left + cell * k as f64 + 20.0;
    let h = top + cell * k as f64 + 60.0;
    let max = values.iter().flatten().copied().fold(0.0, f64::max).max(1e-12);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, escape(title));
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = v / max;
            let shade = (255.0 - 200.0 * t).round() as u8;
            let (x, y) = (left + cell * j as f64, top + cell * i as f64);
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="white"/>"#);
            let text = if normalized { format!("{v:.2}") } else { format!("{}", v.round() as u64) };
            let fill = if t > 0.6 { "white" } else { "black" };
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" fill="{fill}">{text}</text>"#, x + cell / 2.0, y + cell / 2.0 + 4.0);
        }
    }
    for (i, label) in labels.iter().enumerate() {
        let c = cell * i as f64 + cell / 2.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 8.0, top + c + 4.0, escape(label));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + c, top + cell * k as f64 + 18.0, escape(label));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#, left + cell * k as f64 / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">true</text>"#, top + cell * k as f64 / 2.0, top + cell * k as f64 / 2.0);
    s.push_str("</svg>\n");
    s
}
