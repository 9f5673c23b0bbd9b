//! Static SVG bar charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 80.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;
const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str, hash: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, "<!-- config {hash} -->");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn axis(out: &mut String, max: f64, unit: &str, right: bool) {
    let x = if right { W - RIGHT } else { LEFT };
    let _ = writeln!(out, r#"<line x1="{x}" y1="{TOP}" x2="{x}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    let (anchor, dx) = if right { ("start", 4.0) } else { ("end", -4.0) };
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let y = H - BOTTOM - (H - TOP - BOTTOM) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="{anchor}">{}</text>"#, x + dx, y + 4.0, short(v));
    }
    let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP - 8.0, escape(unit));
}

fn short(v: f64) -> String {
    let a = v.abs();
    if a >= 1e9 {
        format!("{:.2}G", v / 1e9)
    } else if a >= 1e6 {
        format!("{:.2}M", v / 1e6)
    } else if a >= 1e3 {
        format!("{:.1}k", v / 1e3)
    } else {
        format!("{v:.0}")
    }
}

fn ceiling(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.fold(0.0f64, f64::max);
    if m > 0.0 { m * 1.05 } else { 1.0 }
}

/// One bar per label.
pub fn bar_chart(title: &str, unit: &str, labels: &[String], values: &[f64], hash: &str) -> String {
    grouped_bars(title, unit, labels, &[("", values.to_vec())], None, hash)
}

/// Groups of bars per label, with an optional line series on a second axis.
pub fn grouped_bars(
    title: &str,
    unit: &str,
    labels: &[String],
    series: &[(&str, Vec<f64>)],
    line: Option<(&str, &str, Vec<f64>)>,
    hash: &str,
) -> String {
    let mut out = String::new();
    header(&mut out, title, hash);
    let max = ceiling(series.iter().flat_map(|(_, v)| v.iter().copied()));
    axis(&mut out, max, unit, false);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let base = H - BOTTOM;
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, W - RIGHT);
    let slot = plot_w / labels.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;
    for (i, label) in labels.iter().enumerate() {
        let x0 = LEFT + slot * i as f64 + slot * 0.1;
        for (s, (name, values)) in series.iter().enumerate() {
            let v = values.get(i).copied().unwrap_or(0.0);
            let h = plot_h * v / max;
            let _ = writeln!(
                out,
                r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{}{} = {}</title></rect>"#,
                x0 + bar * s as f64,
                base - h,
                bar,
                h,
                COLORS[s % COLORS.len()],
                escape(label),
                if name.is_empty() { String::new() } else { format!(" {}", escape(name)) },
                v
            );
        }
        let cx = x0 + slot * 0.4;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{}" text-anchor="end" transform="rotate(-45 {cx:.2} {})">{}</text>"#,
            base + 12.0,
            base + 12.0,
            escape(label)
        );
    }
    if let Some((name, unit2, values)) = line {
        let m2 = ceiling(values.iter().copied());
        axis(&mut out, m2, unit2, true);
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", LEFT + slot * (i as f64 + 0.5), base - plot_h * v / m2))
            .collect();
        let _ = writeln!(out, r#"<polyline class="line" points="{}" fill="none" stroke="black" stroke-width="2"/>"#, pts.join(" "));
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">line: {}</text>"#, W - RIGHT - 4.0, TOP + 12.0, escape(name));
    }
    let named: Vec<_> = series.iter().filter(|(n, _)| !n.is_empty()).collect();
    for (s, (name, _)) in named.iter().enumerate() {
        let y = TOP + 12.0 + 14.0 * (s as f64 + 1.0);
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#, W - RIGHT - 120.0, y - 9.0, COLORS[s % COLORS.len()]);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, W - RIGHT - 106.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_rect_per_value() {
        let labels = vec!["a".to_string(), "b<".to_string()];
        let s = bar_chart("t", "bits", &labels, &[1.0, 3.0], "abc");
        assert_eq!(s.matches(r#"class="bar""#).count(), 2);
        assert!(s.contains("<!-- config abc -->"));
        assert!(s.contains("b&lt;"));
        assert!(s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn line_series_has_a_point_per_label() {
        let labels: Vec<String> = (0..3).map(|k| k.to_string()).collect();
        let s = grouped_bars("t", "u", &labels, &[("x", vec![1.0; 3]), ("y", vec![2.0; 3])], Some(("bw", "b/s", vec![0.0, 1.0, 2.0])), "h");
        assert_eq!(s.matches(r#"class="bar""#).count(), 6);
        let pts = s.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 3);
    }
}
