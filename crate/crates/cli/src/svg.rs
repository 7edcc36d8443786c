//! Minimal SVG plots: line/marker charts, grouped bar charts and heat maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: &[&str] = &["#1f4e9c", "#d9730d", "#2e8540", "#a4262c", "#6b3fa0", "#555555"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Markers only; otherwise a polyline.
    pub markers: bool,
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axes(s: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = write!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let px = x0 + f * (x1 - x0);
        let py = y0 + f * (y1 - y0);
        let _ = write!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(x.0 + f * (x.1 - x.0)));
        let _ = write!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, tick(y.0 + f * (y.1 - y.0)));
    }
    let _ = write!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 15.0, escape(xlabel));
    let _ = write!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn legend(s: &mut String, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate() {
        let y = TOP + 14.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = write!(s, r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{c}"/>"#, W - RIGHT - 150.0, y);
        let _ = write!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT - 135.0, y + 9.0, escape(l));
    }
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let map = |(x, y): (f64, f64)| {
        (
            LEFT + (x - xr.0) / (xr.1 - xr.0) * (W - LEFT - RIGHT),
            H - BOTTOM - (y - yr.0) / (yr.1 - yr.0) * (H - TOP - BOTTOM),
        )
    };
    let mut s = header(title);
    axes(&mut s, xr, yr, xlabel, ylabel);
    for (i, ser) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        if ser.markers {
            for &p in &ser.points {
                let (px, py) = map(p);
                let _ = write!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{c}"/>"#);
            }
        } else {
            let pts: Vec<String> = ser.points.iter().map(|&p| {
                let (px, py) = map(p);
                format!("{px:.2},{py:.2}")
            }).collect();
            let _ = write!(s, r#"<polyline points="{}" stroke="{c}" fill="none" stroke-width="1.5"/>"#, pts.join(" "));
        }
    }
    let labels: Vec<&str> = series.iter().map(|s| s.label.as_str()).collect();
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: `groups[g].1[k]` is the height of series `k` in category `g`.
pub fn bar_chart(title: &str, xlabel: &str, ylabel: &str, series: &[&str], groups: &[(String, Vec<f64>)]) -> String {
    let top = groups.iter().flat_map(|g| g.1.iter().copied()).fold(0.0f64, f64::max).max(1e-9);
    let yr = (0.0, top * 1.1);
    let mut s = header(title);
    axes(&mut s, (0.0, groups.len() as f64), yr, xlabel, ylabel);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    let bw = 0.8 * slot / series.len().max(1) as f64;
    for (g, (label, vals)) in groups.iter().enumerate() {
        for (k, v) in vals.iter().enumerate() {
            let h = v.max(0.0) / yr.1 * (H - TOP - BOTTOM);
            let x = LEFT + g as f64 * slot + 0.1 * slot + k as f64 * bw;
            let c = COLORS[k % COLORS.len()];
            let _ = write!(s, r#"<rect x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{h:.2}" fill="{c}"/>"#, H - BOTTOM - h);
        }
        let _ = write!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            LEFT + (g as f64 + 0.5) * slot,
            H - BOTTOM + 30.0,
            escape(label)
        );
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

/// Heat map of `values[row][col]` in `[0, 1]`, rows drawn top to bottom.
pub fn heat_map(title: &str, xlabel: &str, ylabel: &str, rows: &[String], cols: &[String], values: &[Vec<f64>]) -> String {
    let mut s = header(title);
    let (x0, y0) = (LEFT, TOP);
    let cw = (W - LEFT - RIGHT) / cols.len().max(1) as f64;
    let ch = (H - TOP - BOTTOM) / rows.len().max(1) as f64;
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let (x, y) = (x0 + c as f64 * cw, y0 + r as f64 * ch);
            let _ = write!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="rgb({shade},{shade},255)" stroke="white"/>"#);
            let ink = if v > 0.5 { "white" } else { "black" };
            let _ = write!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{ink}" font-size="11">{v:.3}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    for (c, l) in cols.iter().enumerate() {
        let _ = write!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, x0 + (c as f64 + 0.5) * cw, H - BOTTOM + 16.0, escape(l));
    }
    for (r, l) in rows.iter().enumerate() {
        let _ = write!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, y0 + (r as f64 + 0.5) * ch + 4.0, escape(l));
    }
    let _ = write!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (W + LEFT - RIGHT) / 2.0, H - 15.0, escape(xlabel));
    let _ = write!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (H - BOTTOM + TOP) / 2.0,
        (H - BOTTOM + TOP) / 2.0,
        escape(ylabel)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let line = line_plot(
            "t<1",
            "x",
            "y",
            &[Series { label: "a".into(), points: vec![(0.0, 0.0), (1.0, 1.0)], markers: false }],
        );
        assert!(line.starts_with("<svg") && line.trim_end().ends_with("</svg>") && line.contains("t&lt;1"));
        let bars = bar_chart("b", "n", "p", &["fit"], &[("0".into(), vec![0.2]), ("1".into(), vec![0.8])]);
        assert_eq!(bars.matches("<rect").count(), 1 + 2 + 1);
        let heat = heat_map("h", "m", "p", &["0".into()], &["0".into(), "1".into()], &[vec![1.0, 0.0]]);
        assert!(heat.contains("rgb(0,0,255)") && heat.contains("rgb(255,255,255)"));
    }
}
