use std::fmt::Write;

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#9d9d9d", "#b07aa1"];
const W: f64 = 760.0;
const H: f64 = 420.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;
const RIGHT: f64 = 130.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn frame(title: &str, max: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, esc(title));
    let ph = H - TOP - BOTTOM;
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let y = TOP + ph - ph * i as f64 / 4.0;
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 4.0, y + 4.0, fmt_tick(v));
    }
    s
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (0.01..10000.0).contains(&v.abs()) {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

fn bar_x(i: usize, n: usize) -> (f64, f64) {
    let slot = (W - LEFT - RIGHT) / n.max(1) as f64;
    (LEFT + slot * i as f64 + slot * 0.15, slot * 0.7)
}

fn label(s: &mut String, x: f64, text: &str) {
    let y = H - BOTTOM + 12.0;
    let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="end" transform="rotate(-45 {x:.1} {y:.1})">{}</text>"#, esc(text));
}

/// Stacked bar chart; each bar holds one value per series.
pub fn stacked_bars_svg(title: &str, series: &[&str], bars: &[(String, Vec<f64>)]) -> String {
    let max = bars.iter().map(|(_, v)| v.iter().sum::<f64>()).fold(0.0, f64::max).max(1e-12);
    let ph = H - TOP - BOTTOM;
    let mut s = frame(title, max);
    for (i, (name, vals)) in bars.iter().enumerate() {
        let (x, w) = bar_x(i, bars.len());
        let mut base = TOP + ph;
        for (j, &v) in vals.iter().enumerate() {
            let h = ph * v / max;
            base -= h;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{base:.1}" width="{w:.1}" height="{h:.1}" fill="{}"><title>{}: {v:.3}</title></rect>"#,
                PALETTE[j % PALETTE.len()],
                esc(series.get(j).copied().unwrap_or(""))
            );
        }
        label(&mut s, x + w / 2.0, name);
    }
    for (j, name) in series.iter().enumerate() {
        let y = TOP + 16.0 * j as f64;
        let x = W - RIGHT + 14.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/>"#, PALETTE[j % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 14.0, y + 9.0, esc(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Plain bar chart.
pub fn bars_svg(title: &str, bars: &[(String, f64)]) -> String {
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1e-12);
    let ph = H - TOP - BOTTOM;
    let mut s = frame(title, max);
    for (i, (name, v)) in bars.iter().enumerate() {
        let (x, w) = bar_x(i, bars.len());
        let h = ph * v.max(0.0) / max;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="{}"><title>{v:.4}</title></rect>"#,
            TOP + ph - h,
            PALETTE[0]
        );
        label(&mut s, x + w / 2.0, name);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_and_escaped() {
        let s = stacked_bars_svg("a<b", &["x", "y"], &[("w&1".into(), vec![1.0, 2.0])]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b") && s.contains("w&amp;1"));
        assert_eq!(s.matches("<rect").count(), 1 + 2 + 2);
        let b = bars_svg("t", &[]);
        assert!(b.contains("</svg>"));
    }
}
