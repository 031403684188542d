//! Minimal SVG waveform overlay.

use std::fmt::Write as _;

/// One named series sampled at a common rate.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

const W: f64 = 960.0;
const H: f64 = 360.0;
const PAD_L: f64 = 56.0;
const PAD_R: f64 = 16.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 36.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `series` as polylines on shared axes. All series must have the
/// same length; `sample_rate` only labels the time axis.
pub fn render_svg(title: &str, sample_rate: f64, series: &[Series<'_>], note: Option<&str>) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let margin = 0.05 * (hi - lo);
    let (lo, hi) = (lo - margin, hi + margin);
    let pw = W - PAD_L - PAD_R;
    let ph = H - PAD_T - PAD_B;
    let x = |i: usize| PAD_L + pw * i as f64 / (n - 1) as f64;
    let y = |v: f64| PAD_T + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD_L}" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(s, r##"<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>"##);
    for (v, label) in [(hi - margin, hi - margin), (lo + margin, lo + margin)] {
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#555">{label:.3}</text>"##,
            PAD_L - 4.0,
            y(v) + 4.0
        );
    }
    let dur = (n - 1) as f64 / sample_rate;
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#555">{dur:.2} s</text>"##,
        W - PAD_R,
        H - 12.0
    );
    let _ = writeln!(s, r##"<text x="{PAD_L}" y="{:.1}" fill="#555">0 s</text>"##, H - 12.0);

    for (k, ser) in series.iter().enumerate() {
        let mut pts = String::with_capacity(ser.values.len() * 14);
        for (i, &v) in ser.values.iter().enumerate() {
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(i), y(v));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            escape(ser.label),
            escape(ser.color),
            pts.trim_end()
        );
        let ly = PAD_T + 14.0 + 16.0 * k as f64;
        let lx = W - PAD_R - 150.0;
        let _ = writeln!(
            s,
            r#"<g class="legend"><line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{ly:.1}">{}</text></g>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            escape(ser.color),
            lx + 26.0,
            escape(ser.label)
        );
    }
    if let Some(note) = note {
        let _ = writeln!(s, r#"<text class="note" x="{PAD_L}" y="{:.1}">{}</text>"#, PAD_T - 6.0, escape(note));
    }
    s.push_str("</svg>\n");
    s
}
