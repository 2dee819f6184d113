//! Minimal SVG line plot of one forecast: the input window's motor speed on
//! its own scale, then ground-truth and forecast shaft torque.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

pub struct ForecastPlot<'a> {
    pub title: &'a str,
    pub t: &'a [f64],
    /// Motor speed over the input window (first `input_len` samples).
    pub input: &'a [f64],
    /// Shaft torque over input window and horizon.
    pub truth: &'a [f64],
    /// Forecast over the horizon (last `truth.len() − input_len` samples).
    pub prediction: &'a [f64],
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn polyline(
    out: &mut String,
    xs: &[f64],
    ys: &[f64],
    sx: impl Fn(f64) -> f64,
    sy: impl Fn(f64) -> f64,
    style: &str,
) {
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" {style} points="{}"/>"#,
        pts.join(" ")
    );
}

pub fn render(p: &ForecastPlot) -> String {
    let n_in = p.input.len();
    let (t0, t1) = bounds(p.t.iter().copied());
    let (y0, y1) = bounds(p.truth.iter().chain(p.prediction).copied());
    let (r0, r1) = bounds(p.input.iter().copied());
    let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let sr = |v: f64| HEIGHT - MARGIN - (v - r0) / (r1 - r0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        p.title
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let split = sx(p.t[n_in.min(p.t.len() - 1)]);
    let _ = writeln!(
        s,
        r##"<line class="horizon-start" x1="{split:.2}" y1="{MARGIN}" x2="{split:.2}" y2="{}" stroke="#bbb" stroke-dasharray="4 4"/>"##,
        HEIGHT - MARGIN
    );
    if y0 < 0.0 && y1 > 0.0 {
        let z = sy(0.0);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{z:.2}" x2="{}" y2="{z:.2}" stroke="#eee"/>"##,
            WIDTH - MARGIN
        );
    }
    polyline(
        &mut s,
        &p.t[..n_in],
        p.input,
        sx,
        sr,
        r##"class="input" stroke="#999" stroke-width="1""##,
    );
    polyline(
        &mut s,
        p.t,
        p.truth,
        sx,
        sy,
        r##"class="truth" stroke="#1f77b4" stroke-width="1.5""##,
    );
    polyline(
        &mut s,
        &p.t[n_in..],
        p.prediction,
        sx,
        sy,
        r##"class="prediction" stroke="#d62728" stroke-width="1.5""##,
    );

    let legend = [
        ("#999", "MG rpm (input, own scale)"),
        ("#1f77b4", "D/S torque truth"),
        ("#d62728", "forecast"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = HEIGHT - 14.0;
        let x = MARGIN + i as f64 * 230.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
            x + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#,
            x + 26.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{y1:.2}</text>"#,
        4.0,
        MARGIN + 4.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{y0:.2}</text>"#,
        4.0,
        HEIGHT - MARGIN
    );
    s.push_str("</svg>\n");
    s
}
