//! Log-log plot of a rate fit as a standalone SVG document.

use std::fmt::Write;

use super::RateFit;

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 36.0;
const PAD_B: f64 = 50.0;

/// Points with ±1 standard-error bars, the fitted line, and decade ticks.
pub fn loglog_svg(fit: &RateFit, title: &str, y_label: &str) -> String {
    let xs: Vec<f64> = fit.horizons.iter().map(|t| (*t as f64).log10()).collect();
    let lo_hi = |v: f64, s: f64| ((v - s).max(v * 1e-3), v + s);
    let mut ys_all = Vec::new();
    for (v, s) in fit.values.iter().zip(&fit.std_errors) {
        let (lo, hi) = lo_hi(*v, *s);
        ys_all.push(lo.log10());
        ys_all.push(hi.log10());
    }
    let (x0, x1) = (xs[0].floor(), xs[xs.len() - 1].ceil());
    let y0 = ys_all.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let mut y1 = ys_all.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let py = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (bx0, bx1, by0, by1) = (px(x0), px(x1), py(y0), py(y1));
    let _ = writeln!(s, r#"<line x1="{bx0:.2}" y1="{by0:.2}" x2="{bx1:.2}" y2="{by0:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{bx0:.2}" y1="{by0:.2}" x2="{bx0:.2}" y2="{by1:.2}" stroke="black"/>"#);
    for d in (x0 as i32)..=(x1 as i32) {
        let x = px(d as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{by0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, by0 + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#, by0 + 18.0);
    }
    for d in (y0 as i32)..=(y1 as i32) {
        let y = py(d as f64);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{bx0:.2}" y2="{y:.2}" stroke="black"/>"#, bx0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, bx0 - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">horizon T</text>"#, (bx0 + bx1) / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (by0 + by1) / 2.0,
        (by0 + by1) / 2.0,
        escape(y_label)
    );

    // Fitted line: log10 y = (intercept + slope ln T) / ln 10.
    let line = |x: f64| (fit.intercept + fit.slope * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="steelblue" stroke-dasharray="6 4"/>"#,
        px(xs[0]),
        py(line(xs[0])),
        px(xs[xs.len() - 1]),
        py(line(xs[xs.len() - 1]))
    );
    for ((x, v), se) in xs.iter().zip(&fit.values).zip(&fit.std_errors) {
        let (lo, hi) = lo_hi(*v, *se);
        let cx = px(*x);
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            py(lo.log10()),
            py(hi.log10())
        );
        let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3.5" fill="firebrick"/>"#, py(v.log10()));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">slope {:.3} ± {:.3} (dominant exponent {:.3})</text>"#,
        bx1,
        py(y1) + 14.0,
        fit.slope,
        fit.slope_se,
        fit.dominant_exponent
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
