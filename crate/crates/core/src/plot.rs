//! Static SVG line plots of empirical variance bands against the
//! theoretical curve.

use std::fmt::Write as _;

use crate::verify::{GridRecord, VerificationReport};

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Frame {
    x0: f64,
    y0: f64,
    t_max: f64,
    v_min: f64,
    v_max: f64,
}

impl Frame {
    fn px(&self, t: f64) -> f64 {
        self.x0 + MARGIN + (PANEL_W - 1.5 * MARGIN) * t / self.t_max
    }

    fn py(&self, v: f64) -> f64 {
        let span = (self.v_max - self.v_min).max(1e-300);
        self.y0 + PANEL_H - MARGIN + (PANEL_H - 1.5 * MARGIN) * -((v - self.v_min) / span)
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, width: f64, dash: bool) {
    let mut d = String::new();
    for (k, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "" } else { " " }, x, y);
    }
    let dash = if dash {
        " stroke-dasharray=\"5,3\""
    } else {
        ""
    };
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash} points=\"{d}\"/>"
    );
}

fn band(out: &mut String, lo: &[(f64, f64)], hi: &[(f64, f64)], color: &str) {
    let mut d = String::new();
    for (x, y) in lo.iter().chain(hi.iter().rev()) {
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        "<polygon fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\" points=\"{}\"/>",
        d.trim_end()
    );
}

fn panel(out: &mut String, frame: &Frame, title: &str, curves: &[(&str, &[GridRecord])], k: usize) {
    let (x0, y0) = (frame.x0, frame.y0);
    let _ = writeln!(
        out,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"white\" stroke=\"#ccc\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{title}</text>",
        x0 + PANEL_W / 2.0,
        y0 + 18.0
    );
    let (left, right) = (frame.px(0.0), frame.px(frame.t_max));
    let (bottom, top) = (frame.py(frame.v_min), frame.py(frame.v_max));
    let _ = writeln!(
        out,
        "<path d=\"M{left:.1},{top:.1} L{left:.1},{bottom:.1} L{right:.1},{bottom:.1}\" stroke=\"black\" fill=\"none\"/>"
    );
    for (v, y) in [(frame.v_min, bottom), (frame.v_max, top)] {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{v:.3}</text>",
            left - 4.0,
            y + 3.0
        );
    }
    for (t, x) in [(0.0, left), (frame.t_max, right)] {
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{t}</text>",
            bottom + 14.0
        );
    }
    for (c, (label, recs)) in curves.iter().enumerate() {
        let color = COLORS[c % COLORS.len()];
        let emp: Vec<(f64, f64)> = recs
            .iter()
            .map(|r| (frame.px(r.t), frame.py(r.empirical_covariance[k][k])))
            .collect();
        let lo: Vec<(f64, f64)> = recs
            .iter()
            .map(|r| {
                (
                    frame.px(r.t),
                    frame
                        .py(r.empirical_covariance[k][k] - 2.0 * r.covariance_standard_error[k][k]),
                )
            })
            .collect();
        let hi: Vec<(f64, f64)> = recs
            .iter()
            .map(|r| {
                (
                    frame.px(r.t),
                    frame
                        .py(r.empirical_covariance[k][k] + 2.0 * r.covariance_standard_error[k][k]),
                )
            })
            .collect();
        let theory: Vec<(f64, f64)> = recs
            .iter()
            .map(|r| (frame.px(r.t), frame.py(r.theoretical_covariance[k][k])))
            .collect();
        band(out, &lo, &hi, color);
        polyline(out, &emp, color, 1.5, false);
        polyline(out, &theory, color, 1.2, true);
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"{color}\">{label}</text>",
            right - 90.0,
            top + 14.0 + 12.0 * c as f64
        );
    }
}

/// One panel per diagonal entry: empirical variance with a ±2 s.e. band
/// (solid) and the theoretical variance (dashed), one colour per anchor.
pub fn variance_bands_svg(report: &VerificationReport) -> String {
    let dim = report
        .anchors
        .first()
        .and_then(|a| a.curve.first())
        .map_or(0, |r| r.empirical_covariance.len());
    let d1 = report.config.initial_x.len();
    let cols = dim.clamp(1, 3);
    let rows = dim.div_ceil(cols).max(1);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">"
    );
    let labels: Vec<String> = report
        .anchors
        .iter()
        .map(|a| format!("n = {}", a.anchor))
        .collect();
    let curves: Vec<(&str, &[GridRecord])> = report
        .anchors
        .iter()
        .zip(&labels)
        .map(|(a, l)| (l.as_str(), a.curve.as_slice()))
        .collect();
    for k in 0..dim {
        let (mut lo, mut hi, mut t_max) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for (_, recs) in &curves {
            for r in recs.iter() {
                let se = 2.0 * r.covariance_standard_error[k][k];
                lo = lo
                    .min(r.empirical_covariance[k][k] - se)
                    .min(r.theoretical_covariance[k][k]);
                hi = hi
                    .max(r.empirical_covariance[k][k] + se)
                    .max(r.theoretical_covariance[k][k]);
                t_max = t_max.max(r.t);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            continue;
        }
        let pad = 0.05 * (hi - lo).max(1e-12);
        let frame = Frame {
            x0: PANEL_W * (k % cols) as f64,
            y0: PANEL_H * (k / cols) as f64,
            t_max: if t_max > 0.0 { t_max } else { 1.0 },
            v_min: lo - pad,
            v_max: hi + pad,
        };
        let title = if k < d1 {
            format!("Var u[{k}]")
        } else {
            format!("Var w[{}]", k - d1)
        };
        panel(&mut out, &frame, &title, &curves, k);
    }
    out.push_str("</svg>\n");
    out
}
