//! DET curve export: CSV and probit-warped SVG plots.
//!
//! The CSV carries one `threshold,far,frr` row per operating point at 9
//! significant digits (the `+inf` sentinel threshold prints as `inf`).
//! The SVG draws FAR against FRR on probit-warped axes, i.e. each rate is
//! mapped through the standard normal quantile after clamping to
//! `[1e-6, 1 - 1e-6]`.

use crate::metrics::DetPoint;
use crate::sigfig::format_sig;

/// Lower clamp applied to rates before probit warping; `1 - RATE_CLAMP`
/// is the upper clamp.
pub const RATE_CLAMP: f64 = 1e-6;

/// Standard normal quantile function (inverse of the normal CDF).
///
/// Acklam's rational approximation, relative error below 1.2e-9 over
/// (0, 1). Requires `0 < p < 1`.
#[allow(clippy::excessive_precision)]
pub fn probit(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probit requires p in (0, 1), got {p}");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| -> f64 {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    }
}

/// Probit warp of a rate, clamped to `[RATE_CLAMP, 1 - RATE_CLAMP]`.
pub fn warp_rate(rate: f64) -> f64 {
    probit(rate.clamp(RATE_CLAMP, 1.0 - RATE_CLAMP))
}

/// CSV export: header line `threshold,far,frr`, one row per point, 9
/// significant digits.
pub fn det_csv(points: &[DetPoint]) -> String {
    let mut out = String::from("threshold,far,frr\n");
    for p in points {
        out.push_str(&format_sig(p.threshold, 9));
        out.push(',');
        out.push_str(&format_sig(p.far, 9));
        out.push(',');
        out.push_str(&format_sig(p.frr, 9));
        out.push('\n');
    }
    out
}

/// A named DET profile for plotting.
#[derive(Debug, Clone)]
pub struct DetSystem {
    pub name: String,
    pub points: Vec<DetPoint>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

const TICK_RATES: [f64; 12] = [
    0.0001, 0.001, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95, 0.99,
];

fn tick_label(rate: f64) -> String {
    let pct = rate * 100.0;
    if pct >= 1.0 {
        format!("{pct:.0}%")
    } else if pct >= 0.1 {
        format!("{pct:.1}%")
    } else {
        format!("{pct}%")
    }
}

/// Render one or more DET profiles into a standalone SVG document.
///
/// Axes are auto-ranged to the warped data with a small margin; grid
/// lines sit at conventional rates. FAR on x, FRR on y.
pub fn det_svg(systems: &[DetSystem]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 640.0;
    const M_LEFT: f64 = 70.0;
    const M_RIGHT: f64 = 25.0;
    const M_TOP: f64 = 40.0;
    const M_BOTTOM: f64 = 60.0;
    let plot_w = W - M_LEFT - M_RIGHT;
    let plot_h = H - M_TOP - M_BOTTOM;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for sys in systems {
        for p in &sys.points {
            for v in [warp_rate(p.far), warp_rate(p.frr)] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = warp_rate(0.001);
        hi = warp_rate(0.6);
    }
    if hi - lo < 0.5 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;

    let x_of = |w: f64| M_LEFT + (w - lo) / (hi - lo) * plot_w;
    let y_of = |w: f64| H - M_BOTTOM - (w - lo) / (hi - lo) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">Detection error trade-off</text>\n",
        M_LEFT + plot_w / 2.0
    ));

    for &rate in &TICK_RATES {
        let w = warp_rate(rate);
        if w < lo || w > hi {
            continue;
        }
        let (x, y) = (x_of(w), y_of(w));
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\" stroke-dasharray=\"3,3\"/>\n",
            M_TOP, H - M_BOTTOM
        ));
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\" stroke-dasharray=\"3,3\"/>\n",
            M_LEFT, W - M_RIGHT
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            H - M_BOTTOM + 16.0,
            tick_label(rate)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            M_LEFT - 6.0,
            y + 4.0,
            tick_label(rate)
        ));
    }

    svg.push_str(&format!(
        "<rect x=\"{M_LEFT}\" y=\"{M_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">False acceptance rate</text>\n",
        M_LEFT + plot_w / 2.0,
        H - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">False rejection rate</text>\n",
        M_TOP + plot_h / 2.0,
        M_TOP + plot_h / 2.0
    ));

    for (i, sys) in systems.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for p in &sys.points {
            let x = x_of(warp_rate(p.far));
            let y = y_of(warp_rate(p.frr));
            if !path.is_empty() {
                path.push(' ');
            }
            path.push_str(&format!("{x:.2},{y:.2}"));
        }
        svg.push_str(&format!(
            "<polyline points=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
        ));
        let ly = M_TOP + 16.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            W - M_RIGHT - 150.0,
            W - M_RIGHT - 126.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            W - M_RIGHT - 120.0,
            ly + 4.0,
            xml_escape(&sys.name)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
