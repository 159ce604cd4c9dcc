//! Minimal SVG line charts: stacked panels over a shared time axis.

use std::fmt::Write as _;
use std::path::Path;

use l1ac::sim::Trace;

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_V: f64 = 30.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

pub struct Panel<'a> {
    pub title: &'a str,
    pub columns: &'a [&'a str],
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render(trace: &Trace, title: &str, panels: &[Panel<'_>]) -> String {
    let t = trace.column("t").unwrap_or_default();
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0).max(1e-9));
    let height = panels.len() as f64 * (PANEL_H + MARGIN_V) + MARGIN_V + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="14">{title}</text>"#, MARGIN_L);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    for (k, panel) in panels.iter().enumerate() {
        let top = 20.0 + MARGIN_V + k as f64 * (PANEL_H + MARGIN_V);
        let series: Vec<(&str, Vec<f64>)> =
            panel.columns.iter().filter_map(|c| trace.column(c).map(|v| (*c, v))).collect();
        let (lo, hi) = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
        let x = |tv: f64| MARGIN_L + (tv - t0) / (t1 - t0).max(1e-12) * plot_w;
        let y = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
        );
        let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="{}">{}</text>"#, top - 6.0, panel.title);
        let _ = writeln!(s, r#"<text x="4" y="{}">{hi:.3e}</text>"#, top + 10.0);
        let _ = writeln!(s, r#"<text x="4" y="{}">{lo:.3e}</text>"#, top + PANEL_H);
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" y1="{0}" x2="{1}" y2="{0}" stroke="#ccc"/>"##,
                y(0.0),
                MARGIN_L + plot_w
            );
        }
        for (j, (name, v)) in series.iter().enumerate() {
            let color = COLORS[j % COLORS.len()];
            let mut pts = String::new();
            for (tv, vv) in t.iter().zip(v) {
                if vv.is_finite() {
                    let _ = write!(pts, "{:.2},{:.2} ", x(*tv), y(*vv));
                }
            }
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>"#);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
                MARGIN_L + plot_w + 8.0,
                top + 14.0 + 16.0 * j as f64
            );
        }
    }
    let bottom = 20.0 + panels.len() as f64 * (PANEL_H + MARGIN_V) + 14.0;
    let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="{bottom}">t = {t0} s</text>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{bottom}" text-anchor="end">t = {t1} s</text>"#, MARGIN_L + plot_w);
    s.push_str("</svg>\n");
    s
}

pub fn write(path: &Path, trace: &Trace, title: &str, panels: &[Panel<'_>]) -> std::io::Result<()> {
    std::fs::write(path, render(trace, title, panels))
}

pub const LINEAR_PANELS: [Panel<'static>; 3] = [
    Panel { title: "output", columns: &["x_0", "x_ref_0", "x_id_0"] },
    Panel { title: "input", columns: &["u_0", "u_ref_0", "u_id_0"] },
    Panel { title: "prediction error norm", columns: &["xtilde_norm"] },
];

pub const FLIGHT_PANELS: [Panel<'static>; 4] = [
    Panel { title: "pitch angle (rad)", columns: &["theta", "theta_cmd"] },
    Panel { title: "adaptive input, pitch axis", columns: &["eta1_q"] },
    Panel { title: "roll angle (rad)", columns: &["phi", "phi_cmd"] },
    Panel { title: "body rates (rad/s)", columns: &["p", "q", "r"] },
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_available_series() {
        let mut tr = Trace::new(vec!["t".into(), "a".into(), "b".into()]);
        for i in 0..10 {
            tr.push(vec![i as f64 * 0.1, i as f64, -(i as f64)]);
        }
        let svg = render(&tr, "demo", &[Panel { title: "p", columns: &["a", "b", "missing"] }]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn flat_series_gets_a_nonzero_range() {
        let (lo, hi) = range([2.0, 2.0].into_iter());
        assert!(hi > lo);
    }
}
