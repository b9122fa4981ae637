//! Minimal SVG renderings of run artifacts: quiver plots of field grids,
//! action scatter plots and line charts.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::env::goal_positions;
use crate::flow::FieldRow;

const SIZE: f64 = 400.0;
const MARGIN: f64 = 30.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (SIZE - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        SIZE - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (SIZE - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
        SIZE / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn goals(out: &mut String, f: &Frame) {
    for g in goal_positions() {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"3,2\"/>",
            f.px(g[0]),
            f.py(g[1]),
            (f.px(1.0) - f.px(0.0)).abs()
        );
    }
}

/// Arrows of the field on its grid, scaled so the longest spans one cell.
pub fn quiver(rows: &[FieldRow], title: &str) -> String {
    let lo = rows.iter().map(|r| r.x[0].min(r.x[1])).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.x[0].max(r.x[1])).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo < hi { (lo, hi) } else { (-1.0, 1.0) };
    let f = Frame { x0: lo - 0.5, x1: hi + 0.5, y0: lo - 0.5, y1: hi + 0.5 };
    let cell = (hi - lo) / (rows.len() as f64).sqrt().max(1.0);
    let max_norm = rows.iter().map(|r| r.u[0].hypot(r.u[1])).fold(0.0, f64::max);
    let scale = if max_norm > 0.0 { cell / max_norm } else { 0.0 };
    let mut out = header(title);
    goals(&mut out, &f);
    for r in rows {
        let (x, y) = (f.px(r.x[0]), f.py(r.x[1]));
        let (tx, ty) = (f.px(r.x[0] + scale * r.u[0]), f.py(r.x[1] + scale * r.u[1]));
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{tx:.2}\" y2=\"{ty:.2}\" stroke=\"{}\" stroke-width=\"1\"/>\
             <circle cx=\"{tx:.2}\" cy=\"{ty:.2}\" r=\"1.2\" fill=\"{}\"/>",
            COLORS[0], COLORS[0]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of two-dimensional actions with the bandit goals overlaid.
pub fn action_cloud(actions: &Array2<f64>, title: &str) -> String {
    let f = Frame { x0: -6.0, x1: 6.0, y0: -6.0, y1: 6.0 };
    let mut out = header(title);
    goals(&mut out, &f);
    for a in actions.rows() {
        let (x, y) = (a[0].clamp(-6.0, 6.0), a[1].clamp(-6.0, 6.0));
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{}\" fill-opacity=\"0.5\"/>",
            f.px(x),
            f.py(y),
            COLORS[1]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Line chart of one or more `(x, y)` series sharing axes.
pub fn lines(series: &[(&str, &[(f64, f64)])], title: &str) -> String {
    let finite = series.iter().flat_map(|(_, s)| s.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let widen = |lo: &mut f64, hi: &mut f64| {
        if !lo.is_finite() {
            (*lo, *hi) = (0.0, 1.0);
        } else if !(*lo < *hi) {
            *lo -= 1.0;
            *hi += 1.0;
        }
    };
    widen(&mut x0, &mut x1);
    widen(&mut y0, &mut y1);
    let f = Frame { x0, x1, y0, y1 };
    let mut out = header(title);
    for (i, (name, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>",
            points.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\" font-family=\"sans-serif\">{}</text>",
            MARGIN + 5.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"10\" font-family=\"sans-serif\">x: [{x0:.3e}, {x1:.3e}]  y: [{y0:.3e}, {y1:.3e}]</text>",
        SIZE - 8.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_documents() {
        let rows = vec![
            FieldRow { x: [0.0, 0.0], u: [1.0, 0.0] },
            FieldRow { x: [1.0, 1.0], u: [0.0, 0.0] },
        ];
        for doc in [
            quiver(&rows, "a<b"),
            action_cloud(&Array2::zeros((3, 2)), "cloud"),
            lines(&[("e", &[(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0)])], "trace"),
            lines(&[("empty", &[])], "nothing"),
        ] {
            assert!(doc.starts_with("<svg") && doc.trim_end().ends_with("</svg>"));
            assert!(!doc.contains("NaN"));
        }
        assert!(quiver(&rows, "a<b").contains("a&lt;b"));
    }
}
