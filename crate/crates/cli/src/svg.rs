//! Self-contained SVG line plots: multiple panels stacked vertically, each
//! with axes, series polylines, and an optional shaded ± band.

use std::fmt::Write as _;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 120.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_V: f64 = 24.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

pub struct Panel {
    pub title: String,
    /// Common x coordinates for every series in the panel.
    pub x: Vec<f64>,
    pub series: Vec<Series>,
    /// Optional (center, half_width) band drawn behind the series.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

impl Panel {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in &self.series {
            for &v in &s.values {
                ymin = ymin.min(v);
                ymax = ymax.max(v);
            }
        }
        if let Some((center, half)) = &self.band {
            for (c, h) in center.iter().zip(half.iter()) {
                ymin = ymin.min(c - h);
                ymax = ymax.max(c + h);
            }
        }
        if !ymin.is_finite() || !ymax.is_finite() {
            ymin = 0.0;
            ymax = 1.0;
        }
        if ymax - ymin < 1e-12 {
            ymin -= 0.5;
            ymax += 0.5;
        }
        let xmin = self.x.first().copied().unwrap_or(0.0);
        let xmax = self.x.last().copied().unwrap_or(1.0);
        let xmax = if xmax - xmin < 1e-12 { xmin + 1.0 } else { xmax };
        (xmin, xmax, ymin, ymax)
    }
}

/// Render panels into one SVG document.
pub fn render(title: &str, panels: &[Panel]) -> String {
    let total_h = MARGIN_V + panels.len() as f64 * (PANEL_H + MARGIN_V) + 20.0;
    let total_w = MARGIN_L + PANEL_W + MARGIN_R;
    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w:.0}\" height=\"{total_h:.0}\" \
         viewBox=\"0 0 {total_w:.0} {total_h:.0}\">\n"
    );
    let _ = write!(
        out,
        "<text x=\"{MARGIN_L}\" y=\"16\" font-family=\"monospace\" font-size=\"13\">{}</text>\n",
        xml_escape(title)
    );
    for (p_idx, panel) in panels.iter().enumerate() {
        let top = 24.0 + MARGIN_V + p_idx as f64 * (PANEL_H + MARGIN_V);
        let (xmin, xmax, ymin, ymax) = panel.bounds();
        let sx = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * PANEL_W;
        let sy = |y: f64| top + PANEL_H - (y - ymin) / (ymax - ymin) * PANEL_H;

        let _ = write!(
            out,
            "<rect x=\"{MARGIN_L}\" y=\"{top}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" \
             fill=\"none\" stroke=\"#cccccc\"/>\n"
        );
        let _ = write!(
            out,
            "<text x=\"4\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            top + 12.0,
            xml_escape(&panel.title)
        );
        // Axis labels: y extremes and x extremes.
        let _ = write!(
            out,
            "<text x=\"4\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"9\">{}</text>\n",
            top + PANEL_H,
            fmt6(ymin)
        );
        let _ = write!(
            out,
            "<text x=\"4\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"9\">{}</text>\n",
            top + 26.0,
            fmt6(ymax)
        );

        if let Some((center, half)) = &panel.band {
            let mut d = String::from("M");
            for (i, (&x, (&c, &h))) in panel
                .x
                .iter()
                .zip(center.iter().zip(half.iter()))
                .enumerate()
            {
                let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "" } else { " L" }, sx(x), sy(c + h));
            }
            for (&x, (&c, &h)) in panel
                .x
                .iter()
                .zip(center.iter().zip(half.iter()))
                .rev()
            {
                let _ = write!(d, " L{:.2},{:.2}", sx(x), sy(c - h));
            }
            d.push('Z');
            let _ = write!(
                out,
                "<path d=\"{d}\" fill=\"#1f77b4\" fill-opacity=\"0.25\" stroke=\"none\"/>\n"
            );
        }

        for (s_idx, series) in panel.series.iter().enumerate() {
            let color = PALETTE[s_idx % PALETTE.len()];
            let mut points = String::new();
            for (&x, &y) in panel.x.iter().zip(series.values.iter()) {
                let _ = write!(points, "{:.2},{:.2} ", sx(x), sy(y));
            }
            let _ = write!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
                points.trim_end()
            );
            let _ = write!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" \
                 fill=\"{color}\">{}</text>\n",
                MARGIN_L + PANEL_W + 6.0,
                top + 12.0 + 12.0 * s_idx as f64,
                xml_escape(&series.name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
