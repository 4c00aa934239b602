//! Minimal hand-rolled SVG line charts. Presentation only: every number in
//! a chart also lives in the CSV next to it. Deterministic output (string
//! building only, stable float formatting).

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-2 {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if log && v <= 0.0 {
                continue;
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = if log { 0.1 } else { 0.0 };
            hi = 1.0;
        }
        if lo == hi {
            // degenerate span: pad so the point is visible
            if log {
                lo /= 2.0;
                hi *= 2.0;
            } else {
                let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
                lo -= pad;
                hi += pad;
            }
        }
        Axis { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.max(self.lo).ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = 5;
        (0..=n)
            .map(|i| {
                let f = i as f64 / n as f64;
                if self.log {
                    (self.lo.ln() + f * (self.hi.ln() - self.lo.ln())).exp()
                } else {
                    self.lo + f * (self.hi - self.lo)
                }
            })
            .collect()
    }
}

/// Render one chart as a standalone `<svg>` group at the given y offset,
/// returning the markup (without the outer `<svg>` element).
fn render_panel(spec: &ChartSpec, series: &[Series], y_offset: f64) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let x_axis = Axis::new(xs, spec.log_x);
    let y_axis = Axis::new(ys, spec.log_y);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |v: f64| MARGIN_L + x_axis.frac(v) * plot_w;
    let py = |v: f64| MARGIN_T + (1.0 - y_axis.frac(v)) * plot_h;

    let mut out = String::new();
    out.push_str(&format!("<g transform=\"translate(0,{y_offset})\">\n"));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        spec.title
    ));
    // frame
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));
    // ticks + grid
    for t in x_axis.ticks() {
        let x = px(t);
        out.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
            MARGIN_T,
            MARGIN_T + plot_h
        ));
        out.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_T + plot_h + 16.0,
            fmt(t)
        ));
    }
    for t in y_axis.ticks() {
        let y = py(t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>\n",
            MARGIN_L,
            MARGIN_L + plot_w
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0,
            fmt(t)
        ));
    }
    // axis labels
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        spec.x_label
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        spec.y_label
    ));
    // series
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                path.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        // legend
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let lx = MARGIN_L + plot_w + 12.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 18.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            lx + 24.0,
            ly + 4.0,
            s.label
        ));
    }
    out.push_str("</g>\n");
    out
}

/// One chart per panel, stacked vertically into a single SVG document.
pub fn chart_grid(panels: &[(ChartSpec, Vec<Series>)]) -> String {
    let total_h = HEIGHT * panels.len() as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{total_h}\" viewBox=\"0 0 {WIDTH} {total_h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, (spec, series)) in panels.iter().enumerate() {
        out.push_str(&render_panel(spec, series, HEIGHT * i as f64));
    }
    out.push_str("</svg>\n");
    out
}

/// Single-panel chart.
pub fn chart(spec: &ChartSpec, series: Vec<Series>) -> String {
    chart_grid(&[(
        ChartSpec {
            title: spec.title.clone(),
            x_label: spec.x_label.clone(),
            y_label: spec.y_label.clone(),
            log_x: spec.log_x,
            log_y: spec.log_y,
        },
        series,
    )])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_series_with_legend() {
        let spec = ChartSpec {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            log_y: true,
        };
        let svg = chart(
            &spec,
            vec![
                Series {
                    label: "one".into(),
                    points: vec![(1.0, 10.0), (2.0, 5.0)],
                },
                Series {
                    label: "two".into(),
                    points: vec![(1.0, 8.0), (2.0, 7.0)],
                },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">one<") && svg.contains(">two<"));
        assert!(svg.starts_with("<svg"));
    }
}
