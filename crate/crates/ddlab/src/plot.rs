//! Self-contained SVG line plots of entropy-vs-episode curves with
//! translucent confidence bands.
//!
//! One band path plus one mean-line path per architecture, deterministic
//! bytes for identical inputs, no external references.

use std::path::PathBuf;

use crate::analysis::AggregateSeries;
use crate::error::{Error, Result};

/// Fixed palette; colors are assigned to architectures by input order.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 36.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;
/// Paths longer than this are thinned by a uniform stride.
const MAX_POINTS: usize = 1500;

/// What to draw and where to put it.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    /// Aggregate CSVs, one or more architectures in total.
    pub inputs: Vec<PathBuf>,
    pub x_label: String,
    pub y_label: String,
    /// Echoed in the title when known.
    pub smoothing_window: Option<usize>,
    pub output: PathBuf,
}

impl PlotSpec {
    pub fn new(inputs: Vec<PathBuf>, output: PathBuf, smoothing_window: Option<usize>) -> PlotSpec {
        PlotSpec {
            inputs,
            x_label: "Training Episodes".to_string(),
            y_label: "Policy Entropy (nats)".to_string(),
            smoothing_window,
            output,
        }
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Round tick steps: 1/2/5 times a power of ten.
fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let factor = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * mag
}

fn ticks(max: f64, target: usize) -> Vec<f64> {
    let step = nice_step(max, target);
    let mut out = Vec::new();
    let mut v = 0.0;
    while v <= max + 1e-9 {
        out.push(v);
        v += step;
    }
    out
}

fn legend_text(label: &str) -> String {
    format!("[{}]", label.split('-').collect::<Vec<_>>().join(", "))
}

/// Renders the aggregate curves into an SVG document.
pub fn render_svg(
    series: &[AggregateSeries],
    x_label: &str,
    y_label: &str,
    smoothing_window: Option<usize>,
) -> Result<String> {
    if series.is_empty() {
        return Err(Error::usage("nothing to plot"));
    }
    if series.len() > PALETTE.len() {
        return Err(Error::usage(format!(
            "at most {} architectures per plot (distinct colors)",
            PALETTE.len()
        )));
    }
    let episodes = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    if episodes == 0 {
        return Err(Error::usage("aggregate series are empty"));
    }
    let mut y_max: f64 = 4f64.ln(); // at least the uniform-policy entropy
    for s in series {
        for p in &s.points {
            y_max = y_max.max(p.ci_high);
        }
    }
    y_max *= 1.05;
    let x_max = episodes as f64;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |episode: f64| MARGIN_LEFT + episode / x_max * plot_w;
    let sy = |v: f64| MARGIN_TOP + (1.0 - v / y_max) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    let title = match smoothing_window {
        Some(w) => format!("Policy entropy across training episodes (window {w})"),
        None => "Policy entropy across training episodes".to_string(),
    };
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        fmt(WIDTH / 2.0)
    ));

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
        fmt(x0),
        fmt(y0),
        fmt(x0 + plot_w),
        fmt(y0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
        fmt(x0),
        fmt(MARGIN_TOP),
        fmt(x0),
        fmt(y0)
    ));
    for t in ticks(x_max, 8) {
        let x = sx(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"#000000\"/>\n",
            x = fmt(x),
            y = fmt(y0),
            y2 = fmt(y0 + 6.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            fmt(x),
            fmt(y0 + 22.0),
            t as u64
        ));
    }
    for t in ticks(y_max, 6) {
        let y = sy(t);
        svg.push_str(&format!(
            "<line x1=\"{x2}\" y1=\"{y}\" x2=\"{x}\" y2=\"{y}\" stroke=\"#000000\"/>\n",
            x = fmt(x0),
            x2 = fmt(x0 - 6.0),
            y = fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{:.2}</text>\n",
            fmt(x0 - 10.0),
            fmt(y + 4.0),
            t
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 16.0)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {mid})\">{y_label}</text>\n",
        fmt(MARGIN_TOP + plot_h / 2.0),
        mid = fmt(MARGIN_TOP + plot_h / 2.0)
    ));

    // Band + mean line per architecture.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i];
        let n = s.points.len();
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let idx: Vec<usize> = (0..n)
            .step_by(stride)
            .chain(std::iter::once(n - 1))
            .collect();
        let mut band = String::new();
        for (k, &j) in idx.iter().enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            band.push_str(&format!(
                "{cmd}{},{} ",
                fmt(sx((j + 1) as f64)),
                fmt(sy(s.points[j].ci_high))
            ));
        }
        for &j in idx.iter().rev() {
            band.push_str(&format!(
                "L{},{} ",
                fmt(sx((j + 1) as f64)),
                fmt(sy(s.points[j].ci_low))
            ));
        }
        band.push('Z');
        svg.push_str(&format!(
            "<path d=\"{band}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n"
        ));
        let mut line = String::new();
        for (k, &j) in idx.iter().enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            line.push_str(&format!(
                "{cmd}{},{} ",
                fmt(sx((j + 1) as f64)),
                fmt(sy(s.points[j].mean))
            ));
        }
        svg.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            line.trim_end()
        ));
    }

    // Legend, top-right inside the plot area.
    let legend_x = MARGIN_LEFT + plot_w - 150.0;
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 + 20.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"18\" height=\"6\" fill=\"{}\"/>\n",
            fmt(legend_x),
            fmt(y - 5.0),
            PALETTE[i]
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
             class=\"legend\">{} (n={})</text>\n",
            fmt(legend_x + 24.0),
            fmt(y + 2.0),
            legend_text(&s.label),
            s.n_runs
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AggregatePoint;

    fn fake_series(label: &str, len: usize, base: f64) -> AggregateSeries {
        let points = (0..len)
            .map(|i| {
                let mean = base * (1.0 - i as f64 / len as f64);
                AggregatePoint {
                    mean,
                    ci_low: mean - 0.05,
                    ci_high: mean + 0.05,
                }
            })
            .collect();
        AggregateSeries {
            label: label.to_string(),
            points,
            n_runs: 15,
        }
    }

    #[test]
    fn one_architecture_gives_one_path_pair() {
        let svg = render_svg(&[fake_series("64", 100, 1.3)], "x", "y", Some(50)).unwrap();
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("window 50"));
    }

    #[test]
    fn five_architectures_give_five_legend_entries() {
        let series: Vec<AggregateSeries> = ["64", "64-64", "64-64-64", "128-128", "128-128-128"]
            .iter()
            .enumerate()
            .map(|(i, l)| fake_series(l, 50, 1.0 + 0.05 * i as f64))
            .collect();
        let svg = render_svg(&series, "x", "y", None).unwrap();
        assert_eq!(svg.matches("class=\"legend\"").count(), 5);
        assert_eq!(svg.matches("<path").count(), 10);
        assert!(svg.contains("[64, 64, 64]"));
        // Distinct colors per architecture.
        for i in 0..5 {
            assert!(svg.contains(PALETTE[i]));
        }
    }

    #[test]
    fn output_is_deterministic() {
        let series = [
            fake_series("64", 3000, 1.2),
            fake_series("128-128", 3000, 1.3),
        ];
        let a = render_svg(&series, "x", "y", Some(50)).unwrap();
        let b = render_svg(&series, "x", "y", Some(50)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_svg(&[], "x", "y", None).is_err());
    }

    #[test]
    fn svg_is_self_contained() {
        let svg = render_svg(&[fake_series("64", 10, 1.0)], "x", "y", None).unwrap();
        assert!(!svg.contains("http://") || svg.matches("http://").count() == 1); // only the xmlns
        assert!(svg.contains("xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(!svg.contains("href"));
        assert!(!svg.contains("url("));
    }
}
