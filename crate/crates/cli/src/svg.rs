//! Minimal self-contained SVG line charts. Every chart mirrors a CSV file;
//! these are quick-look views, not the data of record.

/// Distinguishable line colors, cycled.
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#ad494a",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn nice_range(min: f64, max: f64) -> (f64, f64) {
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if (max - min).abs() < 1e-12 {
        return (min - 1.0, max + 1.0);
    }
    let pad = 0.05 * (max - min);
    (min - pad, max + pad)
}

/// Render labeled series as an SVG polyline chart with framed axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (width, height) = (860.0, 520.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let (x_min, x_max) = nice_range(x_min, x_max);
    let (y_min, y_max) = nice_range(y_min, y_max);
    let sx = move |x: f64| left + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| top + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        left + plot_w / 2.0,
        title
    ));
    svg.push_str(&format!(
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333\"/>\n"
    ));

    // Axis ticks at the extremes and zero crossings.
    for (value, frac) in [(x_min, 0.0), ((x_min + x_max) / 2.0, 0.5), (x_max, 1.0)] {
        let x = left + frac * plot_w;
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{value:.2}</text>\n",
            top + plot_h + 18.0
        ));
    }
    for (value, frac) in [(y_min, 0.0), ((y_min + y_max) / 2.0, 0.5), (y_max, 1.0)] {
        let y = top + plot_h - frac * plot_h;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{value:.2}</text>\n",
            left - 8.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        left + plot_w / 2.0,
        height - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        y_label
    ));

    if y_min < 0.0 && y_max > 0.0 {
        let y0 = sy(0.0);
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"#bbb\" stroke-dasharray=\"4 3\"/>\n",
            left + plot_w
        ));
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
            pts.join(" ")
        ));
        let ly = top + 16.0 * i as f64 + 10.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            width - right + 10.0,
            width - right + 34.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            width - right + 40.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_series_and_labels() {
        let series = vec![
            Series { label: "+30".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] },
            Series { label: "-30".into(), points: vec![(0.0, 0.0), (1.0, -1.0)] },
        ];
        let svg = line_chart("demo", "time (s)", "amplitude", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("+30"));
        assert!(svg.contains("demo"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan() {
        let series = vec![Series { label: "flat".into(), points: vec![(0.0, 2.0), (1.0, 2.0)] }];
        let svg = line_chart("flat", "x", "y", &series);
        assert!(!svg.contains("NaN"));
    }
}
