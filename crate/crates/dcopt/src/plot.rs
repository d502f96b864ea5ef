//! Minimal SVG line plots of run CSVs: consensus error, stationarity, and
//! objective against the round counter, log-log axes.

use crate::metrics::MetricsRecord;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 560.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

/// Render one SVG document plotting the metric columns of every input run.
pub fn render_svg(runs: &[(String, Vec<MetricsRecord>)]) -> String {
    let mut series = Vec::new();
    for (name, records) in runs {
        for (column, extract) in [
            ("consensus", &(|r: &MetricsRecord| r.consensus_error) as &dyn Fn(&MetricsRecord) -> f64),
            ("stationarity", &|r: &MetricsRecord| r.stationarity),
            ("objective", &|r: &MetricsRecord| r.objective),
        ] {
            let points: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.t > 0 && extract(r) > 0.0)
                .map(|r| ((r.t as f64).log10(), extract(r).log10()))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    label: format!("{name}:{column}"),
                    points,
                });
            }
        }
    }
    if series.is_empty() {
        return format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\
             <text x=\"20\" y=\"40\">no positive data to plot</text></svg>"
        );
    }

    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max, mut y_min, mut y_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let sx = (WIDTH - 2.0 * MARGIN) / (x_max - x_min);
    let sy = (HEIGHT - 2.0 * MARGIN) / (y_max - y_min);
    let px = |x: f64| MARGIN + (x - x_min) * sx;
    let py = |y: f64| HEIGHT - MARGIN - (y - y_min) * sy;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\">log10 t</text>\n",
        WIDTH / 2.0 - 20.0,
        HEIGHT - MARGIN / 3.0
    ));
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\">log10 value</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    // Tick labels at the corners.
    svg.push_str(&format!(
        "<text x=\"{m}\" y=\"{y}\">{x_min:.1}</text><text x=\"{r}\" y=\"{y}\">{x_max:.1}</text>\n",
        m = MARGIN - 10.0,
        r = WIDTH - MARGIN - 10.0,
        y = HEIGHT - MARGIN + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{b}\">{y_min:.1}</text><text x=\"{x}\" y=\"{t}\">{y_max:.1}</text>\n",
        x = MARGIN - 40.0,
        b = HEIGHT - MARGIN,
        t = MARGIN + 4.0
    ));

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = MARGIN + 16.0 * idx as f64;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"12\" height=\"4\" fill=\"{color}\"/>\
             <text x=\"{tx}\" y=\"{ty}\">{label}</text>\n",
            x = WIDTH - MARGIN - 220.0,
            y = ly - 4.0,
            tx = WIDTH - MARGIN - 202.0,
            ty = ly + 2.0,
            label = s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
