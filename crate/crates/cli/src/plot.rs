//! Plot artifacts: two-column text series and a self-contained SVG line plot
//! per series. Everything is rendered with fixed-precision formatting and no
//! timestamps, so reruns are byte-identical.

/// One measured series, already in plot coordinates: `x = 1/h` (or the
/// natural abscissa of the experiment) against `y = log(value)`.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

/// Two-column text rendering: comment header, then `x y` per line.
pub fn render_dat(series: &PlotSeries, hash: &str, version: &str) -> String {
    let mut out = format!(
        "# config_hash={hash} version={version}\n# {} {}\n",
        series.x_label, series.y_label
    );
    for (x, y) in &series.points {
        out.push_str(&format!("{x:.12e} {y:.12e}\n"));
    }
    out
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

/// Minimal line plot as a standalone SVG document: axes, four ticks per
/// axis, the polyline, and point markers. No external fonts, scripts, or
/// references — the file renders anywhere as-is.
pub fn render_svg(series: &PlotSeries, hash: &str, version: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0; // margins: left, right, top, bottom
    const MR: f64 = 20.0;
    const MT: f64 = 28.0;
    const MB: f64 = 52.0;

    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &series.points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if series.points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <desc>{} — config_hash={hash} version={version}</desc>\n",
        series.name
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{ML}\" y=\"18\" fill=\"black\">{}</text>\n",
        series.name
    ));
    // axes
    svg.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB
    ));
    svg.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB
    ));
    for t in ticks(x0, x1, 4) {
        let px = sx(t);
        svg.push_str(&format!(
            "  <line x1=\"{px:.2}\" y1=\"{}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"black\"/>\n",
            H - MB,
            H - MB + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{px:.2}\" y=\"{}\" text-anchor=\"middle\" fill=\"black\">{t:.3}</text>\n",
            H - MB + 20.0
        ));
    }
    for t in ticks(y0, y1, 4) {
        let py = sy(t);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{py:.2}\" x2=\"{ML}\" y2=\"{py:.2}\" stroke=\"black\"/>\n",
            ML - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"black\">{t:.3}</text>\n",
            ML - 9.0,
            py + 4.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" fill=\"black\">{}</text>\n",
        0.5 * (ML + W - MR),
        H - 12.0,
        series.x_label
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.2})\" fill=\"black\">{}</text>\n",
        0.5 * (MT + H - MB),
        0.5 * (MT + H - MB),
        series.y_label
    ));
    if !series.points.is_empty() {
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1a6fb4\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in &series.points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1a6fb4\"/>\n",
                sx(x),
                sy(y)
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}
