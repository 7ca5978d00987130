//! Static SVG bar chart for contribution reports. No dependencies, no
//! interactivity: one horizontal bar per contribution, negative values to the
//! left of the axis.

/// Render labeled values as a horizontal bar chart.
pub fn bar_chart(title: &str, entries: &[(String, f64)]) -> String {
    let bar_height = 22.0;
    let gap = 6.0;
    let label_width = 180.0;
    let plot_width = 420.0;
    let top = 40.0;
    let height = top + entries.len() as f64 * (bar_height + gap) + 20.0;
    let width = label_width + plot_width + 40.0;

    let max_abs = entries
        .iter()
        .map(|(_, v)| v.abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    let zero_x = label_width + plot_width / 2.0;
    let scale = (plot_width / 2.0 - 10.0) / max_abs;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"10\" y=\"20\" font-size=\"14\">{}</text>\n",
        escape(title)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{zero_x:.1}\" y1=\"{top:.1}\" x2=\"{zero_x:.1}\" y2=\"{:.1}\" stroke=\"#888\"/>\n",
        height - 15.0
    ));
    for (i, (label, value)) in entries.iter().enumerate() {
        let y = top + i as f64 * (bar_height + gap);
        let w = value.abs() * scale;
        let x = if *value >= 0.0 { zero_x } else { zero_x - w };
        let color = if *value >= 0.0 { "#2c7fb8" } else { "#d95f0e" };
        svg.push_str(&format!(
            "  <text x=\"10\" y=\"{:.1}\">{}</text>\n",
            y + bar_height - 6.0,
            escape(label)
        ));
        svg.push_str(&format!(
            "  <rect x=\"{x:.2}\" y=\"{y:.1}\" width=\"{w:.2}\" height=\"{bar_height:.1}\" fill=\"{color}\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{value:.4}</text>\n",
            label_width + plot_width + 4.0,
            y + bar_height - 6.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
