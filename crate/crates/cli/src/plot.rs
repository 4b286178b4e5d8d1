//! Static SVG plots derived strictly from the report CSVs: sweep heatmaps,
//! per-subject boxplots, and per-activity scatter charts. No external
//! plotting dependency; output is deterministic text.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use eebench_core::eval::BoxStats;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn f(v: f64) -> String {
    format!("{v:.2}")
}

/// Light-to-dark ramp (light = low RMSE = better, matching heatmap reading).
fn heat_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    // White -> steel blue -> dark navy.
    let (r1, g1, b1) = (247.0, 251.0, 255.0);
    let (r2, g2, b2) = (49.0, 102.0, 158.0);
    let (r3, g3, b3) = (8.0, 24.0, 58.0);
    let (r, g, b) = if t < 0.5 {
        let u = t * 2.0;
        (r1 + (r2 - r1) * u, g1 + (g2 - g1) * u, b1 + (b2 - b1) * u)
    } else {
        let u = (t - 0.5) * 2.0;
        (r2 + (r3 - r2) * u, g2 + (g3 - g2) * u, b2 + (b3 - b2) * u)
    };
    format!("rgb({},{},{})", r as u8, g as u8, b as u8)
}

const PALETTE: [&str; 8] =
    ["#31669e", "#c55a11", "#3a7d44", "#8e44ad", "#b02e2e", "#0e7c7b", "#7f6000", "#444444"];

/// RMSE heatmap: rows x cols, `None` cells render gray.
pub fn heatmap(
    path: &Path,
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Option<f64>],
) -> Result<()> {
    let (nr, nc) = (row_labels.len(), col_labels.len());
    assert_eq!(values.len(), nr * nc, "heatmap shape mismatch");
    let cell = 46.0;
    let left = 210.0;
    let top = 70.0;
    let w = left + nc as f64 * cell + 120.0;
    let h = top + nr as f64 * cell + 40.0;

    let finite: Vec<f64> = values.iter().flatten().copied().collect();
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        left,
        esc(title)
    ));
    for (j, label) in col_labels.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            left + (j as f64 + 0.5) * cell,
            top - 10.0,
            esc(label)
        ));
    }
    for (i, label) in row_labels.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            left - 8.0,
            top + (i as f64 + 0.62) * cell,
            esc(label)
        ));
        for j in 0..nc {
            let x = left + j as f64 * cell;
            let y = top + i as f64 * cell;
            match values[i * nc + j] {
                Some(v) => {
                    let t = (v - lo) / span;
                    let text_fill = if t > 0.55 { "#ffffff" } else { "#111111" };
                    svg.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                         fill=\"{}\" stroke=\"#ffffff\"/>\n",
                        heat_color(t)
                    ));
                    svg.push_str(&format!(
                        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{text_fill}\">{}</text>\n",
                        x + cell / 2.0,
                        y + cell / 2.0 + 4.0,
                        f(v)
                    ));
                }
                None => {
                    svg.push_str(&format!(
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                         fill=\"#dddddd\" stroke=\"#ffffff\"/>\n"
                    ));
                }
            }
        }
    }
    // Scale legend.
    let lx = left + nc as f64 * cell + 20.0;
    for k in 0..20 {
        let t = k as f64 / 19.0;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{}\" width=\"18\" height=\"8\" fill=\"{}\"/>\n",
            top + (19 - k) as f64 * 8.0,
            heat_color(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\">{}</text>\n<text x=\"{}\" y=\"{}\">{}</text>\n",
        lx + 24.0,
        top + 166.0,
        f(lo),
        lx + 24.0,
        top + 10.0,
        f(hi)
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

/// Boxplots of per-fold RMSE distributions, one box per label.
pub fn boxplot(path: &Path, title: &str, records: &[(String, BoxStats)]) -> Result<()> {
    let n = records.len().max(1);
    let slot = 70.0;
    let left = 70.0;
    let top = 50.0;
    let plot_h = 260.0;
    let w = left + n as f64 * slot + 40.0;
    let h = top + plot_h + 80.0;

    let lo = records
        .iter()
        .flat_map(|(_, b)| b.outliers.iter().copied().chain([b.whisker_lo]))
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let hi = records
        .iter()
        .flat_map(|(_, b)| b.outliers.iter().copied().chain([b.whisker_hi]))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(lo + 1e-9);
    let span = hi - lo;
    let ymap = |v: f64| top + plot_h - (v - lo) / span * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{left}\" y=\"22\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        esc(title)
    ));
    // Y axis with 5 ticks.
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"#333\"/>\n",
        top + plot_h
    ));
    for k in 0..=5 {
        let v = lo + span * k as f64 / 5.0;
        let y = ymap(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"#333\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            left - 4.0,
            left - 8.0,
            y + 4.0,
            f(v)
        ));
    }
    for (i, (label, b)) in records.iter().enumerate() {
        let cx = left + (i as f64 + 0.5) * slot;
        let bw = 28.0;
        let color = PALETTE[i % PALETTE.len()];
        // Whiskers.
        svg.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"#333\"/>\n",
            ymap(b.whisker_hi),
            ymap(b.q75)
        ));
        svg.push_str(&format!(
            "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"#333\"/>\n",
            ymap(b.q25),
            ymap(b.whisker_lo)
        ));
        for wv in [b.whisker_lo, b.whisker_hi] {
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
                cx - bw / 3.0,
                ymap(wv),
                cx + bw / 3.0,
                ymap(wv)
            ));
        }
        // Box and median.
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{bw}\" height=\"{}\" fill=\"{color}\" \
             fill-opacity=\"0.55\" stroke=\"#333\"/>\n",
            cx - bw / 2.0,
            ymap(b.q75),
            (ymap(b.q25) - ymap(b.q75)).max(0.5)
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#111\" stroke-width=\"2\"/>\n",
            cx - bw / 2.0,
            ymap(b.median),
            cx + bw / 2.0,
            ymap(b.median)
        ));
        for o in &b.outliers {
            svg.push_str(&format!(
                "<circle cx=\"{cx}\" cy=\"{}\" r=\"3\" fill=\"none\" stroke=\"#333\"/>\n",
                ymap(*o)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(35 {cx} {})\">{}</text>\n",
            top + plot_h + 16.0,
            top + plot_h + 16.0,
            esc(label)
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

/// One scatter series.
pub struct Series {
    pub label: String,
    /// (category index, value) points.
    pub points: Vec<(usize, f64)>,
}

/// Categorical scatter: x = labelled categories, y = metric, colored series.
pub fn scatter(
    path: &Path,
    title: &str,
    x_labels: &[String],
    series: &[Series],
    y_label: &str,
) -> Result<()> {
    let n = x_labels.len().max(1);
    let slot = 54.0;
    let left = 70.0;
    let top = 50.0;
    let plot_h = 250.0;
    let w = left + n as f64 * slot + 180.0;
    let h = top + plot_h + 90.0;

    let values: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let span = hi - lo;
    let ymap = |v: f64| top + plot_h - (v - lo) / span * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{left}\" y=\"22\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        esc(title)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        esc(y_label)
    ));
    svg.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"#333\"/>\n",
        top + plot_h
    ));
    for k in 0..=5 {
        let v = lo + span * k as f64 / 5.0;
        let y = ymap(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"#333\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            left - 4.0,
            left - 8.0,
            y + 4.0,
            f(v)
        ));
    }
    for (i, label) in x_labels.iter().enumerate() {
        let cx = left + (i as f64 + 0.5) * slot;
        svg.push_str(&format!(
            "<text x=\"{cx}\" y=\"{}\" text-anchor=\"end\" transform=\"rotate(-45 {cx} {})\">{}</text>\n",
            top + plot_h + 16.0,
            top + plot_h + 16.0,
            esc(label)
        ));
    }
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // Jitter series horizontally so overlapping points stay visible.
        let dx = (si as f64 - (series.len() as f64 - 1.0) / 2.0) * 7.0;
        for &(xi, v) in &s.points {
            let cx = left + (xi as f64 + 0.5) * slot + dx;
            svg.push_str(&format!(
                "<circle cx=\"{cx}\" cy=\"{}\" r=\"4\" fill=\"{color}\" fill-opacity=\"0.85\"/>\n",
                ymap(v)
            ));
        }
        let lx = left + n as f64 * slot + 16.0;
        let ly = top + 16.0 * si as f64;
        svg.push_str(&format!(
            "<circle cx=\"{lx}\" cy=\"{}\" r=\"4\" fill=\"{color}\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            ly - 3.0,
            lx + 10.0,
            ly,
            esc(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_writes_valid_svg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.svg");
        heatmap(
            &path,
            "demo",
            &["a".into(), "b".into()],
            &["m1".into(), "m2".into()],
            &[Some(1.0), Some(2.0), None, Some(0.5)],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("</svg>"));
        assert!(text.contains("1.00"));
        assert!(text.contains("#dddddd"), "missing cell rendered gray");
    }

    #[test]
    fn plots_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let b = BoxStats {
            median: 1.0,
            q25: 0.8,
            q75: 1.3,
            whisker_lo: 0.5,
            whisker_hi: 1.6,
            outliers: vec![2.5],
        };
        let p1 = dir.path().join("b1.svg");
        let p2 = dir.path().join("b2.svg");
        boxplot(&p1, "t", &[("mv".into(), b.clone())]).unwrap();
        boxplot(&p2, "t", &[("mv".into(), b)]).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }
}
