//! Minimal deterministic SVG emitters for heat maps, log-log curves and scatter plots.

use std::fmt::Write as _;

const CELL: usize = 12;
const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 56.0;

fn open(width: f64, height: f64, metadata: Option<&str>) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    if let Some(meta) = metadata {
        writeln!(s, "<metadata>{}</metadata>", escape(meta)).unwrap();
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One square per entry; `levels[i][j]` is the gray value (0 black, 255 white).
pub fn heatmap(levels: &[Vec<u8>], metadata: Option<&str>) -> String {
    let rows = levels.len();
    let cols = levels.first().map_or(0, Vec::len);
    let mut s = open((cols * CELL) as f64, (rows * CELL) as f64, metadata);
    for (i, row) in levels.iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#{g:02x}{g:02x}{g:02x}\"/>",
                j * CELL,
                i * CELL
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Option<Self> {
        let mut f = Frame {
            x0: f64::MAX,
            x1: f64::MIN,
            y0: f64::MAX,
            y1: f64::MIN,
        };
        let mut any = false;
        for (x, y) in points {
            any = true;
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !any {
            return None;
        }
        if f.x1 == f.x0 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 == f.y0 {
            f.y1 = f.y0 + 1.0;
        }
        Some(f)
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str, log: bool) {
    writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    )
    .unwrap();
    let tick = |v: f64| if log { format!("1e{}", v.round()) } else { format!("{v:.3}") };
    for (v, anchor) in [(f.x0, "start"), (f.x1, "end")] {
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>",
            f.px(v),
            H - MARGIN + 16.0,
            tick(v)
        )
        .unwrap();
    }
    for v in [f.y0, f.y1] {
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            MARGIN - 4.0,
            f.py(v) + 4.0,
            tick(v)
        )
        .unwrap();
    }
    writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 12.0,
        escape(xlabel)
    )
    .unwrap();
    writeln!(
        s,
        "<text x=\"14\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

/// Polylines on log-log axes; non-positive points are skipped.
pub fn loglog(series: &[Series<'_>], xlabel: &str, ylabel: &str, metadata: Option<&str>) -> String {
    let logged: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|se| {
            se.points
                .iter()
                .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
                .map(|(x, y)| (x.log10(), y.log10()))
                .collect()
        })
        .collect();
    let mut s = open(W, H, metadata);
    let Some(frame) = Frame::fit(logged.iter().flatten().copied()) else {
        s.push_str("</svg>\n");
        return s;
    };
    axes(&mut s, &frame, xlabel, ylabel, true);
    for (k, (se, pts)) in series.iter().zip(&logged).enumerate() {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        let dash = if se.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
            se.color,
            path.join(" ")
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{}\">{}</text>",
            MARGIN + 8.0,
            MARGIN + 14.0 + 14.0 * k as f64,
            se.color,
            escape(se.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Points on linear axes.
pub fn scatter(points: &[(f64, f64)], xlabel: &str, ylabel: &str, metadata: Option<&str>) -> String {
    let mut s = open(W, H, metadata);
    let Some(frame) = Frame::fit(points.iter().copied()) else {
        s.push_str("</svg>\n");
        return s;
    };
    axes(&mut s, &frame, xlabel, ylabel, false);
    for &(x, y) in points {
        writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"black\"/>",
            frame.px(x),
            frame.py(y)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_cells_and_colors() {
        let svg = heatmap(&[vec![255, 0], vec![255, 255]], None);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert_eq!(svg.matches("#000000").count(), 1);
        assert_eq!(svg.matches("#ffffff").count(), 3);
    }

    #[test]
    fn metadata_is_escaped() {
        let svg = heatmap(&[vec![0]], Some("{\"a\":\"<b>\"}"));
        assert!(svg.contains("<metadata>{\"a\":\"&lt;b&gt;\"}</metadata>"));
    }

    #[test]
    fn loglog_skips_nonpositive() {
        let svg = loglog(
            &[Series {
                label: "r",
                color: "red",
                dashed: false,
                points: vec![(1e-3, 0.0), (1e-2, 1e-1), (1e-1, 1.0)],
            }],
            "eps",
            "r",
            None,
        );
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
    }
}
