//! Minimal static SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN: f64 = 50.0;

pub enum Series {
    /// Histogram drawn as a step outline with bin width `dt`.
    Bars {
        t: Vec<f64>,
        h: Vec<f64>,
        dt: f64,
        color: &'static str,
    },
    Line {
        xs: Vec<f64>,
        ys: Vec<f64>,
        color: &'static str,
        dashed: bool,
        label: String,
    },
    /// Full-height vertical marker.
    Marker {
        x: f64,
        color: &'static str,
        label: String,
    },
}

pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - y / self.y1 * (HEIGHT - 2.0 * MARGIN)
    }
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, dashed: bool) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, coords.join(" "));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    fn frame(&self) -> Frame {
        let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for s in &self.series {
            match s {
                Series::Bars { t, h, dt, .. } => {
                    if let (Some(a), Some(b)) = (t.first(), t.last()) {
                        x0 = x0.min(a - dt / 2.0);
                        x1 = x1.max(b + dt / 2.0);
                    }
                    y1 = h.iter().fold(y1, |m, &v| m.max(v));
                }
                Series::Line { xs, ys, .. } => {
                    x0 = xs.iter().fold(x0, |m, &v| m.min(v));
                    x1 = xs.iter().fold(x1, |m, &v| m.max(v));
                    y1 = ys.iter().fold(y1, |m, &v| m.max(v));
                }
                Series::Marker { .. } => {}
            }
        }
        if !(x0.is_finite() && x1 > x0) {
            (x0, x1) = (0.0, 1.0);
        }
        if !(y1.is_finite() && y1 > 0.0) {
            y1 = 1.0;
        }
        Frame { x0, x1, y1: y1 * 1.05 }
    }

    pub fn render(&self) -> String {
        let f = self.frame();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (bl, br, bt, bb) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(out, r#"<path d="M{bl},{bt} L{bl},{bb} L{br},{bb}" fill="none" stroke="black"/>"#);
        for i in 0..=5 {
            let x = f.x0 + (f.x1 - f.x0) * i as f64 / 5.0;
            let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, f.px(x), bb + 18.0, tick(x));
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 8.0, escape(&self.x_label));

        let mut legend = Vec::new();
        for s in &self.series {
            match s {
                Series::Bars { t, h, dt, color } => {
                    let mut pts = vec![(f.px(t[0] - dt / 2.0), f.py(0.0))];
                    for (&ti, &hi) in t.iter().zip(h) {
                        pts.push((f.px(ti - dt / 2.0), f.py(hi)));
                        pts.push((f.px(ti + dt / 2.0), f.py(hi)));
                    }
                    pts.push((f.px(t[t.len() - 1] + dt / 2.0), f.py(0.0)));
                    polyline(&mut out, pts.into_iter(), color, false);
                    legend.push((*color, "histogram".to_string(), false));
                }
                Series::Line { xs, ys, color, dashed, label } => {
                    polyline(&mut out, xs.iter().zip(ys).map(|(&x, &y)| (f.px(x), f.py(y))), color, *dashed);
                    legend.push((*color, label.clone(), *dashed));
                }
                Series::Marker { x, color, label } => {
                    let px = f.px(*x);
                    let _ =
                        writeln!(out, r#"<line x1="{px:.2}" y1="{bt}" x2="{px:.2}" y2="{bb}" stroke="{color}" stroke-dasharray="4,4"/>"#);
                    let _ = writeln!(
                        out,
                        r#"<text x="{:.2}" y="{}" fill="{color}" font-size="10">{}</text>"#,
                        px + 3.0,
                        bt + 12.0,
                        escape(label)
                    );
                }
            }
        }
        for (i, (color, label, dashed)) in legend.iter().enumerate() {
            let y = bt + 10.0 + 16.0 * i as f64;
            let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                br - 170.0,
                br - 145.0
            );
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, br - 140.0, y + 4.0, escape(label));
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render())
    }
}

fn tick(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// `n` evenly spaced points spanning `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_series() {
        let fig = Figure {
            title: "a < b".into(),
            x_label: "t".into(),
            series: vec![
                Series::Bars { t: vec![0.5, 1.5], h: vec![0.4, 0.6], dt: 1.0, color: "gray" },
                Series::Line { xs: linspace(0.0, 2.0, 5), ys: vec![0.1; 5], color: "blue", dashed: true, label: "model".into() },
                Series::Marker { x: 1.0, color: "gray", label: "τ".into() },
            ],
        };
        let svg = fig.render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke-dasharray=\"4,4\""));
    }

    #[test]
    fn degenerate_range_still_renders() {
        let fig = Figure { title: String::new(), x_label: String::new(), series: vec![] };
        assert!(fig.render().contains("</svg>"));
    }

    #[test]
    fn ticks_are_trimmed() {
        assert_eq!(tick(2.5), "2.5");
        assert_eq!(tick(-0.0001), "0");
        assert_eq!(tick(10.0), "10");
    }
}
