//! SVG line charts with a logarithmic y axis.

use std::fmt::Write as _;

use anyhow::{bail, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub dashed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub curves: Vec<Curve>,
}

impl Chart {
    fn bounds(&self) -> Result<(f64, f64, f64, f64)> {
        let (mut t0, mut t1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.curves {
            for (&t, &y) in c.t.iter().zip(&c.y) {
                if y > 0.0 && y.is_finite() && t.is_finite() {
                    t0 = t0.min(t);
                    t1 = t1.max(t);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
            }
        }
        if !t0.is_finite() {
            bail!("nothing positive to draw on a log scale");
        }
        if t1 == t0 {
            t1 = t0 + 1.0;
        }
        let (mut l0, mut l1) = (y0.log10(), y1.log10());
        if l1 - l0 < 1e-9 {
            l0 -= 0.5;
            l1 += 0.5;
        }
        Ok((t0, t1, l0, l1))
    }

    pub fn to_svg(&self) -> Result<String> {
        let (t0, t1, l0, l1) = self.bounds()?;
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let x = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
        let y = |v: f64| TOP + (l1 - v.log10()) / (l1 - l0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );

        for d in (l0.floor() as i32)..=(l1.ceil() as i32) {
            let v = d as f64;
            if v < l0 - 1e-12 || v > l1 + 1e-12 {
                continue;
            }
            let py = y(10f64.powi(d));
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##,
                LEFT + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
                LEFT - 6.0,
                py + 4.0
            );
        }
        for k in 0..=5 {
            let t = t0 + (t1 - t0) * k as f64 / 5.0;
            let px = x(t);
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
                TOP + ph,
                TOP + ph + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 20.0,
                trim_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0
        );

        for (i, c) in self.curves.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let points: Vec<String> =
                c.t.iter()
                    .zip(&c.y)
                    .filter(|(_, v)| **v > 0.0 && v.is_finite())
                    .map(|(t, v)| format!("{:.3},{:.3}", x(*t), y(*v)))
                    .collect();
            let dash = if c.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<polyline data-label="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                escape(&c.label),
                points.join(" ")
            );
            let ly = TOP + 16.0 + 18.0 * i as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#,
                lx + 24.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 30.0,
                ly + 4.0,
                escape(&c.label)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn trim_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
