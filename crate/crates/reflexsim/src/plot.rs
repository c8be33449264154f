//! Self-contained SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{AppError, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// Reflex torque against joint angle, one line per curve file.
    ReflexAngle,
    /// Robot torque against time, one line per trial file.
    TorqueTime,
    /// Muscle excitation against time, one line per muscle and trial file.
    ExcitationTime,
    /// Peak reflex torque against stretch velocity, one line per parameter cell.
    PeakVelocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const W: f64 = 860.0;
const H: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

/// Tick positions covering `[lo, hi]` with a 1-2-5 step.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let mut it = self.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let &(x, y) = it.next()?;
        let (mut x0, mut x1, mut y0, mut y1) = (x, x, y, y);
        for &(x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        Some((x0, x1, y0 - pad, y1 + pad))
    }

    pub fn to_svg(&self) -> Result<String> {
        let (x0, x1, y0, y1) = self
            .bounds()
            .ok_or_else(|| AppError::Usage("nothing to plot: no data points".into()))?;
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 18.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 20.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text class="y-label" x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut pts = String::new();
            for &(x, y) in ser.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.trim_end()
            );
        }
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(s, r#"<g class="legend">"#);
        for (i, ser) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let y = TOP + 10.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                y + 4.0,
                escape(&ser.label)
            );
        }
        let _ = writeln!(s, "</g>\n</svg>");
        Ok(s)
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn column(t: &io::Table, name: &str, path: &Path) -> Result<Vec<f64>> {
    t.column(name).ok_or_else(|| AppError::Format {
        path: path.into(),
        msg: format!("missing column {name}"),
    })
}

pub fn build_chart(kind: PlotKind, inputs: &[PathBuf]) -> Result<Chart> {
    if inputs.is_empty() {
        return Err(AppError::Usage("no input files".into()));
    }
    let mut series = Vec::new();
    let (title, x_label, y_label) = match kind {
        PlotKind::ReflexAngle => {
            for p in inputs {
                let c = io::read_profile(p)?;
                let points = c.theta.iter().map(|t| t.to_degrees()).zip(c.torque.iter().copied()).collect();
                series.push(Series { label: stem(p), points });
            }
            ("Reflex torque vs joint angle", "Joint angle (deg)", "Reflex torque (N m)")
        }
        PlotKind::TorqueTime => {
            for p in inputs {
                let t = io::read_table(p)?;
                let x = column(&t, "t_s", p)?;
                let y = column(&t, "torque_robot_Nm", p)?;
                series.push(Series { label: stem(p), points: x.into_iter().zip(y).collect() });
            }
            ("Robot torque vs time", "Time (s)", "Robot torque (N m)")
        }
        PlotKind::ExcitationTime => {
            for p in inputs {
                let t = io::read_table(p)?;
                let x = column(&t, "t_s", p)?;
                let muscles: Vec<String> = t.header.iter().filter_map(|h| h.strip_suffix("_E")).map(String::from).collect();
                if muscles.is_empty() {
                    return Err(AppError::Format { path: p.clone(), msg: "no excitation columns".into() });
                }
                for m in muscles {
                    let y = column(&t, &format!("{m}_E"), p)?;
                    series.push(Series {
                        label: format!("{} {m}", stem(p)),
                        points: x.iter().copied().zip(y).collect(),
                    });
                }
            }
            ("Muscle excitation vs time", "Time (s)", "Excitation E (-)")
        }
        PlotKind::PeakVelocity => {
            let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for p in inputs {
                for l in io::read_summary(p)? {
                    let [gl, gv, gf, ll, lv, lf] = l.params;
                    let key = format!("{} G=({gl},{gv},{gf}) λ=({ll},{lv},{lf})", l.model);
                    groups.entry(key).or_default().push((l.velocity_dps, l.peak_torque));
                }
            }
            for (label, mut points) in groups {
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                series.push(Series { label, points });
            }
            ("Peak reflex torque vs stretch velocity", "Stretch velocity (deg/s)", "Peak reflex torque (N m)")
        }
    };
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(AppError::Usage("nothing to plot: inputs have no data rows".into()));
    }
    Ok(Chart {
        title: title.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(ticks(90.0, 180.0), (0..=4).map(|k| 100.0 + 20.0 * k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn svg_structure() {
        let c = Chart {
            title: "t".into(),
            x_label: "Angle (deg)".into(),
            y_label: "Torque (N m)".into(),
            series: (0..9)
                .map(|k| Series { label: format!("v{k}"), points: vec![(0.0, k as f64), (1.0, 2.0 * k as f64)] })
                .collect(),
        };
        let svg = c.to_svg().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 9);
        assert!(svg.contains("Angle (deg)") && svg.contains("Torque (N m)"));
        assert!(svg.contains("v8"));
    }

    #[test]
    fn empty_chart_is_error() {
        let c = Chart { title: String::new(), x_label: String::new(), y_label: String::new(), series: vec![] };
        assert!(c.to_svg().is_err());
        assert!(build_chart(PlotKind::TorqueTime, &[]).is_err());
    }
}
