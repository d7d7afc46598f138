use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::eval::EvalReport;
use super::metrics::BoxStats;
use crate::error::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let (y0, y1) = if (y1 - y0).abs() < 1e-12 { (y0 - 0.5, y1 + 0.5) } else { (y0, y1) };
        let (x0, x1) = if (x1 - x0).abs() < 1e-12 { (x0 - 0.5, x1 + 0.5) } else { (x0, x1) };
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let y = f.y(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="black"/>"#, l - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, y + 4.0, tick(v));
        let xv = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let x = f.x(xv);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{}" stroke="black"/>"#, b + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, tick(xv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Mean RMSE per step with a one-standard-deviation band.
pub fn rmse_curve(report: &EvalReport) -> String {
    let n = report.rmse_mean.len();
    let hi = report
        .rmse_mean
        .iter()
        .zip(&report.rmse_std)
        .map(|(m, s)| m + s)
        .fold(0.0, f64::max);
    let f = Frame::new(1.0, n as f64, 0.0, hi * 1.05);
    let mut s = open(&format!("{}: RMSE per iteration (T_train = {})", report.simulator, report.t_train));
    axes(&mut s, &f, "iteration", "RMSE");
    let upper: Vec<String> = (0..n)
        .map(|t| format!("{:.2},{:.2}", f.x((t + 1) as f64), f.y(report.rmse_mean[t] + report.rmse_std[t])))
        .collect();
    let lower: Vec<String> = (0..n)
        .rev()
        .map(|t| format!("{:.2},{:.2}", f.x((t + 1) as f64), f.y((report.rmse_mean[t] - report.rmse_std[t]).max(0.0))))
        .collect();
    let _ = writeln!(s, r##"<polygon points="{} {}" fill="#9ecae1" fill-opacity="0.5"/>"##, upper.join(" "), lower.join(" "));
    let line: Vec<String> = (0..n)
        .map(|t| format!("{:.2},{:.2}", f.x((t + 1) as f64), f.y(report.rmse_mean[t])))
        .collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.join(" "));
    if report.t_train < n {
        let x = f.x(report.t_train as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#, H - BOTTOM);
    }
    s.push_str("</svg>\n");
    s
}

/// Box plots of the final RMSE of ALFI and, if present, of the MLE.
pub fn boxplot(report: &EvalReport) -> String {
    let mut boxes: Vec<(&str, &BoxStats)> = Vec::new();
    if let Some(b) = &report.alfi_summary {
        boxes.push(("ALFI", b));
    }
    if let Some(b) = &report.mle_summary {
        boxes.push(("MLE", b));
    }
    let hi = boxes
        .iter()
        .map(|(_, b)| b.outliers.iter().copied().fold(b.max, f64::max))
        .fold(0.0, f64::max);
    let f = Frame::new(0.0, boxes.len() as f64, 0.0, hi * 1.05);
    let mut s = open(&format!("{}: final RMSE", report.simulator));
    axes(&mut s, &f, "", "RMSE");
    let slot = (W - LEFT - RIGHT) / boxes.len().max(1) as f64;
    for (i, (name, b)) in boxes.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.2;
        let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#, f.y(b.min), f.y(b.max));
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#c6dbef" stroke="black"/>"##,
            cx - half,
            f.y(b.q3),
            2.0 * half,
            (f.y(b.q1) - f.y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            f.y(b.median),
            cx + half,
            f.y(b.median)
        );
        for o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="2.5" fill="none" stroke="black"/>"#, f.y(*o));
        }
        let _ = writeln!(s, r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{name}</text>"#, H - BOTTOM + 32.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Real versus generated histograms of one Weinberg problem.
pub fn histogram_panel(report: &EvalReport, problem: usize) -> Option<String> {
    let p = report.problems.get(problem)?;
    let h = p.histogram.as_ref()?;
    let bins = h.real.len();
    let (nr, ng) = (h.real.iter().sum::<u64>() as f64, h.generated.iter().sum::<u64>() as f64);
    let dens = |c: u64, n: f64| c as f64 / n * bins as f64 / 2.0;
    let hi = h
        .real
        .iter()
        .map(|&c| dens(c, nr))
        .chain(h.generated.iter().map(|&c| dens(c, ng)))
        .fold(0.0, f64::max);
    let f = Frame::new(-1.0, 1.0, 0.0, hi * 1.1);
    let mut s = open(&format!("problem {}: TV distance {:.4}", p.id, h.distance));
    axes(&mut s, &f, "cos angle", "density");
    let width = 2.0 / bins as f64;
    for (k, &c) in h.real.iter().enumerate() {
        let x = -1.0 + k as f64 * width;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#fdae6b" fill-opacity="0.7"/>"##,
            f.x(x),
            f.y(dens(c, nr)),
            f.x(x + width) - f.x(x),
            f.y(0.0) - f.y(dens(c, nr))
        );
    }
    let mut pts = Vec::with_capacity(2 * bins);
    for (k, &c) in h.generated.iter().enumerate() {
        let x = -1.0 + k as f64 * width;
        let y = f.y(dens(c, ng));
        pts.push(format!("{:.2},{y:.2}", f.x(x)));
        pts.push(format!("{:.2},{y:.2}", f.x(x + width)));
    }
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##, pts.join(" "));
    s.push_str("</svg>\n");
    Some(s)
}

/// Renders every figure for `report` into `dir`.
pub fn write_figures(report: &EvalReport, dir: &Path, max_histograms: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![("rmse_curve.svg".to_string(), rmse_curve(report)), ("final_rmse_boxplot.svg".to_string(), boxplot(report))];
    for i in 0..report.problems.len().min(max_histograms) {
        if let Some(svg) = histogram_panel(report, i) {
            files.push((format!("histogram_{i:03}.svg"), svg));
        }
    }
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}
