//! Table, figure-data and SVG emission for sweep results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::metrics::{MetricsRow, SweepAxis, SweepResult};

pub const METRIC_COLUMNS: [&str; 11] = [
    "phi_T",
    "phi_tau",
    "tau",
    "theta_T",
    "theta_tau",
    "phi_T_M",
    "phi_tau_M",
    "eta_T_r",
    "eta_tau_r",
    "eta_T_l",
    "eta_tau_l",
];

fn fmt4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt4).unwrap_or_else(|| "NA".into())
}

/// Cells of one row in table order, the swept value first.
pub fn row_cells(axis: SweepAxis, row: &MetricsRow) -> Vec<String> {
    vec![
        fmt4(axis.value_of(&row.control)),
        fmt4(row.phi_t),
        fmt4(row.phi_tau),
        row.tau.to_string(),
        fmt4(row.theta_t),
        fmt4(row.theta_tau),
        fmt_opt(row.phi_t_m),
        fmt_opt(row.phi_tau_m),
        fmt_opt(row.eta_t_r),
        fmt_opt(row.eta_tau_r),
        fmt_opt(row.eta_t_l),
        fmt_opt(row.eta_tau_l),
    ]
}

fn header(axis: SweepAxis) -> Vec<String> {
    std::iter::once(axis.symbol().to_string())
        .chain(METRIC_COLUMNS.iter().map(|c| c.to_string()))
        .collect()
}

pub fn metrics_csv(axis: SweepAxis, rows: &[MetricsRow]) -> String {
    let mut out = header(axis).join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&row_cells(axis, r).join(","));
        out.push('\n');
    }
    out
}

/// Markdown table with columns padded to a common width.
pub fn metrics_markdown(axis: SweepAxis, rows: &[MetricsRow]) -> String {
    let head = header(axis);
    let body: Vec<Vec<String>> = rows.iter().map(|r| row_cells(axis, r)).collect();
    let widths: Vec<usize> = (0..head.len())
        .map(|c| {
            body.iter()
                .map(|r| r[c].len())
                .chain(std::iter::once(head[c].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:>w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&head);
    let rule: Vec<String> = widths.iter().map(|&w| format!("{}:", "-".repeat(w.max(2) - 1))).collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for r in &body {
        out.push_str(&line(r));
    }
    out
}

/// Table keyed by the full `(x, xhat, xbar)` control.
pub fn portfolio_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("x,xhat,xbar,");
    out.push_str(&METRIC_COLUMNS.join(","));
    out.push('\n');
    for r in rows {
        let mut cells = vec![fmt4(r.control.x), fmt4(r.control.xhat), fmt4(r.control.xbar)];
        cells.extend(row_cells(SweepAxis::Moneyness, r).into_iter().skip(1));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Long-format figure data: one line per (point, subset, step).
pub fn figure_csv(result: &SweepResult) -> String {
    let axis = result.config.axis;
    let mut out = format!(
        "{},subset,t,n_paths,mean,q10,q20,q30,q40,q50,q60,q70,q80,q90\n",
        axis.symbol()
    );
    for p in &result.points {
        let v = fmt4(axis.value_of(&p.row.control));
        for band in &p.bands {
            for (t, (m, d)) in band.mean.iter().zip(&band.deciles).enumerate() {
                let _ = write!(out, "{v},{},{t},{},{m}", band.subset.as_str(), band.n_paths);
                for q in d {
                    let _ = write!(out, ",{q}");
                }
                out.push('\n');
            }
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of the full-dataset mean `φ` curve of every sweep point.
pub fn mean_curve_svg(result: &SweepResult) -> String {
    let axis = result.config.axis;
    let curves: Vec<(String, &[f64])> = result
        .points
        .iter()
        .filter_map(|p| {
            p.bands
                .iter()
                .find(|b| b.subset == crate::metrics::Subset::All)
                .map(|b| (format!("{}={}", axis.symbol(), fmt4(axis.value_of(&p.row.control))), b.mean.as_slice()))
        })
        .collect();
    let (w, h, ml, mr, mt, mb) = (720.0, 420.0, 60.0, 150.0, 20.0, 40.0);
    let n = result.n_steps.max(1) as f64;
    let (mut lo, mut hi) = curves
        .iter()
        .flat_map(|(_, c)| c.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let px = |t: f64| ml + t / n * (w - ml - mr);
    let py = |v: f64| mt + (hi - v) / (hi - lo) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(s, r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#, h - mb);
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
            w - mr,
            y = py(0.0)
        );
    }
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 4.0,
            py(v) + 4.0,
            fmt4(v)
        );
        let t = (n * i as f64 / 4.0).round();
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#,
            px(t),
            h - mb + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">t (steps)</text>"#,
        px(n / 2.0),
        h - 6.0
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .iter()
            .enumerate()
            .map(|(t, &v)| format!("{:.2},{:.2}", px(t as f64), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = mt + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{label}</text>"#,
            w - mr + 10.0,
            w - mr + 30.0,
            w - mr + 35.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `<axis>_metrics.csv`, `.md`, `_figure.csv` and `_mean.svg` into `dir`.
pub fn write_sweep(dir: &Path, result: &SweepResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let axis = result.config.axis;
    let rows = result.rows();
    let stem = axis.as_str();
    let files = [
        (format!("{stem}_metrics.csv"), metrics_csv(axis, &rows)),
        (format!("{stem}_metrics.md"), metrics_markdown(axis, &rows)),
        (format!("{stem}_figure.csv"), figure_csv(result)),
        (format!("{stem}_mean.svg"), mean_curve_svg(result)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}
