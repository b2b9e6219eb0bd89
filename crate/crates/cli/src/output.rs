//! Plot-ready data files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use hltomo::sampling::HlSample;

use crate::commands::ReportRow;

/// Largest number of points drawn in the SVG scatter.
const SVG_POINTS: usize = 4000;

pub fn write_quadrature_trace(path: &Path, samples: &[HlSample], hash: &str) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "phase,delta,delta_phi")?;
    for s in samples {
        writeln!(w, "{},{},{}", s.phase, s.delta, s.delta_phi)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeBin {
    pub phase: f64,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and standard deviation of `delta_phi` in equal phase bins over `[0, pi]`.
pub fn envelope(samples: &[HlSample], bins: usize) -> Vec<EnvelopeBin> {
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); bins];
    for s in samples {
        let b = ((s.phase.rem_euclid(2.0 * PI).min(PI) / PI * bins as f64) as usize).min(bins - 1);
        acc[b].0 += 1;
        acc[b].1 += s.delta_phi;
        acc[b].2 += s.delta_phi * s.delta_phi;
    }
    acc.into_iter()
        .enumerate()
        .map(|(b, (n, sum, sq))| {
            let mean = if n > 0 { sum / n as f64 } else { 0.0 };
            let var = if n > 1 { (sq - n as f64 * mean * mean) / (n - 1) as f64 } else { 0.0 };
            EnvelopeBin {
                phase: (b as f64 + 0.5) * PI / bins as f64,
                count: n,
                mean,
                std: var.max(0.0).sqrt(),
            }
        })
        .collect()
}

pub fn write_envelope(path: &Path, bins: &[EnvelopeBin], hash: &str) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config_hash={hash}")?;
    writeln!(w, "phase,count,mean,std")?;
    for b in bins {
        writeln!(w, "{},{},{},{}", b.phase, b.count, b.mean, b.std)?;
    }
    w.flush()
}

/// Static scatter of `delta_phi` against phase with the mean +- std envelope.
pub fn write_svg(path: &Path, samples: &[HlSample], bins: &[EnvelopeBin]) -> io::Result<()> {
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let reach = samples.iter().map(|s| s.delta_phi.abs()).fold(1.0, f64::max);
    let px = |phase: f64| pad + phase / PI * (w - 2.0 * pad);
    let py = |v: f64| h / 2.0 - v / reach * (h / 2.0 - pad);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{y1}" stroke="black"/>"#,
        y0 = h / 2.0,
        x1 = w - pad,
        y1 = h - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">phase</text>"#, w - pad - 30.0, h / 2.0 + 16.0);
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="12">x</text>"#, pad - 8.0);
    let stride = (samples.len() / SVG_POINTS).max(1);
    let _ = writeln!(out, r##"<g fill="#1f77b4" fill-opacity="0.4">"##);
    for s in samples.iter().step_by(stride) {
        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="1.2"/>"#, px(s.phase), py(s.delta_phi));
    }
    let _ = writeln!(out, "</g>");
    for sign in [-1.0, 0.0, 1.0] {
        let pts: Vec<String> = bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| format!("{:.1},{:.1}", px(b.phase), py(b.mean + sign * b.std)))
            .collect();
        let dash = if sign == 0.0 { "" } else { r#" stroke-dasharray="4 3""# };
        let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#d62728"{dash}/>"##, pts.join(" "));
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

pub fn report_text(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:>18} {:>8} {:>18} {:>8} {:>9} {:>8}",
        "run", "<x_0>", "theory", "var", "theory", "fidelity", "<n>"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<24} {:>18} {:>8} {:>18} {:>8} {:>9} {:>8.4}",
            r.run,
            format!("{:.4} +- {:.4}", r.mean, r.mean_err),
            opt(r.mean_theory),
            format!("{:.4} +- {:.4}", r.var, r.var_err),
            opt(r.var_theory),
            opt(r.fidelity),
            r.mean_n
        );
    }
    s
}

pub fn report_csv(rows: &[ReportRow], hash: &str) -> String {
    let field = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = format!("# config_hash={hash}\nrun,mean_x,mean_err,mean_theory,var_x,var_err,var_theory,fidelity,mean_n\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.run,
            r.mean,
            r.mean_err,
            field(r.mean_theory),
            r.var,
            r.var_err,
            field(r.var_theory),
            field(r.fidelity),
            r.mean_n
        );
    }
    s
}
