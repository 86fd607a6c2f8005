//! Labelled 2-D scatter export: a `label,x,y` CSV and a standalone SVG plot.

use std::fmt::Write as _;
use std::path::Path;

use seq2seq_core::{Error, Matrix};

use crate::error::{AppError, AppResult};
use crate::io::write_text;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 60.0;

fn check(projections: &Matrix<f64>, labels: &[String]) -> AppResult<()> {
    if projections.rows() != labels.len() || (projections.rows() > 0 && projections.cols() != 2) {
        return Err(Error::Input(format!(
            "{} labels for a {}x{} projection",
            labels.len(),
            projections.rows(),
            projections.cols()
        ))
        .into());
    }
    Ok(())
}

pub fn write_csv(projections: &Matrix<f64>, labels: &[String], path: &Path) -> AppResult<()> {
    check(projections, labels)?;
    let csv_err = |source| AppError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "x", "y"]).map_err(csv_err)?;
    for (r, label) in labels.iter().enumerate() {
        w.serialize((label, projections.get(r, 0), projections.get(r, 1)))
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| AppError::io(path, e.into_error()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_csv(path: &Path) -> AppResult<Vec<(String, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| AppError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| AppError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG document with one labelled dot per row, axes scaled to the data.
pub fn render_svg(projections: &Matrix<f64>, labels: &[String]) -> AppResult<String> {
    check(projections, labels)?;
    let n = labels.len();
    let xs: Vec<f64> = (0..n).map(|r| projections.get(r, 0)).collect();
    let ys: Vec<f64> = (0..n).map(|r| projections.get(r, 1)).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || hi - lo < 1e-12 {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        } else {
            (lo, hi)
        }
    };
    let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
    let inner = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * inner;
    let py = |y: f64| SIZE - MARGIN - (y - y0) / (y1 - y0) * inner;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="gray"/>"#
    );
    for (i, label) in labels.iter().enumerate() {
        let (cx, cy) = (px(xs[i]), py(ys[i]));
        let _ = writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="steelblue"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            cx + 5.0,
            cy - 5.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `<prefix>.csv` and `<prefix>.svg`.
pub fn export_scatter(projections: &Matrix<f64>, labels: &[String], prefix: &Path) -> AppResult<()> {
    let with = |ext: &str| {
        let mut p = prefix.as_os_str().to_owned();
        p.push(ext);
        std::path::PathBuf::from(p)
    };
    write_csv(projections, labels, &with(".csv"))?;
    write_text(&with(".svg"), &render_svg(projections, labels)?)
}
