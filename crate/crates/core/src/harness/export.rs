use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use super::{TrackingMode, TrackingRecord, TrackingSample, TrackingSummary};
use crate::pose::Pose;
use crate::{Error, JointVector, Result, DOF};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub summary: PathBuf,
}

impl ExportPaths {
    /// `<dir>/<stem>.csv`, `.svg` and `_summary.txt`.
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        Self {
            csv: dir.join(format!("{stem}.csv")),
            svg: dir.join(format!("{stem}.svg")),
            summary: dir.join(format!("{stem}_summary.txt")),
        }
    }
}

const POSES: [&str; 3] = ["target", "measured", "actual"];
const POSE_FIELDS: [&str; 12] = [
    "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "x", "y", "z",
];

fn header() -> Vec<String> {
    let mut h = vec!["time_s".to_string()];
    for pose in POSES {
        h.extend(POSE_FIELDS.iter().map(|f| format!("{pose}_{f}")));
    }
    h.extend(["e_x_m", "e_y_m", "e_z_m", "position_error_m", "orientation_error_rad"].map(String::from));
    h.extend((1..=DOF).map(|i| format!("q{i}")));
    h
}

fn pose_fields(p: &Pose, out: &mut Vec<String>) {
    for r in 0..3 {
        for c in 0..3 {
            out.push(p.rotation[(r, c)].to_string());
        }
    }
    out.extend(p.translation.iter().map(|v| v.to_string()));
}

fn row(s: &TrackingSample) -> Vec<String> {
    let mut out = vec![s.time.to_string()];
    for p in [&s.target, &s.measured, &s.actual] {
        pose_fields(p, &mut out);
    }
    out.extend(s.e_pos.iter().map(|v| v.to_string()));
    out.push(s.position_error.to_string());
    out.push(s.orientation_error.to_string());
    out.extend(s.joints.iter().map(|v| v.to_string()));
    out
}

/// One row per sample; floats use shortest round-trip formatting so a
/// re-import is exact. The first line is a `#` comment with mode and seed.
pub fn write_record_csv(record: &TrackingRecord, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# mode={} seed={}", record.mode.name(), record.seed).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(header()).map_err(to_err)?;
    for s in &record.samples {
        w.write_record(row(s)).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_meta(line: &str, path: &Path) -> Result<(TrackingMode, u64)> {
    let mut mode = None;
    let mut seed = None;
    for part in line.trim_start_matches('#').split_whitespace() {
        match part.split_once('=') {
            Some(("mode", v)) => mode = Some(v.parse()?),
            Some(("seed", v)) => seed = v.parse().ok(),
            _ => {}
        }
    }
    match (mode, seed) {
        (Some(m), Some(s)) => Ok((m, s)),
        _ => Err(Error::format(path, "missing '# mode=... seed=...' line")),
    }
}

pub fn read_record_csv(path: &Path) -> Result<TrackingRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    let (mode, seed) = parse_meta(first, path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let expected = header();
    let found = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if found.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(path, "unexpected CSV header"));
    }
    let mut samples = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let values: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: i + 3,
                message: e.to_string(),
            })?;
        if values.len() != expected.len() {
            return Err(Error::Parse {
                line: i + 3,
                message: format!("expected {} fields, found {}", expected.len(), values.len()),
            });
        }
        let pose = |k: usize| {
            let o = 1 + 12 * k;
            Pose::new(
                Matrix3::from_row_slice(&values[o..o + 9]),
                Vector3::from_column_slice(&values[o + 9..o + 12]),
            )
        };
        let o = 37;
        samples.push(TrackingSample {
            time: values[0],
            target: pose(0),
            measured: pose(1),
            actual: pose(2),
            e_pos: Vector3::from_column_slice(&values[o..o + 3]),
            position_error: values[o + 3],
            orientation_error: values[o + 4],
            joints: JointVector::from_column_slice(&values[o + 5..o + 5 + DOF]),
        });
    }
    Ok(TrackingRecord { mode, seed, samples })
}

pub fn write_summary(summary: &TrackingSummary, path: &Path) -> Result<()> {
    std::fs::write(path, summary_text(summary)).map_err(|e| Error::io(path, e))
}

pub fn summary_text(s: &TrackingSummary) -> String {
    format!(
        "mode: {}\nwindow_samples: {}\nmean_position_error_mm: {:.4}\nmax_position_error_mm: {:.4}\nmean_orientation_error_deg: {:.4}\nmax_orientation_error_deg: {:.4}\n",
        s.mode.name(),
        s.window,
        s.mean_position_mm,
        s.max_position_mm,
        s.mean_orientation_deg,
        s.max_orientation_deg
    )
}

fn polyline(points: &[(f64, f64)], x_range: (f64, f64), y_max: f64, top: f64, height: f64, colour: &str) -> String {
    let (left, width) = (70.0, 700.0);
    let span = (x_range.1 - x_range.0).max(f64::EPSILON);
    let mut pts = String::new();
    for (x, y) in points {
        let px = left + (x - x_range.0) / span * width;
        let py = top + height - (y / y_max).min(1.0) * height;
        let _ = write!(pts, "{px:.2},{py:.2} ");
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\" points=\"{}\"/>\n",
        pts.trim_end()
    )
}

/// Error-versus-time plot: position (mm) on top, orientation (deg) below.
pub fn render_svg(record: &TrackingRecord, summary: &TrackingSummary) -> String {
    let times: Vec<f64> = record.samples.iter().map(|s| s.time).collect();
    let x_range = (
        times.first().copied().unwrap_or(0.0),
        times.last().copied().unwrap_or(1.0),
    );
    let pos: Vec<(f64, f64)> = record.samples.iter().map(|s| (s.time, s.position_error * 1e3)).collect();
    let ori: Vec<(f64, f64)> = record
        .samples
        .iter()
        .map(|s| (s.time, s.orientation_error.to_degrees()))
        .collect();
    let ceiling = |v: &[(f64, f64)]| v.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-6) * 1.1;
    let (pos_max, ori_max) = (ceiling(&pos), ceiling(&ori));

    let mut svg = String::new();
    svg.push_str("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"460\" font-family=\"sans-serif\" font-size=\"12\">\n");
    let _ = writeln!(
        svg,
        "<text x=\"400\" y=\"18\" text-anchor=\"middle\">{} tracking error (mean {:.3} mm, {:.3} deg)</text>",
        record.mode.name(),
        summary.mean_position_mm,
        summary.mean_orientation_deg
    );
    for (top, label, max) in [(30.0, "position error (mm)", pos_max), (240.0, "orientation error (deg)", ori_max)] {
        let _ = writeln!(
            svg,
            "<rect x=\"70\" y=\"{top}\" width=\"700\" height=\"180\" fill=\"none\" stroke=\"#888\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"20\" y=\"{}\" transform=\"rotate(-90 20 {})\" text-anchor=\"middle\">{label}</text>",
            top + 90.0,
            top + 90.0
        );
        let _ = writeln!(svg, "<text x=\"64\" y=\"{}\" text-anchor=\"end\">{max:.3}</text>", top + 10.0);
        let _ = writeln!(svg, "<text x=\"64\" y=\"{}\" text-anchor=\"end\">0</text>", top + 180.0);
    }
    svg.push_str(&polyline(&pos, x_range, pos_max, 30.0, 180.0, "#1f5fbf"));
    svg.push_str(&polyline(&ori, x_range, ori_max, 240.0, 180.0, "#bf3f1f"));
    let _ = writeln!(
        svg,
        "<text x=\"420\" y=\"450\" text-anchor=\"middle\">time (s), {:.1} to {:.1}</text>",
        x_range.0, x_range.1
    );
    svg.push_str("</svg>\n");
    svg
}

/// Write CSV, SVG and summary text.
pub fn export(record: &TrackingRecord, summary: &TrackingSummary, paths: &ExportPaths) -> Result<()> {
    write_record_csv(record, &paths.csv)?;
    std::fs::write(&paths.svg, render_svg(record, summary)).map_err(|e| Error::io(&paths.svg, e))?;
    write_summary(summary, &paths.summary)
}
