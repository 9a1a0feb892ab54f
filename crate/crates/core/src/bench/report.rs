use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::success_5deg5cm;
use super::scene::Sequence;
use super::track::{record, FrameEstimate, RotationErrorMode, Scorer};
use crate::error::{Error, Result};
use crate::filter::PoseEstimate;
use crate::geometry::Pose;
use crate::shape::ShapeLatent;

const CSV_HEADER: [&str; 6] = ["frame", "terr_cm", "rerr_deg", "iou", "cd", "ms"];

/// Per-frame estimate and scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub pose: Pose,
    pub size: f64,
    /// Raw shape latent.
    pub latent: Vec<f64>,
    pub filter_pose: Pose,
    pub filter_size: f64,
    pub terr_cm: f64,
    pub rerr_deg: f64,
    pub iou: f64,
    /// Chamfer distance in units of 10⁻³ m².
    pub cd: f64,
    /// Wall-clock time, 0 when timing is off.
    pub ms: f64,
    pub success: bool,
    pub lost: bool,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub frames: usize,
    /// Percentage of frames within 5° and 5 cm.
    pub success_5deg5cm: f64,
    /// Percentage of frames with box IoU above 0.25.
    pub iou25: f64,
    pub mean_rerr_deg: f64,
    pub median_rerr_deg: f64,
    pub mean_terr_cm: f64,
    pub median_terr_cm: f64,
    pub mean_cd: f64,
    pub median_cd: f64,
    pub mean_ms: f64,
    /// Frames per second; absent when timing was off.
    pub mean_fps: Option<f64>,
    pub lost_frames: usize,
    pub rotation_error: RotationErrorMode,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

impl Summary {
    pub fn from_frames(frames: &[FrameRecord], rotation_error: RotationErrorMode) -> Self {
        let col = |f: fn(&FrameRecord) -> f64| frames.iter().map(f).collect::<Vec<_>>();
        let (rerr, terr, cd, ms) = (col(|r| r.rerr_deg), col(|r| r.terr_cm), col(|r| r.cd), col(|r| r.ms));
        let n = frames.len();
        let mean_ms = mean(&ms);
        Self {
            frames: n,
            success_5deg5cm: percent(frames.iter().filter(|r| r.success).count(), n),
            iou25: percent(frames.iter().filter(|r| r.iou > 0.25).count(), n),
            mean_rerr_deg: mean(&rerr),
            median_rerr_deg: median(&rerr),
            mean_terr_cm: mean(&terr),
            median_terr_cm: median(&terr),
            mean_cd: mean(&cd),
            median_cd: median(&cd),
            mean_ms,
            mean_fps: (n > 0 && ms.iter().all(|&m| m > 0.0)).then(|| 1e3 / mean_ms),
            lost_frames: frames.iter().filter(|r| r.lost).count(),
            rotation_error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub category: String,
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub summary: Summary,
}

impl TrackReport {
    pub fn any_lost(&self) -> bool {
        self.summary.lost_frames > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// One CSV row; `frame` is `None` on the summary row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub frame: Option<usize>,
    pub terr_cm: f64,
    pub rerr_deg: f64,
    pub iou: f64,
    pub cd: f64,
    pub ms: f64,
}

impl CsvRow {
    fn fields(&self) -> [String; 6] {
        [
            self.frame.map_or_else(|| "summary".to_string(), |k| k.to_string()),
            self.terr_cm.to_string(),
            self.rerr_deg.to_string(),
            self.iou.to_string(),
            self.cd.to_string(),
            self.ms.to_string(),
        ]
    }
}

fn csv_rows(report: &TrackReport) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = report
        .frames
        .iter()
        .map(|r| CsvRow {
            frame: Some(r.frame),
            terr_cm: r.terr_cm,
            rerr_deg: r.rerr_deg,
            iou: r.iou,
            cd: r.cd,
            ms: r.ms,
        })
        .collect();
    if !report.frames.is_empty() {
        let s = &report.summary;
        rows.push(CsvRow {
            frame: None,
            terr_cm: s.mean_terr_cm,
            rerr_deg: s.mean_rerr_deg,
            iou: mean(&report.frames.iter().map(|r| r.iou).collect::<Vec<_>>()),
            cd: s.mean_cd,
            ms: s.mean_ms,
        });
    }
    rows
}

/// Write the report as CSV (one row per frame plus a summary row of
/// column means; header only when empty) or as JSON, and optionally an
/// SVG plot of the per-frame errors.
pub fn emit_report(report: &TrackReport, path: &Path, format: ReportFormat, plot: Option<&Path>) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
            w.write_record(CSV_HEADER).map_err(|e| csv_io(path, e))?;
            for row in csv_rows(report) {
                w.write_record(row.fields()).map_err(|e| csv_io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Json => {
            fs::write(path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(path, e))?;
        }
    }
    if let Some(plot) = plot {
        write_plot_svg(report, plot)?;
    }
    Ok(())
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Csv(e)
    }
}

/// Parse a CSV written by [`emit_report`]; the summary row, if any, is last.
pub fn read_report_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let bad = |detail: String| Error::Format { what: "report csv", detail };
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| bad(format!("bad number {:?}", &rec[i])))
        };
        let frame = match &rec[0] {
            "summary" => None,
            s => Some(s.parse().map_err(|_| bad(format!("bad frame {s:?}")))?),
        };
        rows.push(CsvRow {
            frame,
            terr_cm: num(1)?,
            rerr_deg: num(2)?,
            iou: num(3)?,
            cd: num(4)?,
            ms: num(5)?,
        });
    }
    Ok(rows)
}

pub fn read_report_json(path: &Path) -> Result<TrackReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Recompute every per-frame score and the summary from the stored
/// estimates and the sequence's ground truth.
pub fn evaluate(report: &TrackReport, seq: &Sequence, points: usize) -> Result<TrackReport> {
    if report.category != seq.config.category {
        return Err(Error::invalid("report and sequence categories differ"));
    }
    let basis = seq.basis()?;
    let mode = report.summary.rotation_error;
    let mut scorer = Scorer::new(seq, &basis, mode, points)?;
    let frames = report
        .frames
        .iter()
        .map(|r| {
            let gt = seq
                .frames
                .get(r.frame)
                .ok_or_else(|| Error::invalid(format!("report frame {} is not in the sequence", r.frame)))?;
            let est = FrameEstimate {
                pose: r.pose.clone(),
                size: r.size,
                latent: ShapeLatent::new(r.latent.clone()),
                filter: PoseEstimate {
                    pose: r.filter_pose.clone(),
                    size: r.filter_size,
                    bin: 0,
                },
                residual: r.residual,
                lost: r.lost,
            };
            record(&mut scorer, r.frame, &est, gt, r.ms)
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(frames.iter().all(|r| r.success == success_5deg5cm(r.rerr_deg, r.terr_cm / 100.0)));
    Ok(TrackReport {
        category: report.category.clone(),
        seed: report.seed,
        summary: Summary::from_frames(&frames, mode),
        frames,
    })
}

/// Static line plot of translation (cm) and rotation (deg) error per frame.
pub fn write_plot_svg(report: &TrackReport, path: &Path) -> Result<()> {
    let (w, h, pad) = (720.0, 360.0, 40.0);
    let n = report.frames.len().max(2) - 1;
    let top = report
        .frames
        .iter()
        .flat_map(|r| [r.terr_cm, r.rerr_deg])
        .filter(|x| x.is_finite())
        .fold(1.0f64, f64::max);
    let x = |k: usize| pad + (w - 2.0 * pad) * k as f64 / n as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.min(top) / top;
    let line = |f: fn(&FrameRecord) -> f64| {
        report
            .frames
            .iter()
            .map(|r| format!("{:.1},{:.1}", x(r.frame), y(f(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad},{pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(svg, r#"<text x="{pad}" y="{}">{top:.2}</text>"#, pad - 6.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}">frame</text>"#, w / 2.0, h - 10.0);
    let _ = writeln!(svg, r##"<polyline points="{}" stroke="#1f77b4" fill="none"/>"##, line(|r| r.terr_cm));
    let _ = writeln!(svg, r##"<polyline points="{}" stroke="#d62728" fill="none"/>"##, line(|r| r.rerr_deg));
    let _ = writeln!(svg, r##"<text x="{}" y="20" fill="#1f77b4">translation error (cm)</text>"##, w - 330.0);
    let _ = writeln!(svg, r##"<text x="{}" y="20" fill="#d62728">rotation error (deg)</text>"##, w - 170.0);
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
