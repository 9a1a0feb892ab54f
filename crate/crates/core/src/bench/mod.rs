//! Synthetic benchmark: scene generation, metrics, the tracking harness and
//! report output.

mod metrics;
mod report;
mod scene;
mod track;

pub use metrics::{chamfer, iou3d, metric_5deg5cm, shape_box, success_5deg5cm, translation_error, OrientedBox};
pub use report::{
    emit_report, evaluate, read_report_csv, read_report_json, write_plot_svg, CsvRow, FrameRecord, ReportFormat,
    Summary, TrackReport,
};
pub use scene::{generate_sequence, Occluder, SceneConfig, Sequence, SequenceFrame, Trajectory, Waypoint};
pub use track::{run_tracking, track_single_frame, FrameEstimate, RotationErrorMode, RunConfig};

#[cfg(test)]
mod tests;
