//! Command-line front end: simulate sequences, build codebooks, track, and
//! evaluate reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use shapetrack::bench::{
    emit_report, evaluate, generate_sequence, read_report_json, run_tracking, write_plot_svg, ReportFormat,
    RunConfig, SceneConfig, Sequence, TrackReport,
};
use shapetrack::codebook::{build_codebook, Codebook};
use shapetrack::geometry::RotationGrid;
use shapetrack::render::RenderConfig;
use shapetrack::shape::ShapeBasis;

#[derive(Parser)]
#[command(name = "shapetrack", version, about = "Category-level pose and shape tracking from depth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic depth sequence from a scene config.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the shipped 100-frame reference scene.
        #[arg(long, conflicts_with = "config")]
        reference: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Codebook operations.
    Codebook {
        #[command(subcommand)]
        command: CodebookCommand,
    },
    /// Track a sequence and write report.csv and report.json.
    Track {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Run config (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a stored report's scores against ground truth.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Surface samples per shape for the box and Chamfer metrics.
        #[arg(long, default_value_t = 1000)]
        metric_points: usize,
    },
    /// Print a report summary and optionally plot it.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CodebookCommand {
    /// Render and encode the canonical shape of a category on a rotation grid.
    Build(BuildArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    category: String,
    /// Grid step in degrees; must divide 180.
    #[arg(long, default_value_t = 10)]
    grid_step: u32,
    /// Render config (JSON); defaults apply to missing fields.
    #[arg(long)]
    render: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `report.json` inside a directory, or the path itself.
fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

fn print_summary(report: &TrackReport) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&report.summary)?);
    Ok(())
}

/// Exit status: 0 on success, 2 when the track was lost on some frame.
fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { config, reference, out } => {
            let cfg = match (config, reference) {
                (Some(path), _) => read_json::<SceneConfig>(&path)?,
                (None, true) => SceneConfig::reference(),
                (None, false) => bail!("pass --config or --reference"),
            };
            let seq = generate_sequence(&cfg)?;
            seq.save(&out)?;
            info!("wrote {} frames to {}", seq.frames.len(), out.display());
        }
        Command::Codebook {
            command: CodebookCommand::Build(args),
        } => {
            let basis = ShapeBasis::category(&args.category)?;
            let render = match &args.render {
                Some(p) => read_json::<RenderConfig>(p)?,
                None => RenderConfig::default(),
            };
            let grid = RotationGrid::new(args.grid_step)?;
            info!("rendering {} bins", grid.len());
            let cb = build_codebook(&basis, &basis.canonical_latent(), &grid, &render)?;
            cb.save(&args.out)?;
        }
        Command::Track {
            seq,
            codebook,
            config,
            out,
        } => {
            let cfg = match &config {
                Some(p) => read_json::<RunConfig>(p)?,
                None => RunConfig::default(),
            };
            let seq = Sequence::load(&seq)?;
            let cb = Codebook::load(&codebook)?;
            let report = run_tracking(&seq, &cb, &cfg)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            emit_report(&report, &out.join("report.csv"), ReportFormat::Csv, None)?;
            emit_report(&report, &out.join("report.json"), ReportFormat::Json, None)?;
            print_summary(&report)?;
            if report.any_lost() {
                return Ok(2);
            }
        }
        Command::Eval {
            report,
            gt,
            metric_points,
        } => {
            let stored = read_report_json(&report_path(&report))?;
            let seq = Sequence::load(&gt)?;
            let fresh = evaluate(&stored, &seq, metric_points)?;
            print_summary(&fresh)?;
            if fresh.summary != stored.summary {
                eprintln!("warning: recomputed summary differs from the stored one");
            }
        }
        Command::Report { input, plot } => {
            let report = read_report_json(&report_path(&input))?;
            print_summary(&report)?;
            if let Some(plot) = plot {
                write_plot_svg(&report, &plot)?;
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
