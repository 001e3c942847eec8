//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, files or config,
//! or an `eval` mismatch), 2 processing error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bundle::{load_frame_bundle, write_json, META_FILE};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::hazard::OccupancyMap;
use crate::overlay::render_overlay;
use crate::pipeline::{process_frame, Backends};
use crate::report::{compare_reports, ReportDocument};
use crate::synth::{render, SceneSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PROCESSING: i32 = 2;

/// File name of the occupancy map `eval` looks for inside a bundle.
pub const BUNDLE_MAP_FILE: &str = "map.occ";

#[derive(Debug, Parser)]
#[command(name = "fallwatch", version, about = "RGB-D fall-hazard detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process one frame bundle and write its hazard report.
    Process {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a synthetic scene into a frame bundle.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Process every bundle under --frames and compare against
    /// <expected>/<bundle name>.json.
    Eval {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        expected: PathBuf,
        /// Defaults to the built-in configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to map.occ inside each bundle.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_PROCESSING
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
        }
    };
    let result = match cli.command {
        Command::Process {
            frame,
            config,
            map,
            out: report_path,
            overlay,
            seed,
        } => cmd_process(&frame, &config, &map, &report_path, overlay.as_deref(), seed, out),
        Command::Synth { scene, out: dir, seed } => cmd_synth(&scene, &dir, seed, out),
        Command::Eval {
            frames,
            expected,
            config,
            map,
            seed,
        } => cmd_eval(&frames, &expected, config.as_deref(), map.as_deref(), seed, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn run_bundle(bundle_dir: &Path, cfg: &PipelineConfig, map: &OccupancyMap, seed: u64) -> Result<ReportDocument> {
    let bundle = load_frame_bundle(bundle_dir)?;
    let backends = Backends::for_bundle(cfg, &bundle)?;
    let result = process_frame(&bundle, cfg, map, &backends, seed)?;
    Ok(ReportDocument::from_result(&result))
}

fn cmd_process(
    frame: &Path,
    config: &Path,
    map: &Path,
    report_path: &Path,
    overlay: Option<&Path>,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32> {
    let cfg = PipelineConfig::load(config)?;
    let map = OccupancyMap::load(map)?;
    let bundle = load_frame_bundle(frame)?;
    let backends = Backends::for_bundle(&cfg, &bundle)?;
    let result = process_frame(&bundle, &cfg, &map, &backends, seed)?;
    let doc = ReportDocument::from_result(&result);
    std::fs::write(report_path, doc.to_canonical_string(true)).map_err(|e| Error::io(report_path, e))?;
    if let Some(path) = overlay {
        render_overlay(&bundle, &doc)
            .save(path)
            .map_err(|e| Error::load(path, e.to_string()))?;
    }
    for w in &result.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(
        out,
        "{}: {} objects ({} high, {} moderate) in {:.1} ms",
        doc.frame_id,
        doc.entries.len(),
        result.report.count(crate::hazard::Severity::High),
        result.report.count(crate::hazard::Severity::Moderate),
        result.total_ms()
    );
    Ok(EXIT_OK)
}

fn cmd_synth(scene: &Path, dir: &Path, seed: u64, out: &mut dyn Write) -> Result<i32> {
    let spec = SceneSpec::load(scene)?;
    let (bundle, truth) = render(&spec, seed)?;
    bundle.save(dir)?;
    write_json(&dir.join("ground_truth.json"), &truth.summary())?;
    let _ = writeln!(
        out,
        "wrote {} ({}x{}, {} objects) to {}",
        bundle.frame_id,
        bundle.intrinsics.width,
        bundle.intrinsics.height,
        spec.objects.len(),
        dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_eval(
    frames: &Path,
    expected: &Path,
    config: Option<&Path>,
    map: Option<&Path>,
    seed: u64,
    out: &mut dyn Write,
) -> Result<i32> {
    let cfg = match config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let shared_map = map.map(OccupancyMap::load).transpose()?;
    let mut bundles: Vec<PathBuf> = std::fs::read_dir(frames)
        .map_err(|e| Error::io(frames, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).is_file())
        .collect();
    bundles.sort();
    if bundles.is_empty() {
        return Err(Error::load(frames, "no frame bundles found"));
    }

    let mut failures = 0;
    let _ = writeln!(out, "{:<32} result", "frame");
    for dir in &bundles {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let map = match &shared_map {
            Some(m) => m.clone(),
            None => OccupancyMap::load(&dir.join(BUNDLE_MAP_FILE))?,
        };
        let actual = match run_bundle(dir, &cfg, &map, seed) {
            Ok(doc) => doc,
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                let _ = writeln!(out, "{name:<32} ERROR {e}");
                return Ok(EXIT_PROCESSING);
            }
        };
        let expected_path = expected.join(format!("{name}.json"));
        let diffs = match ReportDocument::load(&expected_path) {
            Ok(exp) => compare_reports(&exp, &actual),
            Err(e) => vec![format!("cannot read expected report: {e}")],
        };
        if diffs.is_empty() {
            let _ = writeln!(out, "{name:<32} PASS");
        } else {
            failures += 1;
            let _ = writeln!(out, "{name:<32} FAIL");
            for d in diffs {
                let _ = writeln!(out, "  {name}: {d}");
            }
        }
    }
    let _ = writeln!(out, "{} of {} frames passed", bundles.len() - failures, bundles.len());
    Ok(if failures == 0 { EXIT_OK } else { EXIT_VALIDATION })
}
