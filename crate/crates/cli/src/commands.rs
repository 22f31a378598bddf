use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use flexinst_core::control::Controller;
use flexinst_core::gripper::{self, GripperGeometry};
use flexinst_core::input::{InputMailbox, InputSource, MailboxSource, ReplaySource};
use flexinst_core::telemetry::{self, TelemetryRecord, TelemetryWriter};
use flexinst_core::validation::{self, ReferenceSource, SyntheticRig, ValidationReport};
use flexinst_core::{scenario, SystemConfig};
use log::info;

use crate::bridge::{Bridge, BridgeOptions, SnapshotSlot};
use crate::runner::{self, Pacing, RunLimits};

/// Where `teleop` reads operator input from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSpec {
    Replay(PathBuf),
    Console,
}

impl std::str::FromStr for InputSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("replay", path)) if !path.is_empty() => Ok(InputSpec::Replay(path.into())),
            None if s == "console" => Ok(InputSpec::Console),
            _ => Err(format!("expected replay:<file> or console, got {s:?}")),
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Geometry from a standalone file, or the configured one.
pub fn load_geometry(cfg: &SystemConfig, geom: Option<&Path>) -> Result<GripperGeometry> {
    match geom {
        Some(p) => {
            let text = read_text(p)?;
            toml::from_str(&text).with_context(|| format!("invalid geometry in {}", p.display()))
        }
        None => Ok(*cfg.gripper()),
    }
}

pub fn sweep(geom: &GripperGeometry, points: usize, out: Option<&Path>) -> Result<()> {
    if points < 2 {
        bail!("a sweep needs at least 2 points");
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(output(out)?);
    w.write_record([
        "slider_mm",
        "alpha_deg",
        "alpha_a_deg",
        "alpha_b_deg",
        "jaw_angle_deg",
        "total_angle_deg",
        "tip_width_mm",
        "force_ratio",
    ])?;
    for s in gripper::sweep(geom, points)? {
        let ratio = gripper::force_transmission(geom, s.slider, 1.0)?.tip_force;
        w.write_record(
            [
                s.slider,
                s.alpha,
                s.alpha_a,
                s.alpha_b,
                s.jaw_angle,
                s.total_angle,
                s.tip_width,
                ratio,
            ]
            .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub struct ValidateArgs<'a> {
    pub cad: Option<&'a Path>,
    pub mocap: Option<&'a Path>,
    pub report: Option<&'a Path>,
    pub curve: Option<&'a Path>,
}

pub fn validate(geom: &GripperGeometry, args: ValidateArgs<'_>) -> Result<ValidationReport> {
    let (refs, source) = match (args.cad, args.mocap) {
        (Some(p), None) => (
            validation::parse_references(&read_text(p)?)?,
            ReferenceSource::Cad,
        ),
        (None, Some(p)) => {
            let frames = validation::parse_markers(&read_text(p)?)?;
            (
                validation::mocap_references(&frames)?,
                ReferenceSource::Mocap,
            )
        }
        _ => bail!("give exactly one of --cad or --mocap"),
    };
    let report = validation::validate(&refs, geom, source)?;
    if let Some(p) = args.report {
        write_text(p, &report.points_csv())?;
    }
    if let Some(p) = args.curve {
        write_text(p, &report.curve_csv())?;
    }
    Ok(report)
}

pub fn summarize(report: &ValidationReport) -> String {
    format!(
        "{} references: {} compared, {} excluded, MAE {:.4} deg, max error {:.4} deg",
        report.source,
        report.pairs.len(),
        report.excluded.len(),
        report.mae,
        report.max_err
    )
}

pub struct TeleopArgs<'a> {
    pub input: InputSpec,
    pub bind: Option<&'a str>,
    pub out: Option<&'a Path>,
    pub duration: Option<f64>,
    pub realtime: bool,
}

/// Run the loop against a replayed trace or a live console. Returns the
/// number of ticks executed.
pub fn teleop(cfg: &SystemConfig, args: TeleopArgs<'_>, stop: Option<&AtomicBool>) -> Result<u64> {
    let mailbox = InputMailbox::new();
    let snapshots = SnapshotSlot::new();
    let (source, _bridge, pacing): (Box<dyn InputSource + Send>, Option<Bridge>, Pacing) =
        match &args.input {
            InputSpec::Replay(path) => {
                let pacing = if args.realtime {
                    Pacing::RealTime
                } else {
                    Pacing::Unpaced
                };
                (Box::new(ReplaySource::from_path(path)), None, pacing)
            }
            InputSpec::Console => {
                let bind = args.bind.unwrap_or(&cfg.console.bind);
                let bridge = Bridge::serve(
                    bind,
                    Arc::clone(&mailbox),
                    Arc::clone(&snapshots),
                    BridgeOptions::from_config(cfg),
                )
                .with_context(|| format!("cannot bind console bridge to {bind}"))?;
                println!("console bridge on ws://{}", bridge.local_addr());
                (
                    Box::new(MailboxSource::new(Arc::clone(&mailbox))),
                    Some(bridge),
                    Pacing::RealTime,
                )
            }
        };
    let mut ctl = Controller::initialize(cfg.clone(), source)?;
    info!("controller up in {}", ctl.mode());

    let mut writer = args
        .out
        .map(|p| -> Result<_> {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(TelemetryWriter::new(BufWriter::new(f))?)
        })
        .transpose()?;
    let mut write_err = None;
    let limits = RunLimits {
        max_ticks: args
            .duration
            .map(|d| (d * cfg.control.loop_rate_hz).round() as u64),
        until_input_ends: matches!(args.input, InputSpec::Replay(_)),
        stop,
    };
    let ticks = runner::run_loop(&mut ctl, pacing, limits, Some(&snapshots), |rec| {
        if let (Some(w), None) = (writer.as_mut(), &write_err) {
            write_err = w.write(rec).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    info!("stopped after {ticks} ticks in {}", ctl.mode());
    Ok(ticks)
}

/// Outcome of re-running a recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplayOutcome {
    Identical { ticks: usize },
    Diverged { tick: u64 },
    LengthMismatch { recorded: usize, replayed: usize },
}

pub fn replay(cfg: &SystemConfig, trace: &Path, out: Option<&Path>) -> Result<ReplayOutcome> {
    let recorded = telemetry::replay_trace(trace)
        .with_context(|| format!("cannot load trace {}", trace.display()))?;
    let replayed = telemetry::rerun(cfg, &recorded)?;
    if let Some(p) = out {
        telemetry::record_trace(&replayed, p)?;
    }
    Ok(compare(&recorded, &replayed))
}

pub fn compare(recorded: &[TelemetryRecord], replayed: &[TelemetryRecord]) -> ReplayOutcome {
    if let Some((a, _)) = recorded
        .iter()
        .zip(replayed)
        .find(|(a, b)| a.to_row() != b.to_row())
    {
        return ReplayOutcome::Diverged { tick: a.tick };
    }
    if recorded.len() != replayed.len() {
        return ReplayOutcome::LengthMismatch {
            recorded: recorded.len(),
            replayed: replayed.len(),
        };
    }
    ReplayOutcome::Identical {
        ticks: recorded.len(),
    }
}

/// Run the built-in scripted session, or an input trace, and save the
/// telemetry.
pub fn record(
    cfg: &SystemConfig,
    inputs: Option<&Path>,
    out: &Path,
    inputs_out: Option<&Path>,
) -> Result<usize> {
    let samples = match inputs {
        Some(p) => telemetry::parse_input_trace(&read_text(p)?)?,
        None => scenario::open_close_bend_inputs(cfg),
    };
    if let Some(p) = inputs_out {
        write_text(p, &telemetry::input_trace_to_string(&samples))?;
    }
    let records = telemetry::run_inputs(cfg, samples, &[])?;
    telemetry::record_trace(&records, out)?;
    Ok(records.len())
}

pub struct SynthMocapArgs {
    pub sigma: f64,
    pub seed: u64,
    pub frames: usize,
    pub low: f64,
    pub high: f64,
}

pub fn synth_mocap(
    geom: &GripperGeometry,
    args: &SynthMocapArgs,
    out: Option<&Path>,
) -> Result<()> {
    let schedule = validation::triangle_schedule(args.low, args.high, args.frames);
    let frames = validation::synth_mocap(
        geom,
        &SyntheticRig::default(),
        &schedule,
        args.sigma,
        args.seed,
        0.01,
    )?;
    let mut w = output(out)?;
    w.write_all(validation::markers_to_csv(&frames).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn synth_cad(geom: &GripperGeometry, points: usize, out: Option<&Path>) -> Result<()> {
    let refs = validation::synth_cad(geom, points)?;
    let mut w = output(out)?;
    w.write_all(validation::references_to_csv(&refs).as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_spec_parsing() {
        assert_eq!("console".parse::<InputSpec>(), Ok(InputSpec::Console));
        assert_eq!(
            "replay:trace.csv".parse::<InputSpec>(),
            Ok(InputSpec::Replay("trace.csv".into()))
        );
        assert!("replay:".parse::<InputSpec>().is_err());
        assert!("joystick".parse::<InputSpec>().is_err());
    }

    #[test]
    fn compare_reports_first_divergence() {
        let cfg = SystemConfig::default();
        let a = scenario::run_open_close_bend(&cfg).unwrap();
        assert_eq!(compare(&a, &a), ReplayOutcome::Identical { ticks: 3000 });
        let mut b = a.clone();
        b[1200].command.q1dot += 1e-12;
        assert_eq!(compare(&a, &b), ReplayOutcome::Diverged { tick: 1200 });
        assert_eq!(
            compare(&a, &a[..10]),
            ReplayOutcome::LengthMismatch {
                recorded: 3000,
                replayed: 10
            }
        );
    }
}
