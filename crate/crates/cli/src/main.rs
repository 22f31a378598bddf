use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use flexinst_cli::commands::{
    self, InputSpec, ReplayOutcome, SynthMocapArgs, TeleopArgs, ValidateArgs,
};
use flexinst_core::SystemConfig;

/// Digital twin and teleoperation tools for the flexible laparoscopic
/// instrument.
#[derive(Debug, Parser)]
#[command(name = "flexinst", version)]
struct Cli {
    /// TOML file with geometry, pipeline, motor and controller settings.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the jaw kinematics over the valid slider range.
    Sweep {
        /// Gripper geometry file; defaults to the configured geometry.
        #[arg(long, value_name = "FILE")]
        geom: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// CSV output; stdout if omitted.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compare the model with CAD or motion-capture references.
    #[command(group(ArgGroup::new("source").required(true).args(["cad", "mocap"])))]
    Validate {
        /// CSV of (slider, total angle) pairs.
        #[arg(long, value_name = "FILE")]
        cad: Option<PathBuf>,
        /// CSV of marker frames; the first frame is the rest baseline.
        #[arg(long, value_name = "FILE")]
        mocap: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        geom: Option<PathBuf>,
        /// Per-point comparison CSV.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Model curve CSV for plotting.
        #[arg(long, value_name = "FILE")]
        curve: Option<PathBuf>,
    },
    /// Run the control loop from a replayed input trace or a live console.
    Teleop {
        /// `replay:<file>` or `console`.
        #[arg(long)]
        input: InputSpec,
        /// Loop rate, Hz; overrides the config.
        #[arg(long)]
        rate: Option<f64>,
        /// Console bind address; overrides the config.
        #[arg(long)]
        bind: Option<String>,
        /// Telemetry CSV output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Stop after this many seconds of loop time.
        #[arg(long)]
        duration: Option<f64>,
        /// Pace a replay at the loop rate instead of running flat out.
        #[arg(long)]
        realtime: bool,
    },
    /// Re-run a recorded telemetry trace and check it reproduces exactly.
    Replay {
        trace: PathBuf,
        /// Write the re-run telemetry here.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Record telemetry for the scripted 30 s session or an input trace.
    Record {
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Input trace to drive the loop instead of the scripted session.
        #[arg(long, value_name = "FILE")]
        inputs: Option<PathBuf>,
        /// Also save the input trace that was used.
        #[arg(long, value_name = "FILE")]
        inputs_out: Option<PathBuf>,
    },
    /// Generate synthetic reference data from the model.
    #[command(subcommand)]
    Synth(Synth),
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug, Subcommand)]
enum Synth {
    /// Marker frames for an open-close cycle with Gaussian marker noise.
    Mocap {
        #[command(flatten)]
        args: MocapArgs,
        #[arg(long, value_name = "FILE")]
        geom: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Exact (ΔL, θ_total) pairs.
    Cad {
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[arg(long, value_name = "FILE")]
        geom: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct MocapArgs {
    /// Marker noise standard deviation, mm.
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 41)]
    frames: usize,
    /// Slider travel at the ends of the cycle, mm.
    #[arg(long, default_value_t = 0.25)]
    low: f64,
    #[arg(long, default_value_t = 5.6)]
    high: f64,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => SystemConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SystemConfig::default(),
    };
    match cli.command {
        Command::Sweep { geom, points, out } => {
            let g = commands::load_geometry(&cfg, geom.as_deref())?;
            commands::sweep(&g, points, out.as_deref())?;
        }
        Command::Validate {
            cad,
            mocap,
            geom,
            report,
            curve,
        } => {
            let g = commands::load_geometry(&cfg, geom.as_deref())?;
            let rep = commands::validate(
                &g,
                ValidateArgs {
                    cad: cad.as_deref(),
                    mocap: mocap.as_deref(),
                    report: report.as_deref(),
                    curve: curve.as_deref(),
                },
            )?;
            println!("{}", commands::summarize(&rep));
        }
        Command::Teleop {
            input,
            rate,
            bind,
            out,
            duration,
            realtime,
        } => {
            if let Some(r) = rate {
                cfg.control.loop_rate_hz = r;
                cfg.validate()?;
            }
            let stop = Arc::new(AtomicBool::new(false));
            let flag = Arc::clone(&stop);
            ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
                .context("cannot install the interrupt handler")?;
            let ticks = commands::teleop(
                &cfg,
                TeleopArgs {
                    input,
                    bind: bind.as_deref(),
                    out: out.as_deref(),
                    duration,
                    realtime,
                },
                Some(&stop),
            )?;
            println!("{ticks} ticks");
        }
        Command::Replay { trace, out } => match commands::replay(&cfg, &trace, out.as_deref())? {
            ReplayOutcome::Identical { ticks } => println!("{ticks} ticks replayed, identical"),
            ReplayOutcome::Diverged { tick } => {
                println!("replay diverges at tick {tick}");
                return Ok(ExitCode::from(2));
            }
            ReplayOutcome::LengthMismatch { recorded, replayed } => {
                println!("replay produced {replayed} ticks, trace has {recorded}");
                return Ok(ExitCode::from(2));
            }
        },
        Command::Record {
            out,
            inputs,
            inputs_out,
        } => {
            let n = commands::record(&cfg, inputs.as_deref(), &out, inputs_out.as_deref())?;
            println!("{n} ticks written to {}", out.display());
        }
        Command::Synth(Synth::Mocap { args, geom, out }) => {
            let g = commands::load_geometry(&cfg, geom.as_deref())?;
            let a = SynthMocapArgs {
                sigma: args.sigma,
                seed: args.seed,
                frames: args.frames,
                low: args.low,
                high: args.high,
            };
            commands::synth_mocap(&g, &a, out.as_deref())?;
        }
        Command::Synth(Synth::Cad { points, geom, out }) => {
            let g = commands::load_geometry(&cfg, geom.as_deref())?;
            commands::synth_cad(&g, points, out.as_deref())?;
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
