//! Scripted operator sessions.

use crate::config::SystemConfig;
use crate::input::{InputSample, LinkStatus, OperatorRequest, RawAxes};
use crate::telemetry::{run_inputs, TelemetryRecord, TraceError};

/// One stretch of constant operator input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// s
    pub duration: f64,
    /// Normalized `[tx, ty, tz, rx, ry, rz]`.
    pub axes: [f64; 6],
    /// Request issued on the first tick of the segment.
    pub request: Option<OperatorRequest>,
}

impl Segment {
    pub fn hold(duration: f64) -> Self {
        Segment {
            duration,
            axes: [0.0; 6],
            request: None,
        }
    }

    pub fn axis(duration: f64, index: usize, value: f64) -> Self {
        let mut axes = [0.0; 6];
        axes[index] = value;
        Segment {
            duration,
            axes,
            request: None,
        }
    }

    pub fn request(request: OperatorRequest) -> Self {
        Segment {
            duration: 0.0,
            axes: [0.0; 6],
            request: Some(request),
        }
    }
}

pub const TZ: usize = 2;
pub const RY: usize = 4;

/// Expand segments into per-tick samples at `rate_hz`. Zero-length
/// segments attach their request to the following tick.
pub fn expand(segments: &[Segment], rate_hz: f64, axis_range: f64) -> Vec<InputSample> {
    let mut out: Vec<InputSample> = Vec::new();
    let mut pending: Option<OperatorRequest> = None;
    for seg in segments {
        pending = seg.request.or(pending);
        let ticks = (seg.duration * rate_hz).round() as u64;
        for _ in 0..ticks {
            out.push(InputSample {
                tick: out.len() as u64,
                axes: RawAxes::from_normalized(seg.axes, 0, axis_range),
                request: pending.take(),
                link: LinkStatus::Idle,
            });
        }
    }
    out
}

/// 30 s session: enable, open and close the jaws, bend the wrist from
/// straight to the 90° limit, then let everything come to rest.
pub fn open_close_bend() -> Vec<Segment> {
    vec![
        Segment::hold(0.5),
        Segment::request(OperatorRequest::Enable),
        Segment::hold(0.5),
        Segment::axis(4.0, TZ, 0.6),
        Segment::hold(1.0),
        Segment::axis(3.0, TZ, -0.6),
        Segment::hold(1.0),
        Segment::axis(5.0, RY, 0.8),
        Segment::hold(15.0),
    ]
}

pub fn open_close_bend_inputs(cfg: &SystemConfig) -> Vec<InputSample> {
    expand(
        &open_close_bend(),
        cfg.control.loop_rate_hz,
        cfg.pipeline.axis_range,
    )
}

/// Run the scripted session on a fresh controller.
pub fn run_open_close_bend(cfg: &SystemConfig) -> Result<Vec<TelemetryRecord>, TraceError> {
    run_inputs(cfg, open_close_bend_inputs(cfg), &[])
}
