//! Operator input: normalization, dead-zone, smoothing and the mapping from
//! the 6-axis device onto joint velocity commands. Also the input sources
//! the control loop reads from.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::FaultInjection;

/// Full-scale raw count reported by the 6-axis device.
pub const DEFAULT_AXIS_RANGE: f64 = 350.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawAxes {
    pub tx: i32,
    pub ty: i32,
    pub tz: i32,
    pub rx: i32,
    pub ry: i32,
    pub rz: i32,
    pub buttons: u32,
}

impl RawAxes {
    /// Quantize normalized values back to device counts.
    pub fn from_normalized(values: [f64; 6], buttons: u32, range: f64) -> Self {
        let q = |v: f64| {
            let v = if v.is_finite() {
                v.clamp(-1.0, 1.0)
            } else {
                0.0
            };
            (v * range).round() as i32
        };
        RawAxes {
            tx: q(values[0]),
            ty: q(values[1]),
            tz: q(values[2]),
            rx: q(values[3]),
            ry: q(values[4]),
            rz: q(values[5]),
            buttons,
        }
    }

    pub fn values(&self) -> [i32; 6] {
        [self.tx, self.ty, self.tz, self.rx, self.ry, self.rz]
    }

    pub fn button(&self, index: u32) -> bool {
        index < 32 && self.buttons & (1 << index) != 0
    }
}

/// Six axis values in `[-1, 1]`, ordered tx, ty, tz, rx, ry, rz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedAxes(pub [f64; 6]);

impl NormalizedAxes {
    pub fn tz(&self) -> f64 {
        self.0[2]
    }
    pub fn rx(&self) -> f64 {
        self.0[3]
    }
    pub fn ry(&self) -> f64 {
        self.0[4]
    }
    pub fn rz(&self) -> f64 {
        self.0[5]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMode {
    AllAxes,
    #[default]
    DominantAxis,
}

/// Maximum joint speeds at full deflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGains {
    /// Bend, deg/s.
    pub q1: f64,
    /// Distal head rotation, deg/s.
    pub q2: f64,
    /// Gripper slider, mm/s.
    pub q3: f64,
    /// Shaft rotation, deg/s.
    pub q4: f64,
}

impl Default for JointGains {
    fn default() -> Self {
        JointGains {
            q1: 30.0,
            q2: 90.0,
            q3: 2.0,
            q4: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub axis_range: f64,
    pub dead_zone: f64,
    /// Per-tick smoothing coefficient of the first-order filter.
    pub filter_coeff: f64,
    /// The filter output snaps onto its input once closer than this.
    pub settle_tolerance: f64,
    pub gains: JointGains,
    pub priority: PriorityMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            axis_range: DEFAULT_AXIS_RANGE,
            dead_zone: 0.05,
            filter_coeff: 0.2,
            settle_tolerance: 1e-4,
            gains: JointGains::default(),
            priority: PriorityMode::DominantAxis,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Pipeline(String),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Pipeline(m));
        if self.axis_range.is_nan() || self.axis_range <= 0.0 {
            return err(format!(
                "axis range must be positive, got {}",
                self.axis_range
            ));
        }
        if !(0.0..1.0).contains(&self.dead_zone) {
            return err(format!(
                "dead zone must be in [0, 1), got {}",
                self.dead_zone
            ));
        }
        if !(self.filter_coeff > 0.0 && self.filter_coeff <= 1.0) {
            return err(format!(
                "filter coefficient must be in (0, 1], got {}",
                self.filter_coeff
            ));
        }
        if self.settle_tolerance.is_nan() || self.settle_tolerance < 0.0 {
            return err("settle tolerance must be non-negative".into());
        }
        let g = self.gains;
        if ![g.q1, g.q2, g.q3, g.q4]
            .iter()
            .all(|&v| v > 0.0 && v.is_finite())
        {
            return err("joint gains must be positive".into());
        }
        Ok(())
    }
}

/// Joint velocity set-points. Units: deg/s except `q3dot` in mm/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointVelocityCommand {
    pub q1dot: f64,
    pub q2dot: f64,
    pub q3dot: f64,
    pub q4dot: f64,
}

impl JointVelocityCommand {
    pub const ZERO: JointVelocityCommand = JointVelocityCommand {
        q1dot: 0.0,
        q2dot: 0.0,
        q3dot: 0.0,
        q4dot: 0.0,
    };

    pub fn as_array(&self) -> [f64; 4] {
        [self.q1dot, self.q2dot, self.q3dot, self.q4dot]
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    pub fn nonzero_count(&self) -> usize {
        self.as_array().iter().filter(|&&v| v != 0.0).count()
    }
}

pub fn normalize(raw: &RawAxes, range: f64) -> NormalizedAxes {
    let mut out = [0.0; 6];
    for (o, v) in out.iter_mut().zip(raw.values()) {
        *o = (v as f64 / range).clamp(-1.0, 1.0);
    }
    NormalizedAxes(out)
}

/// Rescaled dead-zone: zero inside `±delta`, linear from the edge so that
/// full deflection still reaches ±1.
pub fn dead_zone(x: f64, delta: f64) -> f64 {
    let mag = x.abs();
    if mag <= delta {
        0.0
    } else {
        x.signum() * (mag - delta) / (1.0 - delta)
    }
}

pub fn low_pass(prev: f64, x: f64, beta: f64) -> f64 {
    prev + beta * (x - prev)
}

/// Which DOF each device axis drives, in tie-break order: bend, grip,
/// head rotation, shaft rotation.
const DOMINANCE_ORDER: [(usize, Joint); 4] = [
    (4, Joint::Bend),
    (2, Joint::Grip),
    (5, Joint::Head),
    (3, Joint::Shaft),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Joint {
    Bend,
    Grip,
    Head,
    Shaft,
}

pub fn map_axes(filtered: &NormalizedAxes, cfg: &PipelineConfig) -> JointVelocityCommand {
    let g = cfg.gains;
    let full = JointVelocityCommand {
        q1dot: g.q1 * filtered.ry(),
        q2dot: g.q2 * filtered.rz(),
        q3dot: g.q3 * filtered.tz(),
        q4dot: g.q4 * filtered.rx(),
    };
    match cfg.priority {
        PriorityMode::AllAxes => full,
        PriorityMode::DominantAxis => {
            let mut best: Option<(f64, Joint)> = None;
            for (axis, joint) in DOMINANCE_ORDER {
                let mag = filtered.0[axis].abs();
                if mag > 0.0 && best.is_none_or(|(m, _)| mag > m) {
                    best = Some((mag, joint));
                }
            }
            let mut cmd = JointVelocityCommand::ZERO;
            match best.map(|(_, j)| j) {
                Some(Joint::Bend) => cmd.q1dot = full.q1dot,
                Some(Joint::Head) => cmd.q2dot = full.q2dot,
                Some(Joint::Grip) => cmd.q3dot = full.q3dot,
                Some(Joint::Shaft) => cmd.q4dot = full.q4dot,
                None => {}
            }
            cmd
        }
    }
}

/// Intermediate signals of one pipeline pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOutput {
    pub normalized: NormalizedAxes,
    pub filtered: NormalizedAxes,
    pub command: JointVelocityCommand,
}

/// Stateful normalize → dead-zone → low-pass → map chain.
#[derive(Debug, Clone)]
pub struct InputPipeline {
    cfg: PipelineConfig,
    state: [f64; 6],
}

impl InputPipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(InputPipeline {
            cfg,
            state: [0.0; 6],
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 6];
    }

    pub fn filtered(&self) -> NormalizedAxes {
        NormalizedAxes(self.state)
    }

    pub fn process(&mut self, raw: &RawAxes) -> PipelineOutput {
        let normalized = normalize(raw, self.cfg.axis_range);
        for (s, &x) in self.state.iter_mut().zip(normalized.0.iter()) {
            let target = dead_zone(x, self.cfg.dead_zone);
            let next = low_pass(*s, target, self.cfg.filter_coeff);
            *s = if (next - target).abs() < self.cfg.settle_tolerance {
                target
            } else {
                next
            };
        }
        let filtered = NormalizedAxes(self.state);
        PipelineOutput {
            normalized,
            filtered,
            command: map_axes(&filtered, &self.cfg),
        }
    }
}

/// Discrete operator requests that arrive alongside the axis stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorRequest {
    Enable,
    Disable,
    Reset,
    Inject(FaultInjection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStatus {
    /// No operator session has been attached yet.
    #[default]
    Idle,
    Connected,
    /// A session was attached and has gone away.
    Lost,
}

/// What the control loop sees from the operator side on one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatorInput {
    pub axes: RawAxes,
    pub request: Option<OperatorRequest>,
    pub link: LinkStatus,
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot open input {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input trace line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("input source unavailable: {0}")]
    Unavailable(String),
}

pub trait InputSource {
    fn open(&mut self) -> Result<(), InputError>;
    /// Sample for the current tick. Called exactly once per tick.
    fn poll(&mut self) -> OperatorInput;
    /// A finite source has delivered its last sample.
    fn is_finished(&self) -> bool {
        false
    }
}

/// Single-slot hand-off from the operator session to the control loop.
/// Axes are overwritten by the newest sample; a pending request is
/// consumed by the next poll.
#[derive(Debug, Default)]
pub struct InputMailbox {
    slot: Mutex<OperatorInput>,
}

impl InputMailbox {
    pub fn new() -> Arc<Self> {
        Arc::new(InputMailbox::default())
    }

    fn with<R>(&self, f: impl FnOnce(&mut OperatorInput) -> R) -> R {
        let mut guard = self.slot.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }

    pub fn publish_axes(&self, axes: RawAxes) {
        self.with(|s| s.axes = axes);
    }

    pub fn request(&self, request: OperatorRequest) {
        self.with(|s| s.request = Some(request));
    }

    pub fn set_link(&self, link: LinkStatus) {
        self.with(|s| {
            s.link = link;
            if link == LinkStatus::Lost {
                s.axes = RawAxes::default();
            }
        });
    }

    pub fn link(&self) -> LinkStatus {
        self.with(|s| s.link)
    }

    pub fn take(&self) -> OperatorInput {
        self.with(|s| {
            let out = *s;
            s.request = None;
            out
        })
    }
}

/// Input fed live through an [`InputMailbox`].
pub struct MailboxSource {
    mailbox: Arc<InputMailbox>,
}

impl MailboxSource {
    pub fn new(mailbox: Arc<InputMailbox>) -> Self {
        MailboxSource { mailbox }
    }
}

impl InputSource for MailboxSource {
    fn open(&mut self) -> Result<(), InputError> {
        Ok(())
    }

    fn poll(&mut self) -> OperatorInput {
        self.mailbox.take()
    }
}

/// One row of an input trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSample {
    pub tick: u64,
    pub axes: RawAxes,
    pub request: Option<OperatorRequest>,
    pub link: LinkStatus,
}

/// Plays back recorded samples, one per tick, then reports zero axes.
pub struct ReplaySource {
    path: Option<PathBuf>,
    samples: Vec<InputSample>,
    cursor: usize,
    last_link: LinkStatus,
}

impl ReplaySource {
    pub fn from_samples(samples: Vec<InputSample>) -> Self {
        ReplaySource {
            path: None,
            samples,
            cursor: 0,
            last_link: LinkStatus::Idle,
        }
    }

    /// Loaded lazily by [`InputSource::open`].
    pub fn from_path(path: impl AsRef<Path>) -> Self {
        ReplaySource {
            path: Some(path.as_ref().to_path_buf()),
            samples: Vec::new(),
            cursor: 0,
            last_link: LinkStatus::Idle,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl InputSource for ReplaySource {
    fn open(&mut self) -> Result<(), InputError> {
        if let Some(path) = &self.path {
            let mut text = String::new();
            File::open(path)
                .and_then(|mut f| f.read_to_string(&mut text))
                .map_err(|source| InputError::Open {
                    path: path.clone(),
                    source,
                })?;
            self.samples = crate::telemetry::parse_input_trace(&text)?;
            self.cursor = 0;
        }
        Ok(())
    }

    fn poll(&mut self) -> OperatorInput {
        match self.samples.get(self.cursor) {
            Some(s) => {
                self.cursor += 1;
                self.last_link = s.link;
                OperatorInput {
                    axes: s.axes,
                    request: s.request,
                    link: s.link,
                }
            }
            None => OperatorInput {
                link: self.last_link,
                ..OperatorInput::default()
            },
        }
    }

    fn is_finished(&self) -> bool {
        self.cursor >= self.samples.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(values: [i32; 6]) -> RawAxes {
        RawAxes {
            tx: values[0],
            ty: values[1],
            tz: values[2],
            rx: values[3],
            ry: values[4],
            rz: values[5],
            buttons: 0,
        }
    }

    fn axes(tz: f64, rx: f64, ry: f64, rz: f64) -> NormalizedAxes {
        NormalizedAxes([0.0, 0.0, tz, rx, ry, rz])
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&raw([350, 0, 0, 0, 0, 0]), 350.0).0[0], 1.0);
        assert_eq!(normalize(&raw([0; 6]), 350.0).0, [0.0; 6]);
        assert_eq!(normalize(&raw([0, 0, 0, -175, 0, 0]), 350.0).0[3], -0.5);
        assert_eq!(normalize(&raw([0, 9000, 0, 0, 0, 0]), 350.0).0[1], 1.0);
    }

    #[test]
    fn dead_zone_examples() {
        assert_eq!(dead_zone(0.03, 0.05), 0.0);
        assert_eq!(dead_zone(1.0, 0.05), 1.0);
        assert!((dead_zone(0.525, 0.05) - 0.5).abs() < 1e-12);
        assert!((dead_zone(-0.525, 0.05) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn low_pass_examples() {
        assert_eq!(low_pass(0.0, 1.0, 1.0), 1.0);
        assert!((low_pass(0.0, 1.0, 0.2) - 0.2).abs() < 1e-15);
        let mut y = 0.0;
        for _ in 0..21 {
            y = low_pass(y, 1.0, 0.2);
        }
        assert!(y > 0.99);
    }

    #[test]
    fn map_examples() {
        let cfg = PipelineConfig {
            gains: JointGains {
                q3: 2.0,
                ..JointGains::default()
            },
            priority: PriorityMode::AllAxes,
            ..PipelineConfig::default()
        };
        let cmd = map_axes(&axes(1.0, 0.0, 0.0, 0.0), &cfg);
        assert_eq!(
            cmd,
            JointVelocityCommand {
                q3dot: 2.0,
                ..JointVelocityCommand::ZERO
            }
        );
        assert!(map_axes(&NormalizedAxes::default(), &cfg).is_zero());

        let dominant = PipelineConfig::default();
        let cmd = map_axes(&axes(0.0, 0.0, 0.9, 0.4), &dominant);
        assert_eq!(cmd.nonzero_count(), 1);
        assert!(cmd.q1dot > 0.0);
    }

    #[test]
    fn translation_x_y_are_unmapped() {
        let cfg = PipelineConfig {
            priority: PriorityMode::AllAxes,
            ..PipelineConfig::default()
        };
        let cmd = map_axes(&NormalizedAxes([1.0, -1.0, 0.0, 0.0, 0.0, 0.0]), &cfg);
        assert!(cmd.is_zero());
    }

    #[test]
    fn dominant_ties_follow_fixed_order() {
        let cfg = PipelineConfig::default();
        let all = map_axes(&axes(0.5, 0.5, 0.5, 0.5), &cfg);
        assert!(all.q1dot != 0.0 && all.nonzero_count() == 1);
        let no_bend = map_axes(&axes(0.5, 0.5, 0.0, -0.5), &cfg);
        assert!(no_bend.q3dot != 0.0 && no_bend.nonzero_count() == 1);
        let head_shaft = map_axes(&axes(0.0, 0.5, 0.0, -0.5), &cfg);
        assert!(head_shaft.q2dot < 0.0 && head_shaft.nonzero_count() == 1);
    }

    #[test]
    fn pipeline_decays_to_exact_zero() {
        let mut p = InputPipeline::new(PipelineConfig::default()).unwrap();
        for _ in 0..50 {
            p.process(&raw([0, 0, 0, 0, 350, 0]));
        }
        assert!(p.process(&raw([0, 0, 0, 0, 350, 0])).command.q1dot > 29.9);
        let mut last = None;
        for _ in 0..100 {
            last = Some(p.process(&raw([0; 6])));
        }
        let out = last.unwrap();
        assert!(out.command.is_zero());
        assert_eq!(out.filtered.0, [0.0; 6]);
    }

    #[test]
    fn config_validation() {
        let bad = PipelineConfig {
            dead_zone: 1.0,
            ..PipelineConfig::default()
        };
        assert!(InputPipeline::new(bad).is_err());
        let bad = PipelineConfig {
            filter_coeff: 0.0,
            ..PipelineConfig::default()
        };
        assert!(InputPipeline::new(bad).is_err());
        let bad = PipelineConfig {
            gains: JointGains {
                q2: 0.0,
                ..JointGains::default()
            },
            ..PipelineConfig::default()
        };
        assert!(InputPipeline::new(bad).is_err());
    }

    #[test]
    fn mailbox_keeps_latest_axes_and_consumes_requests() {
        let mb = InputMailbox::new();
        mb.publish_axes(raw([1, 0, 0, 0, 0, 0]));
        mb.publish_axes(raw([2, 0, 0, 0, 0, 0]));
        mb.request(OperatorRequest::Enable);
        let mut src = MailboxSource::new(mb.clone());
        let first = src.poll();
        assert_eq!(first.axes.tx, 2);
        assert_eq!(first.request, Some(OperatorRequest::Enable));
        let second = src.poll();
        assert_eq!(second.axes.tx, 2);
        assert_eq!(second.request, None);
        mb.set_link(LinkStatus::Lost);
        let third = src.poll();
        assert_eq!(third.link, LinkStatus::Lost);
        assert_eq!(third.axes, RawAxes::default());
    }

    #[test]
    fn replay_source_missing_file_fails_to_open() {
        let mut src = ReplaySource::from_path("/nonexistent/trace.csv");
        assert!(matches!(src.open(), Err(InputError::Open { .. })));
    }

    #[test]
    fn from_normalized_quantizes_and_clamps() {
        let r = RawAxes::from_normalized([0.5, -2.0, f64::NAN, 0.0, 1.0, -0.25], 3, 350.0);
        assert_eq!(r.values(), [175, -350, 0, 0, 350, -88]);
        assert!(r.button(0) && r.button(1) && !r.button(2));
    }
}
