//! Controller state machine and the fixed-rate teleoperation loop.
//!
//! ```text
//!   INIT --init ok--> IDLE --enable--> TELEOP
//!     |                 ^                 |
//!     |                 +----disable------+
//!     +--init fail--> FAULT <--fault raised-- (any)
//!                       |
//!                       +--reset sequence--> INIT
//! ```
//!
//! Motor targets are zero in every mode except TELEOP.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{BusError, DriverId, InstrumentPlant, JointTruth, MotorBusCommand, MotorId};
use crate::config::SystemConfig;
use crate::flexure;
use crate::gripper::{self, GripperState};
use crate::input::{
    InputPipeline, InputSource, JointVelocityCommand, LinkStatus, NormalizedAxes, OperatorRequest,
};
use crate::telemetry::TelemetryRecord;

/// Encoder counts a commanded motor must miss before it counts as stalled.
const STALL_MIN_COUNTS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Init,
    Idle,
    Teleop,
    Fault,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Init, Mode::Idle, Mode::Teleop, Mode::Fault];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Init => "INIT",
            Mode::Idle => "IDLE",
            Mode::Teleop => "TELEOP",
            Mode::Fault => "FAULT",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultCause {
    DriverAbsent,
    BusInitFail,
    InputOpenFail,
    BusTimeout,
    EncoderImplausible,
    CommandNan,
    InputLost,
    /// Raised from outside the loop.
    External,
}

impl FaultCause {
    pub const ALL: [FaultCause; 8] = [
        FaultCause::DriverAbsent,
        FaultCause::BusInitFail,
        FaultCause::InputOpenFail,
        FaultCause::BusTimeout,
        FaultCause::EncoderImplausible,
        FaultCause::CommandNan,
        FaultCause::InputLost,
        FaultCause::External,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultCause::DriverAbsent => "DRIVER_ABSENT",
            FaultCause::BusInitFail => "BUS_INIT_FAIL",
            FaultCause::InputOpenFail => "INPUT_OPEN_FAIL",
            FaultCause::BusTimeout => "BUS_TIMEOUT",
            FaultCause::EncoderImplausible => "ENCODER_IMPLAUSIBLE",
            FaultCause::CommandNan => "COMMAND_NAN",
            FaultCause::InputLost => "INPUT_LOST",
            FaultCause::External => "EXTERNAL",
        }
    }
}

impl fmt::Display for FaultCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultCause {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        FaultCause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown fault cause {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    InitOk,
    InitFail(FaultCause),
    EnablePressed,
    DisablePressed,
    FaultRaised(FaultCause),
    ResetSequence,
    Tick,
}

impl Event {
    /// One representative of every event kind.
    pub const KINDS: [Event; 7] = [
        Event::InitOk,
        Event::InitFail(FaultCause::BusInitFail),
        Event::EnablePressed,
        Event::DisablePressed,
        Event::FaultRaised(FaultCause::External),
        Event::ResetSequence,
        Event::Tick,
    ];
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::InitOk => f.write_str("INIT_OK"),
            Event::InitFail(c) => write!(f, "INIT_FAIL:{c}"),
            Event::EnablePressed => f.write_str("ENABLE_PRESSED"),
            Event::DisablePressed => f.write_str("DISABLE_PRESSED"),
            Event::FaultRaised(c) => write!(f, "FAULT_RAISED:{c}"),
            Event::ResetSequence => f.write_str("RESET_SEQUENCE"),
            Event::Tick => f.write_str("TICK"),
        }
    }
}

impl FromStr for Event {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (head, cause) = match s.split_once(':') {
            Some((h, c)) => (h, Some(c.parse::<FaultCause>()?)),
            None => (s, None),
        };
        match (head, cause) {
            ("INIT_OK", None) => Ok(Event::InitOk),
            ("INIT_FAIL", Some(c)) => Ok(Event::InitFail(c)),
            ("ENABLE_PRESSED", None) => Ok(Event::EnablePressed),
            ("DISABLE_PRESSED", None) => Ok(Event::DisablePressed),
            ("FAULT_RAISED", Some(c)) => Ok(Event::FaultRaised(c)),
            ("RESET_SEQUENCE", None) => Ok(Event::ResetSequence),
            ("TICK", None) => Ok(Event::Tick),
            _ => Err(format!("unknown event {s:?}")),
        }
    }
}

/// The transition table. Every pair not listed leaves the mode unchanged.
pub fn transition(mode: Mode, event: Event) -> Mode {
    match (mode, event) {
        (_, Event::FaultRaised(_)) => Mode::Fault,
        (Mode::Init, Event::InitOk) => Mode::Idle,
        (Mode::Init, Event::InitFail(_)) => Mode::Fault,
        (Mode::Idle, Event::EnablePressed) => Mode::Teleop,
        (Mode::Teleop, Event::DisablePressed) => Mode::Idle,
        (Mode::Fault, Event::ResetSequence) => Mode::Init,
        (m, _) => m,
    }
}

/// Estimated joint configuration of the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentState {
    /// Bend, deg.
    pub q1: f64,
    /// Distal head rotation, deg in `[0, 360)`.
    pub q2: f64,
    /// Slider displacement ΔL, mm.
    pub q3: f64,
    /// Shaft rotation, deg in `[0, 360)`.
    pub q4: f64,
    pub jaw: GripperState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: Mode,
    pub tick: u64,
    pub last_command: JointVelocityCommand,
    pub estimated: InstrumentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub tick: u64,
    pub causes: Vec<FaultCause>,
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("step period {got} s does not match the configured loop period {expected} s")]
    Period { got: f64, expected: f64 },
}

/// Converts encoder counts into joint values.
#[derive(Debug, Clone)]
pub struct StateEstimator {
    cfg: SystemConfig,
}

impl StateEstimator {
    pub fn new(cfg: SystemConfig) -> Self {
        StateEstimator { cfg }
    }

    fn per_tick(&self, motor: MotorId) -> f64 {
        self.cfg.transmission.joint_per_motor_deg(motor) * 360.0
            / self.cfg.motor.ticks_per_rev as f64
    }

    /// Slider travel per gripper encoder count, mm.
    pub fn mm_per_tick(&self) -> f64 {
        self.per_tick(MotorId::Gripper)
    }

    /// Joint state from per-motor counts, indexed by [`MotorId::index`].
    /// Counts that map outside a joint's range are implausible.
    pub fn estimate(&self, ticks: &[i64; 5]) -> Result<InstrumentState, FaultCause> {
        let t = |m: MotorId| ticks[m.index()] as f64 * self.per_tick(m);
        let q3 = t(MotorId::Gripper);
        let jaw = gripper::jaw_state(self.cfg.gripper(), q3)
            .map_err(|_| FaultCause::EncoderImplausible)?;
        let q1 = flexure::bend_from_tendon(&self.cfg.flexure, t(MotorId::Flexion))
            .map_err(|_| FaultCause::EncoderImplausible)?;
        Ok(InstrumentState {
            q1,
            q2: crate::actuation::wrap_degrees(t(MotorId::Head)),
            q3,
            q4: crate::actuation::wrap_degrees(t(MotorId::Shaft)),
            jaw,
        })
    }
}

/// Owns the pipeline, plant and input source, and advances them one fixed
/// period at a time.
pub struct Controller {
    cfg: SystemConfig,
    plant: InstrumentPlant,
    pipeline: InputPipeline,
    estimator: StateEstimator,
    input: Box<dyn InputSource + Send>,
    input_open: bool,
    state: ControllerState,
    active_faults: Vec<FaultCause>,
    fault_log: Vec<FaultRecord>,
    reset_held: f64,
    prev_buttons: u32,
    prev_ticks: [i64; 5],
    stalled_for: [f64; 5],
    stalled_travel: [f64; 5],
}

impl Controller {
    /// Build the simulated hardware and run the start-up checks: bus
    /// probe, driver handshake with limit registration, input open.
    /// Ends in IDLE if all pass, FAULT otherwise.
    pub fn initialize(
        cfg: SystemConfig,
        input: Box<dyn InputSource + Send>,
    ) -> Result<Self, ControlError> {
        cfg.validate()?;
        let plant = InstrumentPlant::new(
            cfg.hardware.clone(),
            cfg.motor,
            cfg.transmission,
            cfg.flexure,
            *cfg.gripper(),
        );
        let pipeline = InputPipeline::new(cfg.pipeline)
            .map_err(|e| crate::config::ConfigError::Invalid(e.to_string()))?;
        let estimator = StateEstimator::new(cfg.clone());
        let estimated = estimator
            .estimate(&[0; 5])
            .expect("zero counts are always a valid configuration");
        let mut ctl = Controller {
            cfg,
            plant,
            pipeline,
            estimator,
            input,
            input_open: false,
            state: ControllerState {
                mode: Mode::Init,
                tick: 0,
                last_command: JointVelocityCommand::ZERO,
                estimated,
            },
            active_faults: Vec::new(),
            fault_log: Vec::new(),
            reset_held: 0.0,
            prev_buttons: 0,
            prev_ticks: [0; 5],
            stalled_for: [0.0; 5],
            stalled_travel: [0.0; 5],
        };
        let event = ctl.run_init_checks();
        ctl.apply(event);
        Ok(ctl)
    }

    fn run_init_checks(&mut self) -> Event {
        let mut causes = Vec::new();
        let present = self.plant.bus.probe();
        if DriverId::ALL.iter().any(|d| !present.contains(d)) {
            causes.push(FaultCause::DriverAbsent);
        }
        if self
            .plant
            .bus
            .initialize(self.cfg.control.speed_limit)
            .is_err()
            && !causes.contains(&FaultCause::DriverAbsent)
        {
            causes.push(FaultCause::BusInitFail);
        }
        if !self.input_open {
            match self.input.open() {
                Ok(()) => self.input_open = true,
                Err(_) => causes.push(FaultCause::InputOpenFail),
            }
        }
        match causes.first() {
            None => Event::InitOk,
            Some(&first) => {
                self.record_faults(causes);
                Event::InitFail(first)
            }
        }
    }

    fn record_faults(&mut self, causes: Vec<FaultCause>) {
        for c in &causes {
            if !self.active_faults.contains(c) {
                self.active_faults.push(*c);
            }
        }
        self.fault_log.push(FaultRecord {
            tick: self.state.tick,
            causes,
        });
    }

    fn apply(&mut self, event: Event) {
        let before = self.state.mode;
        if let Event::FaultRaised(cause) = event {
            self.record_faults(vec![cause]);
        }
        let after = transition(before, event);
        self.state.mode = after;
        if after != Mode::Teleop {
            self.plant.bus.stop_all();
            self.state.last_command = JointVelocityCommand::ZERO;
        }
        if after == Mode::Teleop && before != Mode::Teleop {
            self.pipeline.reset();
        }
        if before == Mode::Fault && after == Mode::Init {
            self.active_faults.clear();
            self.plant
                .bus
                .inject(crate::actuation::FaultInjection::Clear);
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }
    pub fn state(&self) -> &ControllerState {
        &self.state
    }
    pub fn mode(&self) -> Mode {
        self.state.mode
    }
    pub fn plant(&self) -> &InstrumentPlant {
        &self.plant
    }
    pub fn active_faults(&self) -> &[FaultCause] {
        &self.active_faults
    }
    pub fn fault_log(&self) -> &[FaultRecord] {
        &self.fault_log
    }
    pub fn truth(&self) -> JointTruth {
        self.plant.truth()
    }
    pub fn input_finished(&self) -> bool {
        self.input.is_finished()
    }

    /// Advance one loop period.
    ///
    /// In TELEOP the cycle is: read the device, dead-zone and filter, map to
    /// joint rates, apply priority and the antagonistic bending split, read
    /// the encoders and estimate the jaw state, send the speeds. A fault
    /// raised anywhere in the cycle zeroes the output of this same tick.
    pub fn step(&mut self, event: Option<Event>, dt: f64) -> Result<TelemetryRecord, ControlError> {
        let period = self.cfg.control.period();
        if (dt - period).abs() > 1e-9 * period {
            return Err(ControlError::Period {
                got: dt,
                expected: period,
            });
        }

        // a reset lands in INIT for one tick; the checks run on the next
        if self.state.mode == Mode::Init {
            let ev = self.run_init_checks();
            self.apply(ev);
        }

        for f in self
            .cfg
            .hardware
            .inject
            .iter()
            .filter(|f| f.tick == self.state.tick)
        {
            self.plant.bus.inject(f.fault);
        }

        // (1) read axes and buttons
        let input = self.input.poll();
        let mut raised: Option<FaultCause> = None;

        if let Some(ev) = event {
            self.apply(ev);
            if let Event::FaultRaised(c) = ev {
                raised.get_or_insert(c);
            }
        }
        if let Some(req) = input.request {
            match req {
                OperatorRequest::Enable => self.apply(Event::EnablePressed),
                OperatorRequest::Disable => self.apply(Event::DisablePressed),
                // a fault raised this tick is reported before it can be reset
                OperatorRequest::Reset if raised.is_none() => self.apply(Event::ResetSequence),
                OperatorRequest::Reset => {}
                OperatorRequest::Inject(f) => self.plant.bus.inject(f),
            }
        }
        let button = self.cfg.control.enable_button;
        let pressed = input.axes.button(button) && self.prev_buttons & (1 << button) == 0;
        if pressed {
            match self.state.mode {
                Mode::Idle => self.apply(Event::EnablePressed),
                Mode::Teleop => self.apply(Event::DisablePressed),
                _ => {}
            }
        }
        self.prev_buttons = input.axes.buttons;
        if input.link == LinkStatus::Lost && self.state.mode == Mode::Teleop {
            self.apply(Event::FaultRaised(FaultCause::InputLost));
            raised.get_or_insert(FaultCause::InputLost);
        }
        self.track_reset_hold(&input.axes, dt, raised.is_none());

        // (2)-(4) filter, map, prioritize
        let (filtered, mut command) = if self.state.mode == Mode::Teleop {
            let out = self.pipeline.process(&input.axes);
            (out.filtered, out.command)
        } else {
            (NormalizedAxes::default(), JointVelocityCommand::ZERO)
        };

        // (5) encoders and state estimate
        let ticks = self.plant.bus.encoders();
        let truth = self.plant.truth();
        if matches!(self.state.mode, Mode::Idle | Mode::Teleop) {
            if let Err(cause) = self.check_encoders(&ticks, dt) {
                self.apply(Event::FaultRaised(cause));
                raised.get_or_insert(cause);
            }
        }
        if let Ok(est) = self.estimator.estimate(&ticks) {
            self.state.estimated = est;
        }
        self.prev_ticks = ticks;

        if !command.is_finite() && self.state.mode == Mode::Teleop {
            self.apply(Event::FaultRaised(FaultCause::CommandNan));
            raised.get_or_insert(FaultCause::CommandNan);
        }

        // (6) send speeds
        if self.state.mode == Mode::Teleop {
            command = self.apply_soft_limits(command, dt);
            if let Err(cause) = self.send(&command) {
                self.apply(Event::FaultRaised(cause));
                raised.get_or_insert(cause);
            }
        }
        if self.state.mode != Mode::Teleop {
            command = JointVelocityCommand::ZERO;
            self.plant.bus.stop_all();
        }
        self.state.last_command = command;

        let record = TelemetryRecord {
            tick: self.state.tick,
            mode: self.state.mode,
            event,
            request: input.request,
            link: input.link,
            fault: raised,
            raw: input.axes,
            filtered,
            command,
            estimated: (&self.state.estimated).into(),
            truth,
        };
        self.plant.step(dt);
        self.state.tick += 1;
        Ok(record)
    }

    fn track_reset_hold(&mut self, axes: &crate::input::RawAxes, dt: f64, may_reset: bool) {
        if self.state.mode == Mode::Fault && axes.button(0) && axes.button(1) {
            self.reset_held += dt;
            if may_reset && self.reset_held + 1e-9 >= self.cfg.control.reset_hold_s {
                self.reset_held = 0.0;
                self.apply(Event::ResetSequence);
            }
        } else {
            self.reset_held = 0.0;
        }
    }

    fn check_encoders(&mut self, ticks: &[i64; 5], dt: f64) -> Result<(), FaultCause> {
        let m = &self.cfg.motor;
        let full_step = m.omega_max * dt / 360.0 * m.ticks_per_rev as f64;
        let bound = self.cfg.control.encoder_plausibility * full_step;
        let mut result = Ok(());
        for id in MotorId::ALL {
            let i = id.index();
            let delta = ticks[i] - self.prev_ticks[i];
            if delta.abs() as f64 > bound {
                result = Err(FaultCause::EncoderImplausible);
            }
            // counts the commanded speed should have produced since the last change
            let expected =
                self.plant.bus.motor(id).target().abs() * dt / 360.0 * m.ticks_per_rev as f64;
            if delta == 0 && expected > 0.0 {
                self.stalled_for[i] += dt;
                self.stalled_travel[i] += expected;
            } else {
                self.stalled_for[i] = 0.0;
                self.stalled_travel[i] = 0.0;
            }
            if self.stalled_for[i] + 1e-9 >= self.cfg.control.stall_timeout_s
                && self.stalled_travel[i] >= STALL_MIN_COUNTS
            {
                result = Err(FaultCause::EncoderImplausible);
            }
        }
        result
    }

    /// Zero any joint rate that would carry q1 or q3 past its range within
    /// one period.
    fn apply_soft_limits(&self, mut cmd: JointVelocityCommand, dt: f64) -> JointVelocityCommand {
        let est = &self.state.estimated;
        let (s_lo, s_hi) = gripper::valid_displacement_range(self.cfg.gripper());
        let blocked = |q: f64, rate: f64, lo: f64, hi: f64| {
            let next = q + rate * dt;
            (rate > 0.0 && next >= hi) || (rate < 0.0 && next <= lo)
        };
        if blocked(est.q1, cmd.q1dot, 0.0, self.cfg.flexure.max_bend()) {
            cmd.q1dot = 0.0;
        }
        if blocked(est.q3, cmd.q3dot, s_lo, s_hi) {
            cmd.q3dot = 0.0;
        }
        cmd
    }

    fn send(&mut self, cmd: &JointVelocityCommand) -> Result<(), FaultCause> {
        let tendons = flexure::antagonistic_speeds(
            &self.cfg.flexure,
            self.state.estimated.q1,
            cmd.q1dot,
            self.cfg.control.tension_gain,
        )
        .map_err(|_| FaultCause::CommandNan)?;
        let rates = [
            (MotorId::Flexion, tendons.flex),
            (MotorId::Extension, tendons.ext),
            (MotorId::Gripper, cmd.q3dot),
            (MotorId::Head, cmd.q2dot),
            (MotorId::Shaft, cmd.q4dot),
        ];
        for (motor, rate) in rates {
            let speed = self.plant.speed_for_rate(motor, rate);
            match self
                .plant
                .bus
                .send_speed(MotorBusCommand::for_motor(motor, speed))
            {
                Ok(_) => {}
                Err(BusError::Timeout(_)) => return Err(FaultCause::BusTimeout),
                Err(_) => return Err(FaultCause::BusInitFail),
            }
        }
        Ok(())
    }

    /// Current view for readers outside the loop.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            state: self.state,
            truth: self.plant.truth(),
            faults: self.active_faults.clone(),
        }
    }
}

/// Immutable per-tick view published to the console bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: ControllerState,
    pub truth: JointTruth,
    pub faults: Vec<FaultCause>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::FaultInjection;
    use crate::input::{InputSample, RawAxes, ReplaySource};

    fn controller(samples: Vec<InputSample>) -> Controller {
        Controller::initialize(
            SystemConfig::default(),
            Box::new(ReplaySource::from_samples(samples)),
        )
        .unwrap()
    }

    fn sample(tick: u64, ry: i32, request: Option<OperatorRequest>) -> InputSample {
        InputSample {
            tick,
            axes: RawAxes {
                ry,
                ..RawAxes::default()
            },
            request,
            link: LinkStatus::Idle,
        }
    }

    #[test]
    fn transition_table() {
        assert_eq!(transition(Mode::Idle, Event::EnablePressed), Mode::Teleop);
        assert_eq!(transition(Mode::Teleop, Event::DisablePressed), Mode::Idle);
        assert_eq!(transition(Mode::Fault, Event::ResetSequence), Mode::Init);
        assert_eq!(transition(Mode::Idle, Event::ResetSequence), Mode::Idle);
        for m in Mode::ALL {
            assert_eq!(
                transition(m, Event::FaultRaised(FaultCause::BusTimeout)),
                Mode::Fault
            );
        }
    }

    #[test]
    fn initialize_reaches_idle() {
        let c = controller(vec![]);
        assert_eq!(c.mode(), Mode::Idle);
        assert!(c.state().last_command.is_zero());
        assert!(c.fault_log().is_empty());
    }

    #[test]
    fn missing_driver_faults_at_start() {
        let mut cfg = SystemConfig::default();
        cfg.hardware.absent_drivers = vec![DriverId::B];
        let c = Controller::initialize(cfg, Box::new(ReplaySource::from_samples(vec![]))).unwrap();
        assert_eq!(c.mode(), Mode::Fault);
        assert_eq!(c.fault_log()[0].causes, vec![FaultCause::DriverAbsent]);
    }

    #[test]
    fn missing_input_faults_at_start() {
        let c = Controller::initialize(
            SystemConfig::default(),
            Box::new(ReplaySource::from_path("/does/not/exist.csv")),
        )
        .unwrap();
        assert_eq!(c.mode(), Mode::Fault);
        assert_eq!(c.active_faults(), &[FaultCause::InputOpenFail]);
    }

    #[test]
    fn wrong_period_is_rejected() {
        let mut c = controller(vec![]);
        assert!(matches!(
            c.step(None, 0.02),
            Err(ControlError::Period { .. })
        ));
    }

    #[test]
    fn enable_then_bend() {
        let mut samples = vec![sample(0, 0, Some(OperatorRequest::Enable))];
        samples.extend((1..200).map(|t| sample(t, 175, None)));
        let mut c = controller(samples);
        let mut last = None;
        for _ in 0..200 {
            last = Some(c.step(None, 0.01).unwrap());
        }
        let rec = last.unwrap();
        assert_eq!(rec.mode, Mode::Teleop);
        assert!(rec.command.q1dot > 0.0);
        assert!(c.truth().q1 > 10.0, "q1 = {}", c.truth().q1);
    }

    #[test]
    fn bus_timeout_faults_same_tick() {
        let mut samples = vec![sample(0, 0, Some(OperatorRequest::Enable))];
        samples.extend((1..50).map(|t| sample(t, 350, None)));
        samples.push(sample(
            50,
            350,
            Some(OperatorRequest::Inject(FaultInjection::BusTimeout)),
        ));
        samples.extend((51..60).map(|t| sample(t, 350, None)));
        let mut c = controller(samples);
        for t in 0..60 {
            let rec = c.step(None, 0.01).unwrap();
            if t < 50 {
                assert_eq!(rec.mode, Mode::Teleop);
            } else {
                assert_eq!(rec.mode, Mode::Fault);
                assert!(rec.command.is_zero());
                if t == 50 {
                    assert_eq!(rec.fault, Some(FaultCause::BusTimeout));
                }
            }
        }
        for m in MotorId::ALL {
            assert_eq!(c.plant().bus.motor(m).target(), 0.0);
        }
    }

    #[test]
    fn reset_goes_through_init_back_to_idle() {
        let mut c = controller(vec![]);
        c.step(Some(Event::FaultRaised(FaultCause::External)), 0.01)
            .unwrap();
        assert_eq!(c.mode(), Mode::Fault);
        let r = c.step(Some(Event::ResetSequence), 0.01).unwrap();
        assert_eq!(r.mode, Mode::Init);
        let r = c.step(None, 0.01).unwrap();
        assert_eq!(r.mode, Mode::Idle);
        assert!(c.active_faults().is_empty());
    }

    #[test]
    fn held_buttons_reset_after_two_seconds() {
        let both = RawAxes {
            buttons: 0b11,
            ..RawAxes::default()
        };
        let samples = (0..300)
            .map(|t| InputSample {
                tick: t,
                axes: both,
                request: None,
                link: LinkStatus::Idle,
            })
            .collect();
        let mut c = controller(samples);
        c.step(Some(Event::FaultRaised(FaultCause::External)), 0.01)
            .unwrap();
        let mut reset_at = None;
        for _ in 0..250 {
            let r = c.step(None, 0.01).unwrap();
            if r.mode == Mode::Init {
                reset_at = Some(r.tick);
                break;
            }
        }
        // the tick that raised the fault is the first held tick
        assert_eq!(reset_at, Some(199));
    }

    #[test]
    fn encoder_jump_is_implausible() {
        let mut c = controller(vec![sample(0, 0, Some(OperatorRequest::Enable))]);
        c.step(None, 0.01).unwrap();
        c.plant.bus.inject(FaultInjection::EncoderJump {
            motor: MotorId::Head,
            ticks: 100,
        });
        let r = c.step(None, 0.01).unwrap();
        assert_eq!(r.fault, Some(FaultCause::EncoderImplausible));
        assert_eq!(r.mode, Mode::Fault);
    }

    #[test]
    fn scheduled_fault_from_config() {
        let mut cfg = SystemConfig::default();
        cfg.hardware.inject = vec![crate::actuation::ScheduledFault {
            tick: 5,
            fault: FaultInjection::EncoderJump {
                motor: MotorId::Shaft,
                ticks: 500,
            },
        }];
        let mut c =
            Controller::initialize(cfg, Box::new(ReplaySource::from_samples(vec![]))).unwrap();
        let faults: Vec<_> = (0..8).map(|_| c.step(None, 0.01).unwrap().fault).collect();
        assert_eq!(faults[..5], [None; 5]);
        assert_eq!(faults[5], Some(FaultCause::EncoderImplausible));
    }

    #[test]
    fn stuck_encoder_is_detected() {
        let mut samples = vec![InputSample {
            tick: 0,
            axes: RawAxes {
                rz: 350,
                ..RawAxes::default()
            },
            request: Some(OperatorRequest::Enable),
            link: LinkStatus::Idle,
        }];
        samples.push(InputSample {
            tick: 1,
            axes: RawAxes {
                rz: 350,
                ..RawAxes::default()
            },
            request: Some(OperatorRequest::Inject(FaultInjection::StuckEncoder {
                motor: MotorId::Head,
            })),
            link: LinkStatus::Idle,
        });
        samples.extend((2..200).map(|t| InputSample {
            tick: t,
            axes: RawAxes {
                rz: 350,
                ..RawAxes::default()
            },
            request: None,
            link: LinkStatus::Idle,
        }));
        let mut c = controller(samples);
        let mut faulted = None;
        for _ in 0..200 {
            let r = c.step(None, 0.01).unwrap();
            if r.fault.is_some() {
                faulted = r.fault;
                break;
            }
        }
        assert_eq!(faulted, Some(FaultCause::EncoderImplausible));
    }

    #[test]
    fn estimator_examples() {
        let est = StateEstimator::new(SystemConfig::default());
        let zero = est.estimate(&[0; 5]).unwrap();
        assert_eq!((zero.q1, zero.q2, zero.q3, zero.q4), (0.0, 0.0, 0.0, 0.0));
        assert!(zero.jaw.total_angle.abs() < 0.1);

        assert!((est.mm_per_tick() - 0.002).abs() < 1e-15);
        let mut ticks = [0; 5];
        ticks[MotorId::Gripper.index()] = 1000;
        let s = est.estimate(&ticks).unwrap();
        assert!((s.q3 - 2.0).abs() < 1e-12);
        assert!((s.jaw.total_angle - 37.9).abs() < 0.05);

        let mut ticks = [0; 5];
        ticks[MotorId::Head.index()] = 1500; // 450 deg at 1200 ticks/rev, 1:1
        assert!((est.estimate(&ticks).unwrap().q2 - 90.0).abs() < 1e-9);

        let mut ticks = [0; 5];
        ticks[MotorId::Gripper.index()] = 10_000;
        assert_eq!(est.estimate(&ticks), Err(FaultCause::EncoderImplausible));
    }

    #[test]
    fn text_codecs_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        for e in Event::KINDS {
            assert_eq!(e.to_string().parse::<Event>().unwrap(), e);
        }
        assert!("FAULT_RAISED".parse::<Event>().is_err());
    }
}
