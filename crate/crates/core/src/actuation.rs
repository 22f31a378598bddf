//! Simulated actuation layer: a typed motor bus with ack/timeout semantics,
//! first-order gear-motors with quadrature encoders, and the four-joint
//! instrument plant driven by them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flexure::{self, FlexureGeometry};
use crate::gripper::{self, GripperGeometry};

/// Full-scale speed command accepted by a driver channel.
pub const SPEED_FULL_SCALE: i32 = 800;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DriverId {
    A,
    B,
    C,
}

impl DriverId {
    pub const ALL: [DriverId; 3] = [DriverId::A, DriverId::B, DriverId::C];
}

/// Motors in the instrument's actuation unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotorId {
    Flexion,
    Extension,
    Gripper,
    Head,
    Shaft,
}

impl MotorId {
    pub const ALL: [MotorId; 5] = [
        MotorId::Flexion,
        MotorId::Extension,
        MotorId::Gripper,
        MotorId::Head,
        MotorId::Shaft,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Driver channel the motor is wired to.
    pub fn channel(self) -> (DriverId, u8) {
        match self {
            MotorId::Flexion => (DriverId::A, 0),
            MotorId::Extension => (DriverId::A, 1),
            MotorId::Gripper => (DriverId::B, 0),
            MotorId::Head => (DriverId::B, 1),
            MotorId::Shaft => (DriverId::C, 0),
        }
    }

    pub fn on_channel(driver: DriverId, channel: u8) -> Option<MotorId> {
        MotorId::ALL
            .into_iter()
            .find(|m| m.channel() == (driver, channel))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorBusCommand {
    pub driver: DriverId,
    pub channel: u8,
    pub speed: i32,
}

impl MotorBusCommand {
    pub fn for_motor(motor: MotorId, speed: i32) -> Self {
        let (driver, channel) = motor.channel();
        MotorBusCommand {
            driver,
            channel,
            speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub driver: DriverId,
    pub channel: u8,
    /// Speed after saturation.
    pub applied: i32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BusError {
    #[error("motor bus is not initialized")]
    NotInitialized,
    #[error("driver {0:?} did not answer the probe")]
    DriverAbsent(DriverId),
    #[error("driver {0:?} has no channel {1}")]
    UnknownChannel(DriverId, u8),
    #[error("timeout talking to driver {0:?}")]
    Timeout(DriverId),
}

/// Faults that can be switched on in the simulated hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FaultInjection {
    /// The next bus transaction times out.
    BusTimeout,
    /// The encoder of `motor` stops counting.
    StuckEncoder { motor: MotorId },
    /// The encoder of `motor` skips `ticks` counts at once.
    EncoderJump { motor: MotorId, ticks: i64 },
    /// Clears every injected fault.
    Clear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorParams {
    /// Output-shaft speed at full command, deg/s.
    pub omega_max: f64,
    /// First-order time constant, s.
    pub tau: f64,
    /// Encoder counts per output-shaft revolution.
    pub ticks_per_rev: u32,
}

impl Default for MotorParams {
    fn default() -> Self {
        // 12 CPR magnetic encoder behind a 100:1 gearbox
        MotorParams {
            omega_max: 360.0,
            tau: 0.030,
            ticks_per_rev: 1200,
        }
    }
}

/// Mechanical conversion from motor output shafts to joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Transmission {
    /// Gripper wire travel per motor revolution, mm.
    pub gripper_mm_per_rev: f64,
    /// Bending tendon travel per motor revolution, mm.
    pub tendon_mm_per_rev: f64,
    /// Distal head rotation per motor revolution, deg.
    pub head_deg_per_rev: f64,
    /// Shaft rotation per motor revolution, deg.
    pub shaft_deg_per_rev: f64,
}

impl Default for Transmission {
    fn default() -> Self {
        Transmission {
            gripper_mm_per_rev: 2.4,
            tendon_mm_per_rev: 2.4,
            head_deg_per_rev: 360.0,
            shaft_deg_per_rev: 360.0,
        }
    }
}

impl Transmission {
    /// Joint units per motor output degree.
    pub fn joint_per_motor_deg(&self, motor: MotorId) -> f64 {
        match motor {
            MotorId::Flexion | MotorId::Extension => self.tendon_mm_per_rev / 360.0,
            MotorId::Gripper => self.gripper_mm_per_rev / 360.0,
            MotorId::Head => self.head_deg_per_rev / 360.0,
            MotorId::Shaft => self.shaft_deg_per_rev / 360.0,
        }
    }
}

/// One gear-motor with encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Motor {
    params: MotorParams,
    target: f64,
    omega: f64,
    /// Output shaft angle, deg.
    angle: f64,
    /// Mechanical end stops on the output shaft, deg.
    stops: (f64, f64),
    ticks: i64,
    tick_offset: i64,
    stuck: bool,
}

impl Motor {
    pub fn new(params: MotorParams) -> Self {
        Motor {
            params,
            target: 0.0,
            omega: 0.0,
            angle: 0.0,
            stops: (f64::NEG_INFINITY, f64::INFINITY),
            ticks: 0,
            tick_offset: 0,
            stuck: false,
        }
    }

    pub fn with_stops(mut self, min_deg: f64, max_deg: f64) -> Self {
        self.stops = (min_deg, max_deg);
        self
    }

    pub fn params(&self) -> &MotorParams {
        &self.params
    }
    pub fn target(&self) -> f64 {
        self.target
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn angle(&self) -> f64 {
        self.angle
    }
    pub fn ticks(&self) -> i64 {
        self.ticks
    }

    /// Target output speed from a bus command, saturated to ±full scale.
    pub fn command(&mut self, speed: i32) -> i32 {
        let applied = speed.clamp(-SPEED_FULL_SCALE, SPEED_FULL_SCALE);
        self.target = applied as f64 / SPEED_FULL_SCALE as f64 * self.params.omega_max;
        applied
    }

    /// Advance by `dt` seconds with the exact solution of the first-order
    /// lag under a constant target:
    /// `ω(t) = ω* + (ω0 - ω*) e^(-t/τ)`, integrated in closed form for the
    /// shaft angle.
    pub fn step(&mut self, dt: f64) {
        let decay = (-dt / self.params.tau).exp();
        let delta = self.omega - self.target;
        let travel = self.target * dt + delta * self.params.tau * (1.0 - decay);
        self.omega = self.target + delta * decay;
        self.angle += travel;
        let (lo, hi) = self.stops;
        if self.angle <= lo {
            self.angle = lo;
            self.omega = self.omega.max(0.0);
        } else if self.angle >= hi {
            self.angle = hi;
            self.omega = self.omega.min(0.0);
        }
        if !self.stuck {
            let counted = (self.angle / 360.0 * self.params.ticks_per_rev as f64).floor() as i64;
            self.ticks = counted + self.tick_offset;
        }
    }

    fn jump(&mut self, ticks: i64) {
        self.tick_offset += ticks;
        self.ticks += ticks;
    }

    fn set_stuck(&mut self, stuck: bool) {
        if self.stuck && !stuck {
            // re-sync so the encoder resumes from where it froze
            let counted = (self.angle / 360.0 * self.params.ticks_per_rev as f64).floor() as i64;
            self.tick_offset = self.ticks - counted;
        }
        self.stuck = stuck;
    }
}

/// Which drivers answer on the simulated bus.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimHardware {
    pub absent_drivers: Vec<DriverId>,
    /// Faults switched on at fixed loop ticks.
    pub inject: Vec<ScheduledFault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledFault {
    pub tick: u64,
    pub fault: FaultInjection,
}

/// Typed stand-in for the motor driver bus.
#[derive(Debug, Clone)]
pub struct MotorBus {
    hardware: SimHardware,
    initialized: bool,
    pending_timeout: bool,
    speed_limit: i32,
    motors: Vec<Motor>,
}

impl MotorBus {
    pub fn new(hardware: SimHardware, motors: Vec<Motor>) -> Self {
        assert_eq!(motors.len(), MotorId::ALL.len());
        MotorBus {
            hardware,
            initialized: false,
            pending_timeout: false,
            speed_limit: SPEED_FULL_SCALE,
            motors,
        }
    }

    /// Drivers that answer a probe.
    pub fn probe(&self) -> Vec<DriverId> {
        DriverId::ALL
            .into_iter()
            .filter(|d| !self.hardware.absent_drivers.contains(d))
            .collect()
    }

    /// Handshake with every driver and register the speed limit.
    pub fn initialize(&mut self, speed_limit: i32) -> Result<(), BusError> {
        if let Some(&d) = self.hardware.absent_drivers.first() {
            self.initialized = false;
            return Err(BusError::DriverAbsent(d));
        }
        self.speed_limit = speed_limit.clamp(0, SPEED_FULL_SCALE);
        self.initialized = true;
        self.stop_all();
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn send_speed(&mut self, cmd: MotorBusCommand) -> Result<Ack, BusError> {
        if !self.initialized {
            return Err(BusError::NotInitialized);
        }
        if self.hardware.absent_drivers.contains(&cmd.driver) {
            return Err(BusError::DriverAbsent(cmd.driver));
        }
        if cmd.channel > 1 {
            return Err(BusError::UnknownChannel(cmd.driver, cmd.channel));
        }
        if self.pending_timeout {
            self.pending_timeout = false;
            return Err(BusError::Timeout(cmd.driver));
        }
        let speed = cmd.speed.clamp(-self.speed_limit, self.speed_limit);
        // an unwired channel accepts the command and drives nothing
        let applied = match MotorId::on_channel(cmd.driver, cmd.channel) {
            Some(m) => self.motors[m.index()].command(speed),
            None => speed,
        };
        Ok(Ack {
            driver: cmd.driver,
            channel: cmd.channel,
            applied,
        })
    }

    /// Drops every motor target to zero without a bus transaction, as the
    /// drivers do when their motors are disabled.
    pub fn stop_all(&mut self) {
        for m in &mut self.motors {
            m.command(0);
        }
    }

    pub fn inject(&mut self, fault: FaultInjection) {
        match fault {
            FaultInjection::BusTimeout => self.pending_timeout = true,
            FaultInjection::StuckEncoder { motor } => self.motors[motor.index()].set_stuck(true),
            FaultInjection::EncoderJump { motor, ticks } => self.motors[motor.index()].jump(ticks),
            FaultInjection::Clear => {
                self.pending_timeout = false;
                for m in &mut self.motors {
                    m.set_stuck(false);
                }
            }
        }
    }

    pub fn step_motors(&mut self, dt: f64) -> [i64; 5] {
        assert!(dt > 0.0, "time step must be positive");
        for m in &mut self.motors {
            m.step(dt);
        }
        self.encoders()
    }

    pub fn encoders(&self) -> [i64; 5] {
        let mut out = [0; 5];
        for (o, m) in out.iter_mut().zip(&self.motors) {
            *o = m.ticks();
        }
        out
    }

    pub fn motor(&self, id: MotorId) -> &Motor {
        &self.motors[id.index()]
    }
}

/// Ground-truth joint values, as opposed to what the encoders report.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointTruth {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

/// The instrument as seen from the actuation unit.
#[derive(Debug, Clone)]
pub struct InstrumentPlant {
    pub bus: MotorBus,
    transmission: Transmission,
    flexure: FlexureGeometry,
    gripper: GripperGeometry,
}

impl InstrumentPlant {
    pub fn new(
        hardware: SimHardware,
        motor: MotorParams,
        transmission: Transmission,
        flexure: FlexureGeometry,
        gripper: GripperGeometry,
    ) -> Self {
        let deg = |joint: f64, m: MotorId| joint / transmission.joint_per_motor_deg(m);
        let max_tendon = deg(flexure.max_tendon(), MotorId::Flexion);
        let (_, slider_max) = gripper::valid_displacement_range(&gripper);
        let motors = MotorId::ALL
            .into_iter()
            .map(|id| {
                let m = Motor::new(motor);
                match id {
                    MotorId::Flexion => m.with_stops(0.0, max_tendon),
                    MotorId::Gripper => m.with_stops(0.0, deg(slider_max, MotorId::Gripper)),
                    _ => m,
                }
            })
            .collect();
        InstrumentPlant {
            bus: MotorBus::new(hardware, motors),
            transmission,
            flexure,
            gripper,
        }
    }

    pub fn transmission(&self) -> &Transmission {
        &self.transmission
    }

    /// Motor speed command that realizes a joint-space rate on `motor`.
    pub fn speed_for_rate(&self, motor: MotorId, joint_rate: f64) -> i32 {
        let motor_dps = joint_rate / self.transmission.joint_per_motor_deg(motor);
        let omega_max = self.bus.motor(motor).params().omega_max;
        let scaled = (motor_dps / omega_max * SPEED_FULL_SCALE as f64).round();
        scaled.clamp(-(SPEED_FULL_SCALE as f64), SPEED_FULL_SCALE as f64) as i32
    }

    pub fn step(&mut self, dt: f64) -> [i64; 5] {
        self.bus.step_motors(dt)
    }

    fn joint(&self, motor: MotorId) -> f64 {
        self.bus.motor(motor).angle() * self.transmission.joint_per_motor_deg(motor)
    }

    pub fn truth(&self) -> JointTruth {
        let tendon = self
            .joint(MotorId::Flexion)
            .clamp(0.0, self.flexure.max_tendon());
        let q1 = flexure::bend_from_tendon(&self.flexure, tendon).unwrap_or(0.0);
        JointTruth {
            q1,
            q2: wrap_degrees(self.joint(MotorId::Head)),
            q3: self.joint(MotorId::Gripper),
            q4: wrap_degrees(self.joint(MotorId::Shaft)),
        }
    }

    /// Jaw state at the true slider position.
    pub fn jaw_truth(&self) -> Option<gripper::GripperState> {
        gripper::jaw_state(&self.gripper, self.joint(MotorId::Gripper)).ok()
    }

    /// Extension tendon pay-out beyond what the current bend requires, mm.
    /// Negative means the extension side is being stretched.
    pub fn extension_slack(&self) -> f64 {
        let required = flexure::tendon_from_bend(&self.flexure, self.truth().q1)
            .map(|s| s.ext_tendon)
            .unwrap_or(0.0);
        -self.joint(MotorId::Extension) - required
    }
}

/// Wrap an angle into `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}
