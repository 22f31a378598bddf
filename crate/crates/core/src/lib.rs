//! Digital twin and teleoperation stack for a 4-DOF flexible laparoscopic
//! instrument: scissor-linkage gripper kinematics and statics, notched
//! flexure bending, the operator input pipeline, a simulated actuation
//! unit, the controller state machine, and the jaw-angle validation
//! harness.

pub mod actuation;
pub mod config;
pub mod control;
pub mod error;
pub mod flexure;
pub mod gripper;
pub mod input;
pub mod protocol;
pub mod scenario;
pub mod telemetry;
pub mod validation;

pub use config::SystemConfig;
pub use control::{Controller, Event, FaultCause, Mode};
pub use error::{ModelError, ModelResult};
pub use gripper::GripperGeometry;
