//! Messages exchanged with the operator console.
//!
//! Each message is one JSON object in its own WebSocket text frame, with
//! the kind in a `type` field. Field names are camelCase. Axis values are
//! normalized to `[-1, 1]`; angles are degrees, lengths millimetres.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::FaultInjection;
use crate::control::{FaultCause, Mode, Snapshot};
use crate::input::{OperatorRequest, RawAxes};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AxesMessage {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    /// Button bitmask, bit 0 is the enable button.
    #[serde(default)]
    pub buttons: u32,
}

impl AxesMessage {
    pub fn values(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.rx, self.ry, self.rz]
    }

    pub fn to_raw(&self, axis_range: f64) -> RawAxes {
        RawAxes::from_normalized(self.values(), self.buttons, axis_range)
    }
}

/// Console to backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum ClientMessage {
    Hello {
        #[serde(default)]
        client: String,
        #[serde(default = "default_version")]
        version: u32,
    },
    Axes(AxesMessage),
    Enable,
    Disable,
    Reset,
    #[serde(rename_all = "camelCase")]
    FaultInject {
        fault: FaultInjection,
    },
}

fn default_version() -> u32 {
    PROTOCOL_VERSION
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "hello",
            ClientMessage::Axes(_) => "axes",
            ClientMessage::Enable => "enable",
            ClientMessage::Disable => "disable",
            ClientMessage::Reset => "reset",
            ClientMessage::FaultInject { .. } => "faultInject",
        }
    }

    /// The discrete request this message maps to, if any.
    pub fn request(&self) -> Option<OperatorRequest> {
        match self {
            ClientMessage::Enable => Some(OperatorRequest::Enable),
            ClientMessage::Disable => Some(OperatorRequest::Disable),
            ClientMessage::Reset => Some(OperatorRequest::Reset),
            ClientMessage::FaultInject { fault } => Some(OperatorRequest::Inject(*fault)),
            ClientMessage::Hello { .. } | ClientMessage::Axes(_) => None,
        }
    }
}

/// Per-tick state published to the console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateMessage {
    pub tick: u64,
    pub mode: Mode,
    /// deg
    pub q1: f64,
    /// deg
    pub q2: f64,
    /// mm
    pub q3: f64,
    /// deg
    pub q4: f64,
    /// deg
    pub theta_total: f64,
    /// mm
    pub tip_width: f64,
    pub faults: Vec<FaultCause>,
}

impl From<&Snapshot> for StateMessage {
    fn from(s: &Snapshot) -> Self {
        let e = &s.state.estimated;
        StateMessage {
            tick: s.state.tick,
            mode: s.state.mode,
            q1: e.q1,
            q2: e.q2,
            q3: e.q3,
            q4: e.q4,
            theta_total: e.jaw.total_angle,
            tip_width: e.jaw.tip_width,
            faults: s.faults.clone(),
        }
    }
}

/// Backend to console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum ServerMessage {
    #[serde(rename_all = "camelCase")]
    Hello {
        server: String,
        version: u32,
        loop_rate_hz: f64,
        snapshot_rate_hz: f64,
        fault_inject_enabled: bool,
    },
    State(StateMessage),
    /// The previous client message was not applied; the session stays up.
    Warning {
        message: String,
    },
    /// Sent before closing a connection that cannot be served.
    Rejected {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("binary frames are not accepted")]
    Binary,
    #[error("axis {axis} = {value} is outside [-1, 1]")]
    AxisRange { axis: &'static str, value: f64 },
}

const AXIS_NAMES: [&str; 6] = ["tx", "ty", "tz", "rx", "ry", "rz"];

/// Parse and check one client frame.
pub fn decode_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    let msg: ClientMessage =
        serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if let ClientMessage::Axes(a) = &msg {
        for (axis, value) in AXIS_NAMES.into_iter().zip(a.values()) {
            if !value.is_finite() || value.abs() > 1.0 {
                return Err(ProtocolError::AxisRange { axis, value });
            }
        }
    }
    Ok(msg)
}

pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("protocol messages always serialize")
}
