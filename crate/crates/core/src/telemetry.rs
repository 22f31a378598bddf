//! Per-tick telemetry records and their CSV trace format.
//!
//! Every trace file is UTF-8 with LF line endings, a header row and a units
//! row. Floats are written in Rust's shortest round-trip form, so reading a
//! trace and writing it back reproduces the file byte for byte.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuation::{FaultInjection, JointTruth, MotorId};
use crate::config::SystemConfig;
use crate::control::{ControlError, Controller, Event, FaultCause, InstrumentState, Mode};
use crate::input::{
    InputError, InputSample, JointVelocityCommand, LinkStatus, NormalizedAxes, OperatorRequest,
    RawAxes, ReplaySource,
};

/// Estimated state as carried in telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub theta_total: f64,
    pub tip_width: f64,
}

impl From<&InstrumentState> for EstimateSummary {
    fn from(s: &InstrumentState) -> Self {
        EstimateSummary {
            q1: s.q1,
            q2: s.q2,
            q3: s.q3,
            q4: s.q4,
            theta_total: s.jaw.total_angle,
            tip_width: s.jaw.tip_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub mode: Mode,
    /// Event handed to the loop from outside, if any.
    pub event: Option<Event>,
    /// Operator request read from the input source this tick.
    pub request: Option<OperatorRequest>,
    pub link: LinkStatus,
    /// First fault raised during this tick.
    pub fault: Option<FaultCause>,
    pub raw: RawAxes,
    pub filtered: NormalizedAxes,
    pub command: JointVelocityCommand,
    pub estimated: EstimateSummary,
    pub truth: JointTruth,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Control(#[from] ControlError),
}

pub const TELEMETRY_HEADER: [&str; 33] = [
    "tick",
    "mode",
    "event",
    "request",
    "link",
    "fault",
    "raw_tx",
    "raw_ty",
    "raw_tz",
    "raw_rx",
    "raw_ry",
    "raw_rz",
    "buttons",
    "f_tx",
    "f_ty",
    "f_tz",
    "f_rx",
    "f_ry",
    "f_rz",
    "cmd_q1dot",
    "cmd_q2dot",
    "cmd_q3dot",
    "cmd_q4dot",
    "est_q1",
    "est_q2",
    "est_q3",
    "est_q4",
    "est_theta_total",
    "est_tip_width",
    "true_q1",
    "true_q2",
    "true_q3",
    "true_q4",
];

pub const TELEMETRY_UNITS: [&str; 33] = [
    "count", "-", "-", "-", "-", "-", "count", "count", "count", "count", "count", "count",
    "bitset", "1", "1", "1", "1", "1", "1", "deg/s", "deg/s", "mm/s", "deg/s", "deg", "deg", "mm",
    "deg", "deg", "mm", "deg", "deg", "mm", "deg",
];

pub const INPUT_HEADER: [&str; 10] = [
    "tick", "tx", "ty", "tz", "rx", "ry", "rz", "buttons", "request", "link",
];

pub const INPUT_UNITS: [&str; 10] = [
    "count", "count", "count", "count", "count", "count", "count", "bitset", "-", "-",
];

pub fn format_request(r: &OperatorRequest) -> String {
    match r {
        OperatorRequest::Enable => "enable".into(),
        OperatorRequest::Disable => "disable".into(),
        OperatorRequest::Reset => "reset".into(),
        OperatorRequest::Inject(f) => match f {
            FaultInjection::BusTimeout => "inject:bus_timeout".into(),
            FaultInjection::StuckEncoder { motor } => {
                format!("inject:stuck_encoder:{}", motor_name(*motor))
            }
            FaultInjection::EncoderJump { motor, ticks } => {
                format!("inject:encoder_jump:{}:{ticks}", motor_name(*motor))
            }
            FaultInjection::Clear => "inject:clear".into(),
        },
    }
}

fn motor_name(m: MotorId) -> &'static str {
    match m {
        MotorId::Flexion => "flexion",
        MotorId::Extension => "extension",
        MotorId::Gripper => "gripper",
        MotorId::Head => "head",
        MotorId::Shaft => "shaft",
    }
}

fn parse_motor(s: &str) -> Result<MotorId, String> {
    MotorId::ALL
        .into_iter()
        .find(|m| motor_name(*m) == s)
        .ok_or_else(|| format!("unknown motor {s:?}"))
}

pub fn parse_request(s: &str) -> Result<OperatorRequest, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let inject = |f| Ok(OperatorRequest::Inject(f));
    match parts.as_slice() {
        ["enable"] => Ok(OperatorRequest::Enable),
        ["disable"] => Ok(OperatorRequest::Disable),
        ["reset"] => Ok(OperatorRequest::Reset),
        ["inject", "bus_timeout"] => inject(FaultInjection::BusTimeout),
        ["inject", "clear"] => inject(FaultInjection::Clear),
        ["inject", "stuck_encoder", m] => inject(FaultInjection::StuckEncoder {
            motor: parse_motor(m)?,
        }),
        ["inject", "encoder_jump", m, t] => inject(FaultInjection::EncoderJump {
            motor: parse_motor(m)?,
            ticks: t
                .parse()
                .map_err(|e| format!("bad tick count {t:?}: {e}"))?,
        }),
        _ => Err(format!("unknown request {s:?}")),
    }
}

fn link_name(l: LinkStatus) -> &'static str {
    match l {
        LinkStatus::Idle => "idle",
        LinkStatus::Connected => "connected",
        LinkStatus::Lost => "lost",
    }
}

fn parse_link(s: &str) -> Result<LinkStatus, String> {
    match s {
        "" | "idle" => Ok(LinkStatus::Idle),
        "connected" => Ok(LinkStatus::Connected),
        "lost" => Ok(LinkStatus::Lost),
        _ => Err(format!("unknown link status {s:?}")),
    }
}

fn opt<T>(v: &Option<T>, f: impl Fn(&T) -> String) -> String {
    v.as_ref().map(f).unwrap_or_default()
}

impl TelemetryRecord {
    pub fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.tick.to_string(),
            self.mode.to_string(),
            opt(&self.event, |e| e.to_string()),
            opt(&self.request, format_request),
            link_name(self.link).to_string(),
            opt(&self.fault, |c| c.to_string()),
        ];
        row.extend(self.raw.values().iter().map(|v| v.to_string()));
        row.push(self.raw.buttons.to_string());
        row.extend(self.filtered.0.iter().map(|v| v.to_string()));
        row.extend(self.command.as_array().iter().map(|v| v.to_string()));
        let e = &self.estimated;
        row.extend(
            [e.q1, e.q2, e.q3, e.q4, e.theta_total, e.tip_width]
                .iter()
                .map(|v| v.to_string()),
        );
        let t = &self.truth;
        row.extend([t.q1, t.q2, t.q3, t.q4].iter().map(|v| v.to_string()));
        row
    }

    fn from_row(rec: &csv::StringRecord) -> Result<Self, String> {
        if rec.len() != TELEMETRY_HEADER.len() {
            return Err(format!(
                "expected {} fields, found {}",
                TELEMETRY_HEADER.len(),
                rec.len()
            ));
        }
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64, String> {
            field(i)
                .parse::<f64>()
                .map_err(|e| format!("column {}: {e}", TELEMETRY_HEADER[i]))
        };
        let int = |i: usize| -> Result<i64, String> {
            field(i)
                .parse::<i64>()
                .map_err(|e| format!("column {}: {e}", TELEMETRY_HEADER[i]))
        };
        let optional = |i: usize| Some(field(i)).filter(|s| !s.is_empty());
        let axis = |i: usize| int(i).map(|v| v as i32);
        Ok(TelemetryRecord {
            tick: int(0)? as u64,
            mode: field(1).parse()?,
            event: optional(2).map(str::parse).transpose()?,
            request: optional(3).map(parse_request).transpose()?,
            link: parse_link(field(4))?,
            fault: optional(5).map(str::parse).transpose()?,
            raw: RawAxes {
                tx: axis(6)?,
                ty: axis(7)?,
                tz: axis(8)?,
                rx: axis(9)?,
                ry: axis(10)?,
                rz: axis(11)?,
                buttons: int(12)? as u32,
            },
            filtered: NormalizedAxes([num(13)?, num(14)?, num(15)?, num(16)?, num(17)?, num(18)?]),
            command: JointVelocityCommand {
                q1dot: num(19)?,
                q2dot: num(20)?,
                q3dot: num(21)?,
                q4dot: num(22)?,
            },
            estimated: EstimateSummary {
                q1: num(23)?,
                q2: num(24)?,
                q3: num(25)?,
                q4: num(26)?,
                theta_total: num(27)?,
                tip_width: num(28)?,
            },
            truth: JointTruth {
                q1: num(29)?,
                q2: num(30)?,
                q3: num(31)?,
                q4: num(32)?,
            },
        })
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Streams telemetry rows to a writer.
pub struct TelemetryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TelemetryWriter<W> {
    pub fn new(out: W) -> Result<Self, TraceError> {
        let mut inner = csv_writer(out);
        inner.write_record(TELEMETRY_HEADER).map_err(csv_io)?;
        inner.write_record(TELEMETRY_UNITS).map_err(csv_io)?;
        Ok(TelemetryWriter { inner })
    }

    pub fn write(&mut self, rec: &TelemetryRecord) -> Result<(), TraceError> {
        self.inner.write_record(rec.to_row()).map_err(csv_io)
    }

    pub fn finish(mut self) -> Result<W, TraceError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| TraceError::Io(std::io::Error::other(e.to_string())))
    }
}

fn csv_io(e: csv::Error) -> TraceError {
    TraceError::Io(std::io::Error::other(e.to_string()))
}

pub fn telemetry_to_string(records: &[TelemetryRecord]) -> String {
    let mut w = TelemetryWriter::new(Vec::new()).expect("in-memory writer");
    for r in records {
        w.write(r).expect("in-memory writer");
    }
    String::from_utf8(w.finish().expect("in-memory writer")).expect("csv output is UTF-8")
}

pub fn record_trace(records: &[TelemetryRecord], path: impl AsRef<Path>) -> Result<(), TraceError> {
    std::fs::write(path, telemetry_to_string(records))?;
    Ok(())
}

fn parse_error(err: &csv::Error) -> TraceError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    TraceError::Parse {
        line,
        message: err.to_string(),
    }
}

/// Read header and units rows, then hand each data row to `row`.
fn read_rows<T>(
    text: &str,
    expected_header: &[&str],
    mut row: impl FnMut(&csv::StringRecord, &[String]) -> Result<T, String>,
) -> Result<Vec<T>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(&e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some(expected_header[0]) {
        return Err(TraceError::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(&e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if i == 0 {
            // units row
            continue;
        }
        out.push(row(&rec, &header).map_err(|message| TraceError::Parse { line, message })?);
    }
    Ok(out)
}

pub fn parse_telemetry(text: &str) -> Result<Vec<TelemetryRecord>, TraceError> {
    read_rows(text, &TELEMETRY_HEADER, |rec, header| {
        if header != TELEMETRY_HEADER {
            return Err("telemetry header does not match the expected columns".into());
        }
        TelemetryRecord::from_row(rec)
    })
}

pub fn replay_trace(path: impl AsRef<Path>) -> Result<Vec<TelemetryRecord>, TraceError> {
    parse_telemetry(&std::fs::read_to_string(path)?)
}

/// Parse an input trace. The `request` and `link` columns are optional.
pub fn parse_input_trace(text: &str) -> Result<Vec<InputSample>, InputError> {
    read_rows(text, &INPUT_HEADER, |rec, header| {
        let col = |name: &str| header.iter().position(|h| h == name);
        let get = |name: &str| col(name).and_then(|i| rec.get(i)).unwrap_or("");
        let int = |name: &str| -> Result<i64, String> {
            get(name)
                .parse::<i64>()
                .map_err(|e| format!("column {name}: {e}"))
        };
        let request = Some(get("request")).filter(|s| !s.is_empty());
        Ok(InputSample {
            tick: int("tick")? as u64,
            axes: RawAxes {
                tx: int("tx")? as i32,
                ty: int("ty")? as i32,
                tz: int("tz")? as i32,
                rx: int("rx")? as i32,
                ry: int("ry")? as i32,
                rz: int("rz")? as i32,
                buttons: int("buttons")? as u32,
            },
            request: request.map(parse_request).transpose()?,
            link: parse_link(get("link"))?,
        })
    })
    .map_err(|e| match e {
        TraceError::Parse { line, message } => InputError::Parse { line, message },
        other => InputError::Unavailable(other.to_string()),
    })
}

pub fn input_trace_to_string(samples: &[InputSample]) -> String {
    let mut w = csv_writer(Vec::new());
    w.write_record(INPUT_HEADER).expect("in-memory writer");
    w.write_record(INPUT_UNITS).expect("in-memory writer");
    for s in samples {
        let mut row: Vec<String> = vec![s.tick.to_string()];
        row.extend(s.axes.values().iter().map(|v| v.to_string()));
        row.push(s.axes.buttons.to_string());
        row.push(opt(&s.request, format_request));
        row.push(link_name(s.link).to_string());
        w.write_record(&row).expect("in-memory writer");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

/// Operator-side inputs and external events captured in a telemetry trace.
pub fn inputs_of(records: &[TelemetryRecord]) -> (Vec<InputSample>, Vec<Option<Event>>) {
    let samples = records
        .iter()
        .map(|r| InputSample {
            tick: r.tick,
            axes: r.raw,
            request: r.request,
            link: r.link,
        })
        .collect();
    (samples, records.iter().map(|r| r.event).collect())
}

/// Drive a fresh controller with the inputs of a recorded trace.
pub fn rerun(
    cfg: &SystemConfig,
    records: &[TelemetryRecord],
) -> Result<Vec<TelemetryRecord>, TraceError> {
    let (samples, events) = inputs_of(records);
    run_inputs(cfg, samples, &events)
}

/// Run a controller over a list of input samples, one tick each.
pub fn run_inputs(
    cfg: &SystemConfig,
    samples: Vec<InputSample>,
    events: &[Option<Event>],
) -> Result<Vec<TelemetryRecord>, TraceError> {
    let n = samples.len();
    let mut ctl =
        Controller::initialize(cfg.clone(), Box::new(ReplaySource::from_samples(samples)))?;
    let dt = cfg.control.period();
    (0..n)
        .map(|i| Ok(ctl.step(events.get(i).copied().flatten(), dt)?))
        .collect()
}
