//! Model-versus-measurement comparison for the jaw kinematics.
//!
//! Reference data comes either as `(ΔL, θ_total)` pairs measured on a CAD
//! model, or as motion-capture frames with markers on both jaw tips, the
//! pivot and the moving flange. Both end up as [`ReferenceConfig`]s that
//! [`validate`] scores against the forward model with the mean absolute
//! error.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::gripper::{self, GripperGeometry};

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two vectors, degrees. `None` if either is zero-length.
fn angle_between(a: Vec3, b: Vec3) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    // atan2 of |a x b| and a.b stays accurate near 0 and 180 deg
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    Some(norm(cross).atan2(dot(a, b)).to_degrees())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("degenerate marker frame at t = {timestamp} s: {reason}")]
    DegenerateFrame {
        timestamp: f64,
        reason: &'static str,
    },
    #[error("no reference data")]
    Empty,
    #[error("marker frame at t = {0} s has non-finite coordinates")]
    NonFinite(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarkerLabel {
    JawLeftTip,
    JawRightTip,
    Pivot,
    Flange,
}

/// Marker positions (mm) captured at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerFrame {
    pub timestamp: f64,
    pub jaw_left_tip: Vec3,
    pub jaw_right_tip: Vec3,
    pub pivot: Vec3,
    pub flange: Vec3,
}

impl MarkerFrame {
    pub fn point(&self, label: MarkerLabel) -> Vec3 {
        match label {
            MarkerLabel::JawLeftTip => self.jaw_left_tip,
            MarkerLabel::JawRightTip => self.jaw_right_tip,
            MarkerLabel::Pivot => self.pivot,
            MarkerLabel::Flange => self.flange,
        }
    }

    fn check_finite(&self) -> Result<(), ValidationError> {
        let all = [
            self.jaw_left_tip,
            self.jaw_right_tip,
            self.pivot,
            self.flange,
        ];
        if self.timestamp.is_finite() && all.iter().flatten().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ValidationError::NonFinite(self.timestamp))
        }
    }

    fn degenerate(&self, reason: &'static str) -> ValidationError {
        ValidationError::DegenerateFrame {
            timestamp: self.timestamp,
            reason,
        }
    }
}

/// Angle between the two pivot-to-tip vectors, degrees.
pub fn jaw_angle_from_markers(frame: &MarkerFrame) -> Result<f64, ValidationError> {
    frame.check_finite()?;
    let left = sub(frame.jaw_left_tip, frame.pivot);
    let right = sub(frame.jaw_right_tip, frame.pivot);
    angle_between(left, right).ok_or_else(|| frame.degenerate("jaw vector has zero length"))
}

/// Jaw angle measured in the gripper plane only.
///
/// The plane holds the instrument axis (flange toward pivot) and the
/// direction along which the tips separate. Components normal to it are
/// dropped before measuring. Falls back to [`jaw_angle_from_markers`] when
/// the tips do not separate across the axis.
pub fn jaw_angle_in_plane(frame: &MarkerFrame) -> Result<f64, ValidationError> {
    frame.check_finite()?;
    let axis = sub(frame.pivot, frame.flange);
    let axis_len = norm(axis);
    if axis_len < 1e-12 {
        return Err(frame.degenerate("pivot and flange coincide"));
    }
    let u = scale(axis, 1.0 / axis_len);
    let left = sub(frame.jaw_left_tip, frame.pivot);
    let right = sub(frame.jaw_right_tip, frame.pivot);
    let across = |v: Vec3| sub(v, scale(u, dot(v, u)));
    let spread = sub(across(left), across(right));
    let spread_len = norm(spread);
    if spread_len < 1e-9 {
        return jaw_angle_from_markers(frame);
    }
    let e = scale(spread, 1.0 / spread_len);
    let in_plane = |v: Vec3| add(scale(u, dot(v, u)), scale(e, dot(v, e)));
    angle_between(in_plane(left), in_plane(right))
        .ok_or_else(|| frame.degenerate("jaw vector has zero length in the gripper plane"))
}

/// Slider travel between `baseline` and `frame`, mm: the flange
/// displacement projected on the baseline's flange-to-pivot direction.
/// Positive when the flange moves toward the pivot (jaws opening).
pub fn displacement_from_markers(
    frame: &MarkerFrame,
    baseline: &MarkerFrame,
) -> Result<f64, ValidationError> {
    frame.check_finite()?;
    baseline.check_finite()?;
    let axis = sub(baseline.pivot, baseline.flange);
    let len = norm(axis);
    if len < 1e-12 {
        return Err(baseline.degenerate("pivot and flange coincide"));
    }
    Ok(dot(sub(frame.flange, baseline.flange), axis) / len)
}

/// One measured `(ΔL, θ_total)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    /// mm
    pub slider: f64,
    /// deg
    pub total_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReferenceSource {
    Cad,
    Mocap,
}

impl fmt::Display for ReferenceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceSource::Cad => "CAD",
            ReferenceSource::Mocap => "MOCAP",
        })
    }
}

impl FromStr for ReferenceSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "CAD" => Ok(ReferenceSource::Cad),
            "MOCAP" => Ok(ReferenceSource::Mocap),
            _ => Err(format!("unknown reference source {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparedPoint {
    pub slider: f64,
    pub reference: f64,
    pub model: f64,
}

impl ComparedPoint {
    pub fn abs_error(&self) -> f64 {
        (self.reference - self.model).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub source: ReferenceSource,
    pub pairs: Vec<ComparedPoint>,
    /// References whose ΔL lies outside the model's range.
    pub excluded: Vec<ReferenceConfig>,
    /// deg
    pub mae: f64,
    /// deg
    pub max_err: f64,
    /// Model sweep `(ΔL, θ_total)` for plotting next to the points.
    pub curve: Vec<(f64, f64)>,
}

/// Points on the model curve emitted with every report.
pub const CURVE_POINTS: usize = 101;

pub fn validate(
    references: &[ReferenceConfig],
    geom: &GripperGeometry,
    source: ReferenceSource,
) -> Result<ValidationReport, ValidationError> {
    if references.is_empty() {
        return Err(ValidationError::Empty);
    }
    let (lo, hi) = gripper::valid_displacement_range(geom);
    let mut pairs = Vec::with_capacity(references.len());
    let mut excluded = Vec::new();
    for r in references {
        if !(r.slider.is_finite() && r.total_angle.is_finite()) || r.slider < lo || r.slider > hi {
            excluded.push(*r);
            continue;
        }
        let model = gripper::jaw_state(geom, r.slider)?.total_angle;
        pairs.push(ComparedPoint {
            slider: r.slider,
            reference: r.total_angle,
            model,
        });
    }
    let (mae, max_err) = if pairs.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let sum: f64 = pairs.iter().map(ComparedPoint::abs_error).sum();
        let max = pairs
            .iter()
            .map(ComparedPoint::abs_error)
            .fold(0.0, f64::max);
        (sum / pairs.len() as f64, max)
    };
    let curve = gripper::sweep(geom, CURVE_POINTS)?
        .into_iter()
        .map(|s| (s.slider, s.total_angle))
        .collect();
    Ok(ValidationReport {
        source,
        pairs,
        excluded,
        mae,
        max_err,
        curve,
    })
}

/// Reference pairs from a motion-capture recording. The first frame is
/// the baseline (slider at rest) and is not itself a reference.
pub fn mocap_references(frames: &[MarkerFrame]) -> Result<Vec<ReferenceConfig>, ValidationError> {
    let (baseline, rest) = frames.split_first().ok_or(ValidationError::Empty)?;
    rest.iter()
        .map(|f| {
            Ok(ReferenceConfig {
                slider: displacement_from_markers(f, baseline)?,
                total_angle: jaw_angle_in_plane(f)?,
            })
        })
        .collect()
}

/// Layout used when synthesizing marker frames from the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRig {
    /// Flange distance behind the slider point, mm.
    pub flange_setback: f64,
}

impl Default for SyntheticRig {
    fn default() -> Self {
        SyntheticRig {
            flange_setback: 4.0,
        }
    }
}

/// Noiseless markers for slider displacement `slider`: pivot at the
/// origin, jaws along +x in the xy-plane, flange on the -x axis behind the
/// slider.
pub fn synth_frame(
    geom: &GripperGeometry,
    rig: &SyntheticRig,
    slider: f64,
    timestamp: f64,
) -> Result<MarkerFrame, ValidationError> {
    let state = gripper::jaw_state(geom, slider)?;
    let half = (state.total_angle / 2.0).to_radians();
    let lj = geom.jaw_length();
    Ok(MarkerFrame {
        timestamp,
        jaw_left_tip: [lj * half.cos(), lj * half.sin(), 0.0],
        jaw_right_tip: [lj * half.cos(), -lj * half.sin(), 0.0],
        pivot: [0.0, 0.0, 0.0],
        flange: [-(geom.pivot_slider(slider) + rig.flange_setback), 0.0, 0.0],
    })
}

/// Open-close cycle used for synthetic motion capture: `frames` slider
/// positions rising linearly from `low` to `high` and back.
pub fn triangle_schedule(low: f64, high: f64, frames: usize) -> Vec<f64> {
    if frames < 2 {
        return vec![low; frames];
    }
    let last = (frames - 1) as f64;
    (0..frames)
        .map(|k| low + (high - low) * (1.0 - (2.0 * k as f64 / last - 1.0).abs()))
        .collect()
}

/// A baseline frame at rest followed by one frame per scheduled slider
/// position, every marker coordinate perturbed by N(0, σ²) noise.
pub fn synth_mocap(
    geom: &GripperGeometry,
    rig: &SyntheticRig,
    schedule: &[f64],
    sigma: f64,
    seed: u64,
    frame_period: f64,
) -> Result<Vec<MarkerFrame>, ValidationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| ValidationError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut jitter = |p: Vec3| -> Vec3 {
        if sigma > 0.0 {
            [
                p[0] + noise.sample(&mut rng),
                p[1] + noise.sample(&mut rng),
                p[2] + noise.sample(&mut rng),
            ]
        } else {
            p
        }
    };
    std::iter::once(0.0)
        .chain(schedule.iter().copied())
        .enumerate()
        .map(|(i, slider)| {
            let f = synth_frame(geom, rig, slider, i as f64 * frame_period)?;
            Ok(MarkerFrame {
                timestamp: f.timestamp,
                jaw_left_tip: jitter(f.jaw_left_tip),
                jaw_right_tip: jitter(f.jaw_right_tip),
                pivot: jitter(f.pivot),
                flange: jitter(f.flange),
            })
        })
        .collect()
}

/// References read straight off the model, as a CAD check would produce.
pub fn synth_cad(
    geom: &GripperGeometry,
    count: usize,
) -> Result<Vec<ReferenceConfig>, ValidationError> {
    Ok(gripper::sweep(geom, count)?
        .into_iter()
        .map(|s| ReferenceConfig {
            slider: s.slider,
            total_angle: s.total_angle,
        })
        .collect())
}

pub const REFERENCE_HEADER: [&str; 2] = ["slider_mm", "total_angle_deg"];
pub const REFERENCE_UNITS: [&str; 2] = ["mm", "deg"];
pub const MARKER_HEADER: [&str; 13] = [
    "timestamp",
    "jaw_left_x",
    "jaw_left_y",
    "jaw_left_z",
    "jaw_right_x",
    "jaw_right_y",
    "jaw_right_z",
    "pivot_x",
    "pivot_y",
    "pivot_z",
    "flange_x",
    "flange_y",
    "flange_z",
];
pub const MARKER_UNITS: [&str; 13] = [
    "s", "mm", "mm", "mm", "mm", "mm", "mm", "mm", "mm", "mm", "mm", "mm", "mm",
];

fn write_table(header: &[&str], units: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory writer");
    w.write_record(units).expect("in-memory writer");
    for r in rows {
        w.write_record(&r).expect("in-memory writer");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

fn read_table(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>, ValidationError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let parse_err = |e: csv::Error| ValidationError::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let got = reader.headers().map_err(parse_err)?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(ValidationError::Parse {
            line: 1,
            message: format!("expected columns {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        if i == 0 {
            continue;
        }
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ValidationError::Parse {
                line,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn references_to_csv(refs: &[ReferenceConfig]) -> String {
    write_table(
        &REFERENCE_HEADER,
        &REFERENCE_UNITS,
        refs.iter()
            .map(|r| vec![r.slider.to_string(), r.total_angle.to_string()]),
    )
}

pub fn parse_references(text: &str) -> Result<Vec<ReferenceConfig>, ValidationError> {
    Ok(read_table(text, &REFERENCE_HEADER)?
        .into_iter()
        .map(|r| ReferenceConfig {
            slider: r[0],
            total_angle: r[1],
        })
        .collect())
}

pub fn markers_to_csv(frames: &[MarkerFrame]) -> String {
    write_table(
        &MARKER_HEADER,
        &MARKER_UNITS,
        frames.iter().map(|f| {
            std::iter::once(f.timestamp)
                .chain(f.jaw_left_tip)
                .chain(f.jaw_right_tip)
                .chain(f.pivot)
                .chain(f.flange)
                .map(|v| v.to_string())
                .collect()
        }),
    )
}

pub fn parse_markers(text: &str) -> Result<Vec<MarkerFrame>, ValidationError> {
    Ok(read_table(text, &MARKER_HEADER)?
        .into_iter()
        .map(|r| MarkerFrame {
            timestamp: r[0],
            jaw_left_tip: [r[1], r[2], r[3]],
            jaw_right_tip: [r[4], r[5], r[6]],
            pivot: [r[7], r[8], r[9]],
            flange: [r[10], r[11], r[12]],
        })
        .collect())
}

impl ValidationReport {
    /// Per-point comparison table, one row per reference.
    pub fn points_csv(&self) -> String {
        write_table(
            &["slider_mm", "reference_deg", "model_deg", "abs_error_deg"],
            &["mm", "deg", "deg", "deg"],
            self.pairs.iter().map(|p| {
                [p.slider, p.reference, p.model, p.abs_error()]
                    .iter()
                    .map(|v| v.to_string())
                    .collect()
            }),
        )
    }

    pub fn curve_csv(&self) -> String {
        write_table(
            &["slider_mm", "total_angle_deg"],
            &["mm", "deg"],
            self.curve
                .iter()
                .map(|(s, t)| vec![s.to_string(), t.to_string()]),
        )
    }
}
