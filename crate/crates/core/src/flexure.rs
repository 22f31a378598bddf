//! Notched flexure bending and tendon coordination.
//!
//! The flexible segment is treated as a chain of `n` identical compliant
//! hinges with rigid segments in between. Bending is shared equally by all
//! notches, and a tendon running at radial offset `r` from the neutral axis
//! shortens by `2 r sin(φ/2)` across a hinge bent by `φ`.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexureParams {
    /// Notch half-angle, degrees.
    pub notch_half_angle: f64,
    pub notches_per_side: u32,
    /// Rated maximum bend, degrees.
    pub max_bend: f64,
    /// Radial distance of the tendon channels from the neutral axis, mm.
    pub tendon_offset: f64,
    /// Axial spacing of the notches, mm.
    pub segment_pitch: f64,
}

impl Default for FlexureParams {
    fn default() -> Self {
        FlexureParams {
            notch_half_angle: 7.5,
            notches_per_side: 6,
            max_bend: 90.0,
            tendon_offset: 3.0,
            segment_pitch: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlexureParams", into = "FlexureParams")]
pub struct FlexureGeometry(FlexureParams);

impl FlexureGeometry {
    pub fn new(p: FlexureParams) -> ModelResult<Self> {
        if p.notches_per_side == 0 {
            return Err(ModelError::InvalidGeometry(
                "need at least one notch".into(),
            ));
        }
        for (name, v) in [
            ("notch_half_angle", p.notch_half_angle),
            ("max_bend", p.max_bend),
            ("tendon_offset", p.tendon_offset),
            ("segment_pitch", p.segment_pitch),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidGeometry(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        let capacity = 2.0 * p.notch_half_angle * p.notches_per_side as f64;
        if capacity + 1e-12 < p.max_bend {
            return Err(ModelError::InvalidGeometry(format!(
                "notches close by at most {capacity} deg, below the rated bend {}",
                p.max_bend
            )));
        }
        // the inverse takes asin of sin(θ / 2n), so θ / 2n must stay below 90 deg
        if p.max_bend / p.notches_per_side as f64 >= 180.0 {
            return Err(ModelError::InvalidGeometry(
                "per-notch bend must stay below 180 deg".into(),
            ));
        }
        Ok(FlexureGeometry(p))
    }

    pub fn params(&self) -> &FlexureParams {
        &self.0
    }
    pub fn notches(&self) -> u32 {
        self.0.notches_per_side
    }
    pub fn max_bend(&self) -> f64 {
        self.0.max_bend
    }
    pub fn notch_angle(&self) -> f64 {
        2.0 * self.0.notch_half_angle
    }
    pub fn tendon_offset(&self) -> f64 {
        self.0.tendon_offset
    }
    /// Length of the flexible segment, mm.
    pub fn length(&self) -> f64 {
        self.0.segment_pitch * self.0.notches_per_side as f64
    }

    /// Flexion tendon travel at the rated bend.
    pub fn max_tendon(&self) -> f64 {
        self.tendon_for(self.0.max_bend)
    }

    fn tendon_for(&self, bend_deg: f64) -> f64 {
        let n = self.0.notches_per_side as f64;
        2.0 * n * self.0.tendon_offset * (bend_deg.to_radians() / (2.0 * n)).sin()
    }
}

impl TryFrom<FlexureParams> for FlexureGeometry {
    type Error = ModelError;
    fn try_from(p: FlexureParams) -> ModelResult<Self> {
        FlexureGeometry::new(p)
    }
}

impl From<FlexureGeometry> for FlexureParams {
    fn from(g: FlexureGeometry) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendState {
    /// q1, degrees.
    pub bend_angle: f64,
    /// Closure of each notch, degrees.
    pub per_notch: Vec<f64>,
    /// Flexion tendon shortening, mm.
    pub flex_tendon: f64,
    /// Extension tendon lengthening, mm.
    pub ext_tendon: f64,
}

pub fn tendon_from_bend(geom: &FlexureGeometry, bend_angle: f64) -> ModelResult<BendState> {
    if !(0.0..=geom.max_bend()).contains(&bend_angle) {
        return Err(ModelError::OutOfRange {
            quantity: "bend angle",
            value: bend_angle,
            min: 0.0,
            max: geom.max_bend(),
        });
    }
    let n = geom.notches() as usize;
    let tendon = geom.tendon_for(bend_angle);
    Ok(BendState {
        bend_angle,
        per_notch: vec![bend_angle / n as f64; n],
        flex_tendon: tendon,
        ext_tendon: tendon,
    })
}

pub fn bend_from_tendon(geom: &FlexureGeometry, flex_tendon: f64) -> ModelResult<f64> {
    let max = geom.max_tendon();
    if !(0.0..=max).contains(&flex_tendon) {
        return Err(ModelError::OutOfRange {
            quantity: "flexion tendon travel",
            value: flex_tendon,
            min: 0.0,
            max,
        });
    }
    let n = geom.notches() as f64;
    let s = flex_tendon / (2.0 * n * geom.tendon_offset());
    let bend = (2.0 * n * s.asin()).to_degrees();
    Ok(bend.min(geom.max_bend()))
}

/// Tendon rates for the antagonistic pair, mm/s. Positive is take-up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TendonSpeeds {
    pub flex: f64,
    pub ext: f64,
}

/// Split a bend rate (deg/s) at the current bend angle into flexion and
/// extension tendon rates.
///
/// The flexion side takes up `gain · k · v` while the extension side pays
/// out `k · v`, where `k` is the local slope of the tendon/bend relation.
/// With `gain >= 1` the paying-out tendon never runs ahead of the pulling
/// one, so the pair stays taut.
pub fn antagonistic_speeds(
    geom: &FlexureGeometry,
    bend_angle: f64,
    bend_velocity: f64,
    tension_gain: f64,
) -> ModelResult<TendonSpeeds> {
    if !tension_gain.is_finite() || tension_gain < 1.0 {
        return Err(ModelError::Domain(format!(
            "tension gain must be >= 1, got {tension_gain}"
        )));
    }
    let n = geom.notches() as f64;
    let bend = bend_angle.clamp(0.0, geom.max_bend());
    // d/dθ [2 n r sin(θ / 2n)] = r cos(θ / 2n), per radian
    let slope = geom.tendon_offset() * (bend.to_radians() / (2.0 * n)).cos() * 1f64.to_radians();
    let rate = slope * bend_velocity;
    // `+ 0.0` folds -0.0 into 0.0
    Ok(TendonSpeeds {
        flex: tension_gain * rate + 0.0,
        ext: -rate + 0.0,
    })
}
