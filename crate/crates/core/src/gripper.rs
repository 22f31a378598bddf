//! Closed-form model of the symmetric scissor-linkage gripper.
//!
//! Only one half of the mechanism is modelled. The pivot `P` is fixed, link A
//! joins the pivot to joint `Q` and link B joins `Q` to the slider point `S`.
//! Pushing the actuation wire moves the slider toward the pivot by `ΔL`,
//! shortening `PS = L_0 - ΔL` and opening the jaws.
//!
//! Angles cross the public API in degrees; everything inside is radians.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelResult};

/// Tolerance used when checking a slider position or opening angle against
/// the edges of the valid range.
const RANGE_EPS: f64 = 1e-9;

/// Default upper bound on the total jaw opening, degrees.
pub const DEFAULT_OPENING_LIMIT_DEG: f64 = 90.0;

/// Raw parameters as they appear in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperParams {
    pub link_a: f64,
    pub link_b: f64,
    pub jaw_length: f64,
    pub offset: f64,
    pub initial_pivot_slider: f64,
    #[serde(default = "default_opening_limit")]
    pub opening_limit: f64,
}

fn default_opening_limit() -> f64 {
    DEFAULT_OPENING_LIMIT_DEG
}

/// Validated scissor-linkage geometry. Lengths in mm, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GripperParams", into = "GripperParams")]
pub struct GripperGeometry {
    link_a: f64,
    link_b: f64,
    jaw_length: f64,
    offset: f64,
    initial_pivot_slider: f64,
    opening_limit: f64,
    jaw_offset_angle: f64,
}

impl GripperGeometry {
    pub fn new(
        link_a: f64,
        link_b: f64,
        jaw_length: f64,
        offset: f64,
        initial_pivot_slider: f64,
    ) -> ModelResult<Self> {
        GripperParams {
            link_a,
            link_b,
            jaw_length,
            offset,
            initial_pivot_slider,
            opening_limit: DEFAULT_OPENING_LIMIT_DEG,
        }
        .try_into()
    }

    /// The prototype's published gripper dimensions.
    pub fn reference() -> Self {
        Self::new(6.50, 8.00, 22.3, 2.5, 13.6).expect("reference geometry is valid")
    }

    /// Same geometry with a different opening limit (degrees, total angle).
    pub fn with_opening_limit(mut self, limit_deg: f64) -> ModelResult<Self> {
        if !limit_deg.is_finite() || limit_deg < 0.0 {
            return Err(ModelError::InvalidGeometry(format!(
                "opening limit must be a finite non-negative angle, got {limit_deg}"
            )));
        }
        self.opening_limit = limit_deg;
        Ok(self)
    }

    pub fn link_a(&self) -> f64 {
        self.link_a
    }
    pub fn link_b(&self) -> f64 {
        self.link_b
    }
    pub fn jaw_length(&self) -> f64 {
        self.jaw_length
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }
    pub fn initial_pivot_slider(&self) -> f64 {
        self.initial_pivot_slider
    }
    pub fn opening_limit(&self) -> f64 {
        self.opening_limit
    }
    /// `θ_o = asin(h / A)`, degrees. Fixed at construction.
    pub fn jaw_offset_angle(&self) -> f64 {
        self.jaw_offset_angle
    }

    /// Pivot-to-slider distance for a slider displacement.
    pub fn pivot_slider(&self, slider: f64) -> f64 {
        self.initial_pivot_slider - slider
    }
}

impl TryFrom<GripperParams> for GripperGeometry {
    type Error = ModelError;

    fn try_from(p: GripperParams) -> ModelResult<Self> {
        let lengths = [
            ("link_a", p.link_a),
            ("link_b", p.link_b),
            ("jaw_length", p.jaw_length),
            ("offset", p.offset),
            ("initial_pivot_slider", p.initial_pivot_slider),
        ];
        for (name, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidGeometry(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if p.offset >= p.link_a {
            return Err(ModelError::InvalidGeometry(format!(
                "offset h = {} must be shorter than link A = {}",
                p.offset, p.link_a
            )));
        }
        let lo = (p.link_a - p.link_b).abs();
        let hi = p.link_a + p.link_b;
        if !(p.initial_pivot_slider > lo && p.initial_pivot_slider < hi) {
            return Err(ModelError::InvalidGeometry(format!(
                "L_0 = {} does not close the triangle, need {lo} < L_0 < {hi}",
                p.initial_pivot_slider
            )));
        }
        let geom = GripperGeometry {
            link_a: p.link_a,
            link_b: p.link_b,
            jaw_length: p.jaw_length,
            offset: p.offset,
            initial_pivot_slider: p.initial_pivot_slider,
            opening_limit: DEFAULT_OPENING_LIMIT_DEG,
            jaw_offset_angle: jaw_offset_angle(p.link_a, p.offset)?,
        };
        geom.with_opening_limit(p.opening_limit)
    }
}

impl From<GripperGeometry> for GripperParams {
    fn from(g: GripperGeometry) -> Self {
        GripperParams {
            link_a: g.link_a,
            link_b: g.link_b,
            jaw_length: g.jaw_length,
            offset: g.offset,
            initial_pivot_slider: g.initial_pivot_slider,
            opening_limit: g.opening_limit,
        }
    }
}

/// Kinematic state of the half-gripper at one slider position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    /// ΔL, mm.
    pub slider: f64,
    /// Angle at the pivot between link A and the instrument axis, degrees.
    pub alpha: f64,
    pub alpha_a: f64,
    pub alpha_b: f64,
    /// Opening of one jaw, degrees.
    pub jaw_angle: f64,
    /// Angle between both jaws, degrees.
    pub total_angle: f64,
    /// Tip-to-tip distance, mm.
    pub tip_width: f64,
}

/// Forces through the linkage for a given input force, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceState {
    pub input: f64,
    pub half_input: f64,
    pub link_b_force: f64,
    pub link_a_force: f64,
    pub tip_force: f64,
    pub total_grip: f64,
}

fn checked_acos(what: &'static str, value: f64) -> ModelResult<f64> {
    if (-1.0..=1.0).contains(&value) {
        Ok(value.acos())
    } else {
        Err(ModelError::Infeasible { what, value })
    }
}

fn checked_asin(what: &'static str, value: f64) -> ModelResult<f64> {
    if (-1.0..=1.0).contains(&value) {
        Ok(value.asin())
    } else {
        Err(ModelError::Infeasible { what, value })
    }
}

/// `asin(h / A)` in degrees. Accepts `0 <= h < A`.
pub fn jaw_offset_angle(link_a: f64, offset: f64) -> ModelResult<f64> {
    if !link_a.is_finite() || link_a <= 0.0 {
        return Err(ModelError::Domain(format!(
            "link A must be positive, got {link_a}"
        )));
    }
    if !(offset >= 0.0 && offset < link_a) {
        return Err(ModelError::Domain(format!(
            "jaw offset needs 0 <= h < A, got h = {offset}, A = {link_a}"
        )));
    }
    Ok((offset / link_a).asin().to_degrees())
}

/// Pivot angle α from the law of cosines in triangle PQS, degrees.
pub fn alpha_from_displacement(geom: &GripperGeometry, slider: f64) -> ModelResult<f64> {
    Ok(alpha_rad(geom, slider)?.to_degrees())
}

fn alpha_rad(geom: &GripperGeometry, slider: f64) -> ModelResult<f64> {
    let ps = geom.pivot_slider(slider);
    if ps.is_nan() || ps <= 0.0 {
        return Err(ModelError::Domain(format!(
            "pivot-to-slider distance L_0 - ΔL = {ps} must be positive"
        )));
    }
    let (a, b) = (geom.link_a, geom.link_b);
    let cos_alpha = (b * b - a * a - ps * ps) / (-2.0 * a * ps);
    checked_acos("law-of-cosines", cos_alpha)
}

/// Internal angles `(α_B, α_A)` needed by the force model, degrees.
///
/// `α_A` goes negative near closure with the reference geometry; only its
/// cosine is used downstream.
pub fn internal_angles(geom: &GripperGeometry, alpha_deg: f64) -> ModelResult<(f64, f64)> {
    let (b, a) = internal_angles_rad(geom, alpha_deg.to_radians())?;
    Ok((b.to_degrees(), a.to_degrees()))
}

fn internal_angles_rad(geom: &GripperGeometry, alpha: f64) -> ModelResult<(f64, f64)> {
    let alpha_b = checked_asin("link B angle", geom.link_a * alpha.sin() / geom.link_b)?;
    let alpha_a = alpha + alpha_b - std::f64::consts::FRAC_PI_2;
    Ok((alpha_b, alpha_a))
}

/// Full jaw state at slider displacement `slider` (mm).
pub fn jaw_state(geom: &GripperGeometry, slider: f64) -> ModelResult<GripperState> {
    let (lo, hi) = valid_displacement_range(geom);
    if !(slider >= lo - RANGE_EPS && slider <= hi + RANGE_EPS) {
        return Err(ModelError::OutOfRange {
            quantity: "slider displacement",
            value: slider,
            min: lo,
            max: hi,
        });
    }
    unchecked_jaw_state(geom, slider)
}

/// Same as [`jaw_state`] without the opening-limit check. Only the
/// triangle has to close.
pub fn unchecked_jaw_state(geom: &GripperGeometry, slider: f64) -> ModelResult<GripperState> {
    let alpha = alpha_rad(geom, slider)?;
    let (alpha_b, alpha_a) = internal_angles_rad(geom, alpha)?;
    let jaw = alpha - geom.jaw_offset_angle.to_radians();
    let jaw_angle = jaw.to_degrees();
    let total_angle = 2.0 * jaw_angle;
    Ok(GripperState {
        slider,
        alpha: alpha.to_degrees(),
        alpha_a: alpha_a.to_degrees(),
        alpha_b: alpha_b.to_degrees(),
        jaw_angle,
        total_angle,
        tip_width: tip_width(geom, total_angle),
    })
}

/// Tip-to-tip opening for a total jaw angle in degrees.
pub fn tip_width(geom: &GripperGeometry, total_angle: f64) -> f64 {
    2.0 * geom.jaw_length * (total_angle.to_radians() / 2.0).sin()
}

/// Static force transmission from slider input force to the jaw tips.
pub fn force_transmission(
    geom: &GripperGeometry,
    slider: f64,
    input: f64,
) -> ModelResult<ForceState> {
    if !input.is_finite() || input < 0.0 {
        return Err(ModelError::Domain(format!(
            "input force must be finite and non-negative, got {input}"
        )));
    }
    let state = jaw_state(geom, slider)?;
    let half_input = input / 2.0;
    let link_b_force = half_input * state.alpha_b.to_radians().cos();
    let link_a_force = link_b_force * state.alpha_a.to_radians().cos();
    let tip_force = geom.link_a / geom.jaw_length * link_a_force;
    Ok(ForceState {
        input,
        half_input,
        link_b_force,
        link_a_force,
        tip_force,
        total_grip: 2.0 * tip_force,
    })
}

/// Per-jaw tip force per unit input force implied by virtual work on the
/// kinematic model, `F_T / F_IN = 1 / (2 l_j dθ_jaw/dΔL)`.
///
/// This does not agree with the projection model in
/// [`force_transmission`]; it is exposed as a diagnostic only.
pub fn virtual_work_ratio(geom: &GripperGeometry, slider: f64) -> ModelResult<f64> {
    let alpha = alpha_rad(geom, slider)?;
    let ps = geom.pivot_slider(slider);
    let (a, b) = (geom.link_a, geom.link_b);
    // cos α = (A² + PS² - B²) / (2 A PS), differentiated w.r.t. PS
    let dcos_dps = (ps * ps - a * a + b * b) / (2.0 * a * ps * ps);
    let sin_alpha = alpha.sin();
    if sin_alpha.abs() < 1e-12 {
        return Err(ModelError::Domain("linkage is singular (sin α = 0)".into()));
    }
    // dα/dΔL = -dα/dPS = dcos/dPS / sin α
    let djaw_dslider = dcos_dps / sin_alpha;
    Ok(1.0 / (2.0 * geom.jaw_length * djaw_dslider))
}

/// Slider displacement that produces `total_angle` (degrees).
///
/// Solves `PS² - 2A cos(α) PS + (A² - B²) = 0` with `α = θ_total/2 + θ_o`,
/// keeping the root in `(|A - B|, L_0]`. Falls back to bisection on the
/// forward model when no root lands there.
pub fn displacement_from_total_angle(geom: &GripperGeometry, total_angle: f64) -> ModelResult<f64> {
    let (lo, hi) = valid_displacement_range(geom);
    let min_angle = unchecked_jaw_state(geom, lo)?.total_angle;
    let max_angle = unchecked_jaw_state(geom, hi)?.total_angle;
    if !(total_angle >= min_angle - RANGE_EPS && total_angle <= max_angle + RANGE_EPS) {
        return Err(ModelError::OutOfRange {
            quantity: "total jaw angle",
            value: total_angle,
            min: min_angle,
            max: max_angle,
        });
    }
    if let Some(ps) = closed_form_pivot_slider(geom, total_angle) {
        let slider = geom.initial_pivot_slider - ps;
        return Ok(slider.clamp(lo, hi));
    }
    bisect_displacement(geom, total_angle, lo, hi)
}

fn closed_form_pivot_slider(geom: &GripperGeometry, total_angle: f64) -> Option<f64> {
    let (a, b) = (geom.link_a, geom.link_b);
    let alpha = (total_angle / 2.0 + geom.jaw_offset_angle).to_radians();
    let half_b = a * alpha.cos();
    let disc = half_b * half_b - (a * a - b * b);
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let ps_lo = (a - b).abs();
    let ps_hi = geom.initial_pivot_slider;
    [half_b + root, half_b - root]
        .into_iter()
        .find(|&ps| ps > ps_lo && ps <= ps_hi + RANGE_EPS)
}

fn bisect_displacement(geom: &GripperGeometry, target: f64, lo: f64, hi: f64) -> ModelResult<f64> {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if unchecked_jaw_state(geom, mid)?.total_angle < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(0, ΔL_max)` where `ΔL_max` opens the jaws to the geometry's opening
/// limit, capped so the triangle stays non-degenerate.
pub fn valid_displacement_range(geom: &GripperGeometry) -> (f64, f64) {
    displacement_range_for_limit(geom, geom.opening_limit)
}

/// Like [`valid_displacement_range`] with an explicit opening limit.
pub fn displacement_range_for_limit(geom: &GripperGeometry, limit_deg: f64) -> (f64, f64) {
    if limit_deg <= 0.0 {
        return (0.0, 0.0);
    }
    let ps_floor = (geom.link_a - geom.link_b).abs() + RANGE_EPS;
    let feasible_max = geom.initial_pivot_slider - ps_floor.max(RANGE_EPS);
    let max = match closed_form_pivot_slider(geom, limit_deg) {
        Some(ps) => (geom.initial_pivot_slider - ps).min(feasible_max),
        None => feasible_max,
    };
    (0.0, max.max(0.0))
}

/// Evenly spaced samples of the forward model over the valid range.
pub fn sweep(geom: &GripperGeometry, points: usize) -> ModelResult<Vec<GripperState>> {
    let (lo, hi) = valid_displacement_range(geom);
    match points {
        0 => Ok(Vec::new()),
        1 => Ok(vec![jaw_state(geom, lo)?]),
        n => (0..n)
            .map(|i| {
                let s = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                jaw_state(geom, s.min(hi))
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn jaw_offset_examples() {
        assert!(close(jaw_offset_angle(6.5, 2.5).unwrap(), 22.62, 0.005));
        assert_eq!(jaw_offset_angle(4.0, 0.0).unwrap(), 0.0);
        let h = 5.0 * 30f64.to_radians().sin();
        assert!(close(jaw_offset_angle(5.0, h).unwrap(), 30.0, 1e-12));
    }

    #[test]
    fn jaw_offset_rejects_offset_past_link() {
        assert!(matches!(
            jaw_offset_angle(6.5, 6.5),
            Err(ModelError::Domain(_))
        ));
        assert!(matches!(
            jaw_offset_angle(6.5, 7.0),
            Err(ModelError::Domain(_))
        ));
    }

    #[test]
    fn geometry_validation() {
        assert!(GripperGeometry::new(6.5, 8.0, 22.3, 0.0, 13.6).is_err());
        assert!(GripperGeometry::new(6.5, 8.0, 22.3, 7.0, 13.6).is_err());
        // L_0 must close the triangle
        assert!(GripperGeometry::new(6.5, 8.0, 22.3, 2.5, 14.5).is_err());
        assert!(GripperGeometry::new(6.5, 8.0, 22.3, 2.5, 1.5).is_err());
        let g = GripperGeometry::reference();
        assert!(close(
            g.jaw_offset_angle(),
            (2.5f64 / 6.5).asin().to_degrees(),
            1e-12
        ));
    }

    #[test]
    fn alpha_examples() {
        let g = GripperGeometry::reference();
        assert!(close(
            alpha_from_displacement(&g, 0.0).unwrap(),
            22.61,
            0.01
        ));
        assert!(close(
            alpha_from_displacement(&g, 2.0).unwrap(),
            41.59,
            0.02
        ));
        assert!(close(
            alpha_from_displacement(&g, 4.0).unwrap(),
            55.66,
            0.01
        ));
    }

    #[test]
    fn alpha_rejects_degenerate_and_infeasible() {
        let g = GripperGeometry::reference();
        assert!(matches!(
            alpha_from_displacement(&g, 13.6),
            Err(ModelError::Domain(_))
        ));
        assert!(matches!(
            alpha_from_displacement(&g, 20.0),
            Err(ModelError::Domain(_))
        ));
        // PS = 1 mm < B - A: no triangle
        assert!(matches!(
            alpha_from_displacement(&g, 12.6),
            Err(ModelError::Infeasible { .. })
        ));
    }

    #[test]
    fn jaw_state_examples() {
        let g = GripperGeometry::reference();
        assert!(jaw_state(&g, 0.0).unwrap().total_angle.abs() < 0.1);
        let s2 = jaw_state(&g, 2.0).unwrap();
        assert!(close(s2.total_angle, 37.9, 0.05));
        assert!(close(s2.tip_width, 14.5, 0.05));
        assert!(close(jaw_state(&g, 4.0).unwrap().total_angle, 66.1, 0.05));
        assert_eq!(s2.total_angle, 2.0 * s2.jaw_angle);
    }

    #[test]
    fn jaw_state_rejects_out_of_range() {
        let g = GripperGeometry::reference();
        assert!(matches!(
            jaw_state(&g, -0.1),
            Err(ModelError::OutOfRange { .. })
        ));
        assert!(matches!(
            jaw_state(&g, 6.0),
            Err(ModelError::OutOfRange { .. })
        ));
    }

    #[test]
    fn internal_angle_examples() {
        let g = GripperGeometry::reference();
        let (b, a) = internal_angles(&g, 41.59).unwrap();
        assert!(close(b, 32.62, 0.03) && close(a, -15.79, 0.03), "{b} {a}");
        let (b, a) = internal_angles(&g, 55.66).unwrap();
        assert!(close(b, 42.15, 0.03) && close(a, 7.81, 0.03), "{b} {a}");

        let equal = GripperGeometry::new(6.0, 6.0, 20.0, 2.0, 8.0).unwrap();
        let (b, a) = internal_angles(&equal, 90.0).unwrap();
        assert!(close(b, 90.0, 1e-6) && close(a, 90.0, 1e-6));
    }

    #[test]
    fn internal_angles_infeasible_when_link_b_short() {
        let g = GripperGeometry::new(8.0, 4.0, 20.0, 2.0, 10.0).unwrap();
        assert!(matches!(
            internal_angles(&g, 90.0),
            Err(ModelError::Infeasible { .. })
        ));
    }

    #[test]
    fn force_examples() {
        let g = GripperGeometry::reference();
        let f = force_transmission(&g, 3.0, 10.0).unwrap();
        assert_eq!(f.half_input, 5.0);
        let unit = force_transmission(&g, 2.0, 1.0).unwrap();
        assert!(close(unit.tip_force, 0.118, 0.0005));
        assert!(close(unit.total_grip, 0.236, 0.001));
        assert_eq!(unit.total_grip, 2.0 * unit.tip_force);
        let zero = force_transmission(&g, 2.0, 0.0).unwrap();
        for v in [
            zero.half_input,
            zero.link_a_force,
            zero.link_b_force,
            zero.tip_force,
            zero.total_grip,
        ] {
            assert_eq!(v, 0.0);
        }
        assert!(force_transmission(&g, 2.0, -1.0).is_err());
    }

    #[test]
    fn virtual_work_diagnostic_differs_from_projection_model() {
        let g = GripperGeometry::reference();
        let vw = virtual_work_ratio(&g, 2.0).unwrap();
        assert!(close(vw, 0.1665, 0.0005), "{vw}");
    }

    #[test]
    fn inverse_examples() {
        let g = GripperGeometry::reference();
        let t2 = jaw_state(&g, 2.0).unwrap().total_angle;
        assert!(close(
            displacement_from_total_angle(&g, t2).unwrap(),
            2.0,
            1e-9
        ));
        assert!(displacement_from_total_angle(&g, 0.0).unwrap() < 1e-3);
        assert!(close(
            displacement_from_total_angle(&g, 90.0).unwrap(),
            5.845,
            0.001
        ));
        assert!(displacement_from_total_angle(&g, 95.0).is_err());
        assert!(displacement_from_total_angle(&g, -5.0).is_err());
    }

    #[test]
    fn bisection_matches_closed_form() {
        let g = GripperGeometry::reference();
        let (lo, hi) = valid_displacement_range(&g);
        for target in [1.0, 20.0, 45.0, 89.0] {
            let cf = displacement_from_total_angle(&g, target).unwrap();
            let bs = bisect_displacement(&g, target, lo, hi).unwrap();
            assert!(close(cf, bs, 1e-9), "{target}: {cf} vs {bs}");
        }
    }

    #[test]
    fn range_examples() {
        let g = GripperGeometry::reference();
        let (lo, hi) = valid_displacement_range(&g);
        assert_eq!(lo, 0.0);
        assert!(close(hi, 5.84, 0.01));
        assert_eq!(displacement_range_for_limit(&g, 0.0), (0.0, 0.0));
        let (_, hi) = displacement_range_for_limit(&g, 66.1);
        assert!(close(hi, 4.0, 0.01));
    }

    #[test]
    fn range_capped_by_triangle_feasibility() {
        let g = GripperGeometry::reference()
            .with_opening_limit(400.0)
            .unwrap();
        let (_, hi) = valid_displacement_range(&g);
        assert!(g.pivot_slider(hi) > (g.link_a() - g.link_b()).abs());
    }

    #[test]
    fn geometry_serde_round_trip_validates() {
        let g = GripperGeometry::reference();
        let text = toml::to_string(&g).unwrap();
        let back: GripperGeometry = toml::from_str(&text).unwrap();
        assert_eq!(g, back);
        let bad = text.replace("offset = 2.5", "offset = 9.0");
        assert!(toml::from_str::<GripperGeometry>(&bad).is_err());
    }
}
