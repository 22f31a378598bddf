//! Brute-force reference for the scissor linkage, written from the
//! geometry rather than the library's formulas: the pivot sits at the
//! origin, the slider on the +x axis, and the link joint is found by
//! intersecting the two link circles.

#![allow(dead_code)]

pub const A: f64 = 6.5;
pub const B: f64 = 8.0;
pub const LJ: f64 = 22.3;
pub const H: f64 = 2.5;
pub const L0: f64 = 13.6;

#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub alpha: f64,
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub total_angle: f64,
    pub tip_width: f64,
    pub force_ratio: f64,
}

/// Link joint position for a pivot-to-slider distance `ps`.
pub fn joint(ps: f64) -> (f64, f64) {
    let x = (A * A - B * B + ps * ps) / (2.0 * ps);
    let y = (A * A - x * x).sqrt();
    (x, y)
}

pub fn pose(slider: f64) -> Pose {
    let ps = L0 - slider;
    let (x, y) = joint(ps);
    let alpha = y.atan2(x).to_degrees();
    let alpha_b = y.atan2(ps - x).to_degrees();
    // link A makes angle alpha with the axis, link B makes alpha_b on the
    // other side, so the angle between them is 180 - alpha - alpha_b;
    // alpha_a is its complement measured from the perpendicular
    let alpha_a = alpha + alpha_b - 90.0;
    let offset = H.atan2((A * A - H * H).sqrt()).to_degrees();
    let total_angle = 2.0 * (alpha - offset);
    let tip_width = {
        // tips mirrored about the axis; signed so a crossed pose is negative
        let half = (total_angle / 2.0).to_radians();
        let upper = (LJ * half.cos(), LJ * half.sin());
        let lower = (LJ * half.cos(), -LJ * half.sin());
        upper.1 - lower.1
    };
    let force_ratio = A / (2.0 * LJ) * alpha_a.to_radians().cos() * alpha_b.to_radians().cos();
    Pose {
        alpha,
        alpha_a,
        alpha_b,
        total_angle,
        tip_width,
        force_ratio,
    }
}

/// Slider displacement for a total jaw angle by dense scan plus bisection.
pub fn slider_for_angle(total_angle: f64, hi: f64) -> f64 {
    let f = |s: f64| pose(s).total_angle - total_angle;
    let n = 2000;
    let mut lo = 0.0;
    let mut up = hi;
    for k in 0..n {
        let a = hi * k as f64 / n as f64;
        let b = hi * (k + 1) as f64 / n as f64;
        if f(a) <= 0.0 && f(b) >= 0.0 {
            lo = a;
            up = b;
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            up = mid;
        }
    }
    0.5 * (lo + up)
}
