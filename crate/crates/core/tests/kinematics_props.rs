mod common;

use flexinst_core::flexure::{self, FlexureGeometry};
use flexinst_core::gripper::{self, GripperGeometry};
use flexinst_core::validation::{
    self, MarkerFrame, ReferenceConfig, ReferenceSource, SyntheticRig,
};
use proptest::prelude::*;

fn geom() -> GripperGeometry {
    GripperGeometry::reference()
}

fn slider() -> impl Strategy<Value = f64> {
    let (lo, hi) = gripper::valid_displacement_range(&geom());
    lo..=hi
}

proptest! {
    #[test]
    fn forward_matches_oracle(s in slider()) {
        let got = gripper::jaw_state(&geom(), s).unwrap();
        let want = common::pose(s);
        prop_assert!((got.alpha - want.alpha).abs() < 1e-9);
        prop_assert!((got.alpha_a - want.alpha_a).abs() < 1e-9);
        prop_assert!((got.alpha_b - want.alpha_b).abs() < 1e-9);
        prop_assert!((got.total_angle - want.total_angle).abs() < 1e-9);
        prop_assert!((got.tip_width - want.tip_width).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trip(s in slider()) {
        let g = geom();
        let theta = gripper::jaw_state(&g, s).unwrap().total_angle;
        let back = gripper::displacement_from_total_angle(&g, theta).unwrap();
        prop_assert!((back - s).abs() < 1e-6, "{s} -> {theta} -> {back}");
    }

    #[test]
    fn opening_is_monotone(a in slider(), b in slider()) {
        prop_assume!((a - b).abs() > 1e-9);
        let g = geom();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let t_lo = gripper::jaw_state(&g, lo).unwrap();
        let t_hi = gripper::jaw_state(&g, hi).unwrap();
        prop_assert!(t_lo.total_angle < t_hi.total_angle);
        prop_assert!(t_lo.tip_width < t_hi.tip_width);
    }

    #[test]
    fn force_is_linear_in_input(s in slider(), f in 0.0..50.0f64, k in 0.0..20.0f64) {
        let g = geom();
        let one = gripper::force_transmission(&g, s, f).unwrap();
        let scaled = gripper::force_transmission(&g, s, k * f).unwrap();
        prop_assert!((scaled.tip_force - k * one.tip_force).abs() <= 1e-12 * (1.0 + k * f));
        prop_assert_eq!(one.total_grip, 2.0 * one.tip_force);
        prop_assert_eq!(one.half_input, f / 2.0);
        prop_assert!((one.tip_force - f * common::pose(s).force_ratio).abs() < 1e-9 * (1.0 + f));
    }

    #[test]
    fn bend_round_trip(theta in 0.0..=90.0f64) {
        let g = FlexureGeometry::default();
        let st = flexure::tendon_from_bend(&g, theta).unwrap();
        let back = flexure::bend_from_tendon(&g, st.flex_tendon).unwrap();
        prop_assert!((back - theta).abs() < 1e-9);
        prop_assert!((st.per_notch.iter().sum::<f64>() - theta).abs() < 1e-9);
        prop_assert!(st.flex_tendon >= 0.0 && st.flex_tendon <= g.max_tendon() + 1e-12);
    }

    #[test]
    fn tendon_grows_with_bend(a in 0.0..=90.0f64, b in 0.0..=90.0f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let g = FlexureGeometry::default();
        let ta = flexure::tendon_from_bend(&g, a).unwrap().flex_tendon;
        let tb = flexure::tendon_from_bend(&g, b).unwrap().flex_tendon;
        prop_assert_eq!(a < b, ta < tb);
    }

    #[test]
    fn report_statistics(offsets in prop::collection::vec(-10.0..10.0f64, 1..40)) {
        let g = geom();
        let (_, hi) = gripper::valid_displacement_range(&g);
        let refs: Vec<_> = offsets
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let s = hi * i as f64 / offsets.len() as f64;
                ReferenceConfig { slider: s, total_angle: gripper::jaw_state(&g, s).unwrap().total_angle + o }
            })
            .collect();
        let r = validation::validate(&refs, &g, ReferenceSource::Cad).unwrap();
        let mean = r.pairs.iter().map(|p| p.abs_error()).sum::<f64>() / r.pairs.len() as f64;
        prop_assert_eq!(r.mae, mean);
        prop_assert!(r.max_err >= r.mae);
    }

    #[test]
    fn marker_angle_ignores_rigid_motion(
        s in slider(),
        yaw in -3.1..3.1f64,
        pitch in -1.5..1.5f64,
        shift in prop::array::uniform3(-100.0..100.0f64),
    ) {
        let g = geom();
        let f = validation::synth_frame(&g, &SyntheticRig::default(), s, 0.0).unwrap();
        let (cy, sy, cp, sp) = (yaw.cos(), yaw.sin(), pitch.cos(), pitch.sin());
        let mv = |p: [f64; 3]| {
            let x = cy * p[0] - sy * p[1];
            let y = sy * p[0] + cy * p[1];
            let (x, z) = (cp * x + sp * p[2], -sp * x + cp * p[2]);
            [x + shift[0], y + shift[1], z + shift[2]]
        };
        let moved = MarkerFrame {
            timestamp: 0.0,
            jaw_left_tip: mv(f.jaw_left_tip),
            jaw_right_tip: mv(f.jaw_right_tip),
            pivot: mv(f.pivot),
            flange: mv(f.flange),
        };
        let want = gripper::jaw_state(&g, s).unwrap().total_angle.abs();
        prop_assert!((validation::jaw_angle_from_markers(&moved).unwrap() - want).abs() < 1e-8);
        prop_assert!((validation::jaw_angle_in_plane(&moved).unwrap() - want).abs() < 1e-8);
    }
}
