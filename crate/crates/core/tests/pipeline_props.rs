use flexinst_core::input::{
    self, dead_zone, low_pass, map_axes, InputPipeline, NormalizedAxes, PipelineConfig,
    PriorityMode, RawAxes,
};
use proptest::prelude::*;

fn axes() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(-1.0..=1.0f64)
}

fn raw() -> impl Strategy<Value = RawAxes> {
    prop::array::uniform6(-350i32..=350).prop_map(|v| RawAxes {
        tx: v[0],
        ty: v[1],
        tz: v[2],
        rx: v[3],
        ry: v[4],
        rz: v[5],
        buttons: 0,
    })
}

proptest! {
    #[test]
    fn dead_zone_is_lipschitz_and_monotone(x in -1.0..=1.0f64, y in -1.0..=1.0f64, d in 0.0..0.9f64) {
        let (fx, fy) = (dead_zone(x, d), dead_zone(y, d));
        prop_assert!((fx - fy).abs() <= (x - y).abs() / (1.0 - d) + 1e-12);
        if x <= y {
            prop_assert!(fx <= fy);
        }
        prop_assert!(fx.abs() <= 1.0 + 1e-12);
        prop_assert_eq!(dead_zone(-x, d), -fx);
        if x.abs() <= d {
            prop_assert_eq!(fx, 0.0);
        }
    }

    #[test]
    fn filter_reaches_constant_input(start in -1.0..=1.0f64, target in -1.0..=1.0f64, beta in 0.01..=1.0f64) {
        let n = (0.01f64.ln() / (1.0 - beta).ln()).ceil();
        let n = if n.is_finite() { n as usize } else { 1 };
        let mut y = start;
        for _ in 0..n.max(1) {
            y = low_pass(y, target, beta);
        }
        prop_assert!((y - target).abs() <= 0.01 * (start - target).abs() + 1e-12);
    }

    #[test]
    fn dominant_axis_emits_one_joint(f in axes()) {
        let cfg = PipelineConfig::default();
        let cmd = map_axes(&NormalizedAxes(f), &cfg);
        prop_assert!(cmd.nonzero_count() <= 1);
    }

    #[test]
    fn argmax_survives_common_scaling(f in axes(), k in 0.01..100.0f64) {
        let cfg = PipelineConfig::default();
        let scaled = f.map(|v| v * k);
        let a = map_axes(&NormalizedAxes(f), &cfg).as_array();
        let b = map_axes(&NormalizedAxes(scaled), &cfg).as_array();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(*x == 0.0, *y == 0.0);
            prop_assert_eq!(x.signum(), y.signum());
        }
    }

    #[test]
    fn commands_stay_within_gains(seq in prop::collection::vec(raw(), 1..60), all in any::<bool>()) {
        let cfg = PipelineConfig {
            priority: if all { PriorityMode::AllAxes } else { PriorityMode::DominantAxis },
            ..PipelineConfig::default()
        };
        let g = cfg.gains;
        let mut p = InputPipeline::new(cfg).unwrap();
        for r in &seq {
            let out = p.process(r);
            for v in out.normalized.0.iter().chain(out.filtered.0.iter()) {
                prop_assert!(v.abs() <= 1.0);
            }
            let c = out.command;
            prop_assert!(c.q1dot.abs() <= g.q1 && c.q2dot.abs() <= g.q2);
            prop_assert!(c.q3dot.abs() <= g.q3 && c.q4dot.abs() <= g.q4);
            if !all {
                prop_assert!(c.nonzero_count() <= 1);
            }
        }
    }

    #[test]
    fn released_device_settles_to_exact_zero(seq in prop::collection::vec(raw(), 1..30)) {
        let mut p = InputPipeline::new(PipelineConfig::default()).unwrap();
        for r in &seq {
            p.process(r);
        }
        let mut last = p.process(&RawAxes::default());
        for _ in 0..200 {
            last = p.process(&RawAxes::default());
        }
        prop_assert!(last.command.is_zero());
        prop_assert_eq!(last.filtered, NormalizedAxes::default());
    }

    #[test]
    fn normalization_is_clamped(v in prop::array::uniform6(-2000i32..2000)) {
        let r = RawAxes { tx: v[0], ty: v[1], tz: v[2], rx: v[3], ry: v[4], rz: v[5], buttons: 0 };
        let n = input::normalize(&r, 350.0);
        prop_assert!(n.0.iter().all(|x| x.abs() <= 1.0));
    }
}
