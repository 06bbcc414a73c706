use proptest::prelude::*;

use copguide::copstream::{
    fuse_plates, parse_plate_reader, read_cop_csv, resample_uniform, CoPSample, PlateFrame,
    PlateLayout, ResampleOptions,
};
use copguide::feedback::{decide, AxisError, Decision};
use copguide::harness::{parse_live_line, read_record};
use copguide::metrics::{rmse, tat, TrialRecord};
use copguide::refpath::ReferencePath;
use copguide::{
    ActuatorCommand, Axis, Condition, Direction, EngineState, FeedbackConfig, SessionPlan,
    WalkerParams,
};

fn plate_frame() -> impl Strategy<Value = PlateFrame> {
    (0u32..6, 0.0..1000.0f64, -0.3..0.3f64, -0.2..0.2f64).prop_map(|(id, fz, lx, ly)| PlateFrame {
        plate_id: id,
        t: 1.0,
        fz,
        cop_local_x: lx,
        cop_local_y: ly,
        origin_x: 0.6 * id as f64,
        origin_y: 0.0,
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn ramp_path(n: usize, points: Vec<(f64, f64)>) -> ReferencePath {
    ReferencePath::new(100.0, points.into_iter().take(n).collect()).unwrap()
}

fn direction() -> impl Strategy<Value = Direction> {
    prop::sample::select(Direction::ALL.to_vec())
}

proptest! {
    #[test]
    fn fusion_ignores_plate_order(frames in prop::collection::vec(plate_frame(), 1..7).prop_shuffle(), seed in any::<u64>()) {
        let a = fuse_plates(&frames, 20.0, None).unwrap();
        let mut shuffled = frames.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let b = fuse_plates(&shuffled, 20.0, None).unwrap();
        prop_assert_eq!(a.valid, b.valid);
        prop_assert!(close(a.x, b.x) && close(a.y, b.y));
    }

    #[test]
    fn fusion_of_identical_plates_is_one_plate(f in plate_frame(), k in 1usize..8) {
        let one = fuse_plates(&[f], 0.0, None).unwrap();
        let many = fuse_plates(&vec![f; k], 0.0, None).unwrap();
        prop_assume!(f.fz > 0.0);
        prop_assert!(close(one.x, many.x) && close(one.y, many.y));
    }

    #[test]
    fn fusion_stays_inside_loaded_plates(frames in prop::collection::vec(plate_frame(), 1..7)) {
        let s = fuse_plates(&frames, 20.0, None).unwrap();
        let loaded: Vec<&PlateFrame> = frames.iter().filter(|f| f.fz > 0.0).collect();
        if s.valid {
            let lo = loaded.iter().map(|f| f.global_x()).fold(f64::INFINITY, f64::min);
            let hi = loaded.iter().map(|f| f.global_x()).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.x >= lo - 1e-12 && s.x <= hi + 1e-12);
            let lo = loaded.iter().map(|f| f.global_y()).fold(f64::INFINITY, f64::min);
            let hi = loaded.iter().map(|f| f.global_y()).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.y >= lo - 1e-12 && s.y <= hi + 1e-12);
        } else {
            prop_assert!(frames.iter().map(|f| f.fz).sum::<f64>() < 20.0);
        }
    }

    #[test]
    fn decide_is_odd(dx in -0.5..0.5f64, dy in -0.5..0.5f64, th in 0.01..0.3f64) {
        let d = decide(AxisError { dx, dy }, th);
        let m = decide(AxisError { dx: -dx, dy: -dy }, th);
        let flipped: Vec<Direction> = d.iter().map(Direction::opposite).collect();
        prop_assert_eq!(m.iter().collect::<Vec<_>>(), flipped);
    }

    #[test]
    fn decide_uses_each_axis_once(dx in -0.5..0.5f64, dy in -0.5..0.5f64, th in 0.01..0.3f64) {
        let d: Decision = decide(AxisError { dx, dy }, th);
        let ap = d.iter().filter(|u| u.axis() == Axis::Ap).count();
        let ml = d.iter().filter(|u| u.axis() == Axis::Ml).count();
        prop_assert!(ap <= 1 && ml <= 1);
        prop_assert_eq!(ap == 1, dx.abs() > th);
        prop_assert_eq!(ml == 1, dy.abs() > th);
    }

    #[test]
    fn pulses_never_overlap_on_an_axis(
        offsets in prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64), 50..400),
        pulse_ms in 50u32..900,
    ) {
        let path = ReferencePath::new(100.0, vec![(0.0, 0.0); 2]).unwrap();
        let config = FeedbackConfig { pulse_duration: pulse_ms as f64 / 1000.0, ..FeedbackConfig::default() };
        let mut engine = EngineState::new();
        let mut last: [Option<f64>; 2] = [None, None];
        let mut seq = 0;
        for (k, (x, y)) in offsets.iter().enumerate() {
            let t = k as f64 / 100.0;
            for c in engine.tick(&path, &CoPSample::new(t, *x, *y), &config).unwrap() {
                let slot = &mut last[c.unit.axis() as usize];
                if let Some(prev) = *slot {
                    prop_assert!(t - prev >= config.pulse_duration - 1e-9);
                }
                *slot = Some(t);
                prop_assert_eq!(c.seq, seq + 1);
                seq = c.seq;
            }
        }
    }

    #[test]
    fn on_reference_walker_gets_no_commands(
        pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..300),
        jitter in prop::collection::vec((-0.099..0.099f64, -0.099..0.099f64), 300),
    ) {
        let n = pts.len();
        let path = ramp_path(n, pts);
        let config = FeedbackConfig::default();
        let mut engine = EngineState::new();
        for (k, &(jx, jy)) in jitter.iter().enumerate().take(n) {
            let t = path.time_at(k);
            let (ax, ay) = path.anticipatory_lookup(t, config.anticipation).unwrap();
            let cmds = engine.tick(&path, &CoPSample::new(t, ax + jx, ay + jy), &config).unwrap();
            prop_assert!(cmds.is_empty());
        }
    }

    #[test]
    fn rmse_bounds_mean_absolute_error(errs in prop::collection::vec(-1.0..1.0f64, 1..500)) {
        let rec = offset_record(&errs);
        let r = rmse(&rec, Axis::Ap).unwrap();
        let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64;
        prop_assert!(r >= mae - 1e-12);
    }

    #[test]
    fn indicators_ignore_sample_order(errs in prop::collection::vec(-1.0..1.0f64, 1..300), th in 0.01..1.0f64) {
        let mut rev = errs.clone();
        rev.reverse();
        let (a, b) = (offset_record(&errs), offset_record(&rev));
        prop_assert!(close(rmse(&a, Axis::Ap).unwrap(), rmse(&b, Axis::Ap).unwrap()));
        prop_assert_eq!(tat(&a, Axis::Ap, th).unwrap(), tat(&b, Axis::Ap, th).unwrap());
    }

    #[test]
    fn rmse_scales_linearly(errs in prop::collection::vec(-1.0..1.0f64, 1..300), c in -4.0..4.0f64) {
        let scaled: Vec<f64> = errs.iter().map(|e| e * c).collect();
        let a = rmse(&offset_record(&errs), Axis::Ap).unwrap();
        let b = rmse(&offset_record(&scaled), Axis::Ap).unwrap();
        prop_assert!((b - c.abs() * a).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn tat_limits(errs in prop::collection::vec(-1.0..1.0f64, 1..300)) {
        let rec = offset_record(&errs);
        prop_assert_eq!(tat(&rec, Axis::Ap, 1e9).unwrap(), 0.0);
        let nonzero = errs.iter().filter(|e| **e != 0.0).count();
        let expected = 100.0 * nonzero as f64 / errs.len() as f64;
        prop_assert!((tat(&rec, Axis::Ap, 1e-300).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn lookup_is_continuous(pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..100), t in 0.0..1.0f64, h in 0.0..0.01f64) {
        let n = pts.len();
        let path = ramp_path(n, pts);
        let slope = path
            .points()
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).abs().max((w[1].1 - w[0].1).abs()) * path.rate())
            .fold(0.0, f64::max);
        let (a, b) = (path.lookup(t), path.lookup(t + h));
        prop_assert!((a.0 - b.0).abs() <= slope * h + 1e-9);
        prop_assert!((a.1 - b.1).abs() <= slope * h + 1e-9);
    }

    #[test]
    fn anticipatory_lookup_shifts_time(pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..100), t in -0.5..1.5f64, ta in 0.0..2.0f64) {
        let n = pts.len();
        let path = ramp_path(n, pts);
        prop_assert_eq!(path.anticipatory_lookup(t, ta).unwrap(), path.lookup(t + ta));
    }

    #[test]
    fn path_text_roundtrips(pts in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..200), rate in 1.0..500.0f64) {
        let path = ReferencePath::new(rate, pts).unwrap();
        prop_assert_eq!(ReferencePath::parse(&path.to_file_string()).unwrap(), path);
    }

    #[test]
    fn frames_roundtrip(unit in direction(), intensity in any::<u8>(), duration_ms in 1u32..=65535, seq in 0u32..256) {
        let c = ActuatorCommand { unit, intensity, duration_ms, seq };
        prop_assert_eq!(ActuatorCommand::decode(&c.encode().unwrap()).unwrap(), c);
    }

    #[test]
    fn resampling_is_idempotent(steps in prop::collection::vec((0.001..0.05f64, -1.0..1.0f64, -1.0..1.0f64, prop::bool::weighted(0.9)), 2..200)) {
        let mut t = 0.0;
        let samples: Vec<CoPSample> = steps
            .iter()
            .map(|&(dt, x, y, valid)| {
                t += dt;
                CoPSample { t, x, y, valid }
            })
            .collect();
        let once = resample_uniform(&samples, ResampleOptions::default());
        prop_assume!(once.is_ok());
        let once = once.unwrap();
        prop_assume!(once.len() >= 2);
        prop_assert_eq!(resample_uniform(&once, ResampleOptions::default()).unwrap(), once);
    }

    #[test]
    fn text_parsers_do_not_panic(s in "\\PC{0,200}") {
        let _ = ReferencePath::parse(&s);
        let _ = SessionPlan::parse(&s, None);
        let _ = WalkerParams::parse(&s);
        let _ = parse_live_line(&s);
        let _ = read_record(&s);
        let _ = read_cop_csv(s.as_bytes());
        let _ = PlateLayout::from_reader(s.as_bytes());
        let _ = parse_plate_reader(s.as_bytes(), &PlateLayout::row(6, 0.6));
    }

    #[test]
    fn csv_shaped_input_does_not_panic(rows in prop::collection::vec("[0-9.,eE+\\-a-z ]{0,40}", 0..20)) {
        let body = rows.join("\n");
        let _ = read_cop_csv(format!("t,x,y,valid\n{body}").as_bytes());
        let _ = parse_plate_reader(format!("t,plate_id,fz,cop_x,cop_y\n{body}").as_bytes(), &PlateLayout::row(6, 0.6));
        let _ = ReferencePath::parse(&format!("x,y\n{body}"));
        let _ = read_record(&format!("# condition=EF_O rate=100 th=0.1\nt,ref_x,ref_y,x,y,valid\n{body}"));
    }

    #[test]
    fn frame_decoder_does_not_panic(bytes in prop::collection::vec(any::<u8>(), 0..16)) {
        let _ = ActuatorCommand::decode(&bytes);
    }
}

/// A flat reference with the measurement offset by `errs` along x.
fn offset_record(errs: &[f64]) -> TrialRecord {
    let n = errs.len().max(2);
    let reference = ReferencePath::new(100.0, vec![(0.0, 0.0); n]).unwrap();
    let measured = (0..n)
        .map(|k| {
            CoPSample::new(
                reference.time_at(k),
                -errs.get(k).copied().unwrap_or(errs[0]),
                0.0,
            )
        })
        .collect();
    TrialRecord::new(reference, measured, Condition::EfO, "prop").unwrap()
}
