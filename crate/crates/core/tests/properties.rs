use std::f64::consts::{FRAC_PI_2, LN_2};

use proptest::prelude::*;

use prexel_core::calibration::{
    distance_of_counter, fit_force_conductance, force_of_conductance, ForceConductanceModel, ForceEstimate,
    ForceRuns, Proximity, ProximityModel,
};
use prexel_core::daq::{adc_of_resistance, measure_counter, resistance_of_adc, Daq, DaqConfig};
use prexel_core::dsp::{
    compensate_drift, design_lowpass, filter_stream, hysteresis_error, step_metrics, FilterSpec, FilterState,
};
use prexel_core::physics::{
    capacitance_estimate, counter_of, resistance_of, simulate_charge_count, CapacitiveParams, DriftModel,
    GroundTruthState, LoadContext, LoadDirection, PiezoParams, SensorLayout, SensorModel, StepResponse,
};
use prexel_core::poly::Polynomial;
use prexel_core::robot::{
    classify_touch, guidance_from_forces, update_avoidance, AvoidanceConfig, AvoidanceState, FsmState,
    GuidanceConfig, PrexelPoseMap, RobotCommand, TouchConfig,
};
use prexel_core::wire::{decode_all, Frame, Payload, StreamDecoder};

fn frame() -> impl Strategy<Value = Frame> {
    let tactile = (1u8..=8, 1u8..=8, any::<u8>(), any::<u16>()).prop_flat_map(|(rows, cols, id, seq)| {
        prop::collection::vec(any::<u16>(), rows as usize * cols as usize)
            .prop_map(move |raw| Frame::tactile(id, seq, rows, cols, raw))
    });
    let proximity = (any::<u8>(), any::<u16>(), any::<u32>(), any::<u8>()).prop_map(|(id, seq, counter, flags)| Frame {
        sensor_id: id,
        seq,
        payload: Payload::Proximity { counter, flags },
    });
    prop_oneof![tactile, proximity]
}

fn monotone_drift() -> impl Strategy<Value = DriftModel> {
    (100.0..5000.0f64, 0.0..0.3f64, 1e-4..1e-1f64, 0.0..=1.0f64).prop_map(|(r0, frac, b, k)| {
        let delta_r = frac * r0;
        DriftModel {
            r0,
            delta_r,
            a: -k * b * delta_r,
            b,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(256) })]

    // ---- physics

    #[test]
    fn resistance_falls_with_force(f1 in 0.5..15.0f64, f2 in 0.5..15.0f64, t in 0.0..1e4f64, unloading: bool) {
        let piezo = PiezoParams::default();
        let drift = DriftModel::default();
        let load = LoadContext {
            t_since_load: t,
            direction: if unloading { LoadDirection::Unloading } else { LoadDirection::Loading },
            gain: 1.0,
        };
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let r_lo = resistance_of(lo, &load, &piezo, &drift, None).unwrap().resistance;
        let r_hi = resistance_of(hi, &load, &piezo, &drift, None).unwrap().resistance;
        prop_assert!(r_hi <= r_lo);
    }

    #[test]
    fn drift_curve_never_rises(d in monotone_drift(), span in 1.0..1e5f64) {
        prop_assert!(d.is_monotone());
        prop_assert_eq!(d.resistance(0.0), d.r0);
        let mut last = d.resistance(0.0);
        for i in 1..=1000 {
            let r = d.resistance(span * i as f64 / 1000.0);
            prop_assert!(r <= last * (1.0 + 1e-12), "rises at step {}", i);
            prop_assert!(r >= d.settled() * (1.0 - 1e-12));
            last = r;
        }
    }

    #[test]
    fn counter_falls_with_distance(x in 1.0..500.0f64, dx in 1e-3..100.0f64) {
        let cap = CapacitiveParams::patch_64();
        prop_assert!(counter_of(Some(x), &cap, None).counts > counter_of(Some(x + dx), &cap, None).counts);
    }

    #[test]
    fn distance_round_trip(x in 10.0..100.0f64) {
        let cap = CapacitiveParams::patch_64();
        let m = ProximityModel::new(cap.cal_a, cap.base_counter, cap.base_sigma, 3.0, cap.detection_range);
        let c = counter_of(Some(x), &cap, None).counts;
        match distance_of_counter(c, &m) {
            Proximity::At { distance } => prop_assert!(((distance - x) / x).abs() <= 1e-9),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn charge_count_recovers_capacitance(c in 1e-12..1e-10f64) {
        let cap = CapacitiveParams::patch_64();
        let counts = simulate_charge_count(c, &cap, 5.0);
        let quantum = 1.0 / (cap.n_cycles as f64 * cap.increment_freq * cap.series_resistance * LN_2);
        prop_assert!((capacitance_estimate(counts as f64, &cap) - c).abs() <= quantum);
    }

    // ---- daq

    #[test]
    fn adc_round_trip_within_half_step(log_r in 1.0..7.0f64) {
        let cfg = DaqConfig::default();
        let r = 10f64.powf(log_r);
        let raw = adc_of_resistance(r, &cfg);
        // |dR/draw| at the code, times half a step
        let full = cfg.full_scale() as f64;
        if raw > 0 {
            let est = resistance_of_adc(raw, &cfg).unwrap();
            let x = raw as f64;
            let slope = cfg.ref_resistor * full / (x * x);
            let lower = if x > 0.5 { cfg.ref_resistor * full / ((x - 0.5) * (x - 0.5)) } else { f64::INFINITY };
            // the divider is convex in raw, so the far half-step bound uses the slope half a step down
            prop_assert!((est - r).abs() <= 0.5 * slope.max(lower) * (1.0 + 1e-9));
        } else {
            prop_assert!(resistance_of_adc(raw, &cfg).is_none());
        }
    }

    #[test]
    fn counter_within_n_of_model(x in 10.0..150.0f64) {
        let cap = CapacitiveParams::patch_64();
        let cfg = DaqConfig::default();
        let truth = GroundTruthState::empty(8, 8).with_hand(x);
        let m = measure_counter(&truth, &cfg, &cap, None).counts as f64;
        prop_assert!((m - counter_of(Some(x), &cap, None).counts).abs() <= cfg.n_cycles as f64);
    }

    // ---- wire

    #[test]
    fn wire_round_trip(f in frame()) {
        let bytes = f.encode().unwrap();
        prop_assert_eq!(bytes.len(), f.encoded_len());
        let (frames, diags) = decode_all(&bytes);
        prop_assert!(diags.is_empty());
        prop_assert_eq!(frames, vec![f]);
    }

    #[test]
    fn decoder_survives_anything(bytes in prop::collection::vec(any::<u8>(), 0..4096), cut in 0usize..4096) {
        let cut = cut.min(bytes.len());
        let mut dec = StreamDecoder::new();
        let (mut a, _) = dec.feed(&bytes[..cut]);
        let (b, _) = dec.feed(&bytes[cut..]);
        a.extend(b);
        prop_assert_eq!(a, decode_all(&bytes).0);
        prop_assert!(dec.pending() <= bytes.len());
    }

    #[test]
    fn resync_after_garbage(
        f in frame(),
        head in prop::collection::vec(any::<u8>(), 0..300),
        tail in prop::collection::vec(any::<u8>(), 0..300),
    ) {
        let mut stream = head;
        stream.extend(f.encode().unwrap());
        stream.extend(tail);
        let (frames, _) = decode_all(&stream);
        prop_assert!(frames.contains(&f));
    }

    #[test]
    fn single_bit_flips_caught(f in frame(), bit in any::<prop::sample::Index>()) {
        let mut bytes = f.encode().unwrap();
        let b = bit.index(bytes.len() * 8);
        bytes[b / 8] ^= 1 << (b % 8);
        prop_assert!(decode_all(&bytes).0.is_empty());
    }

    // ---- dsp

    #[test]
    fn designed_filters_are_stable(half_order in 1usize..=6, fs in 5.0..2000.0f64, frac in 0.001..0.49f64) {
        let f = design_lowpass(FilterSpec { order: 2 * half_order, cutoff: frac * fs, sample_rate: fs }).unwrap();
        prop_assert!(f.sections.iter().all(|s| s.pole_radius() < 1.0));
        prop_assert!((f.dc_gain() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn chunking_does_not_change_output(
        x in prop::collection::vec(-1e4..1e4f64, 1..400),
        sizes in prop::collection::vec(1usize..50, 1..40),
    ) {
        let f = design_lowpass(FilterSpec::proximity(10.0)).unwrap();
        let (whole, _) = filter_stream(&x, &f, FilterState::zeros(&f));
        let mut state = FilterState::zeros(&f);
        let mut out = Vec::new();
        let mut i = 0;
        for n in sizes.iter().cycle() {
            if i >= x.len() { break; }
            let end = (i + n).min(x.len());
            let (y, s) = filter_stream(&x[i..end], &f, state);
            out.extend(y);
            state = s;
            i = end;
        }
        prop_assert_eq!(whole, out);
    }

    #[test]
    fn drift_compensation_undoes_synthesis(d in monotone_drift(), base in 100.0..5000.0f64, onset in 0.0..100.0f64) {
        let times: Vec<f64> = (0..500).map(|i| onset + 3.0 * i as f64).collect();
        let r: Vec<f64> = times.iter().map(|t| base * d.normalized(t - onset)).collect();
        let back = compensate_drift(&times, &r, &d, &[onset]);
        for v in back {
            prop_assert!(((v - base) / base).abs() <= 1e-9);
        }
    }

    #[test]
    fn hysteresis_is_unit_free(scale in 1e-3..1e3f64, offset in -1e3..1e3f64, h in 0.0..0.4f64) {
        let fwd: Vec<(f64, f64)> = (0..30).map(|i| { let f = 0.5 * i as f64; (f, f * f - h * 20.0) }).collect();
        let back: Vec<(f64, f64)> = fwd.iter().map(|&(f, y)| (f, y + h * 40.0)).collect();
        let base = hysteresis_error(&fwd, &back).unwrap();
        let map = |c: &[(f64, f64)]| c.iter().map(|&(f, y)| (f, scale * y + offset)).collect::<Vec<_>>();
        let scaled = hysteresis_error(&map(&fwd), &map(&back)).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn step_metrics_are_unit_free(scale in 1e-3..1e3f64, offset in -1e3..1e3f64) {
        let (t, v) = StepResponse::default().sample(1.0, 0.01, 10_000.0, 0.4);
        let base = step_metrics(&t, &v).unwrap();
        let w: Vec<f64> = v.iter().map(|y| scale * y + offset).collect();
        let m = step_metrics(&t, &w).unwrap();
        prop_assert!(base.delay_time > 0.0 && base.rise_time > 0.0);
        prop_assert!((m.delay_time - base.delay_time).abs() < 1e-9);
        prop_assert!((m.rise_time - base.rise_time).abs() < 1e-9);
    }

    // ---- calibration

    #[test]
    fn force_inversion_is_identity(f in 0.5..15.0f64) {
        let piezo = PiezoParams::default();
        let model = ForceConductanceModel::from_poly(piezo.conductance_poly.clone(), (0.5, 15.0));
        match force_of_conductance(model.conductance(f), &model) {
            ForceEstimate::Value { force, .. } => prop_assert!((force - f).abs() <= 1e-6),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn force_fit_is_deterministic(noise in prop::collection::vec(-1e-5..1e-5f64, 6 * 30)) {
        let poly = Polynomial::new(vec![1e-4, 1.51e-4, -2e-6, 1e-7]);
        let forces: Vec<f64> = (0..30).map(|i| 0.5 + 0.5 * i as f64).collect();
        let conductance = (0..6)
            .map(|r| forces.iter().enumerate().map(|(i, &f)| poly.eval(f) + noise[r * 30 + i]).collect())
            .collect();
        let runs = ForceRuns { forces, conductance };
        let a = fit_force_conductance(&runs, 3, (0.5, 15.0)).unwrap();
        let b = fit_force_conductance(&runs, 3, (0.5, 15.0)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.ci95.iter().all(|c| *c >= 0.0));
    }

    // ---- robot

    #[test]
    fn pose_rotations_are_orthonormal(theta0 in -10.0..10.0f64, big: bool) {
        let layout = if big { SensorLayout::patch_64() } else { SensorLayout::strip_16() };
        let map = PrexelPoseMap::cylindrical(&layout, theta0);
        for r in 0..layout.rows {
            for c in 0..layout.cols {
                let rot = map.transform(r, c).fixed_view::<3, 3>(0, 0).into_owned();
                prop_assert!((rot.transpose() * rot - nalgebra::Matrix3::identity()).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn guidance_respects_cap_and_deadband(forces in prop::collection::vec(0.0..15.0f64, 16), quiet in prop::collection::vec(0.0..0.5f64, 16)) {
        let map = PrexelPoseMap::cylindrical(&SensorLayout::strip_16(), 0.0);
        let cfg = GuidanceConfig::default();
        let cmd = guidance_from_forces(&forces, &map, &cfg).unwrap();
        prop_assert!(cmd.speed() <= cfg.speed_cap * (1.0 + 1e-12));
        let still = guidance_from_forces(&quiet, &map, &cfg).unwrap();
        prop_assert!(still.is_zero());
    }

    #[test]
    fn guidance_turns_with_the_map(forces in prop::collection::vec(prop_oneof![Just(0.0), 0.5..6.0f64], 16), quarter in 1usize..4) {
        let map = PrexelPoseMap::cylindrical(&SensorLayout::strip_16(), 0.3);
        let cfg = GuidanceConfig { speed_cap: f64::INFINITY, ..GuidanceConfig::default() };
        let angle = FRAC_PI_2 * quarter as f64;
        let a = guidance_from_forces(&forces, &map, &cfg).unwrap();
        let b = guidance_from_forces(&forces, &map.rotated(angle), &cfg).unwrap();
        let (s, c) = angle.sin_cos();
        let expect = [c * a.v_xy[0] - s * a.v_xy[1], s * a.v_xy[0] + c * a.v_xy[1]];
        prop_assert!((b.v_xy[0] - expect[0]).abs() < 1e-9 && (b.v_xy[1] - expect[1]).abs() < 1e-9);
        prop_assert!((b.v_z - a.v_z).abs() < 1e-12);
    }

    #[test]
    fn guidance_scales_linearly(forces in prop::collection::vec(prop_oneof![Just(0.0), 0.5..3.0f64], 16), s in 1.0..4.0f64) {
        let map = PrexelPoseMap::cylindrical(&SensorLayout::strip_16(), 0.0);
        let cfg = GuidanceConfig { speed_cap: f64::INFINITY, ..GuidanceConfig::default() };
        let a = guidance_from_forces(&forces, &map, &cfg).unwrap();
        let scaled: Vec<f64> = forces.iter().map(|f| f * s).collect();
        let b = guidance_from_forces(&scaled, &map, &cfg).unwrap();
        let (va, vb) = (a.velocity(), b.velocity());
        for i in 0..3 {
            prop_assert!((vb[i] - s * va[i]).abs() <= 1e-9 * (1.0 + va[i].abs() * s));
        }
    }

    #[test]
    fn fsm_never_double_triggers(readings in prop::collection::vec(prop_oneof![
        Just(Proximity::Absent),
        Just(Proximity::Unresolved),
        (1.0..150.0f64).prop_map(|d| Proximity::At { distance: d }),
    ], 0..400)) {
        let cfg = AvoidanceConfig::default();
        let mut s = AvoidanceState::default();
        let mut armed = true;
        let mut run = 0;
        for r in readings {
            let close = matches!(r, Proximity::At { distance } if distance < cfg.threshold_mm);
            let before = run;
            run = if close { run + 1 } else { 0 };
            let (next, cmd) = update_avoidance(r, s, &cfg);
            if let Some(c) = cmd {
                prop_assert!(armed, "second trigger without recovery");
                prop_assert!(s.state == FsmState::Monitoring && before + 1 >= cfg.k);
                prop_assert_eq!(c, RobotCommand::SafePose { target: cfg.safe_pose });
                armed = false;
            }
            if next.state == FsmState::Monitoring {
                armed = true;
            } else {
                run = 0;
            }
            s = next;
        }
    }

    #[test]
    fn touch_class_ignores_force_magnitude(
        cols in prop::collection::vec(0.0..15.0f64, 8),
        window in prop::collection::vec(1550.0..1700.0f64, 20..40),
        s in 1.0..10.0f64,
    ) {
        prop_assume!(cols.iter().any(|&f| f >= 0.5));
        let m = ProximityModel::new(3220.0, 1610.0, 4.3, 3.0, 100.0);
        let cfg = TouchConfig::default();
        let scaled: Vec<f64> = cols.iter().map(|f| f * s).collect();
        prop_assert_eq!(
            classify_touch(&cols, &window, 10.0, &m, &cfg),
            classify_touch(&scaled, &window, 10.0, &m, &cfg)
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(8) })]

    #[test]
    fn daq_streams_are_reproducible(seed: u64, force in 0.5..15.0f64) {
        let run = || {
            let mut daq = Daq::new(SensorModel::preset("16px").unwrap(), DaqConfig::default(), Some(seed)).unwrap();
            let mut truth = |t: f64| {
                let mut s = GroundTruthState::empty(2, 8).with_hand(40.0 + 10.0 * t);
                s.set_force(1, 3, force);
                s
            };
            daq.run_until(&mut truth, 1.0)
                .unwrap()
                .into_iter()
                .flat_map(|tf| tf.frame.encode().unwrap())
                .collect::<Vec<u8>>()
        };
        prop_assert_eq!(run(), run());
    }
}
