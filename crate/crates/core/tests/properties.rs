use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cyborg_core::gap::{
    required_clearance, run_gap_trial, Arrangement, GapCalibration, NegotiationState, ShutterModel,
};
use cyborg_core::link::{
    crc16, decode_frame, encode_frame, Backpack, BackpackEvent, Body, CommandPayload, Direction,
    LinkModel, Message, NackReason, SimLink, TelemetryPayload,
};
use cyborg_core::nav::{
    heading_error, nav_decide, run_navigation, AgentObservation, NavDecision, NavTarget, NavWorld,
    NavigationConfig,
};
use cyborg_core::sim::{normalize_deg, Agent, Pose, ResponseProfile, SpontaneousBehavior};
use cyborg_core::stats::{chi_square, descriptive, ContingencyTable};
use cyborg_core::stim::{
    build_pulse_train, charge_residual_codes, pair_count_for, quantize_voltage,
    verify_charge_balance, ChannelSet, DacModel, Polarity, StimulusCommand,
};

fn command() -> impl Strategy<Value = StimulusCommand> {
    (
        1u8..16,
        0.01f64..=2.5,
        1u32..60,
        0u32..3000,
        0u32..30,
        any::<bool>(),
    )
        .prop_map(|(mask, amp, width, extra, gap, neg)| StimulusCommand {
            channels: ChannelSet::from_mask(mask),
            amplitude_v: amp,
            pulse_width_ms: width,
            duration_ms: 2 * width + extra,
            inter_pulse_gap_ms: gap,
            polarity: if neg {
                Polarity::NegativeFirst
            } else {
                Polarity::PositiveFirst
            },
        })
}

fn message() -> impl Strategy<Value = Message> {
    let command = (1u8..16, 1u16..=2500, 1u16..200, 0u16..2000).prop_map(|(mask, mv, w, extra)| {
        Body::Command(CommandPayload {
            channel_mask: mask,
            amplitude_mv: mv,
            pulse_width_ms: w,
            duration_ms: 2 * w + extra,
        })
    });
    let telemetry = (
        any::<u32>(),
        -1e6f64..1e6,
        -1e6f64..1e6,
        -720f64..720.0,
        -300f64..300.0,
        -900f64..900.0,
        0u8..5,
    )
        .prop_map(|(tick, x, y, h, v, w, s)| {
            Body::Telemetry(TelemetryPayload::from_state(tick, x, y, h, v, w, s))
        });
    let nack = prop_oneof![
        Just(NackReason::Malformed),
        Just(NackReason::UnsupportedChannels),
        Just(NackReason::InvalidParameters),
    ]
    .prop_map(Body::Nack);
    let body = prop_oneof![command, telemetry, Just(Body::Ack), nack];
    (any::<u16>(), body).prop_map(|(seq, body)| Message::new(seq, body))
}

fn pose() -> impl Strategy<Value = Pose> {
    (-2000f64..2000.0, -2000f64..2000.0, -179.9f64..180.0).prop_map(|(x, y, h)| Pose::new(x, y, h))
}

proptest! {
    #[test]
    fn pulse_trains_are_charge_balanced(cmd in command()) {
        let dac = DacModel::default();
        let train = build_pulse_train(&cmd, &dac).unwrap();
        prop_assert_eq!(charge_residual_codes(&train), 0);
        prop_assert_eq!(verify_charge_balance(&train, &dac), 0.0);
        prop_assert_eq!(train.pair_count() as u32, pair_count_for(&cmd));
        prop_assert!(train.span_ms() <= cmd.duration_ms);
    }

    #[test]
    fn pair_count_grows_with_duration(cmd in command(), more in 0u32..2000) {
        let longer = StimulusCommand { duration_ms: cmd.duration_ms + more, ..cmd };
        prop_assert!(pair_count_for(&longer) >= pair_count_for(&cmd));
    }

    #[test]
    fn quantization_error_within_half_lsb(v in 0.0f64..=5.0) {
        let dac = DacModel::default();
        let code = quantize_voltage(v, &dac).unwrap();
        let err = (dac.code_to_voltage(code) - v).abs();
        // Codes reach 4095 * LSB, so only the top half step can sit further out.
        if v <= dac.code_to_voltage(dac.max_code()) {
            prop_assert!(err <= dac.lsb() / 2.0 + 1e-12, "v {} code {} err {}", v, code, err);
        }
    }

    #[test]
    fn frames_round_trip(msg in message()) {
        let bytes = encode_frame(&msg).unwrap();
        prop_assert_eq!(decode_frame(&bytes).unwrap(), msg);
    }

    #[test]
    fn single_bit_flips_are_rejected(msg in message(), pick in any::<prop::sample::Index>()) {
        let bytes = encode_frame(&msg).unwrap();
        let bit = pick.index(bytes.len() * 8);
        let mut bad = bytes.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        prop_assert!(decode_frame(&bad).is_err(), "flip of bit {} accepted", bit);
    }

    #[test]
    fn crc_changes_on_any_single_flip(data in prop::collection::vec(any::<u8>(), 1..64), pick in any::<prop::sample::Index>()) {
        let bit = pick.index(data.len() * 8);
        let mut bad = data.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        prop_assert_ne!(crc16(&data), crc16(&bad));
    }

    #[test]
    fn duplicate_commands_apply_once(seq in any::<u16>(), copies in 1usize..6, mask in 1u8..8) {
        let cmd = StimulusCommand::standard(ChannelSet::from_mask(mask), 400);
        let frame = encode_frame(&Message::new(seq, Body::Command(CommandPayload::from_stimulus(&cmd).unwrap()))).unwrap();
        let mut link = SimLink::seeded(LinkModel::lossless(), 3);
        let mut pack = Backpack::new();
        let mut applied = 0;
        for _ in 0..copies {
            link.send(Direction::Uplink, &frame, 0.0);
        }
        let events = pack.poll(&mut link, 1000.0, |_| {
            applied += 1;
            Ok(())
        });
        prop_assert_eq!(applied, 1);
        let dups = events.iter().filter(|e| matches!(e, BackpackEvent::Duplicate { .. })).count();
        prop_assert_eq!(dups, copies - 1);
    }

    #[test]
    fn normalized_heading_in_range(a in -1e5f64..1e5) {
        let n = normalize_deg(a);
        prop_assert!(n > -180.0 && n <= 180.0);
        let turns = (a - n) / 360.0;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn nav_decide_is_pure(p in pose(), v in -50f64..300.0, active in any::<bool>(), tx in -2000f64..2000.0, ty in -2000f64..2000.0) {
        let cfg = NavigationConfig::default();
        let obs = AgentObservation { pose: p, forward_velocity: v, stim_active: active };
        let t = NavTarget::new(tx, ty);
        let first = nav_decide(&obs, &t, &cfg);
        for _ in 0..3 {
            prop_assert_eq!(nav_decide(&obs, &t, &cfg), first);
        }
    }

    #[test]
    fn decisions_respect_thresholds(p in pose(), v in -50f64..300.0, tx in -2000f64..2000.0, ty in -2000f64..2000.0) {
        let cfg = NavigationConfig::default();
        let obs = AgentObservation { pose: p, forward_velocity: v, stim_active: false };
        let t = NavTarget::new(tx, ty);
        let d = nav_decide(&obs, &t, &cfg);
        if let Ok(err) = heading_error(&p, &t) {
            match d {
                NavDecision::StimulateLeftAntenna | NavDecision::StimulateRightAntenna => {
                    prop_assert!(err.abs() > cfg.heading_threshold_deg)
                }
                NavDecision::StimulateCerci => {
                    prop_assert!(err.abs() <= cfg.heading_threshold_deg && v < cfg.speed_threshold_mms)
                }
                _ => {}
            }
        }
    }

    #[test]
    fn decisions_mirror_across_x_axis(p in pose(), v in -50f64..300.0, tx in -2000f64..2000.0, ty in -2000f64..2000.0) {
        let cfg = NavigationConfig::default();
        let obs = AgentObservation { pose: p, forward_velocity: v, stim_active: false };
        let mp = Pose::new(p.x_mm, -p.y_mm, normalize_deg(-p.heading_deg));
        let mobs = AgentObservation { pose: mp, ..obs };
        let t = NavTarget::new(tx, ty);
        let mt = NavTarget::new(tx, -ty);
        let (a, b) = (nav_decide(&obs, &t, &cfg), nav_decide(&mobs, &mt, &cfg));
        // Exactly on the threshold the two sides may round differently.
        if let Ok(err) = heading_error(&p, &t) {
            prop_assume!((err.abs() - cfg.heading_threshold_deg).abs() > 1e-9 && err.abs() < 180.0 - 1e-9);
        }
        prop_assert_eq!(b, a.mirrored());
    }

    #[test]
    fn gap_paths_follow_the_machine(seed in any::<u64>(), which in 0usize..3, budget in 1f64..120.0) {
        let cal = GapCalibration::default();
        let mut profile = cal.profile(Arrangement::ALL[which]).unwrap().clone();
        profile.time_budget_s = budget;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = run_gap_trial(&profile, &cal.shutter, &mut rng);
        prop_assert_eq!(out.path[0], NegotiationState::Contact);
        prop_assert_eq!(*out.path.last().unwrap(), out.terminal);
        prop_assert!(out.terminal.is_terminal());
        prop_assert_eq!(out.path.iter().filter(|s| s.is_terminal()).count(), 1);
        let n = out.path.len();
        for (i, w) in out.path.windows(2).enumerate() {
            if !w[0].allowed_next().contains(&w[1]) {
                // Only running out of time may cut a trial short, and it ends stuck.
                prop_assert!(i == n - 2 && w[1] == NegotiationState::Stuck, "{} -> {}", w[0], w[1]);
                prop_assert!(out.elapsed_s >= budget - 1e-9);
            }
        }
        prop_assert!(out.elapsed_s <= budget + 1e-9);
    }

    #[test]
    fn clearance_is_monotone(added in 0f64..20.0, more in 0f64..10.0, gap in 0f64..20.0, lower in 0f64..10.0, which in 0usize..3) {
        let cal = GapCalibration::default();
        let mut profile = cal.profile(Arrangement::ALL[which]).unwrap().clone();
        let shutter = ShutterModel { gap_height_mm: gap, ..ShutterModel::default() };
        profile.added_height_mm = added;
        let base = required_clearance(&profile, &shutter);
        let mut taller = profile.clone();
        taller.added_height_mm = added + more;
        prop_assert!(required_clearance(&taller, &shutter) >= base);
        let wider = ShutterModel { gap_height_mm: gap + lower, ..shutter };
        prop_assert!(required_clearance(&profile, &wider) <= base);
    }

    #[test]
    fn chi_square_ignores_row_and_column_order(
        counts in prop::collection::vec(prop::collection::vec(1u64..200, 3), 3),
        rperm in Just(vec![0usize, 1, 2]).prop_shuffle(),
        cperm in Just(vec![0usize, 1, 2]).prop_shuffle(),
    ) {
        let a = chi_square(&ContingencyTable::new(counts.clone()).unwrap()).unwrap();
        let permuted: Vec<Vec<u64>> = rperm.iter().map(|&r| cperm.iter().map(|&c| counts[r][c]).collect()).collect();
        let b = chi_square(&ContingencyTable::new(permuted).unwrap()).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
        prop_assert!((a.p_value - b.p_value).abs() <= 1e-12);
    }

    #[test]
    fn chi_square_scales_with_counts(counts in prop::collection::vec(prop::collection::vec(1u64..200, 2), 2..5), k in 2u64..20) {
        let a = chi_square(&ContingencyTable::new(counts.clone()).unwrap()).unwrap();
        let scaled: Vec<Vec<u64>> = counts.iter().map(|r| r.iter().map(|c| c * k).collect()).collect();
        let b = chi_square(&ContingencyTable::new(scaled).unwrap()).unwrap();
        prop_assert!((b.statistic - k as f64 * a.statistic).abs() <= 1e-9 * b.statistic.max(1.0));
        prop_assert!(b.p_value <= a.p_value);
    }

    #[test]
    fn standard_error_times_root_n_is_sd(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let d = descriptive(&xs).unwrap();
        let back = d.se * (d.n as f64).sqrt();
        prop_assert!((back - d.sd).abs() <= 1e-12 * d.sd.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn agent_heading_stays_normalized(seed in any::<u64>(), h in -179.0f64..180.0, mask in 1u8..8) {
        let model = ResponseProfile::default().compile().unwrap();
        let mut agent = Agent::seeded(Pose::new(0.0, 0.0, h), model, SpontaneousBehavior::default(), seed);
        let mut last_t = 0.0;
        for i in 0..600 {
            if i % 80 == 0 {
                let _ = agent.apply(&StimulusCommand::standard(ChannelSet::from_mask(mask & 0b111), 400));
            }
            let s = agent.step(10.0);
            let p = agent.pose();
            prop_assert!(p.heading_deg > -180.0 && p.heading_deg <= 180.0);
            prop_assert!(p.t_ms >= last_t);
            prop_assert!(s.mean_forward.abs() <= 300.0 + 1e-9);
            last_t = p.t_ms;
        }
    }

    #[test]
    fn closed_loop_respects_refractory_and_cerci_gate(seed in any::<u64>(), h in -179.0f64..180.0) {
        let model = ResponseProfile::default().compile().unwrap();
        let world = NavWorld::new(Pose::new(0.0, 0.0, h), model);
        let cfg = NavigationConfig::default();
        let r = run_navigation(&world, &NavTarget::new(1000.0, 0.0), &cfg, seed);
        for w in r.decisions.windows(2) {
            let dur = w[0].decision.command(&cfg).unwrap().duration_ms;
            prop_assert!(w[1].t_ms - w[0].t_ms >= f64::from(cfg.refractory_for(dur)), "{:?}", w);
        }
        for d in r.decisions.iter().filter(|d| d.decision == NavDecision::StimulateCerci) {
            prop_assert!(d.prior_velocity_mms < cfg.speed_threshold_mms, "{:?}", d);
        }
    }

    #[test]
    fn mirrored_trials_swap_left_and_right(seed in any::<u64>(), tx in 400f64..1200.0, ty in -400f64..400.0) {
        let model = ResponseProfile::symmetric().compile().unwrap();
        let world = NavWorld::new(Pose::new(0.0, 0.0, 20.0), model);
        let cfg = NavigationConfig::default();
        let a = run_navigation(&world, &NavTarget::new(tx, ty), &cfg, seed);
        let b = run_navigation(&world.mirrored(), &NavTarget::new(tx, -ty), &cfg, seed);
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.decisions.len(), b.decisions.len());
        for (da, db) in a.decisions.iter().zip(&b.decisions) {
            prop_assert_eq!(db.decision, da.decision.mirrored());
            prop_assert_eq!(da.tick, db.tick);
        }
        prop_assert_eq!(a.counts.left_antenna, b.counts.right_antenna);
        prop_assert_eq!(a.counts.right_antenna, b.counts.left_antenna);
    }
}
