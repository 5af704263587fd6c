use mirss_core::dataset::{check_singer_disjoint, SegmentId};
use mirss_core::{
    improvement, mix_at_snr, pair_segments, pit_evaluate, resample, sdr, segment, si_snr,
    split_by_singer, trend_distance, Metric, PairingKind, PairingScheme, PitchTrack, SplitRatios,
    StemEntry, Waveform, INFINITY_DB, PENALTY,
};
use proptest::prelude::*;

fn track(p: Vec<f64>) -> PitchTrack {
    PitchTrack {
        pitches_hz: p,
        hop_seconds: 0.01,
        fmin_hz: 50.0,
        fmax_hz: 400.0,
    }
}

fn pitch_value() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 3 => (50u32..=400).prop_map(f64::from)]
}

fn track_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(pitch_value(), n),
            prop::collection::vec(pitch_value(), n),
        )
    })
}

/// Straightforward masked sum over interior frames.
fn reference_score(a: &[f64], b: &[f64]) -> f64 {
    if !a.iter().any(|&x| x > 0.0) || !b.iter().any(|&x| x > 0.0) {
        return PENALTY;
    }
    (1..a.len() - 1)
        .filter(|&i| (i - 1..=i + 1).all(|k| a[k] > 0.0 && b[k] > 0.0))
        .map(|i| ((a[i + 1] - a[i]) - (b[i + 1] - b[i])).abs())
        .sum()
}

fn signal(len: usize) -> impl Strategy<Value = Waveform> {
    prop::collection::vec(-1.0f64..1.0, len).prop_map(|v| Waveform::new(v, 8000).unwrap())
}

fn signal_pair(lo: usize, hi: usize) -> impl Strategy<Value = (Waveform, Waveform)> {
    (lo..hi).prop_flat_map(|n| (signal(n), signal(n)))
}

fn energetic(w: &Waveform) -> bool {
    w.mean_square() > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn trend_matches_reference((a, b) in track_pair()) {
        let d = trend_distance(&track(a.clone()), &track(b.clone())).unwrap();
        prop_assert_eq!(d.score, reference_score(&a, &b));
    }

    #[test]
    fn trend_is_symmetric((a, b) in track_pair()) {
        let x = trend_distance(&track(a.clone()), &track(b.clone())).unwrap();
        let y = trend_distance(&track(b), &track(a)).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn trend_bounds((a, b) in track_pair()) {
        let d = trend_distance(&track(a.clone()), &track(b)).unwrap();
        prop_assert!(d.score >= 0.0);
        prop_assert!(d.contributing_frames <= a.len() - 2);
        prop_assert_eq!(d.penalized, d.score == PENALTY);
    }

    #[test]
    fn silencing_a_frame_never_adds_contributions((a, b) in track_pair(), k in 0usize..12) {
        let before = trend_distance(&track(a.clone()), &track(b.clone())).unwrap();
        let mut a2 = a.clone();
        a2[k % a.len()] = 0.0;
        let after = trend_distance(&track(a2), &track(b)).unwrap();
        if !after.penalized {
            prop_assert!(after.contributing_frames <= before.contributing_frames);
        }
    }

    #[test]
    fn identical_voiced_tracks_score_zero(a in prop::collection::vec(50u32..400, 3..12)) {
        let t = track(a.into_iter().map(f64::from).collect());
        prop_assert_eq!(trend_distance(&t, &t).unwrap().score, 0.0);
    }

    #[test]
    fn constant_offset_does_not_change_trend(
        a in prop::collection::vec(50u32..400, 3..12),
        offset in 1u32..100,
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|x| x + f64::from(offset)).collect();
        prop_assert_eq!(trend_distance(&track(a), &track(b)).unwrap().score, 0.0);
    }

    #[test]
    fn segments_concatenate_to_a_prefix(n in 0usize..5000, seconds in 0.01f64..0.3) {
        let w = Waveform::from_fn(n, 8000, |t| (t * 911.0).sin() * 0.5);
        let segs = segment(&w, seconds, "song", "singer").unwrap();
        let len = (seconds * 8000.0).round() as usize;
        prop_assert_eq!(segs.len(), n / len);
        let joined: Vec<f64> = segs.iter().flat_map(|s| s.audio.samples().to_vec()).collect();
        prop_assert_eq!(&joined[..], &w.samples()[..joined.len()]);
        for (i, s) in segs.iter().enumerate() {
            prop_assert_eq!(s.index, i);
        }
    }

    #[test]
    fn resample_is_scale_equivariant(
        w in signal(400),
        alpha in 0.001f64..=1.0,
        to in prop::sample::select(vec![4000u32, 8000, 11025, 16000]),
    ) {
        let w = Waveform::new(w.samples().to_vec(), 22050).unwrap();
        let x = resample(&w.scaled(alpha), to).unwrap();
        let y = resample(&w, to).unwrap().scaled(alpha);
        let peak = y.peak().max(1e-12);
        for (p, q) in x.samples().iter().zip(y.samples()) {
            prop_assert!((p - q).abs() <= 1e-6 * peak);
        }
    }

    #[test]
    fn resample_length(n in 0usize..3000, from in 1000u32..50000, to in 1000u32..50000) {
        let w = Waveform::silence(n, from);
        let out = resample(&w, to).unwrap();
        let want = (n as f64 * to as f64 / from as f64).round() as usize;
        prop_assert!(out.len().abs_diff(want) <= 1);
        prop_assert_eq!(out.sample_rate(), to);
    }

    #[test]
    fn si_snr_ignores_scale((r, e) in signal_pair(32, 512), alpha in 0.01f64..100.0) {
        prop_assume!(energetic(&r) && energetic(&e));
        let x = si_snr(&r, &e).unwrap();
        let y = si_snr(&r, &e.scaled(alpha)).unwrap();
        prop_assert!((x - y).abs() <= 1e-6);
    }

    #[test]
    fn metrics_of_the_mixture_improve_by_zero((r, m) in signal_pair(32, 512)) {
        prop_assume!(energetic(&r) && energetic(&m));
        for metric in [Metric::SiSnr, Metric::Sdr] {
            prop_assert_eq!(improvement(metric, &r, &m, &m).unwrap(), 0.0);
        }
    }

    #[test]
    fn sdr_penalizes_gain_but_si_snr_does_not(r in signal(256), gain in 1.5f64..4.0) {
        prop_assume!(energetic(&r));
        let louder = r.scaled(gain);
        prop_assert_eq!(si_snr(&r, &louder).unwrap(), INFINITY_DB);
        let want = -20.0 * (gain - 1.0).log10();
        prop_assert!((sdr(&r, &louder).unwrap() - want).abs() <= 1e-9);
    }

    #[test]
    fn pit_picks_the_better_permutation(
        n in 64usize..256,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut sig = || Waveform::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000).unwrap();
        let (ra, rb, ea, eb) = (sig(), sig(), sig(), sig());
        let mix = ra.add(&rb).unwrap();
        let rep = pit_evaluate([&ra, &rb], [&ea, &eb], &mix).unwrap();
        let alt = if rep.permutation == [0, 1] {
            (si_snr(&rb, &ea).unwrap() + si_snr(&ra, &eb).unwrap()) / 2.0
        } else {
            (si_snr(&ra, &ea).unwrap() + si_snr(&rb, &eb).unwrap()) / 2.0
        };
        prop_assert!(rep.mean.si_snr_db >= alt - 1e-9);
    }

    #[test]
    fn mixing_hits_the_target((a, b) in signal_pair(64, 1024), snr in -5.0f64..=5.0) {
        prop_assume!(energetic(&a) && energetic(&b));
        let m = mix_at_snr(&a, &b, snr).unwrap();
        prop_assert!((m.measured_snr_db() - snr).abs() <= 1e-6);
        prop_assert!(m.mixture.peak() <= 1.0);
        let q = m.quantized().unwrap();
        for i in 0..q.mixture.len() {
            prop_assert_eq!(
                q.mixture.samples()[i],
                q.source_a.samples()[i] + q.source_b.samples()[i]
            );
        }
    }

    #[test]
    fn quantization_is_idempotent(w in signal(256)) {
        let q = w.quantized().unwrap();
        prop_assert_eq!(q.quantized().unwrap(), q);
    }

    #[test]
    fn splits_are_disjoint_and_reproducible(
        songs in prop::collection::vec(1usize..5, 3..20),
        seed in any::<u64>(),
    ) {
        let entries: Vec<StemEntry> = songs
            .iter()
            .enumerate()
            .flat_map(|(s, &k)| {
                (0..k).map(move |j| StemEntry {
                    song_id: format!("{s}-{j}"),
                    singer_id: format!("singer{s}"),
                    vocal_path: "x.wav".into(),
                    split: None,
                })
            })
            .collect();
        let x = split_by_singer(&entries, SplitRatios::default(), seed).unwrap();
        prop_assert!(check_singer_disjoint(&x).is_ok());
        prop_assert_eq!(&x, &split_by_singer(&entries, SplitRatios::default(), seed).unwrap());
        prop_assert_eq!(x.len(), entries.len());
    }

    #[test]
    fn pairing_structure(
        per_singer in prop::collection::vec(2usize..6, 2..6),
        seed in any::<u64>(),
        repeats in 1u32..4,
    ) {
        let segs: Vec<SegmentId> = per_singer
            .iter()
            .enumerate()
            .flat_map(|(s, &k)| {
                (0..k).map(move |i| SegmentId {
                    song_id: format!("song{s}"),
                    singer_id: format!("singer{s}"),
                    segment: i,
                })
            })
            .collect();
        let duet = pair_segments(&segs, PairingScheme::new(PairingKind::Duet, repeats).unwrap(), seed).unwrap();
        prop_assert_eq!(duet.len(), segs.len() * repeats as usize);
        prop_assert!(duet.iter().all(|&(i, j)| segs[i].singer_id != segs[j].singer_id));
        let selfp = pair_segments(&segs, PairingScheme::new(PairingKind::SelfHarmonic, repeats).unwrap(), seed).unwrap();
        prop_assert_eq!(selfp.len(), segs.len() * repeats as usize);
        prop_assert!(selfp.iter().all(|&(i, j)| segs[i].singer_id == segs[j].singer_id && i != j));
    }
}
