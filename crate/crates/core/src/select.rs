//! Pitch-trend model auto-selection.
//!
//! Every candidate stage-2 model separates the same mixed vocal. A correct
//! separation of a duet yields two channels whose pitch contours move in
//! parallel, so each candidate is scored by how much the frame-to-frame pitch
//! differences of its two channels disagree, and the lowest score wins.
//!
//! Frame `i` of the trend is `v[i] = p[i + 1] - p[i]`. A term contributes only
//! when pitch frames `i - 1`, `i` and `i + 1` are voiced in *both* channels;
//! terms whose window leaves the track are skipped. A channel that is unvoiced
//! everywhere earns [`PENALTY`].

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{segment_len, Waveform};
use crate::backend::CandidateModel;
use crate::error::{Error, Result};
use crate::pitch::{track_pitch, PitchConfig, PitchTrack};

/// Score assigned when one channel is unvoiced throughout.
pub const PENALTY: f64 = 1e12;

/// Frame-to-frame pitch differences.
pub fn trend(pitches: &[f64]) -> Result<Vec<f64>> {
    if pitches.len() < 2 {
        return Err(Error::TooShort {
            len: pitches.len(),
            min: 2,
        });
    }
    Ok(pitches.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub score: f64,
    pub contributing_frames: usize,
    pub penalized: bool,
}

/// Pitch-trend distance between the two channels of one separation.
pub fn trend_distance(a: &PitchTrack, b: &PitchTrack) -> Result<Distance> {
    if a.len() != b.len() {
        return Err(Error::FrameMismatch(format!(
            "{} vs {} frames",
            a.len(),
            b.len()
        )));
    }
    if (a.hop_seconds - b.hop_seconds).abs() > 1e-12 {
        return Err(Error::FrameMismatch(format!(
            "hop {} s vs {} s",
            a.hop_seconds, b.hop_seconds
        )));
    }
    if a.len() < 3 {
        return Err(Error::TooShort {
            len: a.len(),
            min: 3,
        });
    }
    if a.is_silent() || b.is_silent() {
        return Ok(Distance {
            score: PENALTY,
            contributing_frames: 0,
            penalized: true,
        });
    }
    let (pa, pb) = (&a.pitches_hz, &b.pitches_hz);
    let voiced = |p: &[f64], i: usize| p[i - 1] > 0.0 && p[i] > 0.0 && p[i + 1] > 0.0;
    let mut score = 0.0;
    let mut contributing_frames = 0;
    for i in 1..pa.len() - 1 {
        if voiced(pa, i) && voiced(pb, i) {
            let va = pa[i + 1] - pa[i];
            let vb = pb[i + 1] - pb[i];
            score += (va - vb).abs();
            contributing_frames += 1;
        }
    }
    Ok(Distance {
        score,
        contributing_frames,
        penalized: false,
    })
}

/// One candidate's entry in a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendScore {
    pub model_id: String,
    pub score: f64,
    pub contributing_frames: usize,
    pub penalized: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub pitch: PitchConfig,
    /// Compare MIDI note numbers instead of Hz.
    pub semitones: bool,
    /// Score fixed-length segments separately and sum them.
    pub segment_seconds: Option<f64>,
    /// Concurrent backend runs; `0` uses every logical CPU.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub model_id: String,
    /// `Err` holds the failure message of an excluded backend.
    pub result: std::result::Result<(TrendScore, Waveform, Waveform), String>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub chosen: String,
    /// Every successful candidate was penalized; `chosen` is still the argmin.
    pub all_penalized: bool,
    /// One entry per candidate, in registry order.
    pub candidates: Vec<CandidateOutcome>,
}

impl Selection {
    pub fn scores(&self) -> Vec<TrendScore> {
        self.candidates
            .iter()
            .filter_map(|c| c.result.as_ref().ok().map(|(s, _, _)| s.clone()))
            .collect()
    }

    pub fn chosen_outputs(&self) -> (&Waveform, &Waveform) {
        self.candidates
            .iter()
            .find(|c| c.model_id == self.chosen)
            .and_then(|c| c.result.as_ref().ok())
            .map(|(_, a, b)| (a, b))
            .expect("chosen candidate succeeded")
    }
}

/// Scores the two separated channels of one candidate.
pub fn score_channels(
    model_id: &str,
    a: &Waveform,
    b: &Waveform,
    cfg: &SelectConfig,
) -> Result<TrendScore> {
    let pieces = match cfg.segment_seconds {
        None => vec![(a.clone(), b.clone())],
        Some(seconds) => {
            let len = segment_len(seconds, a.sample_rate())?;
            let mut out = Vec::new();
            let mut start = 0;
            while start + cfg.pitch.frame_length <= a.len() {
                let n = len.min(a.len() - start);
                out.push((a.slice(start, n), b.slice(start, n)));
                start += n;
            }
            out
        }
    };
    let mut total = TrendScore {
        model_id: model_id.to_string(),
        score: 0.0,
        contributing_frames: 0,
        penalized: false,
    };
    let mut scored = 0;
    for (sa, sb) in pieces {
        let mut ta = track_pitch(&sa, &cfg.pitch)?;
        let mut tb = track_pitch(&sb, &cfg.pitch)?;
        if ta.len() < 3 {
            continue;
        }
        if cfg.semitones {
            ta = ta.to_semitones();
            tb = tb.to_semitones();
        }
        let d = trend_distance(&ta, &tb)?;
        total.score += d.score;
        total.contributing_frames += d.contributing_frames;
        total.penalized |= d.penalized;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::TooShort {
            len: a.len(),
            min: cfg.pitch.frame_length + 2 * cfg.pitch.hop_length,
        });
    }
    Ok(total)
}

fn better(x: &TrendScore, y: &TrendScore) -> bool {
    x.score
        .total_cmp(&y.score)
        .then_with(|| x.model_id.cmp(&y.model_id))
        .is_lt()
}

/// Runs every candidate on `mixed_vocal` and picks the lowest trend distance.
///
/// Candidates whose backend fails are kept in the result with their error and
/// excluded from the choice; the call only fails when none succeed. Ties go to
/// the lexicographically smaller model id.
pub fn select_model(
    mixed_vocal: &Waveform,
    candidates: &[CandidateModel],
    cfg: &SelectConfig,
    workdir: &Path,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("worker pool: {e}")))?;
    let outcomes: Vec<CandidateOutcome> = pool.install(|| {
        candidates
            .par_iter()
            .map(|c| {
                let result = c
                    .run(mixed_vocal, workdir)
                    .and_then(|(a, b)| {
                        let s = score_channels(&c.model_id, &a, &b, cfg)?;
                        Ok((s, a, b))
                    })
                    .map_err(|e| e.to_string());
                CandidateOutcome {
                    model_id: c.model_id.clone(),
                    result,
                }
            })
            .collect()
    });

    let best = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|(s, _, _)| s))
        .fold(None::<&TrendScore>, |best, s| match best {
            Some(b) if !better(s, b) => Some(b),
            _ => Some(s),
        });
    let Some(best) = best else {
        let message = outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err())
            .cloned()
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::BackendFailure {
            model_id: "all candidates".into(),
            message,
        });
    };
    let chosen = best.model_id.clone();
    let all_penalized = best.penalized;
    Ok(Selection {
        chosen,
        all_penalized,
        candidates: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{OracleRefs, OracleSpec, SeparationBackend, Stage};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn track(p: &[f64]) -> PitchTrack {
        PitchTrack {
            pitches_hz: p.to_vec(),
            hop_seconds: 0.01,
            fmin_hz: 50.0,
            fmax_hz: 1000.0,
        }
    }

    #[test]
    fn trend_examples() {
        assert_eq!(trend(&[100.0, 110.0, 120.0]).unwrap(), [10.0, 10.0]);
        assert!(trend(&[7.0; 5]).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(trend(&[200.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn identical_voiced_tracks_score_zero() {
        let t = track(&[100.0, 120.0, 90.0, 130.0, 131.0]);
        let d = trend_distance(&t, &t).unwrap();
        assert_eq!(d.score, 0.0);
        assert_eq!(d.contributing_frames, 3);
    }

    #[test]
    fn silent_channel_is_penalized() {
        let a = track(&[100.0, 110.0, 120.0, 130.0]);
        let b = track(&[0.0; 4]);
        let d = trend_distance(&a, &b).unwrap();
        assert_eq!(d.score, PENALTY);
        assert!(d.penalized);
    }

    #[test]
    fn interior_window_example() {
        // vA = [10, 10, 10], vB = [5, 15, 15]; only v[1] and v[2] have a full
        // three-frame window inside the track.
        let a = track(&[100.0, 110.0, 120.0, 130.0]);
        let b = track(&[100.0, 105.0, 120.0, 135.0]);
        let d = trend_distance(&a, &b).unwrap();
        assert_eq!(d.score, 10.0);
        assert_eq!(d.contributing_frames, 2);
    }

    #[test]
    fn one_singer_passages_are_skipped() {
        let a = track(&[100.0, 110.0, 120.0, 130.0, 140.0]);
        let b = track(&[100.0, 0.0, 0.0, 0.0, 190.0]);
        let d = trend_distance(&a, &b).unwrap();
        assert_eq!(d.score, 0.0);
        assert_eq!(d.contributing_frames, 0);
        assert!(!d.penalized);
    }

    #[test]
    fn frame_mismatch_and_short_tracks() {
        let a = track(&[100.0; 4]);
        assert!(matches!(
            trend_distance(&a, &track(&[100.0; 5])),
            Err(Error::FrameMismatch(_))
        ));
        let mut other_hop = a.clone();
        other_hop.hop_seconds = 0.02;
        assert!(matches!(
            trend_distance(&a, &other_hop),
            Err(Error::FrameMismatch(_))
        ));
        assert!(matches!(
            trend_distance(&track(&[1.0, 2.0]), &track(&[1.0, 2.0])),
            Err(Error::TooShort { .. })
        ));
    }

    fn vibrato(carrier: f64, offset_hz: f64, seconds: f64) -> Waveform {
        let n = (seconds * 8000.0) as usize;
        Waveform::from_fn(n, 8000, |t| {
            // Instantaneous frequency carrier + offset + 4 sin(2 pi 5 t).
            let phase =
                2.0 * PI * (carrier + offset_hz) * t - 4.0 / 5.0 * (2.0 * PI * 5.0 * t).cos();
            0.3 * phase.sin()
        })
    }

    fn oracle_model(id: &str, refs: [Waveform; 2], leak: f64) -> CandidateModel {
        let mut spec = OracleSpec::new(OracleRefs::Loaded(Arc::new(refs)));
        spec.leak = leak;
        CandidateModel::new(id, SeparationBackend::oracle(Stage::TwoVocals, spec))
    }

    #[test]
    fn parallel_contours_beat_diverging_ones() {
        let a = vibrato(220.0, 0.0, 1.5);
        let b = vibrato(220.0, 3.0, 1.5);
        let diverging = Waveform::from_fn(a.len(), 8000, |t| {
            0.3 * (2.0 * PI * (330.0 * t + 20.0 * t * t)).sin()
        });
        let mix = a.add(&b).unwrap();
        let candidates = vec![
            oracle_model("Y", [a.clone(), diverging], 0.0),
            oracle_model("X", [a, b], 0.0),
        ];
        let dir = tempfile::tempdir().unwrap();
        let sel = select_model(&mix, &candidates, &SelectConfig::default(), dir.path()).unwrap();
        assert_eq!(sel.chosen, "X");
        assert!(!sel.all_penalized);
        assert_eq!(sel.candidates.len(), 2);
    }

    #[test]
    fn ties_break_to_smaller_id_and_failures_are_excluded() {
        let a = vibrato(200.0, 0.0, 1.0);
        let b = vibrato(310.0, 0.0, 1.0);
        let mix = a.add(&b).unwrap();
        let candidates = vec![
            oracle_model("zeta", [a.clone(), b.clone()], 0.0),
            oracle_model("alpha", [a.clone(), b.clone()], 0.0),
            CandidateModel::new(
                "broken",
                SeparationBackend::external(Stage::TwoVocals, "exit 3"),
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        let sel = select_model(&mix, &candidates, &SelectConfig::default(), dir.path()).unwrap();
        assert_eq!(sel.chosen, "alpha");
        assert!(sel.candidates[2].result.is_err());
        assert_eq!(sel.scores().len(), 2);
    }

    #[test]
    fn all_penalized_still_returns_argmin() {
        let a = vibrato(200.0, 0.0, 1.0);
        let candidates = vec![
            CandidateModel::new("p2", SeparationBackend::passthrough(Stage::TwoVocals)),
            CandidateModel::new("p1", SeparationBackend::passthrough(Stage::TwoVocals)),
        ];
        let dir = tempfile::tempdir().unwrap();
        let sel = select_model(&a, &candidates, &SelectConfig::default(), dir.path()).unwrap();
        assert!(sel.all_penalized);
        assert_eq!(sel.chosen, "p1");
    }

    #[test]
    fn no_candidates_or_all_failing() {
        let a = vibrato(200.0, 0.0, 0.5);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            select_model(&a, &[], &SelectConfig::default(), dir.path()),
            Err(Error::NoCandidates)
        ));
        let broken = vec![CandidateModel::new(
            "b",
            SeparationBackend::external(Stage::TwoVocals, "exit 1"),
        )];
        assert!(matches!(
            select_model(&a, &broken, &SelectConfig::default(), dir.path()),
            Err(Error::BackendFailure { .. })
        ));
    }

    #[test]
    fn segment_wise_scoring_sums_segments() {
        let a = vibrato(200.0, 0.0, 2.0);
        let b = vibrato(200.0, 2.0, 2.0);
        let whole = score_channels("m", &a, &b, &SelectConfig::default()).unwrap();
        let cfg = SelectConfig {
            segment_seconds: Some(1.0),
            ..Default::default()
        };
        let seg = score_channels("m", &a, &b, &cfg).unwrap();
        // Segment boundaries drop the frames straddling them.
        assert!(seg.contributing_frames < whole.contributing_frames);
        assert!(seg.contributing_frames > 0);
    }
}
