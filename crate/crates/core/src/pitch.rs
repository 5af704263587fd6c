//! Frame-wise fundamental frequency tracks.
//!
//! The built-in tracker is a YIN-style difference-function detector. Tracks
//! produced elsewhere (for instance by a neural pitch model) can be imported
//! from `time,frequency[,confidence]` CSV files with [`load_pitch_track`].
//! Throughout, a pitch of `0.0` means "unvoiced".

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{Waveform, CANONICAL_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub pitches_hz: Vec<f64>,
    pub hop_seconds: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.pitches_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitches_hz.is_empty()
    }

    pub fn voiced_frames(&self) -> usize {
        self.pitches_hz.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn is_silent(&self) -> bool {
        self.pitches_hz.iter().all(|&p| p == 0.0)
    }

    /// Same track with voiced frames expressed as MIDI note numbers.
    pub fn to_semitones(&self) -> PitchTrack {
        PitchTrack {
            pitches_hz: self.pitches_hz.iter().map(|&p| hz_to_midi(p)).collect(),
            hop_seconds: self.hop_seconds,
            fmin_hz: hz_to_midi(self.fmin_hz),
            fmax_hz: hz_to_midi(self.fmax_hz),
        }
    }

    /// Frames `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> PitchTrack {
        PitchTrack {
            pitches_hz: self.pitches_hz[start..start + len].to_vec(),
            ..self.clone()
        }
    }
}

/// MIDI note number of a frequency; zero stays zero.
pub fn hz_to_midi(hz: f64) -> f64 {
    if hz > 0.0 {
        69.0 + 12.0 * (hz / 440.0).log2()
    } else {
        0.0
    }
}

/// Tracker settings. Lengths are in samples at the canonical 8 kHz rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PitchConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    /// Upper bound on the normalized difference for a lag to count as periodic.
    pub threshold: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Frames quieter than this RMS are unvoiced without further analysis.
    pub silence_rms: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            frame_length: 320,
            hop_length: 80,
            threshold: 0.15,
            fmin_hz: 55.0,
            fmax_hz: 1000.0,
            silence_rms: 1e-4,
        }
    }
}

impl PitchConfig {
    pub fn hop_seconds(&self) -> f64 {
        self.hop_length as f64 / CANONICAL_RATE as f64
    }

    /// Number of frames produced for a signal of `num_samples`.
    pub fn frame_count(&self, num_samples: usize) -> usize {
        if num_samples < self.frame_length {
            0
        } else {
            (num_samples - self.frame_length) / self.hop_length + 1
        }
    }

    fn lag_bounds(&self) -> Result<(usize, usize)> {
        let rate = CANONICAL_RATE as f64;
        if !(self.fmin_hz > 0.0 && self.fmax_hz > self.fmin_hz && self.fmax_hz < rate / 2.0) {
            return Err(Error::ConfigInvalid(format!(
                "pitch range [{}, {}] Hz must satisfy 0 < fmin < fmax < {} Hz",
                self.fmin_hz,
                self.fmax_hz,
                rate / 2.0
            )));
        }
        if self.hop_length == 0 {
            return Err(Error::ConfigInvalid("hop length must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::ConfigInvalid(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if (self.frame_length as f64) < 2.0 * rate / self.fmin_hz {
            return Err(Error::ConfigInvalid(format!(
                "frame of {} samples covers fewer than two periods of {} Hz",
                self.frame_length, self.fmin_hz
            )));
        }
        let max_lag = (rate / self.fmin_hz).ceil() as usize;
        let min_lag = ((rate / self.fmax_hz).floor() as usize).max(2);
        Ok((min_lag, max_lag))
    }
}

/// Reusable per-frame buffers for the difference function.
struct Yin {
    min_lag: usize,
    max_lag: usize,
    window: usize,
    diff: Vec<f64>,
}

impl Yin {
    fn new(cfg: &PitchConfig) -> Result<Self> {
        let (min_lag, max_lag) = cfg.lag_bounds()?;
        Ok(Self {
            min_lag,
            max_lag,
            window: cfg.frame_length - max_lag,
            diff: vec![0.0; max_lag + 1],
        })
    }

    /// Fractional period in samples, or `None` when no lag is periodic enough.
    fn period(&mut self, frame: &[f64], threshold: f64) -> Option<f64> {
        let w = self.window;
        let d = &mut self.diff;
        d[0] = 1.0;
        let mut running = 0.0;
        for lag in 1..=self.max_lag {
            let raw: f64 = frame[..w]
                .iter()
                .zip(&frame[lag..lag + w])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            running += raw;
            d[lag] = if running > 0.0 {
                raw * lag as f64 / running
            } else {
                1.0
            };
        }

        let mut lag = self.min_lag;
        while lag < self.max_lag {
            if d[lag] < threshold {
                while lag < self.max_lag && d[lag + 1] < d[lag] {
                    lag += 1;
                }
                return Some(refine(d, lag));
            }
            lag += 1;
        }
        None
    }
}

/// Parabolic interpolation of the minimum around `lag`.
fn refine(d: &[f64], lag: usize) -> f64 {
    if lag == 0 || lag + 1 >= d.len() {
        return lag as f64;
    }
    let (a, b, c) = (d[lag - 1], d[lag], d[lag + 1]);
    let denom = a - 2.0 * b + c;
    if denom <= 0.0 {
        return lag as f64;
    }
    let shift = 0.5 * (a - c) / denom;
    if shift.abs() < 1.0 {
        lag as f64 + shift
    } else {
        lag as f64
    }
}

/// Tracks the pitch of `w`, which must be sampled at 8 kHz.
pub fn track_pitch(w: &Waveform, cfg: &PitchConfig) -> Result<PitchTrack> {
    if w.sample_rate() != CANONICAL_RATE {
        return Err(Error::InvalidArgument(format!(
            "pitch tracking expects {CANONICAL_RATE} Hz audio, got {} Hz",
            w.sample_rate()
        )));
    }
    let mut yin = Yin::new(cfg)?;
    if w.len() < cfg.frame_length {
        return Err(Error::TooShort {
            len: w.len(),
            min: cfg.frame_length,
        });
    }
    let rate = CANONICAL_RATE as f64;
    let x = w.samples();
    let pitches_hz = (0..cfg.frame_count(x.len()))
        .map(|i| {
            let frame = &x[i * cfg.hop_length..i * cfg.hop_length + cfg.frame_length];
            let rms = (frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64).sqrt();
            if rms < cfg.silence_rms {
                return 0.0;
            }
            match yin.period(frame, cfg.threshold) {
                Some(p) if p > 0.0 => (rate / p).clamp(cfg.fmin_hz, cfg.fmax_hz),
                _ => 0.0,
            }
        })
        .collect();
    Ok(PitchTrack {
        pitches_hz,
        hop_seconds: cfg.hop_seconds(),
        fmin_hz: cfg.fmin_hz,
        fmax_hz: cfg.fmax_hz,
    })
}

/// Options for importing externally computed tracks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchImport {
    pub hop_seconds: f64,
    /// Rows whose confidence column is below this are treated as unvoiced.
    pub confidence_floor: f64,
    pub expected_frames: Option<usize>,
}

impl Default for PitchImport {
    fn default() -> Self {
        Self {
            hop_seconds: PitchConfig::default().hop_seconds(),
            confidence_floor: 0.5,
            expected_frames: None,
        }
    }
}

fn parse_field(field: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let raw = field.ok_or_else(|| Error::MalformedCsv {
        line,
        message: format!("missing {what} column"),
    })?;
    let v: f64 = raw.trim().parse().map_err(|_| Error::MalformedCsv {
        line,
        message: format!("{what} `{}` is not a number", raw.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedCsv {
            line,
            message: format!("{what} is not finite"),
        });
    }
    Ok(v)
}

/// Parses a pitch CSV (`time_sec,frequency_hz[,confidence]`, header optional)
/// and resamples it onto a regular hop by nearest-time lookup.
pub fn parse_pitch_csv(text: &str, opts: &PitchImport) -> Result<PitchTrack> {
    if opts.hop_seconds.is_nan() || opts.hop_seconds <= 0.0 {
        return Err(Error::ConfigInvalid("import hop must be positive".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::MalformedCsv {
            line,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 1 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue; // header
        }
        if rec.len() > 3 {
            return Err(Error::MalformedCsv {
                line,
                message: format!("expected 2 or 3 columns, found {}", rec.len()),
            });
        }
        let time = parse_field(rec.get(0), line, "time")?;
        let mut freq = parse_field(rec.get(1), line, "frequency")?;
        if time < 0.0 || freq < 0.0 {
            return Err(Error::MalformedCsv {
                line,
                message: "time and frequency must be non-negative".into(),
            });
        }
        if rec.len() == 3 && parse_field(rec.get(2), line, "confidence")? < opts.confidence_floor {
            freq = 0.0;
        }
        rows.push((time, freq));
    }
    if rows.is_empty() {
        return Err(Error::MalformedCsv {
            line: 0,
            message: "no pitch rows".into(),
        });
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let last_time = rows.last().expect("non-empty").0;
    let native = (last_time / opts.hop_seconds).round() as usize + 1;
    let frames = match opts.expected_frames {
        Some(expected) if expected.abs_diff(native) > 2 => {
            return Err(Error::FrameCountMismatch {
                expected,
                found: native,
            })
        }
        Some(expected) => expected,
        None => native,
    };

    let pitches_hz: Vec<f64> = (0..frames)
        .map(|k| {
            let t = k as f64 * opts.hop_seconds;
            let idx = rows.partition_point(|r| r.0 < t);
            let nearest = match (idx.checked_sub(1), rows.get(idx)) {
                (Some(before), Some(after)) => {
                    if t - rows[before].0 <= after.0 - t {
                        before
                    } else {
                        idx
                    }
                }
                (Some(before), None) => before,
                (None, _) => idx,
            };
            rows[nearest].1
        })
        .collect();

    let voiced = pitches_hz.iter().copied().filter(|&p| p > 0.0);
    let (fmin_hz, fmax_hz) = voiced.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p), hi.max(p))
    });
    let defaults = PitchConfig::default();
    let (fmin_hz, fmax_hz) = if fmax_hz > 0.0 {
        (fmin_hz, fmax_hz)
    } else {
        (defaults.fmin_hz, defaults.fmax_hz)
    };
    Ok(PitchTrack {
        pitches_hz,
        hop_seconds: opts.hop_seconds,
        fmin_hz,
        fmax_hz,
    })
}

pub fn load_pitch_track(path: impl AsRef<Path>, opts: &PitchImport) -> Result<PitchTrack> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pitch_csv(&text, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, seconds: f64) -> Waveform {
        let n = (seconds * 8000.0) as usize;
        Waveform::from_fn(n, 8000, |t| 0.5 * (2.0 * PI * freq * t).sin())
    }

    #[test]
    fn frame_count_formula() {
        let cfg = PitchConfig::default();
        let track = track_pitch(&sine(220.0, 2.0), &cfg).unwrap();
        assert_eq!(track.len(), (16000 - 320) / 80 + 1);
        assert_eq!(track.hop_seconds, 0.01);
    }

    #[test]
    fn pure_tone_tracks_within_one_percent() {
        let cfg = PitchConfig::default();
        for f in [110.0, 220.0, 440.0] {
            let track = track_pitch(&sine(f, 2.0), &cfg).unwrap();
            let voiced: Vec<f64> = track
                .pitches_hz
                .iter()
                .copied()
                .filter(|&p| p > 0.0)
                .collect();
            assert!(voiced.len() as f64 >= 0.95 * track.len() as f64, "{f}");
            for p in voiced {
                assert!((p - f).abs() <= 0.01 * f, "{f} -> {p}");
            }
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let track = track_pitch(&Waveform::silence(16000, 8000), &PitchConfig::default()).unwrap();
        assert!(track.is_silent());
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise =
            Waveform::new((0..16000).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000).unwrap();
        let track = track_pitch(&noise, &PitchConfig::default()).unwrap();
        let unvoiced = track.len() - track.voiced_frames();
        assert!(
            unvoiced as f64 >= 0.8 * track.len() as f64,
            "{unvoiced}/{}",
            track.len()
        );
    }

    #[test]
    fn config_validation() {
        let short = PitchConfig {
            frame_length: 200,
            ..Default::default()
        };
        assert!(matches!(
            track_pitch(&sine(220.0, 1.0), &short),
            Err(Error::ConfigInvalid(_))
        ));
        let too_short_audio = Waveform::silence(100, 8000);
        assert!(matches!(
            track_pitch(&too_short_audio, &PitchConfig::default()),
            Err(Error::TooShort { .. })
        ));
        let wrong_rate = Waveform::silence(1000, 16000);
        assert!(track_pitch(&wrong_rate, &PitchConfig::default()).is_err());
    }

    #[test]
    fn csv_direct_mapping_and_confidence_floor() {
        let opts = PitchImport::default();
        let t = parse_pitch_csv("0.00,440,0.9\n0.01,441,0.9\n", &opts).unwrap();
        assert_eq!(t.pitches_hz, [440.0, 441.0]);
        let t = parse_pitch_csv(
            "time,frequency,confidence\n0.00,440,0.9\n0.01,441,0.2\n",
            &opts,
        )
        .unwrap();
        assert_eq!(t.pitches_hz, [440.0, 0.0]);
        let t = parse_pitch_csv("0.00,440\n0.01,0\n0.02,300\n", &opts).unwrap();
        assert_eq!(t.pitches_hz, [440.0, 0.0, 300.0]);
        assert_eq!((t.fmin_hz, t.fmax_hz), (300.0, 440.0));
    }

    #[test]
    fn csv_nearest_time_resampling() {
        let opts = PitchImport {
            hop_seconds: 0.02,
            ..Default::default()
        };
        let csv = "0.00,100\n0.01,110\n0.02,120\n0.03,130\n0.04,140\n";
        let t = parse_pitch_csv(csv, &opts).unwrap();
        assert_eq!(t.pitches_hz, [100.0, 120.0, 140.0]);
    }

    #[test]
    fn csv_errors() {
        let opts = PitchImport::default();
        assert!(matches!(
            parse_pitch_csv("0.00,440\n0.01,abc\n", &opts),
            Err(Error::MalformedCsv { line: 2, .. })
        ));
        assert!(matches!(
            parse_pitch_csv("", &opts),
            Err(Error::MalformedCsv { .. })
        ));
        assert!(matches!(
            parse_pitch_csv("0.0,-3\n", &opts),
            Err(Error::MalformedCsv { .. })
        ));
        let strict = PitchImport {
            expected_frames: Some(10),
            ..Default::default()
        };
        assert!(matches!(
            parse_pitch_csv("0.00,440\n0.01,441\n", &strict),
            Err(Error::FrameCountMismatch {
                expected: 10,
                found: 2
            })
        ));
        let near = PitchImport {
            expected_frames: Some(4),
            ..Default::default()
        };
        assert_eq!(
            parse_pitch_csv("0.00,440\n0.01,441\n", &near)
                .unwrap()
                .len(),
            4
        );
    }

    #[test]
    fn semitones_map_a4() {
        let t = PitchTrack {
            pitches_hz: vec![440.0, 0.0, 880.0],
            hop_seconds: 0.01,
            fmin_hz: 55.0,
            fmax_hz: 1000.0,
        };
        assert_eq!(t.to_semitones().pitches_hz, [69.0, 0.0, 81.0]);
    }
}
