//! Inputs shared by the benchmarks.

use mirss_core::fixtures::vibrato_tone;
use mirss_core::{PitchTrack, Waveform};

/// Vibrato tone at 8 kHz.
pub fn tone(carrier_hz: f64, seconds: f64) -> Waveform {
    vibrato_tone(carrier_hz, 4.0, 5.0, 0.0, 0.3, seconds, 8000)
}

/// Deterministic pitch track with roughly one unvoiced frame in seven.
pub fn track(frames: usize, offset: f64) -> PitchTrack {
    let pitches_hz = (0..frames)
        .map(|i| {
            if i % 7 == 3 {
                0.0
            } else {
                200.0 + offset + 10.0 * (i as f64 * 0.1).sin()
            }
        })
        .collect();
    PitchTrack {
        pitches_hz,
        hop_seconds: 0.01,
        fmin_hz: 55.0,
        fmax_hz: 1000.0,
    }
}
