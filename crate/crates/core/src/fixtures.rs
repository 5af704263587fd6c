//! Synthetic duet material for tests, benchmarks and the self-test.
//!
//! Each "singer" is a sine whose instantaneous frequency is a carrier plus a
//! shared 5 Hz vibrato, so both voices follow the same pitch trend.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{write_wav, Waveform, CANONICAL_RATE};
use crate::error::Result;

pub const CARRIER_A_HZ: f64 = 200.0;
pub const CARRIER_B_HZ: f64 = 310.0;
pub const VIBRATO_RATE_HZ: f64 = 5.0;

/// Sine with frequency `carrier + depth * sin(2 pi rate t + phase)`.
pub fn vibrato_tone(
    carrier_hz: f64,
    depth_hz: f64,
    rate_hz: f64,
    phase: f64,
    amplitude: f64,
    seconds: f64,
    sample_rate: u32,
) -> Waveform {
    let n = (seconds * sample_rate as f64).round() as usize;
    Waveform::from_fn(n, sample_rate, |t| {
        // Integral of the instantaneous frequency.
        let vib = depth_hz / rate_hz * (phase.cos() - (2.0 * PI * rate_hz * t + phase).cos());
        amplitude * (2.0 * PI * carrier_hz * t + vib).sin()
    })
}

#[derive(Debug, Clone)]
pub struct SyntheticSong {
    pub singer_a: Waveform,
    /// Already scaled to the singer A power (0 dB mix).
    pub singer_b: Waveform,
    pub accompaniment: Waveform,
    pub vocals: Waveform,
    pub song: Waveform,
}

/// Two vibrato voices at 0 dB plus a quiet noise accompaniment, all at 8 kHz.
pub fn synthetic_duet(seed: u64, seconds: f64) -> Result<SyntheticSong> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(3.0..6.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let rate = CANONICAL_RATE;
    let singer_a = vibrato_tone(
        CARRIER_A_HZ,
        depth,
        VIBRATO_RATE_HZ,
        phase,
        0.3,
        seconds,
        rate,
    );
    let raw_b = vibrato_tone(
        CARRIER_B_HZ,
        depth,
        VIBRATO_RATE_HZ,
        phase,
        0.3,
        seconds,
        rate,
    );
    let singer_b = raw_b.scaled((singer_a.mean_square() / raw_b.mean_square()).sqrt());
    let noise: Vec<f64> = (0..singer_a.len())
        .map(|_| {
            0.02 * {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            }
        })
        .collect();
    let accompaniment = Waveform::new(noise, rate)?;
    let vocals = singer_a.add(&singer_b)?;
    let song = vocals.add(&accompaniment)?;
    Ok(SyntheticSong {
        singer_a,
        singer_b,
        accompaniment,
        vocals,
        song,
    })
}

/// File locations of a synthetic song written to disk.
#[derive(Debug, Clone)]
pub struct FixtureFiles {
    pub song: PathBuf,
    pub vocals: PathBuf,
    pub accompaniment: PathBuf,
    pub singer_a: PathBuf,
    pub singer_b: PathBuf,
}

impl FixtureFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            song: dir.join("song.wav"),
            vocals: dir.join("vocals.wav"),
            accompaniment: dir.join("accompaniment.wav"),
            singer_a: dir.join("singer_a.wav"),
            singer_b: dir.join("singer_b.wav"),
        }
    }
}

/// Writes the stems of `song` into `dir`. The song and vocal files are written
/// as exact sums of the quantized stems.
pub fn write_fixture(song: &SyntheticSong, dir: &Path) -> Result<FixtureFiles> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let files = FixtureFiles::in_dir(dir);
    let a = song.singer_a.quantized()?;
    let b = song.singer_b.quantized()?;
    let acc = song.accompaniment.quantized()?;
    let vocals = a.add(&b)?;
    let mix = vocals.add(&acc)?;
    write_wav(&a, &files.singer_a)?;
    write_wav(&b, &files.singer_b)?;
    write_wav(&acc, &files.accompaniment)?;
    write_wav(&vocals, &files.vocals)?;
    write_wav(&mix, &files.song)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pitch::{track_pitch, PitchConfig};

    #[test]
    fn duet_is_zero_db_and_in_range() {
        let s = synthetic_duet(3, 1.0).unwrap();
        let snr = 10.0 * (s.singer_a.mean_square() / s.singer_b.mean_square()).log10();
        assert!(snr.abs() < 1e-9);
        assert!(s.song.peak() < 1.0);
    }

    #[test]
    fn voices_follow_their_carriers() {
        let s = synthetic_duet(1, 1.0).unwrap();
        let cfg = PitchConfig::default();
        for (w, f) in [(&s.singer_a, CARRIER_A_HZ), (&s.singer_b, CARRIER_B_HZ)] {
            let t = track_pitch(w, &cfg).unwrap();
            let mean = t.pitches_hz.iter().sum::<f64>() / t.len() as f64;
            assert!((mean - f).abs() < 2.0, "{f}: {mean}");
        }
    }
}
