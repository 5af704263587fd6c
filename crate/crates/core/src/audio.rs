//! Mono waveforms, WAV I/O, band-limited resampling and fixed-length
//! segmentation.
//!
//! Samples are held as `f64` so that gain and energy computations downstream
//! (SNR mixing, metrics) do not accumulate single-precision error. On disk
//! everything is 16-bit PCM; the 16-bit grid is `k / 32768`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical pipeline sample rate.
pub const CANONICAL_RATE: u32 = 8000;

/// Default segment length in seconds.
pub const SEGMENT_SECONDS: f64 = 10.0;

/// Full-scale value of the 16-bit grid.
pub const PCM16_SCALE: f64 = 32768.0;

/// Kaiser window shape of the resampling kernel.
pub const KAISER_BETA: f64 = 8.6;

/// Kernel taps per output phase, measured at the lower of the two rates.
pub const SINC_TAPS: usize = 64;

/// Anti-aliasing cutoff as a fraction of the lower Nyquist frequency.
const SINC_ROLLOFF: f64 = 0.95;
/// Above this many distinct output phases the kernel is evaluated per sample.
const MAX_CACHED_PHASES: u64 = 8192;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// Builds a waveform by evaluating `f(t)` at every sample time.
    pub fn from_fn(len: usize, sample_rate: u32, f: impl Fn(f64) -> f64) -> Self {
        let rate = sample_rate as f64;
        Self {
            samples: (0..len).map(|n| f(n as f64 / rate)).collect(),
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude. Zero for an empty waveform.
    pub fn mean_square(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.mean_square().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum. Both operands must share length and rate.
    pub fn add(&self, other: &Waveform) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub(crate) fn check_compatible(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::InvalidArgument(format!(
                "sample rates differ: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        if self.len() != other.len() {
            return Err(Error::InvalidArgument(format!(
                "lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Hard-clips every sample to [-1, 1]; returns the clipped waveform and
    /// the number of samples that were altered.
    pub fn clipped(&self) -> (Self, usize) {
        let mut altered = 0;
        let samples = self
            .samples
            .iter()
            .map(|&s| {
                if s.abs() > 1.0 {
                    altered += 1;
                    s.clamp(-1.0, 1.0)
                } else {
                    s
                }
            })
            .collect();
        (
            Self {
                samples,
                sample_rate: self.sample_rate,
            },
            altered,
        )
    }

    /// Snaps every sample onto the 16-bit grid that [`write_wav`] uses.
    pub fn quantized(&self) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, &s)| quantize_sample(s, i).map(|q| q as f64 / PCM16_SCALE))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            sample_rate: self.sample_rate,
        })
    }

    /// First `len` samples, or the whole waveform if it is shorter.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            samples: self.samples[..len.min(self.len())].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Zero-pads or truncates to exactly `len` samples.
    pub fn fit_to_len(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Sub-range `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Concatenation; all parts must share one sample rate.
    pub fn concat(parts: &[Waveform]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("nothing to concatenate".into()));
        };
        let mut samples = Vec::with_capacity(parts.iter().map(Waveform::len).sum());
        for p in parts {
            if p.sample_rate != first.sample_rate {
                return Err(Error::InvalidArgument(
                    "cannot concatenate waveforms with different sample rates".into(),
                ));
            }
            samples.extend_from_slice(&p.samples);
        }
        Ok(Self {
            samples,
            sample_rate: first.sample_rate,
        })
    }
}

/// Tolerance for float round-off above full scale when quantizing.
const FULL_SCALE_SLACK: f64 = 1e-9;

fn quantize_sample(s: f64, index: usize) -> Result<i16> {
    if s.abs() > 1.0 + FULL_SCALE_SLACK {
        return Err(Error::OutOfRange { index, value: s });
    }
    Ok((s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16)
}

/// A fixed-length chunk of one song.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub audio: Waveform,
    pub song_id: String,
    pub singer_id: String,
    /// Position of the chunk within its song, in time order from zero.
    pub index: usize,
}

/// Header facts of a WAV file, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavInfo {
    pub channels: u16,
    pub sample_rate: u32,
    pub bits_per_sample: u16,
    pub float: bool,
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedWav(format!("{}: truncated file", path.display()))
        }
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::io(path, io)
        }
        hound::Error::IoError(io) => Error::MalformedWav(format!("{}: {io}", path.display())),
        hound::Error::FormatError(msg) => Error::MalformedWav(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => Error::UnsupportedEncoding(format!(
            "{}: only PCM 16-bit integer and 32-bit float are supported",
            path.display()
        )),
        other => Error::MalformedWav(format!("{}: {other}", path.display())),
    }
}

/// Reads every channel of a WAV file as its own waveform.
pub fn read_wav_channels(path: impl AsRef<Path>) -> Result<(Vec<Waveform>, WavInfo)> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let info = WavInfo {
        channels: spec.channels,
        sample_rate: spec.sample_rate,
        bits_per_sample: spec.bits_per_sample,
        float: spec.sample_format == hound::SampleFormat::Float,
    };
    if spec.channels == 0 || spec.sample_rate == 0 {
        return Err(Error::MalformedWav(format!(
            "{}: zero channels or zero sample rate",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{}: {bits}-bit {fmt:?}",
                path.display()
            )))
        }
    };
    let channels = spec.channels as usize;
    if !interleaved.len().is_multiple_of(channels) {
        return Err(Error::MalformedWav(format!(
            "{}: sample count {} is not a multiple of {channels} channels",
            path.display(),
            interleaved.len()
        )));
    }
    let frames = interleaved.len() / channels;
    let mut out = Vec::with_capacity(channels);
    for c in 0..channels {
        let samples: Vec<f64> = (0..frames).map(|f| interleaved[f * channels + c]).collect();
        out.push(
            Waveform::new(samples, spec.sample_rate)
                .map_err(|e| Error::MalformedWav(format!("{}: {e}", path.display())))?,
        );
    }
    Ok((out, info))
}

/// Reads a WAV file and averages its channels down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let (channels, info) = read_wav_channels(path)?;
    if channels.len() == 1 {
        return Ok(channels.into_iter().next().expect("one channel"));
    }
    let n = channels.len() as f64;
    let frames = channels[0].len();
    let samples = (0..frames)
        .map(|f| channels.iter().map(|c| c.samples[f]).sum::<f64>() / n)
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: info.sample_rate,
    })
}

/// Writes a mono, 16-bit little-endian PCM WAV file.
///
/// Samples outside [-1, 1] are rejected with [`Error::OutOfRange`]; use
/// [`Waveform::clipped`] first if clipping is intended.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    write_wav_channels(std::slice::from_ref(w), path)
}

/// Writes several equal-length channels as one interleaved 16-bit WAV file.
pub fn write_wav_channels(channels: &[Waveform], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let Some(first) = channels.first() else {
        return Err(Error::InvalidArgument("no channels to write".into()));
    };
    if first.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot write an empty waveform".into(),
        ));
    }
    for c in &channels[1..] {
        first.check_compatible(c)?;
    }
    let quantized: Vec<Vec<i16>> = channels
        .iter()
        .map(|c| {
            c.samples
                .iter()
                .enumerate()
                .map(|(i, &s)| quantize_sample(s, i))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate: first.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for f in 0..first.len() {
        for q in &quantized {
            writer.write_sample(q[f]).map_err(to_err)?;
        }
    }
    writer.finalize().map_err(to_err)
}

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc evaluated at arbitrary fractional offsets, so every
/// output phase gets an exact kernel.
struct SincKernel {
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl SincKernel {
    fn new(from_rate: u32, to_rate: u32) -> Self {
        let ratio = (to_rate as f64 / from_rate as f64).min(1.0);
        Self {
            cutoff: ratio * SINC_ROLLOFF,
            half_width: (SINC_TAPS / 2) as f64 / ratio,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let u = t / self.half_width;
        // Taps exactly on the window edge are dropped whichever way rounding goes.
        if u.abs() >= 1.0 - 1e-12 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / self.i0_beta;
        self.cutoff * sinc(self.cutoff * t) * window
    }
}

/// Converts `w` to `target_rate` with a Kaiser-windowed sinc interpolator.
///
/// The output holds `round(len * target / rate)` samples, so durations agree
/// to within one output sample. Equal rates return the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument(
            "target rate must be positive".into(),
        ));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let from = w.sample_rate as u64;
    let to = target_rate as u64;
    let out_len = ((w.len() as u64 * to + from / 2) / from) as usize;
    let kernel = SincKernel::new(w.sample_rate, target_rate);
    let src = &w.samples;
    let last = src.len() as i64 - 1;
    // Output n sits at input position base + phase / to, and the phase repeats
    // every `period` outputs, so each phase's taps are computed once.
    let period = to / gcd(from, to);
    let taps: Vec<(i64, Vec<f64>)> = if period <= MAX_CACHED_PHASES {
        (0..period)
            .map(|n| {
                let frac = ((n * from) % to) as f64 / to as f64;
                let first = (frac - kernel.half_width).ceil() as i64;
                let end = (frac + kernel.half_width).floor() as i64;
                let weights = (first..=end)
                    .map(|j| kernel.eval(frac - j as f64))
                    .collect();
                (first, weights)
            })
            .collect()
    } else {
        Vec::new()
    };
    let samples = (0..out_len as u64)
        .map(|n| {
            let base = (n * from / to) as i64;
            if let Some((first, weights)) = taps.get((n % period) as usize) {
                return weights
                    .iter()
                    .enumerate()
                    .map(|(j, wt)| (base + first + j as i64, wt))
                    .filter(|&(k, _)| (0..=last).contains(&k))
                    .map(|(k, wt)| src[k as usize] * wt)
                    .sum();
            }
            let pos = (n * from) as f64 / to as f64;
            let lo = ((pos - kernel.half_width).ceil() as i64).max(0);
            let hi = ((pos + kernel.half_width).floor() as i64).min(last);
            (lo..=hi)
                .map(|k| src[k as usize] * kernel.eval(pos - k as f64))
                .sum::<f64>()
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: target_rate,
    })
}

/// Cuts `w` into consecutive, non-overlapping chunks of `seconds` each.
///
/// A trailing remainder shorter than one chunk is dropped.
pub fn segment(w: &Waveform, seconds: f64, song_id: &str, singer_id: &str) -> Result<Vec<Segment>> {
    let chunk = segment_len(seconds, w.sample_rate)?;
    Ok(w.samples
        .chunks_exact(chunk)
        .enumerate()
        .map(|(index, c)| Segment {
            audio: Waveform {
                samples: c.to_vec(),
                sample_rate: w.sample_rate,
            },
            song_id: song_id.to_string(),
            singer_id: singer_id.to_string(),
            index,
        })
        .collect())
}

/// Chunk length in samples for a segment duration.
pub fn segment_len(seconds: f64, sample_rate: u32) -> Result<usize> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "segment length must be positive, got {seconds}"
        )));
    }
    let chunk = (seconds * sample_rate as f64).round() as usize;
    if chunk == 0 {
        return Err(Error::InvalidArgument(format!(
            "segment of {seconds} s is shorter than one sample at {sample_rate} Hz"
        )));
    }
    Ok(chunk)
}
