//! Separation fidelity: SI-SNR, energy-ratio SDR, their improvements over the
//! unprocessed mixture, and permutation-invariant two-source evaluation.
//!
//! Perfect reconstructions have no finite dB value. They are reported as
//! [`INFINITY_DB`] so that reports stay serializable as plain JSON numbers.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Stand-in for +infinity dB.
pub const INFINITY_DB: f64 = 1e9;

/// Residual energies below this fraction of the target energy count as zero.
const EXACT_MATCH_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SiSnr,
    Sdr,
}

impl Metric {
    pub fn eval(self, reference: &Waveform, estimate: &Waveform) -> Result<f64> {
        match self {
            Metric::SiSnr => si_snr(reference, estimate),
            Metric::Sdr => sdr(reference, estimate),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn ratio_db(signal: f64, noise: f64) -> f64 {
    if noise <= EXACT_MATCH_RATIO * signal {
        return INFINITY_DB;
    }
    if signal <= 0.0 {
        return -INFINITY_DB;
    }
    (10.0 * (signal / noise).log10()).clamp(-INFINITY_DB, INFINITY_DB)
}

fn check_lengths(reference: &Waveform, estimate: &Waveform, min: usize) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::DegenerateInput(format!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.len() < min {
        return Err(Error::DegenerateInput(format!(
            "need at least {min} samples, got {}",
            reference.len()
        )));
    }
    Ok(())
}

/// Scale-invariant SNR in dB, computed on mean-centered signals.
pub fn si_snr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_lengths(reference, estimate, 2)?;
    let r = centered(reference.samples());
    let e = centered(estimate.samples());
    let rr = dot(&r, &r);
    let ee = dot(&e, &e);
    if rr == 0.0 {
        return Err(Error::DegenerateInput("reference has zero variance".into()));
    }
    if ee == 0.0 {
        return Err(Error::DegenerateInput("estimate has zero variance".into()));
    }
    let scale = dot(&e, &r) / rr;
    let (mut target, mut resid) = (0.0, 0.0);
    for (ri, ei) in r.iter().zip(&e) {
        let t = scale * ri;
        target += t * t;
        resid += (ei - t) * (ei - t);
    }
    Ok(ratio_db(target, resid))
}

/// Plain energy-ratio SDR: `10 log10(|ref|^2 / |ref - est|^2)`.
pub fn sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_lengths(reference, estimate, 1)?;
    let r = reference.samples();
    let rr = dot(r, r);
    if rr == 0.0 {
        return Err(Error::DegenerateInput("reference has zero energy".into()));
    }
    let err: f64 = r
        .iter()
        .zip(estimate.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(ratio_db(rr, err))
}

/// `metric(reference, estimate) - metric(reference, mixture)`.
///
/// A perfect estimate stays at [`INFINITY_DB`] rather than being offset by the
/// baseline.
pub fn improvement(
    metric: Metric,
    reference: &Waveform,
    estimate: &Waveform,
    mixture: &Waveform,
) -> Result<f64> {
    if mixture.len() != reference.len() {
        return Err(Error::DegenerateInput(format!(
            "mixture has {} samples, reference has {}",
            mixture.len(),
            reference.len()
        )));
    }
    let est = metric.eval(reference, estimate)?;
    if est >= INFINITY_DB {
        return Ok(INFINITY_DB);
    }
    let base = metric.eval(reference, mixture)?;
    Ok(est - base)
}

/// All four scores for one estimate/reference pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScores {
    pub si_snr_db: f64,
    pub si_snri_db: f64,
    pub sdr_db: f64,
    pub sdri_db: f64,
}

impl SourceScores {
    pub fn compute(reference: &Waveform, estimate: &Waveform, mixture: &Waveform) -> Result<Self> {
        let si_snr_db = si_snr(reference, estimate)?;
        let sdr_db = sdr(reference, estimate)?;
        let si_base = si_snr(reference, mixture)?;
        let sdr_base = sdr(reference, mixture)?;
        let improve = |v: f64, base: f64| {
            if v >= INFINITY_DB {
                INFINITY_DB
            } else {
                v - base
            }
        };
        Ok(Self {
            si_snr_db,
            si_snri_db: improve(si_snr_db, si_base),
            sdr_db,
            sdri_db: improve(sdr_db, sdr_base),
        })
    }

    pub fn mean(items: &[SourceScores]) -> SourceScores {
        let n = items.len().max(1) as f64;
        let avg = |f: fn(&SourceScores) -> f64| items.iter().map(f).sum::<f64>() / n;
        SourceScores {
            si_snr_db: avg(|s| s.si_snr_db),
            si_snri_db: avg(|s| s.si_snri_db),
            sdr_db: avg(|s| s.sdr_db),
            sdri_db: avg(|s| s.sdri_db),
        }
    }
}

/// Per-source scores under the permutation that maximizes mean SI-SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `permutation[k]` is the reference index matched to estimate `k`.
    pub permutation: [usize; 2],
    /// Scores indexed by estimate.
    pub sources: [SourceScores; 2],
    pub mean: SourceScores,
}

const PERMUTATIONS: [[usize; 2]; 2] = [[0, 1], [1, 0]];

/// Scores two estimates against two references, trying both assignments and
/// keeping the one with the higher mean SI-SNR. Ties keep the identity.
pub fn pit_evaluate(
    references: [&Waveform; 2],
    estimates: [&Waveform; 2],
    mixture: &Waveform,
) -> Result<EvalReport> {
    for w in references.iter().chain(estimates.iter()) {
        if w.len() != mixture.len() {
            return Err(Error::DegenerateInput(format!(
                "all signals must have {} samples, found {}",
                mixture.len(),
                w.len()
            )));
        }
    }
    let mut best: Option<([usize; 2], f64)> = None;
    for perm in PERMUTATIONS {
        let mean = (si_snr(references[perm[0]], estimates[0])?
            + si_snr(references[perm[1]], estimates[1])?)
            / 2.0;
        if best.is_none_or(|(_, m)| mean > m) {
            best = Some((perm, mean));
        }
    }
    let (permutation, _) = best.expect("two permutations evaluated");
    let sources = [
        SourceScores::compute(references[permutation[0]], estimates[0], mixture)?,
        SourceScores::compute(references[permutation[1]], estimates[1], mixture)?,
    ];
    Ok(EvalReport {
        permutation,
        mean: SourceScores::mean(&sources),
        sources,
    })
}
