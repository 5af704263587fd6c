//! Built-in fixture suite: synthetic duets, oracle backends, and the core
//! invariants of every module, runnable from the command line.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, Waveform};
use crate::backend::{CandidateModel, OracleRefs, OracleSpec, SeparationBackend, Stage};
use crate::dataset::mix_at_snr;
use crate::fixtures::{synthetic_duet, write_fixture, FixtureFiles, CARRIER_A_HZ};
use crate::metrics::{improvement, pit_evaluate, Metric, INFINITY_DB};
use crate::pipeline::{cmd_separate, SeparateOptions};
use crate::pitch::{track_pitch, PitchConfig, PitchTrack};
use crate::select::{trend_distance, PENALTY};

/// Seed of the bundled fixture.
pub const FIXTURE_SEED: u64 = 2022;
pub const FIXTURE_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type Check = std::result::Result<String, String>;
type NamedCheck<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Writes the bundled fixture into `dir`.
pub fn write_fixtures(dir: &Path) -> crate::Result<FixtureFiles> {
    write_fixture(&synthetic_duet(FIXTURE_SEED, FIXTURE_SECONDS)?, dir)
}

/// Runs every check. With `fixture_dir` the fixture files found there are used
/// (and written first if absent); otherwise a temporary copy is generated.
pub fn run_selftest(fixture_dir: Option<&Path>) -> SelftestReport {
    let tmp = tempfile::tempdir().ok();
    let dir: PathBuf = match (fixture_dir, &tmp) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(t)) => t.path().join("fixtures"),
        (None, None) => std::env::temp_dir().join("mirss-selftest"),
    };
    let files = FixtureFiles::in_dir(&dir);
    if !files.song.exists() {
        if let Err(e) = write_fixtures(&dir) {
            return SelftestReport {
                checks: vec![CheckResult {
                    name: "fixture-write".into(),
                    passed: false,
                    detail: e.to_string(),
                }],
            };
        }
    }
    let work = tmp
        .as_ref()
        .map(|t| t.path().join("work"))
        .unwrap_or_else(|| dir.join("work"));

    let checks: Vec<NamedCheck> = vec![
        ("fixture-integrity", Box::new(|| fixture_integrity(&files))),
        ("pitch-sine-accuracy", Box::new(pitch_sine_accuracy)),
        ("pitch-silence-unvoiced", Box::new(pitch_silence)),
        (
            "trend-oracle-equivalence",
            Box::new(trend_oracle_equivalence),
        ),
        ("silence-penalty", Box::new(silence_penalty)),
        ("mix-snr-exactness", Box::new(mix_snr_exactness)),
        (
            "metric-baseline-identity",
            Box::new(|| metric_baseline(&files)),
        ),
        ("pit-swap-recovery", Box::new(|| pit_swap(&files))),
        (
            "selection-prefers-clean-oracle",
            Box::new(|| selection(&files, &work)),
        ),
        (
            "passthrough-conservation",
            Box::new(|| conservation(&files, &work)),
        ),
    ];
    SelftestReport {
        checks: checks
            .into_iter()
            .map(|(name, f)| {
                let (passed, detail) = match f() {
                    Ok(d) => (true, d),
                    Err(d) => (false, d),
                };
                CheckResult {
                    name: name.to_string(),
                    passed,
                    detail,
                }
            })
            .collect(),
    }
}

fn load(p: &Path) -> std::result::Result<Waveform, String> {
    read_wav(p).map_err(|e| e.to_string())
}

fn fixture_integrity(files: &FixtureFiles) -> Check {
    let song = load(&files.song)?;
    let vocals = load(&files.vocals)?;
    let acc = load(&files.accompaniment)?;
    let a = load(&files.singer_a)?;
    let b = load(&files.singer_b)?;
    let expected = (FIXTURE_SECONDS * 8000.0) as usize;
    for (name, w) in [
        ("song", &song),
        ("vocals", &vocals),
        ("accompaniment", &acc),
        ("singer_a", &a),
        ("singer_b", &b),
    ] {
        ensure(w.sample_rate() == 8000 && w.len() == expected, || {
            format!("{name}: {} samples at {} Hz", w.len(), w.sample_rate())
        })?;
    }
    let err = |x: &Waveform, parts: &[&Waveform]| {
        (0..x.len())
            .map(|i| (x.samples()[i] - parts.iter().map(|p| p.samples()[i]).sum::<f64>()).abs())
            .fold(0.0f64, f64::max)
    };
    let e1 = err(&vocals, &[&a, &b]);
    let e2 = err(&song, &[&vocals, &acc]);
    ensure(e1 == 0.0 && e2 == 0.0, || {
        format!("stems do not add up: vocals off by {e1}, song off by {e2}")
    })?;
    Ok("all stems present and consistent".into())
}

fn pitch_sine_accuracy() -> Check {
    let cfg = PitchConfig::default();
    for f in [110.0, 220.0, 440.0] {
        let w = Waveform::from_fn(16000, 8000, |t| {
            0.5 * (2.0 * std::f64::consts::PI * f * t).sin()
        });
        let t = track_pitch(&w, &cfg).map_err(|e| e.to_string())?;
        let mut voiced: Vec<f64> = t.pitches_hz.iter().copied().filter(|&p| p > 0.0).collect();
        ensure(voiced.len() as f64 >= 0.95 * t.len() as f64, || {
            format!("{f} Hz: only {}/{} frames voiced", voiced.len(), t.len())
        })?;
        voiced.sort_by(f64::total_cmp);
        let median = voiced[voiced.len() / 2];
        ensure((median - f).abs() <= 0.01 * f, || {
            format!("{f} Hz tracked as {median}")
        })?;
    }
    Ok("110/220/440 Hz within 1%".into())
}

fn pitch_silence() -> Check {
    let t = track_pitch(&Waveform::silence(8000, 8000), &PitchConfig::default())
        .map_err(|e| e.to_string())?;
    ensure(t.is_silent(), || "silence produced voiced frames".into())?;
    Ok(format!("{} frames unvoiced", t.len()))
}

fn track(p: Vec<f64>) -> PitchTrack {
    PitchTrack {
        pitches_hz: p,
        hop_seconds: 0.01,
        fmin_hz: 50.0,
        fmax_hz: 400.0,
    }
}

/// Direct transcription of the scoring rule with explicit masks.
fn brute_force_score(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if a.iter().all(|&x| x == 0.0) || b.iter().all(|&x| x == 0.0) {
        return PENALTY;
    }
    let mut total = 0.0;
    for i in 0..n.saturating_sub(1) {
        if i == 0 || i + 1 >= n {
            continue;
        }
        let mask = [i - 1, i, i + 1].iter().all(|&k| a[k] > 0.0 && b[k] > 0.0);
        if mask {
            total += ((a[i + 1] - a[i]) - (b[i + 1] - b[i])).abs();
        }
    }
    total
}

fn trend_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let n = rng.gen_range(3..=12);
        let mut draw = || -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        0.0
                    } else {
                        rng.gen_range(50..=400) as f64
                    }
                })
                .collect()
        };
        let (a, b) = (draw(), draw());
        let got = trend_distance(&track(a.clone()), &track(b.clone()))
            .map_err(|e| e.to_string())?
            .score;
        let want = brute_force_score(&a, &b);
        ensure(got == want, || format!("{a:?} / {b:?}: {got} != {want}"))?;
    }
    Ok("200 random track pairs agree".into())
}

fn silence_penalty() -> Check {
    let voiced = track(vec![100.0, 110.0, 120.0, 130.0]);
    let silent = track(vec![0.0; 4]);
    let d = trend_distance(&voiced, &silent).map_err(|e| e.to_string())?;
    ensure(d.score == PENALTY, || format!("score {}", d.score))?;
    Ok("silent channel scores the penalty".into())
}

fn mix_snr_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut noise = || {
            Waveform::new((0..4000).map(|_| rng.gen_range(-0.5..0.5)).collect(), 8000)
                .expect("finite")
        };
        let (a, b) = (noise(), noise());
        let snr = rng.gen_range(-5.0..=5.0);
        let m = mix_at_snr(&a, &b, snr).map_err(|e| e.to_string())?;
        let err = (m.measured_snr_db() - snr).abs();
        ensure(err <= 1e-6, || {
            format!("target {snr} dB, measured off by {err}")
        })?;
    }
    Ok("20 mixes within 1e-6 dB".into())
}

fn metric_baseline(files: &FixtureFiles) -> Check {
    let a = load(&files.singer_a)?;
    let v = load(&files.vocals)?;
    for m in [Metric::SiSnr, Metric::Sdr] {
        let d = improvement(m, &a, &v, &v).map_err(|e| e.to_string())?;
        ensure(d == 0.0, || {
            format!("{m:?} improvement of the mixture is {d}")
        })?;
    }
    Ok("mixture improvement is exactly zero".into())
}

fn pit_swap(files: &FixtureFiles) -> Check {
    let a = load(&files.singer_a)?;
    let b = load(&files.singer_b)?;
    let v = load(&files.vocals)?;
    let r = pit_evaluate([&a, &b], [&b, &a], &v).map_err(|e| e.to_string())?;
    ensure(
        r.permutation == [1, 0] && r.mean.si_snr_db == INFINITY_DB,
        || format!("permutation {:?}, mean {}", r.permutation, r.mean.si_snr_db),
    )?;
    Ok("swapped estimates recovered".into())
}

fn oracle(a: &Path, b: &Path, leak: f64) -> SeparationBackend {
    let mut spec = OracleSpec::new(OracleRefs::Files {
        ref_a: a.to_path_buf(),
        ref_b: b.to_path_buf(),
    });
    spec.leak = leak;
    SeparationBackend::oracle(Stage::TwoVocals, spec)
}

fn selection(files: &FixtureFiles, work: &Path) -> Check {
    let mut stage1 = OracleSpec::new(OracleRefs::Files {
        ref_a: files.vocals.clone(),
        ref_b: files.accompaniment.clone(),
    });
    stage1.leak = 0.0;
    let models = vec![
        CandidateModel::new(
            "stage1",
            SeparationBackend::oracle(Stage::VocalAccompaniment, stage1),
        ),
        CandidateModel::new(
            "oracle-clean",
            oracle(&files.singer_a, &files.singer_b, 0.0),
        ),
        CandidateModel::new(
            "oracle-leaky",
            oracle(&files.singer_a, &files.singer_b, 0.4),
        ),
        CandidateModel::new("silent-b", SeparationBackend::passthrough(Stage::TwoVocals)),
    ];
    let opts = SeparateOptions {
        stage1_id: "stage1".into(),
        seed: Some(FIXTURE_SEED),
        ..Default::default()
    };
    let report = cmd_separate(&files.song, &models, &work.join("select"), &opts)
        .map_err(|e| e.to_string())?;
    ensure(report.chosen == "oracle-clean", || {
        format!("chose {} ({:?})", report.chosen, report.candidates)
    })?;
    let penalized = report
        .candidates
        .iter()
        .find(|c| c.model_id == "silent-b")
        .and_then(|c| c.penalized);
    ensure(penalized == Some(true), || {
        "silent candidate not penalized".into()
    })?;
    Ok(format!("chose oracle-clean near {CARRIER_A_HZ} Hz carrier"))
}

fn conservation(files: &FixtureFiles, work: &Path) -> Check {
    let song = load(&files.song)?;
    let out = work.join("conservation");
    let models = vec![
        CandidateModel::new(
            "pass",
            SeparationBackend::passthrough(Stage::VocalAccompaniment),
        ),
        CandidateModel::new("clean", oracle(&files.singer_a, &files.singer_b, 0.0)),
    ];
    let opts = SeparateOptions {
        stage1_id: "pass".into(),
        seed: Some(0),
        ..Default::default()
    };
    cmd_separate(&files.song, &models, &out, &opts).map_err(|e| e.to_string())?;
    let (vocal, acc) = crate::backend::run_backend(
        &SeparationBackend::passthrough(Stage::VocalAccompaniment),
        &song,
        work,
    )
    .map_err(|e| e.to_string())?;
    let vocal_plus_acc: Vec<f64> = vocal
        .samples()
        .iter()
        .zip(acc.samples())
        .map(|(x, y)| x + y)
        .collect();
    ensure(vocal_plus_acc == song.samples(), || {
        "vocal + accompaniment != input".into()
    })?;
    let acc = load(&out.join(crate::pipeline::ACCOMPANIMENT_FILE))?;
    ensure(acc.samples().iter().all(|&s| s == 0.0), || {
        "accompaniment not silent".into()
    })?;
    Ok("vocal + accompaniment reproduces the input".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_fixtures_pass() {
        let report = run_selftest(None);
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn corrupted_fixture_names_the_check() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_fixtures(dir.path()).unwrap();
        let mut bytes = std::fs::read(&files.singer_b).unwrap();
        let n = bytes.len();
        for b in &mut bytes[n - 2000..] {
            *b = 0x7f;
        }
        std::fs::write(&files.singer_b, bytes).unwrap();
        let report = run_selftest(Some(dir.path()));
        assert!(!report.passed());
        let integrity = report
            .checks
            .iter()
            .find(|c| c.name == "fixture-integrity")
            .unwrap();
        assert!(!integrity.passed);
    }
}
