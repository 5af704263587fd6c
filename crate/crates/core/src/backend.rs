//! Separation-model backends for both stages of the system.
//!
//! Trained networks run as external processes behind a command template.
//! Two built-in backends make the pipeline testable without any model:
//! an oracle that returns (optionally degraded) ground-truth stems, and a
//! passthrough that returns the input plus silence.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, write_wav, Waveform};
use crate::error::{Error, Result};

pub const REGISTRY_SCHEMA: &str = "mir-ss-registry/1";

/// Largest output length mismatch, in samples, that is silently repaired.
pub const LENGTH_TOLERANCE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Song in, (vocal, accompaniment) out.
    #[serde(rename = "stage1", alias = "stage1_vocal_accomp")]
    VocalAccompaniment,
    /// Mixed vocal in, two lead vocals out.
    #[serde(rename = "stage2", alias = "stage2_two_vocals")]
    TwoVocals,
}

impl Stage {
    fn output_tokens(self) -> [&'static str; 2] {
        match self {
            Stage::VocalAccompaniment => ["{out_vocal}", "{out_accomp}"],
            Stage::TwoVocals => ["{out_a}", "{out_b}"],
        }
    }
}

/// Ground-truth stems handed out by an oracle backend.
#[derive(Debug, Clone)]
pub enum OracleRefs {
    Files { ref_a: PathBuf, ref_b: PathBuf },
    Loaded(Arc<[Waveform; 2]>),
}

impl OracleRefs {
    fn load(&self) -> Result<[Waveform; 2]> {
        match self {
            OracleRefs::Files { ref_a, ref_b } => Ok([read_wav(ref_a)?, read_wav(ref_b)?]),
            OracleRefs::Loaded(refs) => Ok((**refs).clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSpec {
    pub refs: OracleRefs,
    pub swap: bool,
    /// Fraction of the other source mixed into each output, in `[0, 0.5)`.
    pub leak: f64,
    /// Additive white noise per channel at this SNR; `None` disables it.
    pub noise_snr_db: Option<f64>,
    pub seed: u64,
}

impl OracleSpec {
    pub fn new(refs: OracleRefs) -> Self {
        Self {
            refs,
            swap: false,
            leak: 0.0,
            noise_snr_db: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.leak) {
            return Err(Error::InvalidArgument(format!(
                "oracle leak {} must lie in [0, 0.5)",
                self.leak
            )));
        }
        if self.noise_snr_db.is_some_and(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "oracle noise SNR must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum BackendKind {
    /// Shell command with `{input}` and stage-specific output placeholders.
    ExternalCommand {
        command: String,
    },
    Oracle(OracleSpec),
    Passthrough,
}

#[derive(Debug, Clone)]
pub struct SeparationBackend {
    pub stage: Stage,
    pub kind: BackendKind,
}

impl SeparationBackend {
    pub fn external(stage: Stage, command: impl Into<String>) -> Self {
        Self {
            stage,
            kind: BackendKind::ExternalCommand {
                command: command.into(),
            },
        }
    }

    pub fn oracle(stage: Stage, spec: OracleSpec) -> Self {
        Self {
            stage,
            kind: BackendKind::Oracle(spec),
        }
    }

    pub fn passthrough(stage: Stage) -> Self {
        Self {
            stage,
            kind: BackendKind::Passthrough,
        }
    }

    /// Mixes `run_seed` into any randomness the backend owns.
    pub fn reseeded(&self, run_seed: u64) -> Self {
        let mut out = self.clone();
        if let BackendKind::Oracle(spec) = &mut out.kind {
            spec.seed = crate::derive_seed(spec.seed, run_seed);
        }
        out
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            BackendKind::ExternalCommand { .. } => "external_command",
            BackendKind::Oracle(_) => "oracle",
            BackendKind::Passthrough => "passthrough",
        }
    }
}

/// A registered model.
#[derive(Debug, Clone)]
pub struct CandidateModel {
    pub model_id: String,
    pub backend: SeparationBackend,
}

impl CandidateModel {
    pub fn new(model_id: impl Into<String>, backend: SeparationBackend) -> Self {
        Self {
            model_id: model_id.into(),
            backend,
        }
    }

    /// [`run_backend`] with failures attributed to this model.
    pub fn run(&self, input: &Waveform, workdir: &Path) -> Result<(Waveform, Waveform)> {
        run_backend(&self.backend, input, workdir).map_err(|e| match e {
            Error::BackendFailure { message, .. } => Error::BackendFailure {
                model_id: self.model_id.clone(),
                message,
            },
            Error::ContractViolation { message, .. } => Error::ContractViolation {
                model_id: self.model_id.clone(),
                message,
            },
            other => Error::BackendFailure {
                model_id: self.model_id.clone(),
                message: other.to_string(),
            },
        })
    }
}

fn contract(message: String) -> Error {
    Error::ContractViolation {
        model_id: String::new(),
        message,
    }
}

fn failure(message: String) -> Error {
    Error::BackendFailure {
        model_id: String::new(),
        message,
    }
}

/// Checks rate and length against the input, repairing off-by-one lengths.
fn conform(out: Waveform, input: &Waveform, which: &str) -> Result<Waveform> {
    if out.sample_rate() != input.sample_rate() {
        return Err(contract(format!(
            "{which} is sampled at {} Hz, input at {} Hz",
            out.sample_rate(),
            input.sample_rate()
        )));
    }
    let diff = out.len().abs_diff(input.len());
    if diff > LENGTH_TOLERANCE {
        return Err(contract(format!(
            "{which} has {} samples, input has {}",
            out.len(),
            input.len()
        )));
    }
    Ok(if diff == 0 {
        out
    } else {
        out.fit_to_len(input.len())
    })
}

/// Runs one backend on `input`; per-invocation scratch files live in a fresh
/// directory under `workdir` that is removed afterwards.
pub fn run_backend(
    b: &SeparationBackend,
    input: &Waveform,
    workdir: &Path,
) -> Result<(Waveform, Waveform)> {
    match &b.kind {
        BackendKind::Passthrough => Ok((
            input.clone(),
            Waveform::silence(input.len(), input.sample_rate()),
        )),
        BackendKind::Oracle(spec) => run_oracle(spec, input),
        BackendKind::ExternalCommand { command } => run_external(b.stage, command, input, workdir),
    }
}

fn run_oracle(spec: &OracleSpec, input: &Waveform) -> Result<(Waveform, Waveform)> {
    spec.validate()?;
    let [a, b] = spec.refs.load()?;
    let a = conform(a, input, "oracle reference A")?;
    let b = conform(b, input, "oracle reference B")?;
    let keep = 1.0 - spec.leak;
    let mut out_a = a.scaled(keep).add(&b.scaled(spec.leak))?;
    let mut out_b = b.scaled(keep).add(&a.scaled(spec.leak))?;
    if let Some(snr_db) = spec.noise_snr_db {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        out_a = add_noise(&out_a, snr_db, &mut rng)?;
        out_b = add_noise(&out_b, snr_db, &mut rng)?;
    }
    Ok(if spec.swap {
        (out_b, out_a)
    } else {
        (out_a, out_b)
    })
}

fn add_noise(w: &Waveform, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<Waveform> {
    let noise: Vec<f64> = (0..w.len()).map(|_| StandardNormal.sample(rng)).collect();
    let noise = Waveform::new(noise, w.sample_rate())?;
    let power = w.mean_square();
    if power == 0.0 {
        return Ok(w.clone());
    }
    let gain = (power / (noise.mean_square() * 10f64.powf(snr_db / 10.0))).sqrt();
    w.add(&noise.scaled(gain))
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

fn run_external(
    stage: Stage,
    template: &str,
    input: &Waveform,
    workdir: &Path,
) -> Result<(Waveform, Waveform)> {
    std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let scratch = tempfile::Builder::new()
        .prefix("run-")
        .tempdir_in(workdir)
        .map_err(|e| Error::io(workdir, e))?;
    let input_path = scratch.path().join("input.wav");
    write_wav(input, &input_path)?;
    let [tok_a, tok_b] = stage.output_tokens();
    let out_a = scratch.path().join("out_a.wav");
    let out_b = scratch.path().join("out_b.wav");
    let command = template
        .replace("{input}", &shell_quote(&input_path))
        .replace(tok_a, &shell_quote(&out_a))
        .replace(tok_b, &shell_quote(&out_b));

    let output = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(scratch.path())
        .output()
        .map_err(|e| failure(format!("could not spawn `{command}`: {e}")))?;
    if !output.status.success() {
        return Err(failure(format!(
            "command exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let read = |path: &Path, which: &str| -> Result<Waveform> {
        if !path.exists() {
            return Err(failure(format!("command did not write {which}")));
        }
        let w = read_wav(path).map_err(|e| failure(format!("unreadable {which}: {e}")))?;
        conform(w, input, which)
    };
    Ok((read(&out_a, tok_a)?, read(&out_b, tok_b)?))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RegistryFile {
    Versioned {
        schema: String,
        models: Vec<RegistryEntry>,
    },
    Bare(Vec<RegistryEntry>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryEntry {
    model_id: String,
    stage: Stage,
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    oracle: Option<OracleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleEntry {
    ref_a: PathBuf,
    ref_b: PathBuf,
    #[serde(default)]
    swap: bool,
    #[serde(default)]
    leak: f64,
    #[serde(default)]
    noise_snr_db: Option<f64>,
    #[serde(default)]
    seed: u64,
}

/// Parses registry JSON; relative oracle paths resolve against `base_dir`.
pub fn parse_registry(text: &str, base_dir: &Path) -> Result<Vec<CandidateModel>> {
    let file: RegistryFile =
        serde_json::from_str(text).map_err(|e| Error::MalformedRegistry(e.to_string()))?;
    let entries = match file {
        RegistryFile::Versioned { schema, models } => {
            if schema != REGISTRY_SCHEMA {
                return Err(Error::MalformedRegistry(format!(
                    "schema `{schema}` is not `{REGISTRY_SCHEMA}`"
                )));
            }
            models
        }
        RegistryFile::Bare(models) => models,
    };

    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if e.model_id.trim().is_empty() {
            return Err(Error::MalformedRegistry("empty model_id".into()));
        }
        if !seen.insert(e.model_id.clone()) {
            return Err(Error::DuplicateModelId(e.model_id));
        }
        let kind = e.kind.as_deref().unwrap_or(if e.oracle.is_some() {
            "oracle"
        } else {
            "external_command"
        });
        let bad = |msg: &str| Error::MalformedRegistry(format!("`{}`: {msg}", e.model_id));
        let kind = match kind {
            "external_command" => BackendKind::ExternalCommand {
                command: e.command.clone().ok_or_else(|| bad("missing `command`"))?,
            },
            "passthrough" => BackendKind::Passthrough,
            "oracle" => {
                let o = e
                    .oracle
                    .as_ref()
                    .ok_or_else(|| bad("missing `oracle` block"))?;
                let spec = OracleSpec {
                    refs: OracleRefs::Files {
                        ref_a: base_dir.join(&o.ref_a),
                        ref_b: base_dir.join(&o.ref_b),
                    },
                    swap: o.swap,
                    leak: o.leak,
                    noise_snr_db: o.noise_snr_db,
                    seed: o.seed,
                };
                spec.validate().map_err(|err| bad(&err.to_string()))?;
                BackendKind::Oracle(spec)
            }
            other => return Err(bad(&format!("unknown kind `{other}`"))),
        };
        out.push(CandidateModel {
            model_id: e.model_id,
            backend: SeparationBackend {
                stage: e.stage,
                kind,
            },
        });
    }
    Ok(out)
}

pub fn registry_load(path: impl AsRef<Path>) -> Result<Vec<CandidateModel>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_registry(&text, path.parent().unwrap_or(Path::new(".")))
}
