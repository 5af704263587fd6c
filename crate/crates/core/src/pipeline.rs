//! End-to-end orchestration: song in, two lead vocals and an accompaniment out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, resample, write_wav, Waveform, CANONICAL_RATE};
use crate::backend::{CandidateModel, Stage};
use crate::error::{Error, Result};
use crate::metrics::{pit_evaluate, EvalReport};
use crate::select::{score_channels, select_model, SelectConfig};

pub const REPORT_FILE: &str = "report.json";
pub const VOCAL_A_FILE: &str = "vocal_a.wav";
pub const VOCAL_B_FILE: &str = "vocal_b.wav";
pub const ACCOMPANIMENT_FILE: &str = "accompaniment.wav";

#[derive(Debug, Clone, Default)]
pub struct SeparateOptions {
    pub stage1_id: String,
    /// Run only this stage-2 model and skip selection.
    pub model: Option<String>,
    /// `None` draws a seed from the OS; the drawn value lands in the report.
    pub seed: Option<u64>,
    pub select: SelectConfig,
    /// Ground-truth lead vocals; adds an evaluation to the report.
    pub references: Option<(PathBuf, PathBuf)>,
    /// Also write every candidate's outputs under `candidates/<model_id>/`.
    pub keep_candidates: bool,
    /// Scratch space for backends; a temporary directory when unset.
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub model_id: String,
    pub score: Option<f64>,
    pub contributing_frames: Option<usize>,
    pub penalized: Option<bool>,
    pub error: Option<String>,
    pub outputs: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub vocal_a: String,
    pub vocal_b: String,
    pub accompaniment: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input: String,
    pub seed: u64,
    pub stage1_model: String,
    pub selection_bypassed: bool,
    pub candidates: Vec<CandidateEntry>,
    pub chosen: String,
    pub all_penalized: bool,
    pub outputs: OutputPaths,
    /// Samples hard-clipped to full scale when writing the three outputs.
    pub clipped_samples: usize,
    pub evaluation: Option<EvalReport>,
    pub timings: Timings,
}

impl RunReport {
    /// JSON without wall-clock timings, for reproducibility comparisons.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timings = Timings::default();
        Ok(serde_json::to_string_pretty(&copy)?)
    }
}

/// Checks the registry against the requested run before touching any audio.
pub fn validate_registry(models: &[CandidateModel], opts: &SeparateOptions) -> Result<()> {
    match models.iter().find(|m| m.model_id == opts.stage1_id) {
        None => {
            return Err(Error::ConfigInvalid(format!(
                "stage-1 model `{}` is not registered",
                opts.stage1_id
            )))
        }
        Some(m) if m.backend.stage != Stage::VocalAccompaniment => {
            return Err(Error::ConfigInvalid(format!(
                "`{}` is registered as a stage-2 model",
                opts.stage1_id
            )))
        }
        Some(_) => {}
    }
    let stage2: Vec<&CandidateModel> = models
        .iter()
        .filter(|m| m.backend.stage == Stage::TwoVocals)
        .collect();
    if stage2.is_empty() {
        return Err(Error::ConfigInvalid(
            "registry has no stage-2 models".into(),
        ));
    }
    if let Some(id) = &opts.model {
        if !stage2.iter().any(|m| &m.model_id == id) {
            return Err(Error::ConfigInvalid(format!(
                "stage-2 model `{id}` is not registered"
            )));
        }
    }
    Ok(())
}

/// Files written so far, removed again if the run fails.
struct Written(Vec<PathBuf>);

impl Written {
    fn write(&mut self, w: &Waveform, path: PathBuf) -> Result<()> {
        write_wav(w, &path)?;
        self.0.push(path);
        Ok(())
    }

    fn rollback(&self) {
        for p in &self.0 {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn load_at_canonical_rate(path: &Path) -> Result<Waveform> {
    resample(&read_wav(path)?, CANONICAL_RATE)
}

/// Runs stage 1, stage 2 over the candidates, selection, and writes the
/// accompaniment, the two chosen vocals and `report.json` into `out_dir`.
pub fn cmd_separate(
    song: &Path,
    registry: &[CandidateModel],
    out_dir: &Path,
    opts: &SeparateOptions,
) -> Result<RunReport> {
    validate_registry(registry, opts)?;
    let seed = opts.seed.unwrap_or_else(rand::random);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Written(Vec::new());
    let result = separate_inner(song, registry, out_dir, opts, seed, &mut written);
    if result.is_err() {
        written.rollback();
    }
    result
}

fn separate_inner(
    song: &Path,
    registry: &[CandidateModel],
    out_dir: &Path,
    opts: &SeparateOptions,
    seed: u64,
    written: &mut Written,
) -> Result<RunReport> {
    let start = Instant::now();
    let scratch;
    let workdir = match &opts.workdir {
        Some(w) => w.as_path(),
        None => {
            scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            scratch.path()
        }
    };

    let input = load_at_canonical_rate(song)?;
    let load_seconds = start.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let stage1 = registry
        .iter()
        .find(|m| m.model_id == opts.stage1_id)
        .expect("validated");
    let stage1 = CandidateModel::new(stage1.model_id.clone(), stage1.backend.reseeded(seed));
    let (vocal, accompaniment) = stage1.run(&input, workdir)?;
    let stage1_seconds = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let stage2: Vec<CandidateModel> = registry
        .iter()
        .filter(|m| m.backend.stage == Stage::TwoVocals)
        .filter(|m| opts.model.as_ref().is_none_or(|id| &m.model_id == id))
        .map(|m| CandidateModel::new(m.model_id.clone(), m.backend.reseeded(seed)))
        .collect();

    let (chosen, all_penalized, mut candidates, out_a, out_b) = if opts.model.is_some() {
        let model = &stage2[0];
        let (a, b) = model.run(&vocal, workdir)?;
        let entry = CandidateEntry {
            model_id: model.model_id.clone(),
            score: None,
            contributing_frames: None,
            penalized: None,
            error: None,
            outputs: None,
        };
        (
            model.model_id.clone(),
            false,
            vec![(entry, Some((a.clone(), b.clone())))],
            a,
            b,
        )
    } else {
        let sel = select_model(&vocal, &stage2, &opts.select, workdir)?;
        let (a, b) = sel.chosen_outputs();
        let (a, b) = (a.clone(), b.clone());
        let entries = sel
            .candidates
            .into_iter()
            .map(|c| match c.result {
                Ok((s, x, y)) => (
                    CandidateEntry {
                        model_id: c.model_id,
                        score: Some(s.score),
                        contributing_frames: Some(s.contributing_frames),
                        penalized: Some(s.penalized),
                        error: None,
                        outputs: None,
                    },
                    Some((x, y)),
                ),
                Err(message) => (
                    CandidateEntry {
                        model_id: c.model_id,
                        score: None,
                        contributing_frames: None,
                        penalized: None,
                        error: Some(message),
                        outputs: None,
                    },
                    None,
                ),
            })
            .collect();
        (sel.chosen, sel.all_penalized, entries, a, b)
    };
    let stage2_seconds = t2.elapsed().as_secs_f64();

    let mut clipped_samples = 0;
    let mut clip = |w: &Waveform| {
        let (c, n) = w.clipped();
        clipped_samples += n;
        c
    };
    let (acc_out, a_out, b_out) = (clip(&accompaniment), clip(&out_a), clip(&out_b));
    written.write(&acc_out, out_dir.join(ACCOMPANIMENT_FILE))?;
    written.write(&a_out, out_dir.join(VOCAL_A_FILE))?;
    written.write(&b_out, out_dir.join(VOCAL_B_FILE))?;

    if opts.keep_candidates {
        for (entry, outputs) in &mut candidates {
            if let Some((x, y)) = outputs {
                let dir = out_dir.join("candidates").join(&entry.model_id);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                written.write(&x.clipped().0, dir.join(VOCAL_A_FILE))?;
                written.write(&y.clipped().0, dir.join(VOCAL_B_FILE))?;
                entry.outputs = Some([
                    format!("candidates/{}/{VOCAL_A_FILE}", entry.model_id),
                    format!("candidates/{}/{VOCAL_B_FILE}", entry.model_id),
                ]);
            }
        }
    }

    let evaluation = match &opts.references {
        None => None,
        Some((ra, rb)) => {
            let ra = load_at_canonical_rate(ra)?.fit_to_len(vocal.len());
            let rb = load_at_canonical_rate(rb)?.fit_to_len(vocal.len());
            Some(pit_evaluate([&ra, &rb], [&out_a, &out_b], &vocal)?)
        }
    };

    let report = RunReport {
        input: song.display().to_string(),
        seed,
        stage1_model: opts.stage1_id.clone(),
        selection_bypassed: opts.model.is_some(),
        candidates: candidates.into_iter().map(|(e, _)| e).collect(),
        chosen,
        all_penalized,
        outputs: OutputPaths {
            vocal_a: VOCAL_A_FILE.into(),
            vocal_b: VOCAL_B_FILE.into(),
            accompaniment: ACCOMPANIMENT_FILE.into(),
        },
        clipped_samples,
        evaluation,
        timings: Timings {
            load_seconds,
            stage1_seconds,
            stage2_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    let path = out_dir.join(REPORT_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    written.0.push(path);
    Ok(report)
}

/// Trend score of an already separated pair of files, e.g. outputs of a model
/// run outside the toolkit.
pub fn score_files(a: &Path, b: &Path, cfg: &SelectConfig) -> Result<crate::select::TrendScore> {
    let a = load_at_canonical_rate(a)?;
    let b = load_at_canonical_rate(b)?.fit_to_len(a.len());
    score_channels("external", &a, &b, cfg)
}
