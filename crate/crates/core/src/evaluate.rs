//! Batch evaluation of separated estimates against a built dataset.
//!
//! Estimates for pair `P` are looked up as either a two-channel `P.wav` or a
//! directory `P/` holding `est_a.wav` and `est_b.wav`. Only vocals are scored.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, read_wav_channels, Waveform};
use crate::dataset::{DatasetManifest, PairRecord, Split};
use crate::error::{Error, Result};
use crate::metrics::{pit_evaluate, SourceScores, INFINITY_DB};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub split: Split,
    pub permutation: [usize; 2],
    pub sources: [SourceScores; 2],
    pub mean: SourceScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub rows: Vec<PairResult>,
    /// Mean over evaluated pairs of the per-pair means.
    pub mean: Option<SourceScores>,
    pub missing: Vec<String>,
    /// Pairs whose estimates existed but could not be scored.
    pub failed: Vec<(String, String)>,
}

impl EvaluationTable {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.failed.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        w.write_record([
            "pair_id",
            "split",
            "perm",
            "si_snri_a",
            "si_snri_b",
            "sdri_a",
            "sdri_b",
            "si_snri_mean",
            "sdri_mean",
        ])
        .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.pair_id.clone(),
                r.split.to_string(),
                format!("{}{}", r.permutation[0], r.permutation[1]),
                r.sources[0].si_snri_db.to_string(),
                r.sources[1].si_snri_db.to_string(),
                r.sources[0].sdri_db.to_string(),
                r.sources[1].sdri_db.to_string(),
                r.mean.si_snri_db.to_string(),
                r.mean.sdri_db.to_string(),
            ])
            .map_err(io)?;
        }
        if let Some(m) = &self.mean {
            w.write_record([
                "MEAN".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                m.si_snri_db.to_string(),
                m.sdri_db.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Human-readable table; sentinel values print as `+inf(cap)`.
    pub fn render(&self) -> String {
        fn db(v: f64) -> String {
            if v >= INFINITY_DB {
                "+inf(cap)".into()
            } else {
                format!("{v:.4}")
            }
        }
        let mut out = format!("{:<16}{:>14}{:>14}\n", "pair", "SI-SNRi(dB)", "SDRi(dB)");
        for r in &self.rows {
            out += &format!(
                "{:<16}{:>14}{:>14}\n",
                r.pair_id,
                db(r.mean.si_snri_db),
                db(r.mean.sdri_db)
            );
        }
        if let Some(m) = &self.mean {
            out += &format!(
                "{:<16}{:>14}{:>14}\n",
                "MEAN",
                db(m.si_snri_db),
                db(m.sdri_db)
            );
        }
        for id in &self.missing {
            out += &format!("{id:<16} missing estimate\n");
        }
        for (id, msg) in &self.failed {
            out += &format!("{id:<16} failed: {msg}\n");
        }
        out
    }
}

enum Lookup {
    Found([Waveform; 2]),
    Missing,
}

fn find_estimates(dir: &Path, pair_id: &str) -> Result<Lookup> {
    let stereo = dir.join(format!("{pair_id}.wav"));
    if stereo.exists() {
        let (channels, _) = read_wav_channels(&stereo)?;
        let [a, b]: [Waveform; 2] = channels.try_into().map_err(|c: Vec<Waveform>| {
            Error::InvalidArgument(format!(
                "{} has {} channels, expected 2",
                stereo.display(),
                c.len()
            ))
        })?;
        return Ok(Lookup::Found([a, b]));
    }
    let sub: PathBuf = dir.join(pair_id);
    let (a, b) = (sub.join("est_a.wav"), sub.join("est_b.wav"));
    if a.exists() && b.exists() {
        return Ok(Lookup::Found([read_wav(a)?, read_wav(b)?]));
    }
    Ok(Lookup::Missing)
}

fn evaluate_pair(root: &Path, est_dir: &Path, rec: &PairRecord) -> Result<Option<PairResult>> {
    let Lookup::Found([ea, eb]) = find_estimates(est_dir, &rec.pair_id)? else {
        return Ok(None);
    };
    let mix = read_wav(root.join(&rec.files.mix))?;
    let ra = read_wav(root.join(&rec.files.src_a))?;
    let rb = read_wav(root.join(&rec.files.src_b))?;
    let report = pit_evaluate([&ra, &rb], [&ea, &eb], &mix)?;
    Ok(Some(PairResult {
        pair_id: rec.pair_id.clone(),
        split: rec.split,
        permutation: report.permutation,
        sources: report.sources,
        mean: report.mean,
    }))
}

/// Scores every pair of the dataset at `dataset` (directory or manifest path).
/// Results keep manifest order regardless of `jobs`.
pub fn cmd_evaluate(dataset: &Path, estimates_dir: &Path, jobs: usize) -> Result<EvaluationTable> {
    let manifest = DatasetManifest::load(dataset)?;
    let root = if dataset.is_dir() {
        dataset.to_path_buf()
    } else {
        dataset.parent().unwrap_or(Path::new(".")).to_path_buf()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("worker pool: {e}")))?;
    let results: Vec<(String, Result<Option<PairResult>>)> = pool.install(|| {
        manifest
            .pairs
            .par_iter()
            .map(|rec| {
                (
                    rec.pair_id.clone(),
                    evaluate_pair(&root, estimates_dir, rec),
                )
            })
            .collect()
    });

    let mut table = EvaluationTable {
        rows: Vec::new(),
        mean: None,
        missing: Vec::new(),
        failed: Vec::new(),
    };
    for (id, r) in results {
        match r {
            Ok(Some(row)) => table.rows.push(row),
            Ok(None) => table.missing.push(id),
            Err(e) => table.failed.push((id, e.to_string())),
        }
    }
    if !table.rows.is_empty() {
        let means: Vec<SourceScores> = table.rows.iter().map(|r| r.mean).collect();
        table.mean = Some(SourceScores::mean(&means));
    }
    Ok(table)
}
