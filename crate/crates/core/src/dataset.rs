//! Training-mixture construction from isolated vocal stems.
//!
//! Songs are split into train/valid/test so that no singer appears in more than
//! one split, cut into fixed-length segments, paired either across singers
//! (duet) or within one singer (self-harmonic), and mixed at a random SNR.
//! One integer seed drives every random draw.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{self, read_wav, resample, write_wav, Segment, Waveform, PCM16_SCALE};
use crate::derive_seed;
use crate::error::{Error, Result};

pub const DATASET_SCHEMA: &str = "mir-ss/1";
pub const MANIFEST_FILE: &str = "dataset.json";

/// Mixtures louder than this are scaled down jointly with their sources. Two
/// LSBs below full scale, so the sum of the quantized sources still fits.
pub const MIX_PEAK_LIMIT: f64 = 1.0 - 2.0 / PCM16_SCALE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemEntry {
    pub song_id: String,
    pub singer_id: String,
    pub vocal_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Reads an input manifest: a JSON array of `{song_id, singer_id, vocal_path}`.
/// Relative vocal paths resolve against the manifest's directory.
pub fn load_stem_manifest(path: impl AsRef<Path>) -> Result<Vec<StemEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<StemEntry> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &mut entries {
        if e.vocal_path.is_relative() {
            e.vocal_path = base.join(&e.vocal_path);
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = Self { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Valid => self.valid,
            Split::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.valid, self.test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be non-negative: {all:?}"
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must sum to 1: {all:?}"
            )));
        }
        Ok(())
    }
}

/// Assigns whole singers to splits.
///
/// Singer groups are shuffled, each split with a positive ratio first receives
/// one group, and every remaining group goes to the split furthest below its
/// target song count.
pub fn split_by_singer(
    entries: &[StemEntry],
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<StemEntry>> {
    ratios.validate()?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry(e.singer_id.as_str()).or_default().push(i);
    }
    let active: Vec<Split> = Split::ALL
        .into_iter()
        .filter(|&s| ratios.get(s) > 0.0)
        .collect();
    if groups.len() < active.len() {
        return Err(Error::InsufficientSingers {
            groups: groups.len(),
            splits: active.len(),
        });
    }

    let mut order: Vec<&Vec<usize>> = groups.values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = entries.len() as f64;
    let mut counts: BTreeMap<Split, usize> = BTreeMap::new();
    let mut out = entries.to_vec();
    for (k, group) in order.into_iter().enumerate() {
        let split = if k < active.len() {
            active[k]
        } else {
            // Largest deficit; ties go to the earlier split.
            active
                .iter()
                .copied()
                .map(|s| {
                    let deficit =
                        ratios.get(s) * total - counts.get(&s).copied().unwrap_or(0) as f64;
                    (s, deficit)
                })
                .fold(None::<(Split, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                })
                .expect("at least one active split")
                .0
        };
        *counts.entry(split).or_default() += group.len();
        for &i in group {
            out[i].split = Some(split);
        }
    }
    Ok(out)
}

/// Checks that no singer appears in two splits.
pub fn check_singer_disjoint(entries: &[StemEntry]) -> Result<()> {
    let mut home: BTreeMap<&str, Split> = BTreeMap::new();
    for e in entries {
        let Some(split) = e.split else {
            return Err(Error::InvalidArgument(format!(
                "song `{}` has no split",
                e.song_id
            )));
        };
        if let Some(prev) = home.insert(&e.singer_id, split) {
            if prev != split {
                return Err(Error::InvalidArgument(format!(
                    "singer `{}` appears in both {prev} and {split}",
                    e.singer_id
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingKind {
    /// Partner comes from a different singer.
    Duet,
    /// Partner is another segment of the same singer.
    #[serde(alias = "self")]
    SelfHarmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingScheme {
    pub kind: PairingKind,
    /// Passes over the segment list; each pass draws fresh partners.
    pub repeats: u32,
}

impl PairingScheme {
    pub fn new(kind: PairingKind, repeats: u32) -> Result<Self> {
        if repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be at least 1".into()));
        }
        Ok(Self { kind, repeats })
    }
}

/// Identity of a segment without its audio.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentId {
    pub song_id: String,
    pub singer_id: String,
    pub segment: usize,
}

/// Anything that can be paired.
pub trait Pairable {
    fn singer_id(&self) -> &str;
    fn song_id(&self) -> &str;
    fn index(&self) -> usize;
}

impl Pairable for Segment {
    fn singer_id(&self) -> &str {
        &self.singer_id
    }
    fn song_id(&self) -> &str {
        &self.song_id
    }
    fn index(&self) -> usize {
        self.index
    }
}

impl Pairable for SegmentId {
    fn singer_id(&self) -> &str {
        &self.singer_id
    }
    fn song_id(&self) -> &str {
        &self.song_id
    }
    fn index(&self) -> usize {
        self.segment
    }
}

/// Draws one partner for every segment on every pass. Returns index pairs into
/// `segments`; the first element of each pair walks the list in order.
pub fn pair_segments<T: Pairable>(
    segments: &[T],
    scheme: PairingScheme,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if scheme.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut by_singer: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in segments.iter().enumerate() {
        by_singer.entry(s.singer_id()).or_default().push(i);
    }
    let singers: Vec<&str> = by_singer.keys().copied().collect();
    match scheme.kind {
        PairingKind::Duet if !segments.is_empty() && singers.len() < 2 => {
            return Err(Error::PairingImpossible(format!(
                "duet pairing needs two singers, found only `{}`",
                singers[0]
            )))
        }
        PairingKind::SelfHarmonic => {
            if let Some((singer, _)) = by_singer.iter().find(|(_, v)| v.len() < 2) {
                return Err(Error::PairingImpossible(format!(
                    "singer `{singer}` has a single segment; self-harmonic pairing needs two"
                )));
            }
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(segments.len() * scheme.repeats as usize);
    for _ in 0..scheme.repeats {
        for (i, s) in segments.iter().enumerate() {
            let partner = match scheme.kind {
                PairingKind::Duet => {
                    let own = singers
                        .iter()
                        .position(|&x| x == s.singer_id())
                        .expect("singer indexed");
                    let mut k = rng.gen_range(0..singers.len() - 1);
                    if k >= own {
                        k += 1;
                    }
                    let pool = &by_singer[singers[k]];
                    pool[rng.gen_range(0..pool.len())]
                }
                PairingKind::SelfHarmonic => {
                    let pool = &by_singer[s.singer_id()];
                    let own = pool.iter().position(|&j| j == i).expect("segment indexed");
                    let mut k = rng.gen_range(0..pool.len() - 1);
                    if k >= own {
                        k += 1;
                    }
                    pool[k]
                }
            };
            pairs.push((i, partner));
        }
    }
    Ok(pairs)
}

/// Two sources mixed at a target SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct MixPair {
    pub mixture: Waveform,
    pub source_a: Waveform,
    /// Stored after gain, exactly as it appears in the mixture.
    pub source_b: Waveform,
    pub snr_db: f64,
    /// Gain applied to the raw second source.
    pub gain: f64,
    /// Joint scale applied to all three signals to stay below full scale.
    pub normalization: f64,
}

impl MixPair {
    /// `10 log10(P(source_a) / P(source_b))` on the stored signals.
    pub fn measured_snr_db(&self) -> f64 {
        10.0 * (self.source_a.mean_square() / self.source_b.mean_square()).log10()
    }

    /// Sources snapped to the 16-bit grid and a mixture rebuilt as their exact
    /// sum, so that the written files add up without rounding error.
    pub fn quantized(&self) -> Result<MixPair> {
        let source_a = self.source_a.quantized()?;
        let source_b = self.source_b.quantized()?;
        let mixture = source_a.add(&source_b)?;
        Ok(MixPair {
            mixture,
            source_a,
            source_b,
            ..self.clone()
        })
    }
}

/// Mixes `b` into `a` so that the power ratio of `a` to the scaled `b` is
/// `snr_db`.
pub fn mix_at_snr(a: &Waveform, b: &Waveform, snr_db: f64) -> Result<MixPair> {
    a.check_compatible(b)?;
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "SNR {snr_db} is not finite"
        )));
    }
    let (pa, pb) = (a.mean_square(), b.mean_square());
    if pa == 0.0 || pb == 0.0 {
        return Err(Error::SilentSource);
    }
    let gain = (pa / (pb * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut source_a = a.clone();
    let mut source_b = b.scaled(gain);
    let mut mixture = source_a.add(&source_b)?;
    let mut normalization = 1.0;
    let peak = mixture.peak();
    if peak > MIX_PEAK_LIMIT {
        normalization = MIX_PEAK_LIMIT / peak;
        source_a = source_a.scaled(normalization);
        source_b = source_b.scaled(normalization);
        mixture = source_a.add(&source_b)?;
    }
    Ok(MixPair {
        mixture,
        source_a,
        source_b,
        snr_db,
        gain,
        normalization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scheme: PairingScheme,
    pub snr_range_db: (f64, f64),
    pub seed: u64,
    pub ratios: SplitRatios,
    pub segment_seconds: f64,
    pub sample_rate: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scheme: PairingScheme {
                kind: PairingKind::Duet,
                repeats: 1,
            },
            snr_range_db: (-5.0, 5.0),
            seed: 0,
            ratios: SplitRatios::default(),
            segment_seconds: audio::SEGMENT_SECONDS,
            sample_rate: audio::CANONICAL_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFiles {
    pub mix: String,
    pub src_a: String,
    pub src_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub split: Split,
    pub snr_db: f64,
    pub gain: f64,
    pub normalization: f64,
    pub a: SegmentId,
    pub b: SegmentId,
    /// Paths relative to the dataset directory.
    pub files: PairFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub songs: usize,
    pub singers: usize,
    pub segments: usize,
    pub silent_segments_skipped: usize,
    pub pairs: usize,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: String,
    pub config: DatasetConfig,
    pub stems: Vec<StemEntry>,
    pub summary: Vec<SplitSummary>,
    pub pairs: Vec<PairRecord>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if m.schema != DATASET_SCHEMA {
            return Err(Error::InvalidArgument(format!(
                "{}: schema `{}` is not `{DATASET_SCHEMA}`",
                path.display(),
                m.schema
            )));
        }
        Ok(m)
    }

    /// Plain-text table: pairs per split and total duration.
    pub fn summary_table(&self) -> String {
        fn hms(seconds: f64) -> String {
            let minutes = seconds / 60.0;
            format!("{}hr {:.1}min", (minutes / 60.0).floor(), minutes % 60.0)
        }
        let label = match self.config.scheme.kind {
            PairingKind::Duet => "duet",
            PairingKind::SelfHarmonic => "self-harmonic",
        };
        let count = |s: Split| {
            self.summary
                .iter()
                .find(|x| x.split == s)
                .map_or(0, |x| x.pairs)
        };
        let total: f64 = self.summary.iter().map(|s| s.duration_seconds).sum();
        format!(
            "{:<16}{:>8}{:>8}{:>8}  {}\n{:<16}{:>8}{:>8}{:>8}  {}\n",
            "",
            "Train",
            "Valid",
            "Test",
            "Duration",
            format!("{label} x{}", self.config.scheme.repeats),
            count(Split::Train),
            count(Split::Valid),
            count(Split::Test),
            hms(total)
        )
    }
}

/// Loads a stem manifest and builds the dataset with `jobs` workers
/// (`0` uses every logical CPU).
pub fn cmd_build_dataset(
    manifest: &Path,
    cfg: &DatasetConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<DatasetManifest> {
    let entries = load_stem_manifest(manifest)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("worker pool: {e}")))?;
    pool.install(|| build_dataset(&entries, cfg, out_dir))
}

fn write_pair(pair: &MixPair, root: &Path, files: &PairFiles) -> Result<()> {
    let q = pair.quantized()?;
    let dir = root.join(&files.mix);
    if let Some(parent) = dir.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_wav(&q.mixture, root.join(&files.mix))?;
    write_wav(&q.source_a, root.join(&files.src_a))?;
    write_wav(&q.source_b, root.join(&files.src_b))?;
    Ok(())
}

const SEED_SPLIT: u64 = 1;
const SEED_PAIR: u64 = 2;
const SEED_SNR: u64 = 3;

/// Builds a mixture dataset under `out_dir` and writes its `dataset.json`.
///
/// Entries without a split are assigned one by [`split_by_singer`]; entries
/// that all carry a split are used as given.
pub fn build_dataset(
    manifest: &[StemEntry],
    cfg: &DatasetConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let (lo, hi) = cfg.snr_range_db;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!(
            "SNR range [{lo}, {hi}] is empty or not finite"
        )));
    }
    if cfg.scheme.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    for e in manifest {
        if !seen.insert(&e.song_id) {
            return Err(Error::InvalidArgument(format!(
                "song id `{}` appears twice",
                e.song_id
            )));
        }
    }
    let stems = match manifest.iter().filter(|e| e.split.is_some()).count() {
        0 => split_by_singer(manifest, cfg.ratios, derive_seed(cfg.seed, SEED_SPLIT))?,
        n if n == manifest.len() => manifest.to_vec(),
        _ => {
            return Err(Error::InvalidArgument(
                "either every stem or no stem may carry a split".into(),
            ))
        }
    };
    check_singer_disjoint(&stems)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut summary = Vec::new();
    let mut records = Vec::new();
    for split in Split::ALL {
        let split_stems: Vec<&StemEntry> =
            stems.iter().filter(|e| e.split == Some(split)).collect();
        let mut segments: Vec<Segment> = Vec::new();
        let mut silent = 0;
        for stem in &split_stems {
            let raw = read_wav(&stem.vocal_path)?;
            let audio = resample(&raw, cfg.sample_rate)?;
            for seg in audio::segment(&audio, cfg.segment_seconds, &stem.song_id, &stem.singer_id)?
            {
                if seg.audio.mean_square() == 0.0 {
                    silent += 1;
                } else {
                    segments.push(seg);
                }
            }
        }
        let split_tag = split as u64 + 1;
        let pairs = if segments.is_empty() {
            Vec::new()
        } else {
            pair_segments(
                &segments,
                cfg.scheme,
                derive_seed(derive_seed(cfg.seed, SEED_PAIR), split_tag),
            )?
        };
        let mut snr_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(cfg.seed, SEED_SNR), split_tag));
        let snrs: Vec<f64> = pairs
            .iter()
            .map(|_| {
                if lo == hi {
                    lo
                } else {
                    snr_rng.gen_range(lo..=hi)
                }
            })
            .collect();

        let split_records: Vec<PairRecord> = pairs
            .par_iter()
            .zip(snrs.par_iter())
            .enumerate()
            .map(|(k, (&(ia, ib), &snr))| {
                let (sa, sb) = (&segments[ia], &segments[ib]);
                let pair = mix_at_snr(&sa.audio, &sb.audio, snr)?;
                let pair_id = format!("{split}-{k:06}");
                let files = PairFiles {
                    mix: format!("{split}/{pair_id}/mix.wav"),
                    src_a: format!("{split}/{pair_id}/srcA.wav"),
                    src_b: format!("{split}/{pair_id}/srcB.wav"),
                };
                write_pair(&pair, out_dir, &files)?;
                let id = |s: &Segment| SegmentId {
                    song_id: s.song_id.clone(),
                    singer_id: s.singer_id.clone(),
                    segment: s.index,
                };
                Ok(PairRecord {
                    pair_id,
                    split,
                    snr_db: snr,
                    gain: pair.gain,
                    normalization: pair.normalization,
                    a: id(sa),
                    b: id(sb),
                    files,
                })
            })
            .collect::<Result<_>>()?;

        summary.push(SplitSummary {
            split,
            songs: split_stems.len(),
            singers: split_stems
                .iter()
                .map(|e| e.singer_id.as_str())
                .collect::<HashSet<_>>()
                .len(),
            segments: segments.len(),
            silent_segments_skipped: silent,
            pairs: split_records.len(),
            duration_seconds: split_records.len() as f64 * cfg.segment_seconds,
        });
        records.extend(split_records);
    }

    let stems = stems
        .into_iter()
        .map(|mut e| {
            e.vocal_path = relative_to(&e.vocal_path, out_dir);
            e
        })
        .collect();
    let manifest = DatasetManifest {
        schema: DATASET_SCHEMA.to_string(),
        config: cfg.clone(),
        stems,
        summary,
        pairs: records,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Best-effort relative path so manifests do not embed machine-specific roots.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let (Ok(path_abs), Ok(base_abs)) = (path.canonicalize(), base.canonicalize()) else {
        return path.to_path_buf();
    };
    let p: Vec<_> = path_abs.components().collect();
    let b: Vec<_> = base_abs.components().collect();
    let common = p.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &p[common..] {
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(singers: usize, songs_each: usize) -> Vec<StemEntry> {
        (0..singers)
            .flat_map(|s| {
                (0..songs_each).map(move |k| StemEntry {
                    song_id: format!("song{s}_{k}"),
                    singer_id: format!("singer{s}"),
                    vocal_path: PathBuf::from(format!("{s}_{k}.wav")),
                    split: None,
                })
            })
            .collect()
    }

    fn ids(singers: usize, segments_each: usize) -> Vec<SegmentId> {
        (0..singers)
            .flat_map(|s| {
                (0..segments_each).map(move |k| SegmentId {
                    song_id: format!("song{s}"),
                    singer_id: format!("singer{s}"),
                    segment: k,
                })
            })
            .collect()
    }

    #[test]
    fn ten_singers_fill_exactly() {
        for seed in 0..20 {
            let out = split_by_singer(&entries(10, 1), SplitRatios::default(), seed).unwrap();
            let count = |s| out.iter().filter(|e| e.split == Some(s)).count();
            assert_eq!(
                (count(Split::Train), count(Split::Valid), count(Split::Test)),
                (8, 1, 1)
            );
        }
    }

    #[test]
    fn too_few_singers() {
        assert!(matches!(
            split_by_singer(&entries(2, 3), SplitRatios::default(), 0),
            Err(Error::InsufficientSingers {
                groups: 2,
                splits: 3
            })
        ));
        let all_train = SplitRatios::new(1.0, 0.0, 0.0).unwrap();
        assert!(split_by_singer(&entries(1, 3), all_train, 0).is_ok());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let e = entries(7, 3);
        let a = split_by_singer(&e, SplitRatios::default(), 9).unwrap();
        let b = split_by_singer(&e, SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
        check_singer_disjoint(&a).unwrap();
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitRatios::new(0.8, 0.1, 0.2).is_err());
        assert!(SplitRatios::new(1.1, -0.1, 0.0).is_err());
        assert!(SplitRatios::new(0.8, 0.2, 0.0).is_ok());
    }

    #[test]
    fn duet_pairs_cross_singers() {
        let segs = ids(2, 3);
        let scheme = PairingScheme::new(PairingKind::Duet, 1).unwrap();
        let pairs = pair_segments(&segs, scheme, 4).unwrap();
        assert_eq!(pairs.len(), 6);
        assert!(pairs
            .iter()
            .all(|&(a, b)| segs[a].singer_id != segs[b].singer_id));
        let twice =
            pair_segments(&segs, PairingScheme::new(PairingKind::Duet, 2).unwrap(), 4).unwrap();
        assert_eq!(twice.len(), 12);
        assert_eq!(&twice[..6], &pairs[..]);
    }

    #[test]
    fn self_harmonic_pairs_stay_within_singer() {
        let segs = ids(1, 4);
        let scheme = PairingScheme::new(PairingKind::SelfHarmonic, 1).unwrap();
        let pairs = pair_segments(&segs, scheme, 1).unwrap();
        assert_eq!(pairs.len(), 4);
        for (a, b) in pairs {
            assert_eq!(segs[a].singer_id, segs[b].singer_id);
            assert_ne!(segs[a].segment, segs[b].segment);
        }
    }

    #[test]
    fn impossible_pairings_name_the_problem() {
        let one = ids(1, 3);
        let duet = PairingScheme::new(PairingKind::Duet, 1).unwrap();
        assert!(matches!(
            pair_segments(&one, duet, 0),
            Err(Error::PairingImpossible(_))
        ));
        let mut segs = ids(2, 2);
        segs.pop();
        let shs = PairingScheme::new(PairingKind::SelfHarmonic, 1).unwrap();
        match pair_segments(&segs, shs, 0) {
            Err(Error::PairingImpossible(msg)) => assert!(msg.contains("singer1"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(PairingScheme::new(PairingKind::Duet, 0).is_err());
    }

    fn noise(seed: u64, n: usize, amp: f64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), 8000).unwrap()
    }

    #[test]
    fn equal_power_at_zero_db_has_unit_gain() {
        let a = Waveform::new(vec![0.5, -0.5, 0.5, -0.5], 8000).unwrap();
        let b = Waveform::new(vec![-0.5, -0.5, 0.5, 0.5], 8000).unwrap();
        let m = mix_at_snr(&a, &b, 0.0).unwrap();
        assert_eq!(m.gain, 1.0);
        assert_eq!(m.measured_snr_db(), 0.0);
    }

    #[test]
    fn mixing_hits_target_snr() {
        let a = noise(1, 1000, 0.3);
        let b = noise(2, 1000, 0.05);
        let m = mix_at_snr(&a, &b, 5.0).unwrap();
        assert!((m.measured_snr_db() - 5.0).abs() < 1e-6);
        assert_eq!(m.mixture, m.source_a.add(&m.source_b).unwrap());
    }

    #[test]
    fn loud_mixes_are_normalized_jointly() {
        let a = noise(3, 1000, 0.95);
        let b = noise(4, 1000, 0.95);
        let m = mix_at_snr(&a, &b, -5.0).unwrap();
        assert!(m.normalization < 1.0);
        assert!(m.mixture.peak() <= MIX_PEAK_LIMIT + 1e-15);
        assert!((m.measured_snr_db() + 5.0).abs() < 1e-9);
        let q = m.quantized().unwrap();
        assert!(q.mixture.peak() <= 1.0);
    }

    #[test]
    fn silent_source_is_rejected() {
        let a = noise(5, 100, 0.3);
        let z = Waveform::silence(100, 8000);
        assert!(matches!(mix_at_snr(&a, &z, 0.0), Err(Error::SilentSource)));
        assert!(matches!(mix_at_snr(&z, &a, 0.0), Err(Error::SilentSource)));
    }

    #[test]
    fn summary_table_layout() {
        let m = DatasetManifest {
            schema: DATASET_SCHEMA.into(),
            config: DatasetConfig::default(),
            stems: vec![],
            summary: vec![SplitSummary {
                split: Split::Train,
                songs: 1,
                singers: 1,
                segments: 3,
                silent_segments_skipped: 0,
                pairs: 3,
                duration_seconds: 5400.0,
            }],
            pairs: vec![],
        };
        let t = m.summary_table();
        assert!(t.contains("Train"));
        assert!(t.contains("1hr 30.0min"), "{t}");
    }
}
