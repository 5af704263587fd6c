//! Two-stage singer separation toolkit.
//!
//! A song is first split into vocals and accompaniment, the vocal track is then
//! separated into two lead vocals by every registered candidate model, and the
//! candidate whose two output channels follow the most similar pitch contour is
//! kept. Models are external processes; see [`backend`].
//!
//! ```text
//! song -> resample 8 kHz -> stage 1 -> vocal -> stage 2 (x N candidates)
//!      -> pitch tracks -> trend distance -> argmin -> two vocals
//! ```
//!
//! The crate also builds duet and self-harmonic training mixtures from vocal
//! stems ([`dataset`]) and scores separations with SI-SNRi and SDRi
//! ([`metrics`]).

pub mod audio;
pub mod backend;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod fixtures;
pub mod metrics;
pub mod pipeline;
pub mod pitch;
pub mod select;
pub mod selftest;

pub use audio::{read_wav, resample, segment, write_wav, Segment, Waveform};
pub use backend::{
    registry_load, run_backend, BackendKind, CandidateModel, OracleRefs, OracleSpec,
    SeparationBackend, Stage,
};
pub use dataset::{
    build_dataset, cmd_build_dataset, mix_at_snr, pair_segments, split_by_singer, DatasetConfig,
    DatasetManifest, MixPair, PairingKind, PairingScheme, Split, SplitRatios, StemEntry,
};
pub use error::{Error, Result};
pub use evaluate::{cmd_evaluate, EvaluationTable};
pub use metrics::{improvement, pit_evaluate, sdr, si_snr, EvalReport, Metric, INFINITY_DB};
pub use pipeline::{cmd_separate, RunReport, SeparateOptions};
pub use pitch::{load_pitch_track, track_pitch, PitchConfig, PitchTrack};
pub use select::{
    select_model, trend, trend_distance, SelectConfig, Selection, TrendScore, PENALTY,
};
pub use selftest::{run_selftest, SelftestReport};

/// Seed for runs that were not given one.
pub fn random_seed() -> u64 {
    rand::random()
}

/// Derives an independent seed for a sub-task (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
