//! `mirss`: separate duets, build mixture datasets, evaluate estimates.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mirss_core::dataset::{DatasetConfig, PairingKind, PairingScheme, SplitRatios};
use mirss_core::pipeline::{cmd_separate, SeparateOptions, REPORT_FILE};
use mirss_core::select::SelectConfig;
use mirss_core::{cmd_build_dataset, cmd_evaluate, registry_load, run_selftest, Error};

const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_INCOMPLETE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "mirss", version, about = "Two-stage singer separation toolkit")]
struct Cli {
    /// key=value defaults; flags and MIRSS_* variables take precedence.
    #[arg(long, global = true, env = "MIRSS_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every random draw; drawn from entropy and reported when absent.
    #[arg(long, global = true, env = "MIRSS_SEED")]
    seed: Option<u64>,
    /// Worker threads; 0 uses every logical CPU.
    #[arg(long, global = true, env = "MIRSS_JOBS", default_value_t = 0)]
    jobs: usize,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Separate a song into accompaniment and two lead vocals.
    Separate(SeparateArgs),
    /// Mix vocal stems into a duet or self-harmonic dataset.
    BuildDataset(BuildArgs),
    /// Score separated estimates against a built dataset.
    Evaluate(EvaluateArgs),
    /// Run the bundled synthetic fixture suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct SeparateArgs {
    song: PathBuf,
    #[arg(long, env = "MIRSS_REGISTRY")]
    registry: PathBuf,
    /// Model id of the vocal/accompaniment stage.
    #[arg(long, env = "MIRSS_STAGE1")]
    stage1: String,
    #[arg(long, env = "MIRSS_OUT")]
    out: PathBuf,
    /// Use this stage-2 model and skip selection.
    #[arg(long, env = "MIRSS_MODEL")]
    model: Option<String>,
    /// Score fixed-length segments and sum them.
    #[arg(long, env = "MIRSS_SEGMENT_SECONDS")]
    segment_seconds: Option<f64>,
    /// Compare pitch in semitones instead of Hz.
    #[arg(long, env = "MIRSS_SEMITONES")]
    semitones: bool,
    /// Reference lead vocals; adds an evaluation to the report.
    #[arg(long, num_args = 2, value_names = ["REF_A", "REF_B"])]
    references: Option<Vec<PathBuf>>,
    /// Keep every candidate's outputs under candidates/.
    #[arg(long, env = "MIRSS_KEEP_CANDIDATES")]
    keep_candidates: bool,
    #[arg(long, env = "MIRSS_WORKDIR")]
    workdir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    Duet,
    #[value(name = "self")]
    SelfHarmonic,
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// JSON stem manifest.
    manifest: PathBuf,
    #[arg(long, env = "MIRSS_SCHEME", value_enum, default_value = "duet")]
    scheme: Scheme,
    #[arg(long, env = "MIRSS_REPEATS", default_value_t = 1)]
    repeats: u32,
    /// SNR range in dB, `lo..hi`.
    #[arg(
        long,
        env = "MIRSS_SNR",
        default_value = "-5..5",
        allow_hyphen_values = true
    )]
    snr: String,
    /// Train,valid,test fractions.
    #[arg(long, env = "MIRSS_RATIOS", default_value = "0.8,0.1,0.1")]
    ratios: String,
    #[arg(long, env = "MIRSS_SEGMENT_SECONDS", default_value_t = 10.0)]
    segment_seconds: f64,
    #[arg(long, env = "MIRSS_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset directory or its dataset.json.
    dataset: PathBuf,
    estimates: PathBuf,
    /// CSV destination; defaults to evaluation.csv in the estimates directory.
    #[arg(long, env = "MIRSS_CSV")]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Use (or create) fixture files in this directory.
    #[arg(long, env = "MIRSS_FIXTURES")]
    fixtures: Option<PathBuf>,
}

fn parse_snr(s: &str) -> anyhow::Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once("..")
        .with_context(|| format!("SNR range `{s}` is not of the form lo..hi"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn parse_ratios(s: &str) -> anyhow::Result<SplitRatios> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("ratios `{s}` are not numbers"))?;
    let [train, valid, test] = v[..] else {
        bail!("ratios `{s}` must have three values");
    };
    Ok(SplitRatios::new(train, valid, test)?)
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn separate(cli: &Cli, args: &SeparateArgs) -> anyhow::Result<u8> {
    let registry = registry_load(&args.registry).map_err(|e| match e {
        Error::Io { .. } => Error::ConfigInvalid(e.to_string()),
        e => e,
    })?;
    let references = args
        .references
        .as_ref()
        .map(|r| (r[0].clone(), r[1].clone()));
    let opts = SeparateOptions {
        stage1_id: args.stage1.clone(),
        model: args.model.clone(),
        seed: cli.seed,
        select: SelectConfig {
            semitones: args.semitones,
            segment_seconds: args.segment_seconds,
            jobs: cli.jobs,
            ..Default::default()
        },
        references,
        keep_candidates: args.keep_candidates,
        workdir: args.workdir.clone(),
    };
    let report = cmd_separate(&args.song, &registry, &args.out, &opts)?;
    if cli.json {
        print_json(&report)?;
    } else {
        for c in &report.candidates {
            let score = match (&c.score, &c.error) {
                (Some(s), _) => format!("{s:.4}"),
                (None, Some(e)) => format!("failed: {e}"),
                (None, None) => "-".into(),
            };
            println!("{:<24}{score}", c.model_id);
        }
        println!("chosen: {} (seed {})", report.chosen, report.seed);
        println!("report: {}", args.out.join(REPORT_FILE).display());
    }
    Ok(0)
}

fn build(cli: &Cli, args: &BuildArgs) -> anyhow::Result<u8> {
    let kind = match args.scheme {
        Scheme::Duet => PairingKind::Duet,
        Scheme::SelfHarmonic => PairingKind::SelfHarmonic,
    };
    let cfg = DatasetConfig {
        scheme: PairingScheme::new(kind, args.repeats)?,
        snr_range_db: parse_snr(&args.snr).map_err(config_error)?,
        seed: cli.seed.unwrap_or_else(mirss_core::random_seed),
        ratios: parse_ratios(&args.ratios).map_err(config_error)?,
        segment_seconds: args.segment_seconds,
        ..Default::default()
    };
    let manifest = cmd_build_dataset(&args.manifest, &cfg, &args.out, cli.jobs)?;
    if cli.json {
        print_json(&serde_json::json!({
            "seed": manifest.config.seed,
            "summary": manifest.summary,
        }))?;
    } else {
        print!("{}", manifest.summary_table());
        println!("seed {}", manifest.config.seed);
    }
    Ok(0)
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> anyhow::Result<u8> {
    if !args.estimates.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "estimates directory {} does not exist",
            args.estimates.display()
        ))
        .into());
    }
    let table = cmd_evaluate(&args.dataset, &args.estimates, cli.jobs)?;
    let csv = args
        .csv
        .clone()
        .unwrap_or_else(|| args.estimates.join("evaluation.csv"));
    table.write_csv(&csv)?;
    if cli.json {
        print_json(&table)?;
    } else {
        print!("{}", table.render());
    }
    if table.is_complete() {
        Ok(0)
    } else {
        eprintln!(
            "{}",
            Error::MissingEstimate(
                table
                    .missing
                    .iter()
                    .cloned()
                    .chain(table.failed.iter().map(|(id, _)| id.clone()))
                    .collect()
            )
        );
        Ok(EXIT_INCOMPLETE)
    }
}

fn selftest(cli: &Cli, args: &SelftestArgs) -> anyhow::Result<u8> {
    let report = run_selftest(args.fixtures.as_deref());
    if cli.json {
        print_json(&report.checks)?;
    } else {
        for c in &report.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            println!("{tag} {:<32}{}", c.name, c.detail);
        }
    }
    Ok(if report.passed() { 0 } else { 1 })
}

/// Marks an argument error as a configuration error.
fn config_error(e: anyhow::Error) -> anyhow::Error {
    Error::ConfigInvalid(e.to_string()).into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::ConfigInvalid(_)
            | Error::InvalidArgument(_)
            | Error::MalformedRegistry(_)
            | Error::DuplicateModelId(_),
        ) => EXIT_CONFIG,
        Some(Error::BackendFailure { .. } | Error::ContractViolation { .. }) => EXIT_BACKEND,
        Some(Error::MissingEstimate(_)) => EXIT_INCOMPLETE,
        _ => 1,
    }
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Separate(a) => separate(cli, a),
        Command::BuildDataset(a) => build(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Selftest(a) => selftest(cli, a),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if let Err(e) = config::apply(config::locate(&args).as_deref().map(Path::new)) {
        eprintln!("mirss: {e:#}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("mirss: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
