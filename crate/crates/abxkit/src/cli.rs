//! Command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal
//! invariant failure. Machine-readable output goes to `--out` files or
//! stdout; everything meant for people goes to stderr.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abxkit_core::gaps::AvgBasis;
use abxkit_core::kernels::{DistanceSpec, FrameMetric, Frames, SequenceMode};
use abxkit_core::losses::check_gradients;
use abxkit_core::quantize::{
    assign_units, fit_kmeans, units_to_features, KMeansConfig, UnitEncoding,
};
use abxkit_core::score::{
    run_language_abx, run_phonetic_abx, AbxOptions, AbxReport, TripletSampling,
};
use abxkit_core::task::{build_language_cells, build_phonetic_cells, AbxCondition, ConditionKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codebook::{read_codebook, write_codebook, write_units};
use crate::error::{data_err, Error, Result};
use crate::featstore::{write_archive, Archive};
use crate::itemfile::{read_language_items, read_phone_items};
use crate::parallel::RayonExecutor;
use crate::report::{percent_raw, report_json, write_cell_csv, write_cell_listing};
use crate::{gapio, synth, VERSION};

/// Largest gradient disagreement `loss check` accepts.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "abxkit", version = VERSION, about = "ABX discrimination and related evaluation tools")]
pub struct Cli {
    /// Worker threads: a positive count or `max`.
    #[arg(long, global = true, value_name = "N|max", value_parser = parse_threads)]
    pub threads: Option<Threads>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Max,
    Count(usize),
}

fn parse_threads(s: &str) -> std::result::Result<Threads, String> {
    if s == "max" {
        return Ok(Threads::Max);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `max`, got {s:?}")),
        Ok(n) => Ok(Threads::Count(n)),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// ABX discrimination scores.
    #[command(subcommand)]
    Abx(AbxCommand),
    /// k-means codebooks and discrete units.
    #[command(subcommand)]
    Quantize(QuantizeCommand),
    /// Loss function self-checks.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Multilingual gap and grounding gain analysis.
    Gaps(GapsArgs),
    /// Generate a synthetic fixture.
    Syngen(SyngenArgs),
}

#[derive(Debug, Subcommand)]
pub enum AbxCommand {
    /// Phone discrimination within or across speakers.
    Phonetic(PhoneticArgs),
    /// Language discrimination over whole utterances.
    Language(LanguageArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Within,
    Across,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Angular,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SequenceArg {
    Dtw,
    #[value(name = "mean_pool")]
    MeanPool,
}

#[derive(Debug, Args)]
pub struct CommonAbx {
    /// Feature archive directory.
    #[arg(long)]
    pub features: PathBuf,
    /// Item file.
    #[arg(long)]
    pub items: PathBuf,
    #[arg(long, value_enum, default_value = "cosine")]
    pub frame_metric: MetricArg,
    #[arg(long, value_enum, default_value = "dtw")]
    pub sequence_mode: SequenceArg,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Score at most N triplets per cell, sampled uniformly.
    #[arg(long, value_name = "N")]
    pub max_triplets: Option<usize>,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub min_class_a: usize,
    #[arg(long, default_value_t = 1)]
    pub min_class_b: usize,
    /// Also write per-cell scores as CSV.
    #[arg(long, value_name = "FILE")]
    pub cell_scores: Option<PathBuf>,
    /// Also write the enumerated cells with their pool sizes.
    #[arg(long, value_name = "FILE")]
    pub cell_listing: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhoneticArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[command(flatten)]
    pub common: CommonAbx,
}

#[derive(Debug, Args)]
pub struct LanguageArgs {
    /// Draw A, B and X from the same speaker.
    #[arg(long)]
    pub same_speaker: bool,
    #[command(flatten)]
    pub common: CommonAbx,
}

#[derive(Debug, Subcommand)]
pub enum QuantizeCommand {
    /// Fit a k-means codebook on a frame sample.
    Fit(FitArgs),
    /// Map every frame to its nearest centroid.
    Apply(ApplyArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    /// Frames sampled for fitting.
    #[arg(long, default_value_t = 1_000_000)]
    pub sample: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Codebook path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EncodingArg {
    #[value(name = "one_hot")]
    OneHot,
    Centroid,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long, value_enum, default_value = "one_hot")]
    pub encoding: EncodingArg,
    /// Output archive directory; `units.txt` is written alongside.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    /// Compare analytic gradients with finite differences.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    Table,
    Exact,
}

#[derive(Debug, Args)]
pub struct GapsArgs {
    /// CSV (`stage,setting,ws,as`) or JSON report mapping.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Row averages used for the Avg gap and the gains.
    #[arg(long, value_enum, default_value = "table")]
    pub avg_basis: BasisArg,
}

#[derive(Debug, Args)]
pub struct SyngenArgs {
    /// Fixture spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `std::env::args`, runs and maps the outcome to an exit status.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    ExitCode::from(run_args(std::env::args_os()))
}

/// Everything `main` does except logger setup; returns the exit status.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(Threads::Count(n)) => Some(n),
        Some(Threads::Max) | None => None,
    };
    match cli.command {
        Command::Abx(cmd) => {
            let exec = RayonExecutor::new(threads)?;
            match cmd {
                AbxCommand::Phonetic(a) => abx_phonetic(a, &exec),
                AbxCommand::Language(a) => abx_language(a, &exec),
            }
        }
        Command::Quantize(QuantizeCommand::Fit(a)) => {
            quantize_fit(a, &RayonExecutor::new(threads)?)
        }
        Command::Quantize(QuantizeCommand::Apply(a)) => {
            quantize_apply(a, &RayonExecutor::new(threads)?)
        }
        Command::Loss(LossCommand::Check(a)) => loss_check(a),
        Command::Gaps(a) => gaps(a),
        Command::Syngen(a) => syngen(a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn options(c: &CommonAbx) -> AbxOptions {
    let frame_metric = match c.frame_metric {
        MetricArg::Cosine => FrameMetric::Cosine,
        MetricArg::Angular => FrameMetric::Angular,
    };
    let sequence_mode = match c.sequence_mode {
        SequenceArg::Dtw => SequenceMode::Dtw,
        SequenceArg::MeanPool => SequenceMode::MeanPool,
    };
    AbxOptions {
        distance: DistanceSpec::new(frame_metric, sequence_mode),
        sampling: c.max_triplets.map(|max_triplets| TripletSampling {
            max_triplets,
            seed: c.seed,
        }),
    }
}

fn finish_abx(report: &AbxReport, c: &CommonAbx) -> Result<()> {
    write_file(&c.out, report_json(report).as_bytes())?;
    if let Some(path) = &c.cell_scores {
        let mut w = create(path)?;
        write_cell_csv(report, &mut w)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    eprintln!(
        "{}: {} cells scored, {} skipped, {} triplets, error {}%",
        report.condition.kind.name(),
        report.cells_scored,
        report.cells_skipped,
        report.triplets_scored,
        percent_raw(report.final_error_percent)
    );
    Ok(())
}

fn write_listing(cells: &[abxkit_core::task::AbxCell], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_cell_listing(cells, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn abx_phonetic(a: PhoneticArgs, exec: &RayonExecutor) -> Result<()> {
    let c = &a.common;
    let kind = match a.mode {
        Mode::Within => ConditionKind::PhoneticWithin,
        Mode::Across => ConditionKind::PhoneticAcross,
    };
    let condition = AbxCondition::new(kind).with_min_classes(c.min_class_a, c.min_class_b)?;
    let tokens = read_phone_items(&c.items)?;
    let archive = Archive::open(&c.features)?;
    if let Some(path) = &c.cell_listing {
        write_listing(&build_phonetic_cells(&tokens, &condition)?.cells, path)?;
    }
    let report = run_phonetic_abx(&archive, &tokens, condition, options(c), exec)?;
    finish_abx(&report, c)
}

fn abx_language(a: LanguageArgs, exec: &RayonExecutor) -> Result<()> {
    let c = &a.common;
    let condition = AbxCondition::new(ConditionKind::Language)
        .with_min_classes(c.min_class_a, c.min_class_b)?
        .with_same_speaker(a.same_speaker);
    let records = read_language_items(&c.items)?;
    let archive = Archive::open(&c.features)?;
    if let Some(path) = &c.cell_listing {
        write_listing(&build_language_cells(&records, &condition)?.cells, path)?;
    }
    let report = run_language_abx(&archive, &records, condition, options(c), exec)?;
    finish_abx(&report, c)
}

/// Uniform seeded frame sample, kept in archive order.
fn sample_frames(archive: &Archive, n: usize, seed: u64) -> Result<(Vec<f64>, usize)> {
    let entries = &archive.manifest().entries;
    let dim = archive.manifest().dim().unwrap_or(0) as usize;
    let total: usize = entries.iter().map(|e| e.frames as usize).sum();
    let mut picks: Vec<usize> = if n >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, total, n).into_vec()
    };
    picks.sort_unstable();
    let mut out = Vec::with_capacity(picks.len() * dim);
    let mut next = picks.iter().peekable();
    let mut offset = 0;
    for e in entries {
        let frames = e.frames as usize;
        if next.peek().is_some_and(|&&p| p < offset + frames) {
            let m = archive.get(&e.utterance_id)?;
            while let Some(&&p) = next.peek() {
                if p >= offset + frames {
                    break;
                }
                out.extend(m.row(p - offset).iter().map(|&v| v as f64));
                next.next();
            }
        }
        offset += frames;
    }
    Ok((out, dim))
}

fn quantize_fit(a: FitArgs, exec: &RayonExecutor) -> Result<()> {
    let archive = Archive::open(&a.features)?;
    let (frames, dim) = sample_frames(&archive, a.sample, a.seed)?;
    if dim == 0 {
        return Err(data_err!(
            "sample < k (archive {} has no frames)",
            a.features.display()
        ));
    }
    let config = KMeansConfig {
        k: a.k,
        max_iter: a.max_iter,
        tol: a.tol,
        seed: a.seed,
    };
    let cb = fit_kmeans(Frames::new(&frames, dim), config, exec)?;
    write_codebook(&cb, &a.out)?;
    eprintln!(
        "k-means: k {}, {} frames, {} iterations, inertia {:.6}",
        cb.k(),
        frames.len() / dim,
        cb.iterations_run(),
        cb.inertia()
    );
    Ok(())
}

pub const UNITS_FILE: &str = "units.txt";

fn quantize_apply(a: ApplyArgs, exec: &RayonExecutor) -> Result<()> {
    use abxkit_core::Executor;
    let archive = Archive::open(&a.features)?;
    let cb = read_codebook(&a.codebook)?;
    let encoding = match a.encoding {
        EncodingArg::OneHot => UnitEncoding::OneHot,
        EncodingArg::Centroid => UnitEncoding::Centroid,
    };
    let ids: Vec<&str> = archive.ids().collect();
    let results = exec.map(&ids, |id| -> Result<_> {
        let m = archive.get(id)?;
        let units = assign_units(&m, &cb)?;
        let features = units_to_features(&units, &cb, encoding, m.frame_rate())?;
        Ok((units, features))
    });
    let mut units = Vec::with_capacity(results.len());
    let mut features = Vec::with_capacity(results.len());
    for r in results {
        let (u, f) = r?;
        units.push(u);
        features.push(f);
    }
    write_archive(&features, &a.out)?;
    let path = a.out.join(UNITS_FILE);
    let mut w = create(&path)?;
    write_units(&units, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;
    eprintln!("quantized {} utterances with k {}", units.len(), cb.k());
    Ok(())
}

#[derive(Serialize)]
struct CheckDoc {
    trials: usize,
    seed: u64,
    tolerance: f64,
    max_relative_error: f64,
    contrastive_max_relative_error: f64,
    cross_entropy_max_relative_error: f64,
    pass: bool,
}

fn loss_check(a: CheckArgs) -> Result<()> {
    let r = check_gradients(a.trials, a.seed)?;
    let pass = r.max_relative_error <= GRAD_TOLERANCE;
    let doc = CheckDoc {
        trials: r.trials,
        seed: a.seed,
        tolerance: GRAD_TOLERANCE,
        max_relative_error: r.max_relative_error,
        contrastive_max_relative_error: r.contrastive_max_relative_error,
        cross_entropy_max_relative_error: r.cross_entropy_max_relative_error,
        pass,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("check result serialises");
    text.push('\n');
    match &a.out {
        Some(path) => write_file(path, text.as_bytes())?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    eprintln!(
        "gradient check over {} batches: max relative error {:.3e}",
        r.trials, r.max_relative_error
    );
    if !pass {
        return Err(abxkit_core::Error::Invariant(format!(
            "gradient check failed: max relative error {:e} above {GRAD_TOLERANCE:e}",
            r.max_relative_error
        ))
        .into());
    }
    Ok(())
}

fn gaps(a: GapsArgs) -> Result<()> {
    let basis = match a.avg_basis {
        BasisArg::Table => AvgBasis::Table,
        BasisArg::Exact => AvgBasis::Exact,
    };
    let report = gapio::analyze_file(&a.results, basis)?;
    write_file(&a.out, gapio::gap_json(&report).as_bytes())?;
    eprint!("{report}");
    Ok(())
}

fn syngen(a: SyngenArgs) -> Result<()> {
    let spec = synth::read_spec(&a.spec)?;
    let paths = synth::generate_to(&spec, &a.out)?;
    eprintln!(
        "wrote {}, {} and {}",
        paths.features.display(),
        paths.phone_items.display(),
        paths.language_items.display()
    );
    Ok(())
}
