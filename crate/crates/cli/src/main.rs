//! `adr`: detect adverse-drug-reaction signals in before/after exposure
//! windows, generate synthetic cohorts, and roll event files up to level 3.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or an invalid cohort
//! spec), 2 data error (unreadable or malformed input).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adr_core::cohort;
use adr_core::matrix::{build_event_index, build_patient_matrices, group, RemainderPolicy};
use adr_core::readcode::{Dictionary, ReadCode};
use adr_core::report::{make_report, render_csv, render_json, ChapterFilter, RankBy, ReportSpec};
use adr_core::stats::{test_all_events, TestConfig, TestKind};
use adr_core::synth::{generate_to_dir, CohortSpec, TARGET_DRUG_CODE};
use adr_core::Error;

const USAGE_ERROR: u8 = 1;
const DATA_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "adr", version, about = "Before/after drug-exposure signal detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run signal detection over prescription and event files.
    Detect(DetectArgs),
    /// Generate a synthetic cohort with planted effects.
    Synth(SynthArgs),
    /// Rewrite an events file with codes rolled up to level 3.
    Rollup(RollupArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Prescriptions CSV (patient_id,drug_code,date).
    #[arg(long)]
    prescriptions: PathBuf,
    /// Events CSV (patient_id,readcode,date).
    #[arg(long)]
    events: PathBuf,
    /// Optional code-to-term dictionary CSV (readcode,term).
    #[arg(long)]
    dictionary: Option<PathBuf>,
    /// Target drug code (exact match).
    #[arg(long)]
    drug: String,
    /// Observation window length on each side of the index date.
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u32).range(1..))]
    window_days: u32,
    /// Patients per group.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    group_size: u64,
    /// What to do with the patients left over after whole groups are cut.
    #[arg(long, value_enum, default_value_t = PolicyArg::Merge)]
    remainder_policy: PolicyArg,
    /// Roll codes up to level 3 before building matrices.
    #[arg(long)]
    level3: bool,
    /// t-test variant.
    #[arg(long = "test", value_enum, default_value_t = TestArg::StudentPooled)]
    test_kind: TestArg,
    /// Significance threshold.
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    alpha: f64,
    /// Report ordering.
    #[arg(long, value_enum, default_value_t = RankArg::PvalueAsc)]
    rank_by: RankArg,
    /// Rows to keep after ranking; a number or "all".
    #[arg(long, default_value = "30", value_parser = parse_top_k)]
    top_k: TopK,
    /// Keep only codes whose chapter (first character) is listed, e.g. "B"
    /// or "B,C".
    #[arg(long, value_parser = parse_chapters)]
    chapter_filter: Option<Chapters>,
    /// Full codes to keep in addition to the chapter filter, e.g.
    /// "170..00,1Z12.00".
    #[arg(long, value_parser = parse_codes)]
    extra_codes: Option<Codes>,
    /// Report destination; "-" writes to standard output.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Debug dump of the grouped matrices: writes PATH with ".before" and
    /// ".after" inserted before the extension.
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Cohort spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for the four generated files.
    #[arg(long)]
    out: PathBuf,
    /// Override the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RollupArgs {
    /// Events CSV to rewrite.
    #[arg(long)]
    events: PathBuf,
    /// Destination; "-" writes to standard output.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Merge,
    Drop,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    StudentPooled,
    Welch,
    Paired,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankArg {
    PvalueAsc,
    R1Desc,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy)]
struct TopK(Option<usize>);

#[derive(Clone)]
struct Chapters(BTreeSet<char>);

#[derive(Clone)]
struct Codes(BTreeSet<ReadCode>);

fn parse_top_k(s: &str) -> Result<TopK, String> {
    if s == "all" {
        return Ok(TopK(None));
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(TopK(Some(k))),
        _ => Err(format!("expected a positive integer or \"all\", got {s:?}")),
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(a) if a > 0.0 && a <= 1.0 => Ok(a),
        _ => Err(format!("alpha must be in (0, 1], got {s:?}")),
    }
}

fn parse_chapters(s: &str) -> Result<Chapters, String> {
    let mut chapters = BTreeSet::new();
    for part in s.split(',') {
        let mut chars = part.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphanumeric() => {
                chapters.insert(c);
            }
            _ => return Err(format!("chapter {part:?} must be a single alphanumeric character")),
        }
    }
    Ok(Chapters(chapters))
}

fn parse_codes(s: &str) -> Result<Codes, String> {
    let mut codes = BTreeSet::new();
    for part in s.split(',') {
        codes.insert(ReadCode::parse(part).map_err(|e| e.to_string())?);
    }
    Ok(Codes(codes))
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn data(message: String) -> Self {
        Failure {
            code: DATA_ERROR,
            message,
        }
    }

    fn usage(message: String) -> Self {
        Failure {
            code: USAGE_ERROR,
            message,
        }
    }
}

/// Core errors are data errors except spec validation, which is the user's
/// configuration.
fn core_failure(context: &Path, err: Error) -> Failure {
    let code = match err {
        Error::SpecInvalid { .. } => USAGE_ERROR,
        _ => DATA_ERROR,
    };
    Failure {
        code,
        message: format!("{}: {err}", context.display()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", path.display())))
}

enum Sink {
    Stdout(io::Stdout),
    File(BufWriter<File>),
}

impl Sink {
    fn for_path(path: &Path) -> Result<Self, Failure> {
        if path == Path::new("-") {
            Ok(Sink::Stdout(io::stdout()))
        } else {
            Ok(Sink::File(create(path)?))
        }
    }
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::Stdout(out) => out.write(buf),
            Sink::File(out) => out.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::Stdout(out) => out.flush(),
            Sink::File(out) => out.flush(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => USAGE_ERROR,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Detect(args) => run_detect(args),
        Command::Synth(args) => run_synth(args),
        Command::Rollup(args) => run_rollup(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run_detect(args: DetectArgs) -> Result<(), Failure> {
    let cohort_index = cohort::scan_prescriptions(open(&args.prescriptions)?, &args.drug)
        .map_err(|e| core_failure(&args.prescriptions, e))?;
    let cohort = cohort::attach_events(
        open(&args.events)?,
        cohort_index,
        &args.drug,
        args.window_days,
    )
    .map_err(|e| core_failure(&args.events, e))?;

    let dictionary = match &args.dictionary {
        Some(path) => Dictionary::load(open(path)?).map_err(|e| core_failure(path, e))?,
        None => Dictionary::empty(),
    };

    let index = build_event_index(&cohort, args.level3);
    let (before, after) = build_patient_matrices(&cohort, &index, args.level3);
    let policy = match args.remainder_policy {
        PolicyArg::Merge => RemainderPolicy::Merge,
        PolicyArg::Drop => RemainderPolicy::Drop,
    };
    let group_size = args.group_size as usize;
    let x = group(&before, group_size, policy).map_err(|e| core_failure(&args.events, e))?;
    let y = group(&after, group_size, policy).map_err(|e| core_failure(&args.events, e))?;

    if let Some(dump) = &args.dump_matrix {
        let (before_path, after_path) = dump_paths(dump);
        x.dump_csv(&index, create(&before_path)?)
            .map_err(|e| core_failure(&before_path, e))?;
        y.dump_csv(&index, create(&after_path)?)
            .map_err(|e| core_failure(&after_path, e))?;
    }

    let config = TestConfig {
        kind: match args.test_kind {
            TestArg::StudentPooled => TestKind::StudentPooled,
            TestArg::Welch => TestKind::Welch,
            TestArg::Paired => TestKind::Paired,
        },
        alpha: args.alpha,
    };
    let stats = test_all_events(&index, &x, &y, cohort.n_patients(), &config, &dictionary)
        .map_err(|e| core_failure(&args.events, e))?;

    let chapter_filter = match (args.chapter_filter, args.extra_codes) {
        (None, None) => None,
        (chapters, codes) => Some(ChapterFilter {
            chapters: chapters.map(|c| c.0).unwrap_or_default(),
            extra_codes: codes.map(|c| c.0).unwrap_or_default(),
        }),
    };
    let spec = ReportSpec {
        rank_by: match args.rank_by {
            RankArg::PvalueAsc => RankBy::PvalueAsc,
            RankArg::R1Desc => RankBy::R1Desc,
        },
        alpha: args.alpha,
        top_k: args.top_k.0,
        chapter_filter,
        level3: args.level3,
    };
    let rows = make_report(&stats, &spec);

    let mut sink = Sink::for_path(&args.out)?;
    match args.format {
        FormatArg::Csv => render_csv(&rows, &mut sink),
        FormatArg::Json => render_json(&rows, &mut sink),
    }
    .map_err(|e| core_failure(&args.out, e))?;
    sink.flush()
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", args.out.display())))?;

    // Multiplicity is not corrected (the report applies raw p < alpha); the
    // Bonferroni-adjusted threshold is shown for reference only.
    let bonferroni = if index.is_empty() {
        args.alpha
    } else {
        args.alpha / index.len() as f64
    };
    eprintln!(
        "detect: N={} G={} E={} signals={} alpha={} bonferroni_alpha={:.3e}",
        cohort.n_patients(),
        x.n_groups(),
        index.len(),
        rows.len(),
        args.alpha,
        bonferroni,
    );
    Ok(())
}

/// `m.csv` becomes `m.before.csv` / `m.after.csv`.
fn dump_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    let sibling = |side: &str| path.with_file_name(format!("{stem}.{side}{ext}"));
    (sibling("before"), sibling("after"))
}

fn run_synth(args: SynthArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| Failure::data(format!("cannot open {}: {e}", args.spec.display())))?;
    let mut spec = CohortSpec::from_json(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let files = generate_to_dir(&spec, &args.out).map_err(|e| core_failure(&args.out, e))?;
    eprintln!(
        "synth: wrote {}, {}, {}, {} (drug code {TARGET_DRUG_CODE}, seed {})",
        files.prescriptions.display(),
        files.events.display(),
        files.dictionary.display(),
        files.truth.display(),
        spec.seed,
    );
    Ok(())
}

fn run_rollup(args: RollupArgs) -> Result<(), Failure> {
    let reader = open(&args.events)?;
    let mut sink = Sink::for_path(&args.out)?;
    cohort::rollup_events_file(reader, &mut sink).map_err(|e| core_failure(&args.events, e))?;
    sink.flush()
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", args.out.display())))?;
    Ok(())
}
