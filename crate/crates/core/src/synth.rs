//! Deterministic synthetic cohort generator.
//!
//! Emits the prescriptions/events/dictionary files the ingest stage
//! consumes, plus a ground-truth list of planted effects, so the whole
//! pipeline can be exercised and scored without access to any real
//! primary-care database.
//!
//! Window-level presence is Bernoulli per (patient, code): the before
//! window uses the code's baseline rate, the after window multiplies in the
//! planted risk ratio (clamped to probability 1). Event dates are cosmetic,
//! drawn uniformly inside the window. All randomness comes from ChaCha
//! substreams keyed by (seed, patient ordinal), so output is byte-identical
//! across runs regardless of generation order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cohort::{EVENTS_HEADER, PRESCRIPTIONS_HEADER};
use crate::error::{Error, Result};
use crate::readcode::ReadCode;

/// Drug code written to every prescription row. The generator models a
/// single-drug cohort, so the code is fixed; pass it to `detect --drug`.
pub const TARGET_DRUG_CODE: &str = "RX000001";

/// First possible index date; index dates fall uniformly in the three
/// years starting here.
const INDEX_BASE: (i32, u32, u32) = (2015, 1, 1);
const INDEX_SPAN_DAYS: u64 = 1095;

/// One planted adverse effect: the after-window presence probability of
/// `code` is `risk_ratio` times its baseline.
#[derive(Debug, Clone, Deserialize, PartialEq)]
pub struct PlantedEffect {
    pub code: String,
    pub risk_ratio: f64,
}

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub n_codes: usize,
    #[serde(default = "default_chapters")]
    pub code_chapters: Vec<char>,
    /// Inclusive [low, high] range the per-code window presence
    /// probability is drawn from.
    #[serde(default = "default_baseline_rate")]
    pub baseline_rate: [f64; 2],
    #[serde(default)]
    pub planted: Vec<PlantedEffect>,
    #[serde(default = "default_window_days")]
    pub window_days: u32,
    pub seed: u64,
}

fn default_chapters() -> Vec<char> {
    vec!['1', 'A', 'B', 'C', 'F', 'J', 'K', 'M', 'N', 'S']
}

fn default_baseline_rate() -> [f64; 2] {
    [0.001, 0.05]
}

fn default_window_days() -> u32 {
    60
}

impl CohortSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: CohortSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Err(Error::SpecInvalid { reason });
        if self.n_patients == 0 {
            return invalid("n_patients must be at least 1".into());
        }
        if self.n_codes == 0 {
            return invalid("n_codes must be at least 1".into());
        }
        if self.code_chapters.is_empty() {
            return invalid("code_chapters must not be empty".into());
        }
        for &c in &self.code_chapters {
            if !c.is_ascii_alphanumeric() {
                return invalid(format!("chapter {c:?} is not alphanumeric"));
            }
        }
        let [lo, hi] = self.baseline_rate;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return invalid(format!(
                "baseline_rate range [{lo}, {hi}] must satisfy 0 < low <= high < 1"
            ));
        }
        if self.window_days == 0 {
            return invalid("window_days must be at least 1".into());
        }
        let capacity = universe_capacity(&self.code_chapters);
        if self.n_codes > capacity {
            return invalid(format!(
                "n_codes {} exceeds the {} codes available for {} chapters",
                self.n_codes,
                capacity,
                self.code_chapters.len()
            ));
        }
        for effect in &self.planted {
            if effect.risk_ratio < 1.0 {
                return invalid(format!(
                    "planted code {}: risk_ratio {} must be >= 1",
                    effect.code, effect.risk_ratio
                ));
            }
        }
        Ok(())
    }
}

const FAMILY_SIZE: usize = 4;
const FAMILIES_PER_CHAPTER: usize = 36 * 36;

fn universe_capacity(chapters: &[char]) -> usize {
    chapters.len() * FAMILIES_PER_CHAPTER * FAMILY_SIZE
}

fn base36(digit: usize) -> char {
    let digit = digit as u32;
    char::from_u32(if digit < 10 {
        b'0' as u32 + digit
    } else {
        b'A' as u32 + digit - 10
    })
    .unwrap()
}

/// The deterministic code universe for a chapter list: level-3 parents
/// (`B00..00`, cycling chapters) each followed by three children sharing
/// the parent's 3-character prefix, two at level 4 and one at level 5.
pub fn code_universe(n_codes: usize, chapters: &[char]) -> Vec<(ReadCode, String)> {
    let mut codes = Vec::with_capacity(n_codes);
    let mut family = 0usize;
    while codes.len() < n_codes {
        let chapter = chapters[family % chapters.len()];
        let id = family / chapters.len();
        let prefix: String = [chapter, base36(id / 36), base36(id % 36)].iter().collect();
        let family_codes = [
            (format!("{prefix}..00"), format!("Condition {prefix} (group)")),
            (format!("{prefix}1.00"), format!("Condition {prefix} variant 1")),
            (format!("{prefix}1100"), format!("Condition {prefix} variant 1 detail")),
            (format!("{prefix}2.00"), format!("Condition {prefix} variant 2")),
        ];
        for (text, term) in family_codes {
            if codes.len() == n_codes {
                break;
            }
            let code = ReadCode::parse(&text).expect("universe codes are valid by construction");
            codes.push((code, term));
        }
        family += 1;
    }
    codes
}

/// Output paths of one generator run.
#[derive(Debug, Clone)]
pub struct GeneratedFiles {
    pub prescriptions: PathBuf,
    pub events: PathBuf,
    pub dictionary: PathBuf,
    pub truth: PathBuf,
}

/// Generate the four cohort files into `dir` (created if missing).
pub fn generate_to_dir(spec: &CohortSpec, dir: &Path) -> Result<GeneratedFiles> {
    std::fs::create_dir_all(dir)?;
    let files = GeneratedFiles {
        prescriptions: dir.join("prescriptions.csv"),
        events: dir.join("events.csv"),
        dictionary: dir.join("dictionary.csv"),
        truth: dir.join("truth.csv"),
    };
    let mut presc = BufWriter::new(File::create(&files.prescriptions)?);
    let mut events = BufWriter::new(File::create(&files.events)?);
    let mut dict = BufWriter::new(File::create(&files.dictionary)?);
    let mut truth = BufWriter::new(File::create(&files.truth)?);
    generate(spec, &mut presc, &mut events, &mut dict, &mut truth)?;
    presc.flush()?;
    events.flush()?;
    dict.flush()?;
    truth.flush()?;
    Ok(files)
}

/// Generate a cohort into the four sinks.
pub fn generate<P, E, D, T>(
    spec: &CohortSpec,
    prescriptions: &mut P,
    events: &mut E,
    dictionary: &mut D,
    truth: &mut T,
) -> Result<()>
where
    P: Write,
    E: Write,
    D: Write,
    T: Write,
{
    spec.validate()?;
    let universe = code_universe(spec.n_codes, &spec.code_chapters);

    let mut risk_ratios: HashMap<ReadCode, f64> = HashMap::new();
    for effect in &spec.planted {
        let code = ReadCode::parse(&effect.code).map_err(|e| Error::SpecInvalid {
            reason: format!("planted code {:?}: {e}", effect.code),
        })?;
        if risk_ratios.insert(code, effect.risk_ratio).is_some() {
            return Err(Error::SpecInvalid {
                reason: format!("planted code {} listed twice", effect.code),
            });
        }
    }
    let universe_set: HashMap<ReadCode, usize> = universe
        .iter()
        .enumerate()
        .map(|(i, (c, _))| (*c, i))
        .collect();
    for code in risk_ratios.keys() {
        if !universe_set.contains_key(code) {
            return Err(Error::SpecInvalid {
                reason: format!("planted code {code} is not in the generated code universe"),
            });
        }
    }

    // Per-code rates from the global substream (stream 0).
    let mut global = substream(spec.seed, 0);
    let [lo, hi] = spec.baseline_rate;
    let rates: Vec<(f64, f64)> = universe
        .iter()
        .map(|(code, _)| {
            let baseline = global.gen_range(lo..=hi);
            let ratio = risk_ratios.get(code).copied().unwrap_or(1.0);
            (baseline, (baseline * ratio).min(1.0))
        })
        .collect();

    // Dictionary and truth are pure functions of the spec.
    writeln!(dictionary, "readcode,term")?;
    for (code, term) in &universe {
        writeln!(dictionary, "{code},{}", csv_field(term))?;
    }
    writeln!(truth, "readcode,risk_ratio")?;
    for (code, _) in &universe {
        if let Some(ratio) = risk_ratios.get(code) {
            writeln!(truth, "{code},{ratio}")?;
        }
    }

    writeln!(prescriptions, "{PRESCRIPTIONS_HEADER}")?;
    writeln!(events, "{EVENTS_HEADER}")?;

    let base = NaiveDate::from_ymd_opt(INDEX_BASE.0, INDEX_BASE.1, INDEX_BASE.2).unwrap();
    let window = u64::from(spec.window_days);
    for ordinal in 0..spec.n_patients {
        // Stream 0 is the global stream; patients start at 1.
        let mut rng = substream(spec.seed, ordinal as u64 + 1);
        let patient_id = format!("P{:07}", ordinal + 1);
        let index_date = base + Days::new(rng.gen_range(0..=INDEX_SPAN_DAYS));
        writeln!(prescriptions, "{patient_id},{TARGET_DRUG_CODE},{index_date}")?;

        for ((code, _), &(before_rate, after_rate)) in universe.iter().zip(&rates) {
            if rng.gen_bool(before_rate) {
                let date = index_date - Days::new(rng.gen_range(1..=window));
                writeln!(events, "{patient_id},{code},{date}")?;
            }
            if rng.gen_bool(after_rate) {
                let date = index_date + Days::new(rng.gen_range(1..=window));
                writeln!(events, "{patient_id},{code},{date}")?;
            }
        }
    }
    Ok(())
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Minimal CSV escaping for dictionary terms.
fn csv_field(term: &str) -> String {
    if term.contains(['"', ',', '\n']) {
        format!("\"{}\"", term.replace('"', "\"\""))
    } else {
        term.to_owned()
    }
}
