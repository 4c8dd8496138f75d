//! Cohort assembly: prescription and event file parsing, drug-cohort
//! selection, per-patient timelines, and the before/after observation
//! windows around each patient's index date.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};
use crate::readcode::ReadCode;

pub const PRESCRIPTIONS_HEADER: &str = "patient_id,drug_code,date";
pub const EVENTS_HEADER: &str = "patient_id,readcode,date";

/// One row of the prescriptions file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrescriptionRecord {
    pub patient_id: String,
    pub drug_code: String,
    pub date: NaiveDate,
}

/// One row of the events file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub patient_id: String,
    pub code: ReadCode,
    pub date: NaiveDate,
}

/// One patient's index date (first prescription of the target drug) and
/// every coded event on their record, sorted by date then code text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientTimeline {
    pub patient_id: String,
    pub index_date: NaiveDate,
    pub events: Vec<(ReadCode, NaiveDate)>,
}

/// All patients with at least one prescription of the target drug, in
/// first-appearance order of the prescriptions file. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    pub drug_code: String,
    /// Observation window length W in days on each side of the index date.
    pub window_days: u32,
    pub patients: Vec<PatientTimeline>,
}

impl Cohort {
    pub fn n_patients(&self) -> usize {
        self.patients.len()
    }
}

/// Distinct codes observed in a patient's before/after windows.
///
/// Before spans `index_date - W ..= index_date - 1`, after spans
/// `index_date + 1 ..= index_date + W`; events dated exactly on the index
/// date fall in neither window, so a window code can never double-count the
/// exposure day. Presence is per-patient binary: duplicates collapse.
pub fn window_events(
    patient: &PatientTimeline,
    window_days: u32,
) -> (BTreeSet<ReadCode>, BTreeSet<ReadCode>) {
    let w = Days::new(u64::from(window_days));
    let one = Days::new(1);
    let before_start = patient.index_date - w;
    let before_end = patient.index_date - one;
    let after_start = patient.index_date + one;
    let after_end = patient.index_date + w;

    let mut before = BTreeSet::new();
    let mut after = BTreeSet::new();
    for &(code, date) in &patient.events {
        if date >= before_start && date <= before_end {
            before.insert(code);
        } else if date >= after_start && date <= after_end {
            after.insert(code);
        }
    }
    (before, after)
}

/// First-pass scan of the prescriptions file: patients holding at least one
/// exact match of `drug_code`, in order of first appearance, each with the
/// minimum matching prescription date as index date.
pub fn scan_prescriptions<R: Read>(reader: R, drug_code: &str) -> Result<Vec<(String, NaiveDate)>> {
    let mut order: Vec<String> = Vec::new();
    let mut index_dates: HashMap<String, NaiveDate> = HashMap::new();

    for_each_row(reader, PRESCRIPTIONS_HEADER, |line, fields| {
        let [patient_id, drug, date] = fields;
        if patient_id.is_empty() {
            return Err(malformed(line, "empty patient_id"));
        }
        if drug.is_empty() {
            return Err(malformed(line, "empty drug_code"));
        }
        let date = parse_date(line, date)?;
        if drug == drug_code {
            match index_dates.entry(patient_id.to_owned()) {
                std::collections::hash_map::Entry::Vacant(slot) => {
                    order.push(patient_id.to_owned());
                    slot.insert(date);
                }
                std::collections::hash_map::Entry::Occupied(mut slot) => {
                    if date < *slot.get() {
                        slot.insert(date);
                    }
                }
            }
        }
        Ok(())
    })?;

    if order.is_empty() {
        return Err(Error::EmptyCohort {
            drug_code: drug_code.to_owned(),
        });
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let date = index_dates[&id];
            (id, date)
        })
        .collect())
}

/// Second pass: attach every event of each cohort patient and sort each
/// timeline by date then code text. Events of non-cohort patients are
/// validated and dropped.
pub fn attach_events<R: Read>(
    reader: R,
    cohort_index: Vec<(String, NaiveDate)>,
    drug_code: &str,
    window_days: u32,
) -> Result<Cohort> {
    let position: HashMap<&str, usize> = cohort_index
        .iter()
        .enumerate()
        .map(|(i, (id, _))| (id.as_str(), i))
        .collect();
    let mut events: Vec<Vec<(ReadCode, NaiveDate)>> = vec![Vec::new(); cohort_index.len()];

    for_each_row(reader, EVENTS_HEADER, |line, fields| {
        let [patient_id, raw_code, date] = fields;
        if patient_id.is_empty() {
            return Err(malformed(line, "empty patient_id"));
        }
        let code = ReadCode::parse(raw_code).map_err(|e| malformed(line, &e.to_string()))?;
        let date = parse_date(line, date)?;
        if let Some(&i) = position.get(patient_id) {
            events[i].push((code, date));
        }
        Ok(())
    })?;

    let patients = cohort_index
        .into_iter()
        .zip(events)
        .map(|((patient_id, index_date), mut events)| {
            events.sort_unstable_by_key(|&(code, date)| (date, code));
            PatientTimeline {
                patient_id,
                index_date,
                events,
            }
        })
        .collect();

    Ok(Cohort {
        drug_code: drug_code.to_owned(),
        window_days,
        patients,
    })
}

/// Build the cohort for `drug_code` from the two input files.
pub fn ingest<P: Read, E: Read>(
    prescriptions: P,
    events: E,
    drug_code: &str,
    window_days: u32,
) -> Result<Cohort> {
    let index = scan_prescriptions(prescriptions, drug_code)?;
    attach_events(events, index, drug_code, window_days)
}

/// Rewrite an events file with every code replaced by its level-3 rollup.
/// Rows are validated like ingest; patient ids and dates pass through
/// unchanged.
pub fn rollup_events_file<R: Read, W: Write>(reader: R, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(EVENTS_HEADER.split(','))?;
    for_each_row(reader, EVENTS_HEADER, |line, fields| {
        let [patient_id, raw_code, date] = fields;
        if patient_id.is_empty() {
            return Err(malformed(line, "empty patient_id"));
        }
        let code = ReadCode::parse(raw_code).map_err(|e| malformed(line, &e.to_string()))?;
        parse_date(line, date)?;
        out.write_record([patient_id, code.rollup3().as_str(), date])
            ?;
        Ok(())
    })?;
    out.flush()?;
    Ok(())
}

/// Stream a 3-column CSV with the given header, invoking `row` per data
/// line. Line numbers are physical, starting at 1 for the header.
fn for_each_row<R: Read>(
    reader: R,
    header: &str,
    mut row: impl FnMut(u64, [&str; 3]) -> Result<()>,
) -> Result<()> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut record = csv::StringRecord::new();
    let mut first = true;
    loop {
        let more = csv.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            malformed(line, &e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, csv::Position::line);
        if first {
            first = false;
            let expected: Vec<&str> = header.split(',').collect();
            let got: Vec<&str> = record.iter().collect();
            if got != expected {
                return Err(malformed(line, &format!("expected header {header:?}")));
            }
            continue;
        }
        if record.len() != 3 {
            return Err(malformed(
                line,
                &format!("expected 3 fields, got {}", record.len()),
            ));
        }
        row(line, [&record[0], &record[1], &record[2]])?;
    }
    Ok(())
}

fn parse_date(line: u64, raw: &str) -> Result<NaiveDate> {
    // Strict YYYY-MM-DD, parsed by hand: this sits on the hot path of
    // multi-million-row event files.
    let b = raw.as_bytes();
    let date = if b.len() == 10 && b[4] == b'-' && b[7] == b'-' {
        let digits = |range: std::ops::Range<usize>| -> Option<u32> {
            b[range].iter().try_fold(0u32, |acc, &d| {
                d.is_ascii_digit().then(|| acc * 10 + u32::from(d - b'0'))
            })
        };
        match (digits(0..4), digits(5..7), digits(8..10)) {
            (Some(y), Some(m), Some(d)) => NaiveDate::from_ymd_opt(y as i32, m, d),
            _ => None,
        }
    } else {
        None
    };
    date.ok_or_else(|| malformed(line, &format!("invalid date {raw:?}, expected YYYY-MM-DD")))
}

fn malformed(line: u64, reason: &str) -> Error {
    Error::MalformedRow {
        line,
        reason: reason.to_owned(),
    }
}
