//! Patient-by-event presence matrices for the before and after windows,
//! and their aggregation into fixed-size patient groups.
//!
//! Patient rows are binary: a patient either has an event code in a window
//! or not, regardless of how often it recurs. Level-3 aggregation collapses
//! codes at the patient level first, so a patient with two children of one
//! parent still counts once. Grouping then sums rows over consecutive
//! blocks of patients in cohort order.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::io::Write;

use crate::cohort::{window_events, Cohort};
use crate::error::{Error, Result};
use crate::readcode::ReadCode;

/// The event universe of one detection run: every distinct code observed in
/// at least one patient window, sorted lexicographically by code text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventIndex {
    codes: Vec<ReadCode>,
    positions: HashMap<ReadCode, usize>,
}

impl EventIndex {
    fn from_set(set: BTreeSet<ReadCode>) -> Self {
        let codes: Vec<ReadCode> = set.into_iter().collect();
        let positions = codes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        EventIndex { codes, positions }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[ReadCode] {
        &self.codes
    }

    pub fn code(&self, column: usize) -> ReadCode {
        self.codes[column]
    }

    pub fn position(&self, code: ReadCode) -> Option<usize> {
        self.positions.get(&code).copied()
    }
}

/// Binary patients-by-events matrix, stored as sorted column indices per
/// patient row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientMatrix {
    n_events: usize,
    rows: Vec<Vec<u32>>,
}

impl PatientMatrix {
    pub fn n_patients(&self) -> usize {
        self.rows.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn contains(&self, patient: usize, column: usize) -> bool {
        self.rows[patient].binary_search(&(column as u32)).is_ok()
    }

    /// Number of patients with the event, i.e. the binary column sum.
    pub fn column_sum(&self, column: usize) -> u32 {
        let col = column as u32;
        self.rows
            .iter()
            .filter(|row| row.binary_search(&col).is_ok())
            .count() as u32
    }
}

/// Groups-by-events count matrix: entry (g, e) is the number of patients in
/// group g whose window contains event e.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    n_events: usize,
    group_sizes: Vec<usize>,
    /// Dense row-major G x E counts.
    entries: Vec<u32>,
}

/// What to do with the `N mod group_size` patients left over after cutting
/// whole groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemainderPolicy {
    /// Fold the leftover patients into the final group (its size grows).
    #[default]
    Merge,
    /// Discard the leftover patients.
    Drop,
}

impl FeatureMatrix {
    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn entry(&self, group: usize, column: usize) -> u32 {
        self.entries[group * self.n_events + column]
    }

    /// One event column as group counts, length G.
    pub fn column(&self, column: usize) -> Vec<f64> {
        (0..self.n_groups())
            .map(|g| f64::from(self.entry(g, column)))
            .collect()
    }

    pub fn column_sum(&self, column: usize) -> u64 {
        (0..self.n_groups())
            .map(|g| u64::from(self.entry(g, column)))
            .sum()
    }

    /// Same dimensions and group sizes, so columns are comparable.
    pub fn is_conformal(&self, other: &FeatureMatrix) -> bool {
        self.n_events == other.n_events && self.group_sizes == other.group_sizes
    }

    /// Write non-zero entries as CSV `group,code,count`, sorted by
    /// (group, code). Groups are numbered from 1.
    pub fn dump_csv<W: Write>(&self, index: &EventIndex, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["group", "code", "count"])
            ?;
        for g in 0..self.n_groups() {
            for e in 0..self.n_events {
                let count = self.entry(g, e);
                if count > 0 {
                    out.write_record([
                        (g + 1).to_string(),
                        index.code(e).as_str().to_owned(),
                        count.to_string(),
                    ])
                    ?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}


/// Collect the event universe over all patient windows. With `level3` set,
/// codes are rolled up to their level-3 ancestor before deduplication.
pub fn build_event_index(cohort: &Cohort, level3: bool) -> EventIndex {
    let mut set = BTreeSet::new();
    for patient in &cohort.patients {
        let (before, after) = window_events(patient, cohort.window_days);
        for code in before.into_iter().chain(after) {
            set.insert(if level3 { code.rollup3() } else { code });
        }
    }
    EventIndex::from_set(set)
}

/// Build the binary before/after matrices over the given index. Row order
/// is cohort order; `level3` must match the flag the index was built with.
pub fn build_patient_matrices(
    cohort: &Cohort,
    index: &EventIndex,
    level3: bool,
) -> (PatientMatrix, PatientMatrix) {
    let window_to_row = |codes: BTreeSet<ReadCode>| -> Vec<u32> {
        let mut row: Vec<u32> = codes
            .into_iter()
            .filter_map(|c| {
                let c = if level3 { c.rollup3() } else { c };
                index.position(c).map(|p| p as u32)
            })
            .collect();
        row.sort_unstable();
        row.dedup();
        row
    };

    let mut before_rows = Vec::with_capacity(cohort.n_patients());
    let mut after_rows = Vec::with_capacity(cohort.n_patients());
    for patient in &cohort.patients {
        let (before, after) = window_events(patient, cohort.window_days);
        before_rows.push(window_to_row(before));
        after_rows.push(window_to_row(after));
    }
    let n_events = index.len();
    (
        PatientMatrix {
            n_events,
            rows: before_rows,
        },
        PatientMatrix {
            n_events,
            rows: after_rows,
        },
    )
}

/// Aggregate patient rows into consecutive blocks of `group_size` patients.
///
/// G = floor(N / group_size) groups are formed in cohort order; the final
/// `N mod group_size` patients are folded into the last group under
/// [`RemainderPolicy::Merge`] or discarded under [`RemainderPolicy::Drop`].
pub fn group(
    matrix: &PatientMatrix,
    group_size: usize,
    policy: RemainderPolicy,
) -> Result<FeatureMatrix> {
    assert!(group_size >= 1, "group_size must be positive");
    let n = matrix.n_patients();
    if group_size > n {
        return Err(Error::GroupSizeExceedsCohort {
            group_size,
            n_patients: n,
        });
    }
    let n_groups = n / group_size;
    let remainder = n % group_size;
    let mut group_sizes = vec![group_size; n_groups];
    if policy == RemainderPolicy::Merge && remainder > 0 {
        group_sizes[n_groups - 1] += remainder;
    }

    let n_events = matrix.n_events;
    let mut entries = vec![0u32; n_groups * n_events];
    let mut row_iter = matrix.rows.iter();
    for (g, &size) in group_sizes.iter().enumerate() {
        let base = g * n_events;
        for row in row_iter.by_ref().take(size) {
            for &col in row {
                entries[base + col as usize] += 1;
            }
        }
    }

    Ok(FeatureMatrix {
        n_events,
        group_sizes,
        entries,
    })
}
