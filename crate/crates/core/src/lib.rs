//! Signal detection for adverse drug reactions over coded event streams.
//!
//! The pipeline compares the medical events recorded in a fixed window
//! before each patient's first prescription of a target drug against the
//! window after it. Patient presence per event is collected into binary
//! before/after matrices, patients are aggregated into fixed-size groups,
//! and each event column is scored with a Student's t-test plus
//! after/before ratio statistics. Reports rank the significant events.
//!
//! Modules follow the pipeline stages:
//!
//! - [`readcode`]: the 7-character hierarchical code, level-3 rollup, and
//!   the code-to-term dictionary.
//! - [`cohort`]: file ingestion, index dates, and observation windows.
//! - [`matrix`]: the event universe, binary patient matrices, grouping.
//! - [`stats`]: t statistics, p-values, and ratio statistics.
//! - [`report`]: filtering, ranking, and CSV/JSON rendering.
//! - [`synth`]: the deterministic synthetic-cohort generator.

pub mod cohort;
pub mod error;
pub mod matrix;
pub mod readcode;
pub mod report;
pub mod stats;
pub mod synth;

pub use crate::cohort::{window_events, Cohort, PatientTimeline};
pub use crate::error::{Error, Result};
pub use crate::matrix::{
    build_event_index, build_patient_matrices, group, EventIndex, FeatureMatrix, PatientMatrix,
    RemainderPolicy,
};
pub use crate::readcode::{Dictionary, ReadCode};
pub use crate::report::{make_report, render_csv, render_json, RankBy, ReportSpec, SignalRow};
pub use crate::stats::{ratios, t_cdf_two_sided, t_test, EventStats, TestConfig, TestKind};
pub use crate::synth::CohortSpec;
