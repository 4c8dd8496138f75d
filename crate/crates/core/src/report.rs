//! Signal filtering, ranking, and rendering.
//!
//! Reports keep the events significant at the configured threshold, order
//! them by ascending p-value or descending after/before ratio, and render
//! CSV or JSON with a stable column set. Ordering is total (ties break on
//! code text), so identical inputs always produce byte-identical files.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::readcode::ReadCode;
use crate::stats::EventStats;

/// Sort key for the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankBy {
    /// Ascending p-value (most significant first).
    #[default]
    PvalueAsc,
    /// Descending after/before ratio.
    R1Desc,
}

/// Keep rows whose chapter character is in `chapters` or whose full code is
/// explicitly listed in `extra_codes`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChapterFilter {
    pub chapters: BTreeSet<char>,
    pub extra_codes: BTreeSet<ReadCode>,
}

impl ChapterFilter {
    fn keeps(&self, code: ReadCode) -> bool {
        self.chapters.contains(&code.chapter()) || self.extra_codes.contains(&code)
    }
}

/// Report shape: threshold, ordering, truncation, and optional chapter
/// restriction. `level3` records which code view the statistics were
/// computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSpec {
    pub rank_by: RankBy,
    pub alpha: f64,
    /// `None` keeps every qualifying row.
    pub top_k: Option<usize>,
    pub chapter_filter: Option<ChapterFilter>,
    pub level3: bool,
}

impl Default for ReportSpec {
    fn default() -> Self {
        ReportSpec {
            rank_by: RankBy::PvalueAsc,
            alpha: 0.05,
            top_k: Some(30),
            chapter_filter: None,
            level3: false,
        }
    }
}

/// One ranked line of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRow {
    /// 1-based position after sorting.
    pub rank: usize,
    pub code: ReadCode,
    pub term: String,
    pub p: f64,
    pub n_before: u64,
    pub n_after: u64,
    pub r1: f64,
    /// Fraction of the cohort; rendered x100.
    pub r2: f64,
}

/// Filter, sort, truncate, and rank one detection run's statistics.
pub fn make_report(stats: &[EventStats], spec: &ReportSpec) -> Vec<SignalRow> {
    let mut kept: Vec<&EventStats> = stats
        .iter()
        .filter(|s| s.p < spec.alpha)
        .filter(|s| {
            spec.chapter_filter
                .as_ref()
                .is_none_or(|f| f.keeps(s.code))
        })
        .collect();

    match spec.rank_by {
        RankBy::PvalueAsc => {
            kept.sort_by(|a, b| a.p.total_cmp(&b.p).then_with(|| a.code.cmp(&b.code)));
        }
        RankBy::R1Desc => {
            kept.sort_by(|a, b| b.r1.total_cmp(&a.r1).then_with(|| a.code.cmp(&b.code)));
        }
    }
    if let Some(k) = spec.top_k {
        kept.truncate(k);
    }

    kept.into_iter()
        .enumerate()
        .map(|(i, s)| SignalRow {
            rank: i + 1,
            code: s.code,
            term: s.term.clone(),
            p: s.p,
            n_before: s.n_before,
            n_after: s.n_after,
            r1: s.r1,
            r2: s.r2,
        })
        .collect()
}

pub const REPORT_HEADER: &str = "rank,readcode,term,p_value,NB,NA,R1,R2_percent";

/// Render rows as CSV: p in scientific notation with 6 significant digits,
/// ratios with exactly 2 decimals, R2 as a percentage.
pub fn render_csv<W: Write>(rows: &[SignalRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(REPORT_HEADER.split(','))?;
    for row in rows {
        out.write_record([
            row.rank.to_string(),
            row.code.as_str().to_owned(),
            row.term.clone(),
            format!("{:.5e}", row.p),
            row.n_before.to_string(),
            row.n_after.to_string(),
            format!("{:.2}", row.r1),
            format!("{:.2}", row.r2 * 100.0),
        ])
        ?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    rank: usize,
    readcode: &'a str,
    term: &'a str,
    p_value: f64,
    #[serde(rename = "NB")]
    n_before: u64,
    #[serde(rename = "NA")]
    n_after: u64,
    #[serde(rename = "R1")]
    r1: f64,
    #[serde(rename = "R2_percent")]
    r2_percent: f64,
}

/// Render rows as a JSON array with the CSV's field names and
/// full-precision numbers.
pub fn render_json<W: Write>(rows: &[SignalRow], mut writer: W) -> Result<()> {
    let json_rows: Vec<JsonRow> = rows
        .iter()
        .map(|row| JsonRow {
            rank: row.rank,
            readcode: row.code.as_str(),
            term: &row.term,
            p_value: row.p,
            n_before: row.n_before,
            n_after: row.n_after,
            r1: row.r1,
            r2_percent: row.r2 * 100.0,
        })
        .collect();
    serde_json::to_writer_pretty(&mut writer, &json_rows)?;
    writer.write_all(b"\n")?;
    Ok(())
}
