//! The 7-character hierarchical clinical code.
//!
//! The first five characters encode a hierarchy read left to right, padded
//! on the right with `.` once the code bottoms out; the last two characters
//! are a term suffix. `N245.16` sits one level below `N24..00`, which sits
//! two levels below chapter `N`. Codes are opaque, case-sensitive tokens:
//! no attempt is made to validate them against a real code release, so the
//! pipeline runs unchanged on synthetic dictionaries.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Term returned for codes absent from a dictionary. Unknown codes are kept
/// in reports rather than dropped: detection must not depend on dictionary
/// completeness.
pub const UNKNOWN_TERM: &str = "<unknown>";

/// A validated 7-character clinical code.
///
/// Layout: positions 1-5 hold the hierarchical code drawn from
/// `[A-Za-z0-9]` with `.` used only as a contiguous right pad (position 1 is
/// never `.`); positions 6-7 hold an alphanumeric term suffix.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadCode([u8; 7]);

impl ReadCode {
    /// Parse a code from raw text, trimming surrounding whitespace.
    /// Case is preserved: `I2I2.00` and `i2i2.00` are distinct codes.
    pub fn parse(raw: &str) -> Result<Self> {
        let s = raw.trim();
        let err = |reason| Error::MalformedCode {
            raw: raw.to_owned(),
            reason,
        };
        if s.len() != 7 || !s.is_ascii() {
            return Err(err("must be exactly 7 ASCII characters"));
        }
        let bytes = s.as_bytes();
        if bytes[0] == b'.' {
            return Err(err("first character must not be '.'"));
        }
        let mut padding = false;
        for &b in &bytes[..5] {
            if b == b'.' {
                padding = true;
            } else if padding {
                return Err(err("'.' may only pad the hierarchy on the right"));
            } else if !b.is_ascii_alphanumeric() {
                return Err(err("hierarchy characters must be alphanumeric or '.'"));
            }
        }
        if !bytes[5].is_ascii_alphanumeric() || !bytes[6].is_ascii_alphanumeric() {
            return Err(err("term suffix must be two alphanumeric characters"));
        }
        let mut code = [0u8; 7];
        code.copy_from_slice(bytes);
        Ok(ReadCode(code))
    }

    /// The code as text.
    pub fn as_str(&self) -> &str {
        // Validated ASCII at construction.
        std::str::from_utf8(&self.0).expect("read code is ASCII")
    }

    /// Hierarchy depth: the number of non-`.` characters among positions
    /// 1-5, always in `1..=5`.
    pub fn level(&self) -> u8 {
        self.0[..5].iter().filter(|&&b| b != b'.').count() as u8
    }

    /// Truncate to the level-3 ancestor: positions 1-3 are kept, positions
    /// 4-5 become padding, and the term suffix resets to `00`. Idempotent;
    /// codes at level 3 or above map to themselves (suffix normalized).
    pub fn rollup3(&self) -> ReadCode {
        let mut code = self.0;
        code[3] = b'.';
        code[4] = b'.';
        code[5] = b'0';
        code[6] = b'0';
        ReadCode(code)
    }

    /// The chapter character (position 1).
    pub fn chapter(&self) -> char {
        self.0[0] as char
    }
}

impl fmt::Display for ReadCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for ReadCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReadCode({:?})", self.as_str())
    }
}

impl FromStr for ReadCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReadCode::parse(s)
    }
}

impl Serialize for ReadCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ReadCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ReadCode::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Immutable code-to-term lookup, loaded once and shareable across threads.
#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    terms: HashMap<ReadCode, String>,
}

impl Dictionary {
    /// Empty dictionary: every lookup yields [`UNKNOWN_TERM`].
    pub fn empty() -> Self {
        Self::default()
    }

    /// Load from CSV with header `readcode,term`. Duplicate codes are an
    /// error; rows with a malformed code or the wrong shape are rejected
    /// with their line number.
    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut terms = HashMap::new();
        let mut record = csv::StringRecord::new();
        let mut first = true;
        loop {
            let more = csv.read_record(&mut record).map_err(|e| {
                let line = e.position().map_or(0, csv::Position::line);
                dictionary_row_error(line, e.to_string())
            })?;
            if !more {
                break;
            }
            let line = record.position().map_or(0, csv::Position::line);
            if first {
                first = false;
                if record.len() != 2 || &record[0] != "readcode" || &record[1] != "term" {
                    return Err(dictionary_row_error(
                        line,
                        "expected header \"readcode,term\"".into(),
                    ));
                }
                continue;
            }
            if record.len() != 2 {
                return Err(dictionary_row_error(
                    line,
                    format!("expected 2 fields, got {}", record.len()),
                ));
            }
            let code = ReadCode::parse(&record[0])
                .map_err(|e| dictionary_row_error(line, e.to_string()))?;
            if terms.insert(code, record[1].to_owned()).is_some() {
                return Err(Error::DuplicateCode {
                    line,
                    code: code.as_str().to_owned(),
                });
            }
        }
        Ok(Dictionary { terms })
    }

    /// The term for `code`, or [`UNKNOWN_TERM`] if absent.
    pub fn term(&self, code: ReadCode) -> &str {
        self.terms
            .get(&code)
            .map(String::as_str)
            .unwrap_or(UNKNOWN_TERM)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn dictionary_row_error(line: u64, reason: String) -> Error {
    Error::MalformedDictionaryRow { line, reason }
}
