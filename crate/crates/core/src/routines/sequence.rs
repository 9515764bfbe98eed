use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::semantics::Visit;

/// Chronological symbols of one user's visits within `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSequence {
    pub user_id: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub symbols: Vec<String>,
    /// Local date of each visit, parallel to `symbols`.
    pub days: Vec<NaiveDate>,
}

impl SymbolSequence {
    /// Builds the sequence from visits of a single user; visits outside the
    /// period are dropped.
    pub fn from_visits(user_id: &str, visits: &[Visit], start: NaiveDate, end: NaiveDate) -> Self {
        let mut v: Vec<&Visit> = visits
            .iter()
            .filter(|v| v.user_id == user_id && v.day >= start && v.day <= end)
            .collect();
        v.sort_by_key(|v| (v.start_time, v.location_id));
        SymbolSequence {
            user_id: user_id.to_string(),
            start,
            end,
            symbols: v.iter().map(|v| v.label.symbol().to_string()).collect(),
            days: v.iter().map(|v| v.day).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Interns symbol strings as dense integer codes in order of first use.
#[derive(Debug, Clone, Default)]
pub struct Alphabet {
    names: Vec<String>,
    codes: HashMap<String, u32>,
}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn code(&mut self, name: &str) -> u32 {
        if let Some(&c) = self.codes.get(name) {
            return c;
        }
        let c = self.names.len() as u32;
        self.names.push(name.to_string());
        self.codes.insert(name.to_string(), c);
        c
    }

    pub fn encode(&mut self, symbols: &[String]) -> Vec<u32> {
        symbols.iter().map(|s| self.code(s)).collect()
    }

    pub fn name(&self, code: u32) -> &str {
        &self.names[code as usize]
    }

    pub fn decode(&self, codes: &[u32]) -> Vec<String> {
        codes.iter().map(|&c| self.name(c).to_string()).collect()
    }
}

/// Start positions of non-overlapping left-to-right matches of `pattern`.
pub fn match_positions<T: PartialEq>(seq: &[T], pattern: &[T]) -> Vec<usize> {
    let mut out = Vec::new();
    if pattern.is_empty() {
        return out;
    }
    let mut i = 0;
    while i + pattern.len() <= seq.len() {
        if seq[i..i + pattern.len()] == *pattern {
            out.push(i);
            i += pattern.len();
        } else {
            i += 1;
        }
    }
    out
}

pub fn count_occurrences<T: PartialEq>(seq: &[T], pattern: &[T]) -> usize {
    match_positions(seq, pattern).len()
}
