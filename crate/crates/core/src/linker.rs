//! Forward maximum matching of dictionary terms in raw text.
//!
//! Terms and text windows are compared after normalization (lowercase,
//! whitespace runs collapsed to one space, trimmed). Offsets are character
//! offsets into the original text and never cross a newline.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::EntityId;

/// Shortest span, in characters of the raw surface, that is emitted.
pub const DEFAULT_MIN_LEN: usize = 5;

pub fn normalize(term: &str) -> String {
    let mut out = String::with_capacity(term.len());
    for word in term.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct TermDictionary {
    terms: BTreeMap<String, EntityId>,
    max_len: usize,
}

impl TermDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a term. A term already present keeps its first entity; the return
    /// value says whether the term was new.
    pub fn insert(&mut self, term: &str, entity: EntityId) -> Result<bool> {
        let key = normalize(term);
        if key.is_empty() {
            return Err(Error::InvalidArgument("empty dictionary term".into()));
        }
        if self.terms.contains_key(&key) {
            return Ok(false);
        }
        self.max_len = self.max_len.max(key.chars().count());
        self.terms.insert(key, entity);
        Ok(true)
    }

    pub fn get(&self, normalized: &str) -> Option<EntityId> {
        self.terms.get(normalized).copied()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Longest normalized term, in characters.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, EntityId)> {
        self.terms.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkedSpan {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub entity: EntityId,
    pub surface: String,
}

/// Left-to-right scan taking the longest dictionary match at each position.
/// A match of at least `min_len` characters is emitted and skipped over;
/// otherwise the scan advances by one character.
pub fn fmm_link(text: &str, dict: &TermDictionary, min_len: usize) -> Vec<LinkedSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    if dict.is_empty() {
        return spans;
    }
    let mut window = String::new();
    let mut i = 0;
    while i < chars.len() {
        match longest_match(&chars, i, dict, &mut window) {
            Some((end, entity)) if end - i >= min_len => {
                spans.push(LinkedSpan {
                    start: i,
                    end,
                    entity,
                    surface: chars[i..end].iter().collect(),
                });
                i = end;
            }
            _ => i += 1,
        }
    }
    spans
}

fn longest_match(
    chars: &[char],
    start: usize,
    dict: &TermDictionary,
    window: &mut String,
) -> Option<(usize, EntityId)> {
    if chars[start].is_whitespace() {
        return None;
    }
    window.clear();
    let mut normalized_len = 0;
    let mut pending_space = false;
    let mut best = None;
    for (j, &c) in chars.iter().enumerate().skip(start) {
        if c == '\n' {
            break;
        }
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space {
            window.push(' ');
            normalized_len += 1;
            pending_space = false;
        }
        for l in c.to_lowercase() {
            window.push(l);
            normalized_len += 1;
        }
        if normalized_len > dict.max_len() {
            break;
        }
        if let Some(entity) = dict.get(window) {
            best = Some((j + 1, entity));
        }
    }
    best
}
