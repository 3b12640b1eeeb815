//! LIWC-style word-category analysis: tokenizer, pluggable category
//! dictionaries with trailing-asterisk prefix wildcards, per-text category
//! rates, and the built-in BigWords measure (tokens of more than 6 chars).
//!
//! Dictionary file format: UTF-8 text, `[CategoryName]` section headers, one
//! entry per line, `#` comments, trailing `*` marks a prefix wildcard.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::corpus::Conversation;
use crate::taxonomy::Speaker;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Entry {
    Literal(String),
    /// Matches any token beginning with the stored stem.
    Prefix(String),
}

impl Entry {
    pub fn matches(&self, token: &str) -> bool {
        match self {
            Entry::Literal(w) => token == w,
            Entry::Prefix(stem) => token.starts_with(stem.as_str()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    pub name: String,
    pub categories: BTreeMap<String, Vec<Entry>>,
}

impl Lexicon {
    pub fn category_names(&self) -> Vec<&str> {
        self.categories.keys().map(|s| s.as_str()).collect()
    }
}

/// Parse a lexicon file. Errors name the offending line.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let text = fs::read_to_string(path.as_ref())?;
    let name = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "lexicon".to_string());
    parse_lexicon(&text, &name)
}

pub fn parse_lexicon(text: &str, name: &str) -> Result<Lexicon> {
    let mut lexicon = Lexicon {
        name: name.to_string(),
        categories: BTreeMap::new(),
    };
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            let cat = line
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("malformed category header `{line}`"),
                })?;
            if lexicon.categories.contains_key(cat) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate category `{cat}`"),
                });
            }
            lexicon.categories.insert(cat.to_string(), Vec::new());
            current = Some(cat.to_string());
            continue;
        }
        let cat = current.as_ref().ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("entry `{line}` appears before any category header"),
        })?;
        let entry = parse_entry(line, lineno)?;
        lexicon.categories.get_mut(cat).unwrap().push(entry);
    }
    Ok(lexicon)
}

fn parse_entry(word: &str, lineno: usize) -> Result<Entry> {
    let inner_star = word[..word.len().saturating_sub(1)].contains('*');
    if inner_star || word == "*" {
        return Err(Error::Parse {
            line: lineno,
            message: format!("wildcard `*` is only allowed in terminal position: `{word}`"),
        });
    }
    let lower = word.to_lowercase();
    if let Some(stem) = lower.strip_suffix('*') {
        Ok(Entry::Prefix(stem.to_string()))
    } else {
        Ok(Entry::Literal(lower))
    }
}

/// Split on whitespace, strip leading/trailing punctuation, keep internal
/// apostrophes, lowercase, drop empty residues.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .flat_map(|chunk| {
            // em/en dashes and slashes join words; split on them too
            chunk.split(['\u{2014}', '\u{2013}', '-', '/'])
        })
        .filter_map(|piece| {
            let token: &str = piece.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
            let token = token.trim_matches('\'');
            if token.is_empty() {
                None
            } else {
                Some(token.to_lowercase())
            }
        })
        .collect()
}

/// 100 * matching tokens / total tokens; `None` when the token list is empty.
pub fn category_rate(tokens: &[String], lexicon: &Lexicon, category: &str) -> Result<Option<f64>> {
    let entries = lexicon
        .categories
        .get(category)
        .ok_or_else(|| Error::Data(format!("unknown lexicon category `{category}`")))?;
    if tokens.is_empty() {
        return Ok(None);
    }
    let matched = tokens
        .iter()
        .filter(|t| entries.iter().any(|e| e.matches(t)))
        .count();
    Ok(Some(100.0 * matched as f64 / tokens.len() as f64))
}

/// BigWords: 100 * tokens of length >= 7 / total tokens (apostrophes count
/// as characters); `None` on empty input.
pub fn big_words_rate(tokens: &[String]) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    let big = tokens.iter().filter(|t| t.chars().count() >= 7).count();
    Some(100.0 * big as f64 / tokens.len() as f64)
}

pub const BIG_WORDS: &str = "BigWords";

/// Per-conversation, per-category rates over the concatenated therapist
/// utterances, plus BigWords. Conversations with no therapist text are
/// skipped. Feeds `analytics::profile_difference`.
pub fn lexicon_profile(
    group: &[&Conversation],
    lexicon: &Lexicon,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if group.is_empty() {
        return Err(Error::Precondition("lexicon_profile: empty group".into()));
    }
    let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for conv in group {
        let text: String = conv
            .utterances
            .iter()
            .filter(|u| u.speaker == Speaker::Therapist)
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            continue;
        }
        for cat in lexicon.categories.keys() {
            if let Some(rate) = category_rate(&tokens, lexicon, cat)? {
                table.entry(cat.clone()).or_default().push(rate);
            }
        }
        if let Some(rate) = big_words_rate(&tokens) {
            table.entry(BIG_WORDS.to_string()).or_default().push(rate);
        }
    }
    Ok(table)
}
