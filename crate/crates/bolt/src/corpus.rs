//! Data model and JSONL I/O for therapy conversations, with validation,
//! descriptive statistics, and the seeded train/test split used by the
//! evaluation harness.
//!
//! One conversation per line:
//! `{"id", "dataset_id", "quality", "source", "model_id", "utterances": [...]}`.
//! Unknown top-level fields on a line are preserved (and written back on
//! save); unknown fields inside utterances are rejected.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::taxonomy::{CodeId, Speaker, Taxonomy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    High,
    Low,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    SimSingleResponse,
    SimFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    /// Present only when the utterance has been annotated or classified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<CodeId>>,
}

impl Utterance {
    pub fn new(index: usize, speaker: Speaker, text: impl Into<String>) -> Self {
        Utterance {
            index,
            speaker,
            text: text.into(),
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<CodeId>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn has_label(&self, code: &CodeId) -> bool {
        self.labels
            .as_ref()
            .map(|l| l.contains(code))
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub dataset_id: String,
    pub quality: Quality,
    pub source: Source,
    pub model_id: Option<String>,
    pub utterances: Vec<Utterance>,
    #[serde(flatten, skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub conversations: Vec<Conversation>,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub conversation_id: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.conversation_id, self.message)
    }
}

/// Per-speaker descriptive statistics in the shape of the dataset table:
/// utterance counts plus mean/sample-std whitespace-token word counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub n_utterances: usize,
    pub mean_words: f64,
    pub std_words: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_conversations: usize,
    pub therapist: SpeakerStats,
    pub client: SpeakerStats,
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Corpus {
    pub fn new(conversations: Vec<Conversation>) -> Self {
        Corpus {
            conversations,
            provenance: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }
}

/// Parse a JSONL corpus file. Fails on the first malformed line (with its
/// line number) or on any invariant violation (with the conversation id).
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let text = fs::read_to_string(path.as_ref())?;
    let mut corpus = parse_corpus(&text)?;
    corpus.provenance.insert(
        "source_path".to_string(),
        path.as_ref().display().to_string(),
    );
    Ok(corpus)
}

/// Parse corpus JSONL from a string (line numbers are 1-based).
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut conversations = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let conv: Conversation = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen_ids.insert(conv.id.clone()) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("duplicate conversation id `{}`", conv.id),
            });
        }
        conversations.push(conv);
    }
    let corpus = Corpus::new(conversations);
    let violations = validate(&corpus);
    if !violations.is_empty() {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Data(format!(
            "corpus failed validation: {}",
            msgs.join("; ")
        )));
    }
    Ok(corpus)
}

/// Canonical serialization: one JSON object per line, fixed key order.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for conv in &corpus.conversations {
        serde_json::to_writer(&mut out, conv)?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for conv in &corpus.conversations {
        out.push_str(&serde_json::to_string(conv)?);
        out.push('\n');
    }
    Ok(out)
}

/// Report every invariant breach without stopping at the first. Violations
/// are data, not failures.
pub fn validate(corpus: &Corpus) -> Vec<Violation> {
    validate_with_taxonomy(corpus, &crate::taxonomy::load_builtin_taxonomy())
}

pub fn validate_with_taxonomy(corpus: &Corpus, taxonomy: &Taxonomy) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut seen_ids: HashSet<&str> = HashSet::new();
    for conv in &corpus.conversations {
        let mut push = |message: String| {
            violations.push(Violation {
                conversation_id: conv.id.clone(),
                message,
            })
        };
        if !seen_ids.insert(&conv.id) {
            push("duplicate conversation id".to_string());
        }
        if conv.utterances.is_empty() {
            push("conversation has no utterances".to_string());
            continue;
        }
        for (pos, utt) in conv.utterances.iter().enumerate() {
            if utt.index != pos {
                push(format!(
                    "utterance at position {pos} has index {} (indices must be contiguous from 0)",
                    utt.index
                ));
            }
            if utt.text.trim().is_empty() {
                push(format!("utterance {} has empty text", utt.index));
            }
            if let Some(labels) = &utt.labels {
                for label in labels {
                    match taxonomy.get(label) {
                        None => push(format!(
                            "utterance {} carries unknown label `{label}`",
                            utt.index
                        )),
                        Some(code) if code.speaker != utt.speaker => push(format!(
                            "utterance {} ({}) carries label `{label}` belonging to {}",
                            utt.index, utt.speaker, code.speaker
                        )),
                        _ => {}
                    }
                }
            }
        }
        if conv.source == Source::SimFull {
            for pair in conv.utterances.windows(2) {
                if pair[0].speaker == pair[1].speaker {
                    push(format!(
                        "sim_full speakers must strictly alternate (utterances {} and {})",
                        pair[0].index, pair[1].index
                    ));
                }
            }
        }
    }
    violations
}

/// Word count = whitespace-token count; std uses the n-1 denominator.
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::Precondition("corpus is empty".into()));
    }
    let mut words = BTreeMap::from([
        (Speaker::Therapist, Vec::new()),
        (Speaker::Client, Vec::new()),
    ]);
    for conv in &corpus.conversations {
        for utt in &conv.utterances {
            let count = utt.text.split_whitespace().count() as f64;
            words.get_mut(&utt.speaker).unwrap().push(count);
        }
    }
    let stats_for = |speaker: Speaker| {
        let vals = &words[&speaker];
        let (mean, std) = mean_and_sample_std(vals);
        SpeakerStats {
            n_utterances: vals.len(),
            mean_words: mean,
            std_words: std,
        }
    };
    Ok(CorpusStats {
        n_conversations: corpus.conversations.len(),
        therapist: stats_for(Speaker::Therapist),
        client: stats_for(Speaker::Client),
    })
}

/// Deterministic seeded shuffle; train size = round(ratio * n). The partition
/// is disjoint and exhaustive.
pub fn split_annotated<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Precondition(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    if items.is_empty() {
        return Err(Error::Precondition("cannot split an empty list".into()));
    }
    let mut indices: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates, written out so the partition is stable across rand versions.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (ratio * items.len() as f64).round() as usize;
    let train = indices[..n_train]
        .iter()
        .map(|&i| items[i].clone())
        .collect();
    let test = indices[n_train..]
        .iter()
        .map(|&i| items[i].clone())
        .collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conv(id: &str, source: Source, speakers: &[Speaker]) -> Conversation {
        Conversation {
            id: id.to_string(),
            dataset_id: "test".to_string(),
            quality: Quality::Unknown,
            source,
            model_id: None,
            utterances: speakers
                .iter()
                .enumerate()
                .map(|(i, &sp)| Utterance::new(i, sp, format!("utterance {i}")))
                .collect(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn loads_well_formed_jsonl() {
        let t = Speaker::Therapist;
        let c = Speaker::Client;
        let corpus = Corpus::new(vec![
            conv("a", Source::Human, &[t, c]),
            conv("b", Source::Human, &[c, t]),
        ]);
        let jsonl = corpus_to_jsonl(&corpus).unwrap();
        let loaded = parse_corpus(&jsonl).unwrap();
        assert_eq!(loaded.conversations.len(), 2);
    }

    #[test]
    fn rejects_bad_speaker_enum_with_line_number() {
        let jsonl = r#"{"id":"a","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{"index":0,"speaker":"counselor","text":"hi"}]}"#;
        let err = parse_corpus(jsonl).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("counselor") || message.contains("variant"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_conversation_id() {
        let line = r#"{"id":"dup","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{"index":0,"speaker":"client","text":"hi"}]}"#;
        let jsonl = format!("{line}\n{line}\n");
        let err = parse_corpus(&jsonl).unwrap_err();
        assert!(err.to_string().contains("dup"));
    }

    #[test]
    fn rejects_unknown_utterance_fields_preserves_top_level() {
        let jsonl = r#"{"id":"a","dataset_id":"d","quality":"high","source":"human","model_id":null,"note":"kept","utterances":[{"index":0,"speaker":"client","text":"hi"}]}"#;
        let corpus = parse_corpus(jsonl).unwrap();
        assert_eq!(
            corpus.conversations[0].extra.get("note"),
            Some(&serde_json::json!("kept"))
        );

        let bad = r#"{"id":"a","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{"index":0,"speaker":"client","text":"hi","mood":"?"}]}"#;
        assert!(parse_corpus(bad).is_err());
    }

    #[test]
    fn validate_reports_label_speaker_mismatch() {
        let mut c = conv("a", Source::Human, &[Speaker::Therapist]);
        c.utterances[0].labels = Some(vec![CodeId::from("c.gained_insight")]);
        let violations = validate(&Corpus::new(vec![c]));
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("c.gained_insight"));
    }

    #[test]
    fn validate_reports_alternation_breach_for_sim_full() {
        let c = conv(
            "a",
            Source::SimFull,
            &[Speaker::Client, Speaker::Client, Speaker::Therapist],
        );
        let violations = validate(&Corpus::new(vec![c]));
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("alternate"));
    }

    #[test]
    fn validate_accepts_valid_corpus() {
        let c = conv(
            "a",
            Source::SimFull,
            &[Speaker::Client, Speaker::Therapist, Speaker::Client],
        );
        assert!(validate(&Corpus::new(vec![c])).is_empty());
    }

    #[test]
    fn stats_single_client_word() {
        let mut c = conv("a", Source::Human, &[Speaker::Client]);
        c.utterances[0].text = "hi".to_string();
        let stats = corpus_stats(&Corpus::new(vec![c])).unwrap();
        assert_eq!(stats.client.n_utterances, 1);
        assert_eq!(stats.therapist.n_utterances, 0);
        assert_eq!(stats.client.mean_words, 1.0);
    }

    #[test]
    fn stats_sample_std_matches_hand_computation() {
        // two client utterances of 2 and 4 words: mean 3, sample std sqrt(2)
        let mut c = conv("a", Source::Human, &[Speaker::Client, Speaker::Client]);
        c.utterances[0].text = "one two".to_string();
        c.utterances[1].text = "one two three four".to_string();
        let stats = corpus_stats(&Corpus::new(vec![c])).unwrap();
        assert!((stats.client.mean_words - 3.0).abs() < 1e-12);
        assert!((stats.client.std_words - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let items: Vec<u32> = (0..10).collect();
        let (train, test) = split_annotated(&items, 0.6, 7).unwrap();
        assert_eq!(train.len(), 6);
        assert_eq!(test.len(), 4);
        let (train2, test2) = split_annotated(&items, 0.6, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        let mut all: Vec<u32> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
    }

    #[test]
    fn split_rejects_degenerate_ratio() {
        let items: Vec<u32> = (0..4).collect();
        assert!(split_annotated(&items, 0.0, 1).is_err());
        assert!(split_annotated(&items, 1.0, 1).is_err());
    }

    #[test]
    fn canonical_round_trip_is_byte_stable() {
        let t = Speaker::Therapist;
        let c = Speaker::Client;
        let mut conv_a = conv("a", Source::Human, &[t, c, t]);
        conv_a.utterances[0].labels = Some(vec![CodeId::from("t.normalizing")]);
        let corpus = Corpus::new(vec![conv_a]);
        let jsonl1 = corpus_to_jsonl(&corpus).unwrap();
        let reloaded = parse_corpus(&jsonl1).unwrap();
        let jsonl2 = corpus_to_jsonl(&reloaded).unwrap();
        assert_eq!(jsonl1, jsonl2);
        assert_eq!(corpus.conversations, reloaded.conversations);
    }

    proptest! {
        #[test]
        fn stats_totals_equal_sum_over_conversations(
            sizes in proptest::collection::vec(1usize..6, 1..6)
        ) {
            let conversations: Vec<Conversation> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let speakers: Vec<Speaker> = (0..n)
                        .map(|k| if k % 2 == 0 { Speaker::Client } else { Speaker::Therapist })
                        .collect();
                    conv(&format!("c{i}"), Source::Human, &speakers)
                })
                .collect();
            let per_conv_total: usize = conversations.iter().map(|c| c.utterances.len()).sum();
            let stats = corpus_stats(&Corpus::new(conversations)).unwrap();
            prop_assert_eq!(
                stats.therapist.n_utterances + stats.client.n_utterances,
                per_conv_total
            );
        }

        #[test]
        fn split_partitions_for_any_ratio(
            n in 1usize..40,
            ratio in 0.05f64..0.95,
            seed in any::<u64>()
        ) {
            let items: Vec<usize> = (0..n).collect();
            let (train, test) = split_annotated(&items, ratio, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }
    }
}
