//! Prompt-based behavior classification: prompt construction for the three
//! method variants (multi-label with definitions, multi-label with
//! definitions + few-shot examples, per-code binary with examples),
//! response parsing, and batch classification of corpora.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::evaluation::AnnotatedUtterance;
use crate::gateway::{ChatMessage, Gateway, GenerationParams};
use crate::taxonomy::{CodeId, Speaker, Taxonomy};
use crate::{Error, Result};

/// Instruction heading every multi-label user prompt starts with.
pub const MULTI_LABEL_INSTRUCTION: &str =
    "What are all possible conversational behaviors of this utterance";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    MultiDef,
    MultiDefEx,
    BinaryDefEx,
}

impl ClassifierMode {
    pub fn uses_examples(self) -> bool {
        matches!(self, ClassifierMode::MultiDefEx | ClassifierMode::BinaryDefEx)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierMode::MultiDef => "multi_def",
            ClassifierMode::MultiDefEx => "multi_def_ex",
            ClassifierMode::BinaryDefEx => "binary_def_ex",
        }
    }
}

impl fmt::Display for ClassifierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierSpec {
    pub mode: ClassifierMode,
    pub speaker: Speaker,
    pub k_shots: usize,
    pub example_pool: Vec<AnnotatedUtterance>,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(mode: ClassifierMode, speaker: Speaker) -> Self {
        ClassifierSpec {
            mode,
            speaker,
            k_shots: 3,
            example_pool: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode.uses_examples() {
            if self.k_shots == 0 {
                return Err(Error::Precondition(format!(
                    "{} requires k_shots >= 1",
                    self.mode
                )));
            }
            if self.example_pool.len() < self.k_shots {
                return Err(Error::Precondition(format!(
                    "example pool has {} items, {} requires at least k = {}",
                    self.example_pool.len(),
                    self.mode,
                    self.k_shots
                )));
            }
        }
        if self
            .example_pool
            .iter()
            .any(|ex| ex.speaker != self.speaker)
        {
            return Err(Error::Precondition(
                "example pool contains utterances of the wrong speaker".into(),
            ));
        }
        Ok(())
    }
}

/// Guard against few-shot leakage: the example pool must not share any
/// (conversation, utterance) with the evaluation test set.
pub fn check_pool_disjoint(pool: &[AnnotatedUtterance], test: &[AnnotatedUtterance]) -> Result<()> {
    let test_keys: BTreeSet<(&str, usize)> = test
        .iter()
        .map(|u| (u.conversation_id.as_str(), u.utterance_index))
        .collect();
    for ex in pool {
        if test_keys.contains(&(ex.conversation_id.as_str(), ex.utterance_index)) {
            return Err(Error::Precondition(format!(
                "example pool overlaps the test set at {}#{}",
                ex.conversation_id, ex.utterance_index
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawResponse {
    Multi(String),
    Binary(BTreeMap<CodeId, String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub conversation_id: String,
    pub utterance_index: usize,
    pub predicted: BTreeSet<CodeId>,
    pub raw_response: RawResponse,
    pub warnings: usize,
}

/// Join display names with ", "; the empty set serializes as `None`.
pub fn serialize_labels(labels: &BTreeSet<CodeId>, taxonomy: &Taxonomy) -> String {
    if labels.is_empty() {
        return "None".to_string();
    }
    labels
        .iter()
        .map(|id| {
            taxonomy
                .get(id)
                .map(|c| c.display_name.clone())
                .unwrap_or_else(|| id.to_string())
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Seeded sample of `k` demonstrations without replacement. With `code`
/// given (binary mode) the sample prefers ceil(k/2) positives and fills the
/// remainder with negatives, degrading gracefully when the pool is skewed.
pub fn select_few_shot(
    pool: &[AnnotatedUtterance],
    k: usize,
    seed: u64,
    code: Option<&CodeId>,
) -> Result<Vec<AnnotatedUtterance>> {
    if pool.len() < k {
        return Err(Error::Precondition(format!(
            "few-shot pool has {} items, need {k}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffle = |mut idx: Vec<usize>| {
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        idx
    };
    match code {
        None => {
            let idx = shuffle((0..pool.len()).collect());
            Ok(idx[..k].iter().map(|&i| pool[i].clone()).collect())
        }
        Some(code) => {
            let positives: Vec<usize> = (0..pool.len())
                .filter(|&i| pool[i].labels.contains(code))
                .collect();
            let negatives: Vec<usize> = (0..pool.len())
                .filter(|&i| !pool[i].labels.contains(code))
                .collect();
            let positives = shuffle(positives);
            let negatives = shuffle(negatives);
            let want_pos = k.div_ceil(2);
            let n_pos = want_pos.min(positives.len()).max(k.saturating_sub(negatives.len()));
            let n_pos = n_pos.min(positives.len()).min(k);
            let mut chosen: Vec<usize> = positives[..n_pos].to_vec();
            chosen.extend(&negatives[..k - n_pos]);
            Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
        }
    }
}

fn format_demonstration(ex: &AnnotatedUtterance, taxonomy: &Taxonomy) -> String {
    format!(
        "Utterance: {}\nBehaviors: {}",
        ex.text,
        serialize_labels(&ex.labels, taxonomy)
    )
}

/// Prompt for the multi-label modes: all speaker codes with definitions
/// (plus k demonstrations for the example variant), then the instruction
/// and the utterance.
pub fn build_multi_label_prompt(
    spec: &ClassifierSpec,
    taxonomy: &Taxonomy,
    utterance: &str,
) -> Result<Vec<ChatMessage>> {
    if spec.mode == ClassifierMode::BinaryDefEx {
        return Err(Error::Precondition(
            "build_multi_label_prompt requires a multi-label mode".into(),
        ));
    }
    spec.validate()?;
    let mut system = format!(
        "You are an expert annotator of psychotherapy conversations. The possible conversational behaviors of a {} are:\n",
        spec.speaker
    );
    for code in taxonomy.codes_for(spec.speaker) {
        system.push_str(&format!("- {}: {}\n", code.display_name, code.definition));
    }
    if spec.mode == ClassifierMode::MultiDefEx {
        let shots = select_few_shot(&spec.example_pool, spec.k_shots, spec.seed, None)?;
        system.push_str("\nExamples:\n");
        for ex in &shots {
            system.push_str(&format_demonstration(ex, taxonomy));
            system.push('\n');
        }
    }
    let user = format!(
        "{MULTI_LABEL_INSTRUCTION}?\nUtterance: {utterance}\nAnswer with a comma-separated list of behavior names from the list above, or the word None if no behavior applies."
    );
    Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

/// Yes/No prompt for a single code: its definition, k demonstrations
/// (balanced where the pool allows), and the utterance. The returned count
/// is 1 when the demonstrations could not be balanced.
pub fn build_binary_prompt(
    spec: &ClassifierSpec,
    taxonomy: &Taxonomy,
    code: &CodeId,
    utterance: &str,
) -> Result<(Vec<ChatMessage>, usize)> {
    if spec.mode != ClassifierMode::BinaryDefEx {
        return Err(Error::Precondition(
            "build_binary_prompt requires binary_def_ex mode".into(),
        ));
    }
    spec.validate()?;
    let behavior = taxonomy
        .get(code)
        .ok_or_else(|| Error::Data(format!("unknown code `{code}`")))?;
    let shots = select_few_shot(&spec.example_pool, spec.k_shots, spec.seed, Some(code))?;
    let n_pos = shots.iter().filter(|ex| ex.labels.contains(code)).count();
    let balance_warning = usize::from(n_pos == 0 || n_pos == shots.len());

    let mut system = format!(
        "You are an expert annotator of psychotherapy conversations.\n{}: {}\n\nExamples:\n",
        behavior.display_name, behavior.definition
    );
    for ex in &shots {
        let answer = if ex.labels.contains(code) { "Yes" } else { "No" };
        system.push_str(&format!("Utterance: {}\nAnswer: {answer}\n", ex.text));
    }
    let user = format!(
        "Classify if the utterance contains {}. Answer in Yes or No.\nUtterance: {utterance}",
        behavior.display_name
    );
    Ok((
        vec![ChatMessage::system(system), ChatMessage::user(user)],
        balance_warning,
    ))
}

/// Lossy by design: tokens split on commas/semicolons/newlines, resolved
/// through the taxonomy's alias table; unresolvable tokens are dropped and
/// counted. `None` (case-insensitive) or an empty answer is the empty set.
pub fn parse_multi_label(
    response: &str,
    taxonomy: &Taxonomy,
    speaker: Speaker,
) -> (BTreeSet<CodeId>, usize) {
    let mut predicted = BTreeSet::new();
    let mut warnings = 0;
    for token in response.split([',', ';', '\n']) {
        let token = token.trim().trim_matches(['.', '!']).trim();
        if token.is_empty() || token.eq_ignore_ascii_case("none") {
            continue;
        }
        match taxonomy.resolve_label(token, speaker) {
            Some(code) => {
                predicted.insert(code.id.clone());
            }
            None => warnings += 1,
        }
    }
    (predicted, warnings)
}

/// The leading token decides; anything that is not a case variant of
/// yes/no is unparseable (`None`).
pub fn parse_binary(response: &str) -> Option<bool> {
    let first = response.split_whitespace().next()?;
    let first = first.trim_matches(|c: char| !c.is_alphanumeric());
    if first.eq_ignore_ascii_case("yes") {
        Some(true)
    } else if first.eq_ignore_ascii_case("no") {
        Some(false)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationFailure {
    pub conversation_id: String,
    pub utterance_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ClassificationOutput {
    pub predictions: Vec<Prediction>,
    pub failures: Vec<ClassificationFailure>,
}

impl ClassificationOutput {
    pub fn total_warnings(&self) -> usize {
        self.predictions.iter().map(|p| p.warnings).sum()
    }
}

/// Classify every utterance of the target speaker. Multi modes issue one
/// gateway call per utterance; binary mode one per (utterance, code).
/// Per-utterance failures are collected, not fatal.
pub fn classify_corpus(
    gateway: &Gateway,
    spec: &ClassifierSpec,
    taxonomy: &Taxonomy,
    corpus: &Corpus,
    target: Speaker,
) -> Result<ClassificationOutput> {
    spec.validate()?;
    if spec.speaker != target {
        return Err(Error::Precondition(format!(
            "classifier spec is for {} utterances but target is {target}",
            spec.speaker
        )));
    }
    let params = GenerationParams::classification();
    let mut out = ClassificationOutput::default();
    for conv in &corpus.conversations {
        for utt in conv.utterances.iter().filter(|u| u.speaker == target) {
            let result: Result<Prediction> = (|| match spec.mode {
                ClassifierMode::MultiDef | ClassifierMode::MultiDefEx => {
                    let messages = build_multi_label_prompt(spec, taxonomy, &utt.text)?;
                    let response = gateway.complete(&messages, &params)?;
                    let (predicted, warnings) = parse_multi_label(&response, taxonomy, target);
                    Ok(Prediction {
                        conversation_id: conv.id.clone(),
                        utterance_index: utt.index,
                        predicted,
                        raw_response: RawResponse::Multi(response),
                        warnings,
                    })
                }
                ClassifierMode::BinaryDefEx => {
                    let mut predicted = BTreeSet::new();
                    let mut raw = BTreeMap::new();
                    let mut warnings = 0;
                    for code in taxonomy.codes_for(target) {
                        let (messages, w) =
                            build_binary_prompt(spec, taxonomy, &code.id, &utt.text)?;
                        warnings += w;
                        let response = gateway.complete(&messages, &params)?;
                        match parse_binary(&response) {
                            Some(true) => {
                                predicted.insert(code.id.clone());
                            }
                            Some(false) => {}
                            None => warnings += 1, // unparseable counts as negative
                        }
                        raw.insert(code.id.clone(), response);
                    }
                    Ok(Prediction {
                        conversation_id: conv.id.clone(),
                        utterance_index: utt.index,
                        predicted,
                        raw_response: RawResponse::Binary(raw),
                        warnings,
                    })
                }
            })();
            match result {
                Ok(pred) => out.predictions.push(pred),
                Err(e) => out.failures.push(ClassificationFailure {
                    conversation_id: conv.id.clone(),
                    utterance_index: utt.index,
                    message: e.to_string(),
                }),
            }
        }
    }
    out.predictions
        .sort_by(|a, b| (&a.conversation_id, a.utterance_index).cmp(&(&b.conversation_id, b.utterance_index)));
    Ok(out)
}

/// Classify standalone annotated utterances (evaluation path). Unlike
/// `classify_corpus`, failures are fatal: a split with missing predictions
/// cannot be scored.
pub fn classify_annotated(
    gateway: &Gateway,
    spec: &ClassifierSpec,
    taxonomy: &Taxonomy,
    items: &[AnnotatedUtterance],
) -> Result<Vec<BTreeSet<CodeId>>> {
    spec.validate()?;
    let params = GenerationParams::classification();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        if item.speaker != spec.speaker {
            return Err(Error::Precondition(format!(
                "utterance {}#{} is a {} turn, classifier expects {}",
                item.conversation_id, item.utterance_index, item.speaker, spec.speaker
            )));
        }
        let predicted = match spec.mode {
            ClassifierMode::MultiDef | ClassifierMode::MultiDefEx => {
                let messages = build_multi_label_prompt(spec, taxonomy, &item.text)?;
                let response = gateway.complete(&messages, &params)?;
                parse_multi_label(&response, taxonomy, spec.speaker).0
            }
            ClassifierMode::BinaryDefEx => {
                let mut set = BTreeSet::new();
                for code in taxonomy.codes_for(spec.speaker) {
                    let (messages, _) = build_binary_prompt(spec, taxonomy, &code.id, &item.text)?;
                    let response = gateway.complete(&messages, &params)?;
                    if parse_binary(&response) == Some(true) {
                        set.insert(code.id.clone());
                    }
                }
                set
            }
        };
        out.push(predicted);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    conversation_id: String,
    utterance_index: usize,
    predicted: Vec<CodeId>,
    mode: String,
    warnings: usize,
}

/// Persist predictions as JSONL (sorted, canonical field order).
pub fn predictions_to_jsonl(predictions: &[Prediction], mode: ClassifierMode) -> Result<String> {
    let mut out = String::new();
    for p in predictions {
        let record = PredictionRecord {
            conversation_id: p.conversation_id.clone(),
            utterance_index: p.utterance_index,
            predicted: p.predicted.iter().cloned().collect(),
            mode: mode.to_string(),
            warnings: p.warnings,
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_predictions_jsonl(text: &str) -> Result<Vec<Prediction>> {
    let mut predictions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        predictions.push(Prediction {
            conversation_id: record.conversation_id,
            utterance_index: record.utterance_index,
            predicted: record.predicted.into_iter().collect(),
            raw_response: RawResponse::Multi(String::new()),
            warnings: record.warnings,
        });
    }
    Ok(predictions)
}

/// Write predicted labels into a copy of the corpus so downstream analytics
/// can treat them as annotations. Predictions must reference existing
/// utterances.
pub fn merge_predictions(corpus: &Corpus, predictions: &[Prediction]) -> Result<Corpus> {
    let mut merged = corpus.clone();
    let index_of: BTreeMap<String, usize> = merged
        .conversations
        .iter()
        .enumerate()
        .map(|(i, conv)| (conv.id.clone(), i))
        .collect();
    for pred in predictions {
        let conv_idx = *index_of
            .get(pred.conversation_id.as_str())
            .ok_or_else(|| {
                Error::Data(format!(
                    "prediction references unknown conversation `{}`",
                    pred.conversation_id
                ))
            })?;
        let conv = &mut merged.conversations[conv_idx];
        let utt = conv
            .utterances
            .get_mut(pred.utterance_index)
            .ok_or_else(|| {
                Error::Data(format!(
                    "prediction references missing utterance {}#{}",
                    pred.conversation_id, pred.utterance_index
                ))
            })?;
        utt.labels = Some(pred.predicted.iter().cloned().collect());
    }
    Ok(merged)
}
