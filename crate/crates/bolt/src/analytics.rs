//! Behavioral analyses over labeled conversations: per-group behavior
//! profiles (frequency, first-occurrence turn, mean occurrence position),
//! profile differencing with two-sided t-tests, and the adaptability matrix
//! of therapist responses conditioned on the preceding client behavior.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Conversation;
use crate::stats::students_t_test;
use crate::taxonomy::{BehaviorCode, Speaker, Taxonomy};
use crate::{Error, Result};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    FrequencyPct,
    FirstTurn,
    MeanPosition,
    ConditionalPct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Conversation,
    Occurrence,
}

/// Per-group measurement vectors, one entry per sampling unit, keyed by
/// behavior display name (or lexicon category name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub group_id: String,
    pub measure: Measure,
    pub unit: Unit,
    pub per_behavior: BTreeMap<String, Vec<f64>>,
}

/// JSON has no literal for infinities, but degenerate zero-variance rows
/// produce t = ±inf; encode those as strings so tables round-trip.
mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            ser.serialize_f64(*x)
        } else if *x > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(x) => Ok(x),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("bad float `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub behavior: String,
    pub mean_diff: f64,
    /// Standard error of the mean difference (pooled).
    pub std: f64,
    #[serde(with = "extended_float")]
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub compare_group: String,
    pub baseline_group: String,
    pub measure: Measure,
    pub rows: Vec<ComparisonRow>,
}

fn require_labels<'a>(
    conversation: &'a Conversation,
    speaker: Speaker,
) -> Result<Vec<&'a crate::corpus::Utterance>> {
    let utterances: Vec<_> = conversation
        .utterances
        .iter()
        .filter(|u| u.speaker == speaker)
        .collect();
    for u in &utterances {
        if u.labels.is_none() {
            return Err(Error::Data(format!(
                "conversation `{}`: {speaker} utterance {} has no labels",
                conversation.id, u.index
            )));
        }
    }
    Ok(utterances)
}

/// Percent of the code's speaker's utterances exhibiting the code; `None`
/// when the conversation has no utterances of that speaker.
pub fn behavior_frequency(
    conversation: &Conversation,
    code: &BehaviorCode,
) -> Result<Option<f64>> {
    let utterances = require_labels(conversation, code.speaker)?;
    if utterances.is_empty() {
        return Ok(None);
    }
    let hits = utterances.iter().filter(|u| u.has_label(&code.id)).count();
    Ok(Some(100.0 * hits as f64 / utterances.len() as f64))
}

/// 1-based turn number (counting both speakers' utterances) of the earliest
/// occurrence; `None` when the code never appears.
pub fn first_occurrence_turn(
    conversation: &Conversation,
    code: &BehaviorCode,
) -> Result<Option<usize>> {
    require_labels(conversation, code.speaker)?;
    Ok(conversation
        .utterances
        .iter()
        .find(|u| u.has_label(&code.id))
        .map(|u| u.index + 1))
}

/// Mean over all occurrences of (turn-1)/(len-1) in [0,1]; a one-utterance
/// conversation defines position 0. `None` when the code never appears.
pub fn mean_occurrence_position(
    conversation: &Conversation,
    code: &BehaviorCode,
) -> Result<Option<f64>> {
    require_labels(conversation, code.speaker)?;
    let len = conversation.utterances.len();
    let positions: Vec<f64> = conversation
        .utterances
        .iter()
        .filter(|u| u.has_label(&code.id))
        .map(|u| {
            if len == 1 {
                0.0
            } else {
                u.index as f64 / (len - 1) as f64
            }
        })
        .collect();
    if positions.is_empty() {
        return Ok(None);
    }
    Ok(Some(positions.iter().sum::<f64>() / positions.len() as f64))
}

fn profile_over<F>(
    group_id: &str,
    group: &[&Conversation],
    taxonomy: &Taxonomy,
    measure: Measure,
    mut value: F,
) -> Result<BehaviorProfile>
where
    F: FnMut(&Conversation, &BehaviorCode) -> Result<Option<f64>>,
{
    if group.is_empty() {
        return Err(Error::Precondition("profile over an empty group".into()));
    }
    let mut per_behavior: BTreeMap<String, Vec<f64>> = taxonomy
        .codes()
        .iter()
        .map(|c| (c.display_name.clone(), Vec::new()))
        .collect();
    for conv in group {
        for code in taxonomy.codes() {
            if let Some(v) = value(conv, code)? {
                per_behavior.get_mut(&code.display_name).unwrap().push(v);
            }
        }
    }
    Ok(BehaviorProfile {
        group_id: group_id.to_string(),
        measure,
        unit: Unit::Conversation,
        per_behavior,
    })
}

/// One frequency value per conversation per behavior, all 19 codes.
pub fn frequency_profile(
    group_id: &str,
    group: &[&Conversation],
    taxonomy: &Taxonomy,
) -> Result<BehaviorProfile> {
    profile_over(group_id, group, taxonomy, Measure::FrequencyPct, |c, code| {
        behavior_frequency(c, code)
    })
}

/// One first-occurrence turn per conversation per behavior; conversations
/// never exhibiting a behavior contribute nothing to its vector.
pub fn first_turn_profile(
    group_id: &str,
    group: &[&Conversation],
    taxonomy: &Taxonomy,
) -> Result<BehaviorProfile> {
    profile_over(group_id, group, taxonomy, Measure::FirstTurn, |c, code| {
        Ok(first_occurrence_turn(c, code)?.map(|t| t as f64))
    })
}

/// One mean occurrence position per conversation per behavior.
pub fn mean_position_profile(
    group_id: &str,
    group: &[&Conversation],
    taxonomy: &Taxonomy,
) -> Result<BehaviorProfile> {
    profile_over(group_id, group, taxonomy, Measure::MeanPosition, |c, code| {
        mean_occurrence_position(c, code)
    })
}

/// Wrap pre-computed per-unit vectors (e.g. lexicon category rates) so they
/// flow through `profile_difference` like behavior profiles.
pub fn profile_from_vectors(
    group_id: &str,
    measure: Measure,
    unit: Unit,
    per_behavior: BTreeMap<String, Vec<f64>>,
) -> BehaviorProfile {
    BehaviorProfile {
        group_id: group_id.to_string(),
        measure,
        unit,
        per_behavior,
    }
}

/// Per-behavior mean(compare) - mean(baseline) with a two-sided pooled
/// t-test. Behaviors with fewer than 2 units on either side are skipped
/// (no valid test exists for them).
pub fn profile_difference(
    compare: &BehaviorProfile,
    baseline: &BehaviorProfile,
) -> Result<ComparisonTable> {
    if compare.measure != baseline.measure {
        return Err(Error::Precondition(format!(
            "cannot difference {:?} against {:?} profiles",
            compare.measure, baseline.measure
        )));
    }
    let mut rows = Vec::new();
    for (behavior, a) in &compare.per_behavior {
        let Some(b) = baseline.per_behavior.get(behavior) else {
            continue;
        };
        if a.len() < 2 || b.len() < 2 {
            continue;
        }
        let test = students_t_test(a, b)?;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mean_diff = mean(a) - mean(b);
        let std = if test.t.is_finite() && test.t != 0.0 {
            (mean_diff / test.t).abs()
        } else {
            0.0
        };
        rows.push(ComparisonRow {
            behavior: behavior.clone(),
            mean_diff,
            std,
            t: test.t,
            df: test.df,
            p: test.p,
            significant: test.p < ALPHA,
        });
    }
    Ok(ComparisonTable {
        compare_group: compare.group_id.clone(),
        baseline_group: baseline.group_id.clone(),
        measure: compare.measure,
        rows,
    })
}

/// For each client behavior, how the immediately following therapist
/// utterance responds: cell vectors hold a 0/100 indicator per response
/// occurrence, so means are conditional percentages.
pub fn adaptability_matrix(
    group_id: &str,
    group: &[&Conversation],
    taxonomy: &Taxonomy,
) -> Result<BTreeMap<String, BehaviorProfile>> {
    if group.is_empty() {
        return Err(Error::Precondition("adaptability over an empty group".into()));
    }
    let client_codes = taxonomy.codes_for(Speaker::Client);
    let therapist_codes = taxonomy.codes_for(Speaker::Therapist);
    let mut matrix: BTreeMap<String, BehaviorProfile> = client_codes
        .iter()
        .map(|cc| {
            (
                cc.display_name.clone(),
                BehaviorProfile {
                    group_id: group_id.to_string(),
                    measure: Measure::ConditionalPct,
                    unit: Unit::Occurrence,
                    per_behavior: therapist_codes
                        .iter()
                        .map(|tc| (tc.display_name.clone(), Vec::new()))
                        .collect(),
                },
            )
        })
        .collect();
    for conv in group {
        require_labels(conv, Speaker::Client)?;
        require_labels(conv, Speaker::Therapist)?;
        for pair in conv.utterances.windows(2) {
            let (client_utt, therapist_utt) = (&pair[0], &pair[1]);
            if client_utt.speaker != Speaker::Client
                || therapist_utt.speaker != Speaker::Therapist
            {
                continue;
            }
            for cc in &client_codes {
                if !client_utt.has_label(&cc.id) {
                    continue;
                }
                let profile = matrix.get_mut(&cc.display_name).unwrap();
                for tc in &therapist_codes {
                    let indicator = if therapist_utt.has_label(&tc.id) {
                        100.0
                    } else {
                        0.0
                    };
                    profile
                        .per_behavior
                        .get_mut(&tc.display_name)
                        .unwrap()
                        .push(indicator);
                }
            }
        }
    }
    Ok(matrix)
}
