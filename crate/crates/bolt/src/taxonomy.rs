//! Canonical registry of behavioral codes: 13 therapist codes and 6 client
//! codes, with definitions, exemplar utterances, and name resolution.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Who produced an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Therapist,
    Client,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::Therapist => Speaker::Client,
            Speaker::Client => Speaker::Therapist,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::Therapist => write!(f, "therapist"),
            Speaker::Client => write!(f, "client"),
        }
    }
}

/// Semantic grouping of behavior codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    // therapist
    Reflections,
    Questions,
    Solutions,
    Normalizing,
    Psychoeducation,
    // client
    BehaviorChange,
    SelfDisclosure,
    GainingInsights,
}

/// Stable identifier of a behavior code, namespaced `t.*` / `c.*` so
/// therapist and client codes with equal display-name stems cannot collide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodeId(pub String);

impl CodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CodeId {
    fn from(s: &str) -> Self {
        CodeId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorCode {
    pub id: CodeId,
    pub speaker: Speaker,
    pub category: Category,
    pub display_name: String,
    pub definition: String,
    pub exemplar: String,
}

/// The fixed 19-code taxonomy plus an alias table for name resolution.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    codes: Vec<BehaviorCode>,
    aliases: BTreeMap<String, CodeId>,
}

/// Normalization applied before alias lookup: lowercase, collapse internal
/// whitespace, strip surrounding whitespace and trailing sentence punctuation.
fn normalize_name(name: &str) -> String {
    let trimmed = name.trim().trim_end_matches(['.', '!', '?']).trim();
    trimmed
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl Taxonomy {
    fn new(codes: Vec<BehaviorCode>, extra_aliases: &[(&str, &str)]) -> Self {
        let mut aliases = BTreeMap::new();
        for code in &codes {
            aliases.insert(normalize_name(&code.display_name), code.id.clone());
            aliases.insert(normalize_name(code.id.as_str()), code.id.clone());
        }
        for (alias, id) in extra_aliases {
            aliases.insert(normalize_name(alias), CodeId::from(*id));
        }
        Taxonomy { codes, aliases }
    }

    pub fn codes(&self) -> &[BehaviorCode] {
        &self.codes
    }

    pub fn codes_for(&self, speaker: Speaker) -> Vec<&BehaviorCode> {
        self.codes.iter().filter(|c| c.speaker == speaker).collect()
    }

    pub fn get(&self, id: &CodeId) -> Option<&BehaviorCode> {
        self.codes.iter().find(|c| &c.id == id)
    }

    pub fn contains(&self, id: &CodeId) -> bool {
        self.get(id).is_some()
    }

    /// Case-insensitive, whitespace-normalized match on display name or
    /// registered alias, restricted to the given speaker's codes.
    pub fn resolve_label(&self, name: &str, speaker: Speaker) -> Option<&BehaviorCode> {
        if name.trim().is_empty() {
            return None;
        }
        let key = normalize_name(name);
        let id = self.aliases.get(&key)?;
        let code = self.get(id)?;
        if code.speaker == speaker {
            Some(code)
        } else {
            None
        }
    }

    /// JSON export (array of code records) for documentation and prompt
    /// construction. Reloading yields an identical code set.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.codes)?)
    }

    pub fn from_json(json: &str) -> Result<Taxonomy> {
        let codes: Vec<BehaviorCode> = serde_json::from_str(json)?;
        if codes.is_empty() {
            return Err(Error::Data("taxonomy document has no codes".into()));
        }
        Ok(Taxonomy::new(codes, &[]))
    }
}

fn code(
    id: &str,
    speaker: Speaker,
    category: Category,
    display_name: &str,
    definition: &str,
    exemplar: &str,
) -> BehaviorCode {
    BehaviorCode {
        id: CodeId::from(id),
        speaker,
        category,
        display_name: display_name.to_string(),
        definition: definition.to_string(),
        exemplar: exemplar.to_string(),
    }
}

/// The built-in 19-code taxonomy.
pub fn load_builtin_taxonomy() -> Taxonomy {
    use Category::*;
    use Speaker::*;

    let codes = vec![
        code(
            "t.reflection_needs",
            Therapist,
            Reflections,
            "Reflections on Needs",
            "Identifies an implied or background need for the client.",
            "It sounds like you've realized that maintaining a balance between your work and personal life is essential for your overall well-being.",
        ),
        code(
            "t.reflection_emotions",
            Therapist,
            Reflections,
            "Reflections on Emotions",
            "Identifies an implied or background emotion for the client.",
            "So it seems like you have been feeling a little overwhelmed and anxious about all the moving parts in your new job.",
        ),
        code(
            "t.reflection_values",
            Therapist,
            Reflections,
            "Reflections on Values",
            "Identifies an implied or background value or set of values for the client.",
            "Being respected by others is a significant value for you.",
        ),
        code(
            "t.reflection_consequences",
            Therapist,
            Reflections,
            "Reflections on Consequences",
            "Identifies consequences the client experience or could experience.",
            "Whenever you overspend on luxury items, you struggle to pay your bills at the end of the month.",
        ),
        code(
            "t.reflection_conflict",
            Therapist,
            Reflections,
            "Reflections on Conflict",
            "Identifies an implied or background emotional or situational conflict for the client.",
            "You're striving to improve your health, but your demanding job leaves you with little time for exercise and nutrition.",
        ),
        code(
            "t.reflection_strength",
            Therapist,
            Reflections,
            "Reflections on Strength",
            "Identifies an implied or background strength or resource that the client exhibits.",
            "Your ability to adapt and overcome adversity really shows your resilience and determination.",
        ),
        code(
            "t.question_experiences",
            Therapist,
            Questions,
            "Questions on Experiences",
            "More information about a specific event or statement is sought.",
            "You mentioned you are trying to eat healthier. What changes did you make to your diet?",
        ),
        code(
            "t.question_perspectives",
            Therapist,
            Questions,
            "Questions on Perspectives",
            "Client is asked to consider an experience from a different perspective or vantage point.",
            "That's fantastic, now let's focus on the goals you want to accomplish. Can you visualize any particular approach or strategy you'd like to implement to achieve these goals?",
        ),
        code(
            "t.question_emotions",
            Therapist,
            Questions,
            "Questions on Emotions",
            "Asks client to express how they are feeling in the immediate present about something that just happened in the therapy.",
            "Would you like to talk more about what that feels like for you right now?",
        ),
        code(
            "t.problem_solving",
            Therapist,
            Solutions,
            "Problem-Solving",
            "Therapist offers possible solutions to a client problem.",
            "It may help to create a routine for daily relaxation techniques, such as deep breathing or meditation. This could assist in managing your anxiety levels.",
        ),
        code(
            "t.planning",
            Therapist,
            Solutions,
            "Planning",
            "Therapist works with client to construct a specific plan of action.",
            "Let's create a meal plan together. Try to follow it for the next two weeks and note down any changes you notice in your energy levels and overall well-being.",
        ),
        code(
            "t.normalizing",
            Therapist,
            Normalizing,
            "Normalizing",
            "The therapist acknowledges and validates the client's experience as \"normal\" or expectable, sympathizes with their challenges, and provides reassurance to foster a supportive and encouraging therapeutic atmosphere.",
            "I hear you, it's perfectly normal to feel overwhelmed given your circumstances.",
        ),
        code(
            "t.psychoeducation",
            Therapist,
            Psychoeducation,
            "Psychoeducation",
            "Therapeutically relevant information about psychological principles is provided.",
            "Cognitive behavioral therapy aids in altering detrimental thought patterns.",
        ),
        code(
            "c.changing_unhealthy_behavior",
            Client,
            BehaviorChange,
            "Changing Unhealthy Behavior",
            "Showing intention or action taken on changing unhealthy behavior.",
            "I've tried to quit drinking, but I end up drinking more than I try to drink less.",
        ),
        code(
            "c.sustaining_unhealthy_behavior",
            Client,
            BehaviorChange,
            "Sustaining Unhealthy Behavior",
            "Showing intention or action taken on sustaining unhealthy behavior.",
            "I am smoking around 20 cigarettes a day for the past couple of years. I know it's bad for my health, but I'm not ready to quit yet.",
        ),
        code(
            "c.sharing_negative_emotions",
            Client,
            SelfDisclosure,
            "Sharing Negative Emotions",
            "Clients describe discomfort or suffering without a specific object, or explicitly acknowledge specific negative emotion.",
            "Life has been really challenging lately, I am feeling lost.",
        ),
        code(
            "c.sharing_positive_emotions",
            Client,
            SelfDisclosure,
            "Sharing Positive Emotions",
            "Client describes enjoyment without a specific object, or explicitly acknowledges specific positive emotion.",
            "I was so thankful when I received that news.",
        ),
        code(
            "c.sharing_experiences",
            Client,
            SelfDisclosure,
            "Sharing Experiences",
            "Client shares the details of their basic background, their life events, the situation they faced or the changes in their life.",
            "I lost my job due to the pandemic, and I've now had to move back in with my parents at age 35 which is a significant change for me.",
        ),
        code(
            "c.gained_insight",
            Client,
            GainingInsights,
            "Gained Insights",
            "Client expresses that they learned something new about themselves or about their situation.",
            "I hadn't considered how much I avoid confrontations.",
        ),
    ];

    // Classifier outputs vary morphologically; register common variants.
    let extra = [
        ("Reflection on Needs", "t.reflection_needs"),
        ("Reflection on Emotions", "t.reflection_emotions"),
        ("Reflection on Values", "t.reflection_values"),
        ("Reflection on Consequences", "t.reflection_consequences"),
        ("Reflection on Conflict", "t.reflection_conflict"),
        ("Reflections on Conflicts", "t.reflection_conflict"),
        ("Reflection on Strength", "t.reflection_strength"),
        ("Reflections on Strengths", "t.reflection_strength"),
        ("Question on Experiences", "t.question_experiences"),
        ("Question on Perspectives", "t.question_perspectives"),
        ("Question on Emotions", "t.question_emotions"),
        ("Problem Solving", "t.problem_solving"),
        ("Changing unhealthy behavior", "c.changing_unhealthy_behavior"),
        ("Sustaining unhealthy behavior", "c.sustaining_unhealthy_behavior"),
        (
            "Sharing negative feeling or emotion",
            "c.sharing_negative_emotions",
        ),
        (
            "Sharing positive feeling or emotion",
            "c.sharing_positive_emotions",
        ),
        ("Sharing life event or situation", "c.sharing_experiences"),
        ("Sharing Experience", "c.sharing_experiences"),
        ("Gained Insight", "c.gained_insight"),
    ];

    Taxonomy::new(codes, &extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_13_therapist_and_6_client_codes() {
        let tax = load_builtin_taxonomy();
        assert_eq!(tax.codes_for(Speaker::Therapist).len(), 13);
        assert_eq!(tax.codes_for(Speaker::Client).len(), 6);
        assert_eq!(tax.codes().len(), 19);
    }

    #[test]
    fn ids_unique_and_fields_nonempty() {
        let tax = load_builtin_taxonomy();
        let mut seen = std::collections::HashSet::new();
        for c in tax.codes() {
            assert!(seen.insert(c.id.clone()), "duplicate id {}", c.id);
            assert!(!c.definition.is_empty());
            assert!(!c.exemplar.is_empty());
            assert!(!c.display_name.is_empty());
        }
    }

    #[test]
    fn category_sizes_match_contract() {
        let tax = load_builtin_taxonomy();
        let count = |cat: Category| {
            tax.codes()
                .iter()
                .filter(|c| c.category == cat && c.speaker == Speaker::Therapist)
                .count()
        };
        assert_eq!(count(Category::Reflections), 6);
        assert_eq!(count(Category::Questions), 3);
        assert_eq!(count(Category::Solutions), 2);
        assert_eq!(count(Category::Normalizing), 1);
        assert_eq!(count(Category::Psychoeducation), 1);
    }

    #[test]
    fn known_definitions_and_exemplars() {
        let tax = load_builtin_taxonomy();
        let needs = tax.get(&CodeId::from("t.reflection_needs")).unwrap();
        assert_eq!(
            needs.definition,
            "Identifies an implied or background need for the client."
        );
        let insight = tax.get(&CodeId::from("c.gained_insight")).unwrap();
        assert_eq!(
            insight.exemplar,
            "I hadn't considered how much I avoid confrontations."
        );
    }

    #[test]
    fn resolve_display_names_round_trip() {
        let tax = load_builtin_taxonomy();
        for c in tax.codes() {
            let resolved = tax.resolve_label(&c.display_name, c.speaker).unwrap();
            assert_eq!(resolved.id, c.id);
        }
    }

    #[test]
    fn resolve_is_case_insensitive_and_speaker_restricted() {
        let tax = load_builtin_taxonomy();
        assert_eq!(
            tax.resolve_label("NORMALIZING", Speaker::Therapist)
                .unwrap()
                .id,
            CodeId::from("t.normalizing")
        );
        assert_eq!(
            tax.resolve_label("Reflections on Needs", Speaker::Therapist)
                .unwrap()
                .id,
            CodeId::from("t.reflection_needs")
        );
        assert!(tax.resolve_label("Empathy", Speaker::Therapist).is_none());
        assert!(tax.resolve_label("Normalizing", Speaker::Client).is_none());
        assert!(tax.resolve_label("", Speaker::Therapist).is_none());
    }

    #[test]
    fn resolve_never_crosses_speaker() {
        let tax = load_builtin_taxonomy();
        for c in tax.codes() {
            for sp in [Speaker::Therapist, Speaker::Client] {
                if let Some(found) = tax.resolve_label(&c.display_name, sp) {
                    assert_eq!(found.speaker, sp);
                }
            }
        }
    }

    #[test]
    fn json_round_trip_preserves_code_set() {
        let tax = load_builtin_taxonomy();
        let json = tax.to_json().unwrap();
        let reloaded = Taxonomy::from_json(&json).unwrap();
        assert_eq!(tax.codes(), reloaded.codes());
    }
}
