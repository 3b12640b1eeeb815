//! Prompt-modulation experiments: append a steering instruction to the
//! therapist system prompt, run paired simulations (same references, same
//! seeds) with and without it, classify both arms, and report the frequency
//! shift of the target behavior.

use serde::{Deserialize, Serialize};

use crate::analytics::behavior_frequency;
use crate::classification::{classify_corpus, merge_predictions, ClassifierSpec};
use crate::corpus::{Conversation, Corpus};
use crate::gateway::Gateway;
use crate::simulation::{simulate_full_conversation, PromptTemplateSet, SimMode, SimulationJob};
use crate::stats::{students_t_test, TTestResult};
use crate::taxonomy::{CodeId, Speaker, Taxonomy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    pub target_code: CodeId,
    pub direction: Direction,
    pub instruction: String,
}

impl ModulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.instruction.trim().is_empty() {
            return Err(Error::Config("modulation instruction is empty".into()));
        }
        Ok(())
    }
}

/// The three built-in steering instructions.
pub fn builtin_modulations() -> Vec<ModulationSpec> {
    vec![
        ModulationSpec {
            target_code: CodeId::from("t.question_experiences"),
            direction: Direction::Increase,
            instruction:
                "focus more on asking questions to allow client to express their experiences"
                    .to_string(),
        },
        ModulationSpec {
            target_code: CodeId::from("t.problem_solving"),
            direction: Direction::Decrease,
            instruction: "focus less on offering possible solutions to client's problem"
                .to_string(),
        },
        ModulationSpec {
            target_code: CodeId::from("t.normalizing"),
            direction: Direction::Decrease,
            instruction: "focus less on validating client's experiences or feelings as normal, on sympathizing with their challenges, and on providing reassurance".to_string(),
        },
    ]
}

/// Append the steering instruction to the base system prompt. Applying the
/// same instruction twice is rejected.
pub fn build_modulated_prompt(base_system: &str, spec: &ModulationSpec) -> Result<String> {
    spec.validate()?;
    if base_system.contains(&spec.instruction) {
        return Err(Error::Precondition(
            "modulation instruction is already present in the system prompt".into(),
        ));
    }
    Ok(format!("{base_system}\n{}", spec.instruction))
}

pub struct ModulationBackends<'a> {
    pub therapist: &'a Gateway,
    pub client: &'a Gateway,
    pub classifier: &'a Gateway,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationOutcome {
    pub spec: ModulationSpec,
    /// Mean of per-conversation frequencies, baseline arm.
    pub baseline_freq: f64,
    /// Mean of per-conversation frequencies, modulated arm.
    pub modulated_freq: f64,
    /// modulated_freq - baseline_freq, no re-rounding.
    pub delta: f64,
    /// Pooled-utterance frequencies (all therapist utterances of the arm).
    pub baseline_pooled_freq: f64,
    pub modulated_pooled_freq: f64,
    pub test: Option<TTestResult>,
    pub baseline_per_conversation: Vec<f64>,
    pub modulated_per_conversation: Vec<f64>,
    #[serde(skip)]
    pub baseline_corpus: Corpus,
    #[serde(skip)]
    pub modulated_corpus: Corpus,
}

fn phase<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Data(format!("{name} phase: {e}")))
}

fn simulate_arm(
    arm: &str,
    templates: &PromptTemplateSet,
    backends: &ModulationBackends<'_>,
    references: &[Conversation],
    seed: u64,
) -> Result<Corpus> {
    let mut conversations = Vec::new();
    for (i, reference) in references.iter().enumerate() {
        let job = SimulationJob {
            reference: reference.clone(),
            backend_therapist: backends.therapist.config().clone(),
            backend_client: Some(backends.client.config().clone()),
            mode: SimMode::Full,
            max_turns: crate::simulation::DEFAULT_MAX_TURNS,
            seed: seed + i as u64,
        };
        let conv = simulate_full_conversation(&job, templates, backends.therapist, backends.client)
            .map_err(|f| Error::Data(format!("{arm} simulation phase: {}", f.error)))?;
        conversations.push(conv);
    }
    Ok(Corpus::new(conversations))
}

fn classify_arm(
    arm: &str,
    backends: &ModulationBackends<'_>,
    classifier: &ClassifierSpec,
    taxonomy: &Taxonomy,
    corpus: &Corpus,
) -> Result<Corpus> {
    let out = phase(
        arm,
        classify_corpus(
            backends.classifier,
            classifier,
            taxonomy,
            corpus,
            Speaker::Therapist,
        ),
    )?;
    if !out.failures.is_empty() {
        return Err(Error::Data(format!(
            "{arm} classification phase: {} utterances failed (first: {})",
            out.failures.len(),
            out.failures[0].message
        )));
    }
    phase(arm, merge_predictions(corpus, &out.predictions))
}

fn arm_frequencies(corpus: &Corpus, taxonomy: &Taxonomy, code: &CodeId) -> Result<(Vec<f64>, f64)> {
    let behavior = taxonomy
        .get(code)
        .ok_or_else(|| Error::Data(format!("unknown modulation target `{code}`")))?;
    let mut per_conversation = Vec::new();
    let mut hits = 0usize;
    let mut total = 0usize;
    for conv in &corpus.conversations {
        if let Some(f) = behavior_frequency(conv, behavior)? {
            per_conversation.push(f);
        }
        for utt in conv.utterances.iter().filter(|u| u.speaker == Speaker::Therapist) {
            total += 1;
            if utt.has_label(code) {
                hits += 1;
            }
        }
    }
    let pooled = if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    };
    Ok((per_conversation, pooled))
}

/// Simulate baseline and modulated arms over the same references and seeds,
/// classify both, and compare the target behavior's frequency.
pub fn run_modulation_experiment(
    backends: &ModulationBackends<'_>,
    templates: &PromptTemplateSet,
    references: &[Conversation],
    spec: &ModulationSpec,
    classifier: &ClassifierSpec,
    taxonomy: &Taxonomy,
    seed: u64,
) -> Result<ModulationOutcome> {
    if references.is_empty() {
        return Err(Error::Precondition(
            "modulation experiment needs at least one reference conversation".into(),
        ));
    }
    spec.validate()?;
    let mut modulated_templates = templates.clone();
    modulated_templates.therapist_system =
        build_modulated_prompt(&templates.therapist_system, spec)?;

    let baseline_raw = simulate_arm("baseline", templates, backends, references, seed)?;
    let modulated_raw = simulate_arm("modulated", &modulated_templates, backends, references, seed)?;

    let baseline_corpus = classify_arm("baseline", backends, classifier, taxonomy, &baseline_raw)?;
    let modulated_corpus =
        classify_arm("modulated", backends, classifier, taxonomy, &modulated_raw)?;

    let (baseline_vec, baseline_pooled) =
        arm_frequencies(&baseline_corpus, taxonomy, &spec.target_code)?;
    let (modulated_vec, modulated_pooled) =
        arm_frequencies(&modulated_corpus, taxonomy, &spec.target_code)?;
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let baseline_freq = mean(&baseline_vec);
    let modulated_freq = mean(&modulated_vec);
    let test = if baseline_vec.len() >= 2 && modulated_vec.len() >= 2 {
        Some(students_t_test(&modulated_vec, &baseline_vec)?)
    } else {
        None
    };
    Ok(ModulationOutcome {
        spec: spec.clone(),
        baseline_freq,
        modulated_freq,
        delta: modulated_freq - baseline_freq,
        baseline_pooled_freq: baseline_pooled,
        modulated_pooled_freq: modulated_pooled,
        test,
        baseline_per_conversation: baseline_vec,
        modulated_per_conversation: modulated_vec,
        baseline_corpus,
        modulated_corpus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::{build_multi_label_prompt, ClassifierMode};
    use crate::corpus::{Quality, Source, Utterance};
    use crate::gateway::{
        request_key, BackendConfig, ChatMessage, GenerationParams, ScriptedMockBackend,
        SystemClock,
    };
    use crate::simulation::THERAPIST_SYSTEM_PROMPT;
    use crate::taxonomy::load_builtin_taxonomy;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    #[test]
    fn builtin_instructions_exact_wording() {
        let specs = builtin_modulations();
        assert_eq!(specs.len(), 3);
        assert_eq!(
            specs[0].instruction,
            "focus more on asking questions to allow client to express their experiences"
        );
        assert_eq!(specs[0].direction, Direction::Increase);
        assert_eq!(
            specs[1].instruction,
            "focus less on offering possible solutions to client's problem"
        );
        assert_eq!(
            specs[2].instruction,
            "focus less on validating client's experiences or feelings as normal, on sympathizing with their challenges, and on providing reassurance"
        );
        assert!(specs[1..].iter().all(|s| s.direction == Direction::Decrease));
    }

    #[test]
    fn modulated_prompt_appends_with_single_newline() {
        let spec = &builtin_modulations()[1];
        let out = build_modulated_prompt(THERAPIST_SYSTEM_PROMPT, spec).unwrap();
        assert_eq!(
            out,
            format!("{THERAPIST_SYSTEM_PROMPT}\n{}", spec.instruction)
        );
        // applying twice is rejected
        assert!(build_modulated_prompt(&out, spec).is_err());
    }

    fn reference(id: &str) -> Conversation {
        Conversation {
            id: id.to_string(),
            dataset_id: "d".to_string(),
            quality: Quality::High,
            source: Source::Human,
            model_id: None,
            utterances: vec![
                Utterance::new(0, Speaker::Client, "I feel stuck."),
                Utterance::new(1, Speaker::Therapist, "Tell me more."),
            ],
            extra: Default::default(),
        }
    }

    fn gateway_with(name: &str, responses: BTreeMap<String, String>, default: Option<&str>) -> Gateway {
        let cfg = BackendConfig::scripted_mock(name, "mock", "/dev/null");
        let backend = ScriptedMockBackend::from_parts(
            name,
            "mock",
            responses,
            Vec::new(),
            default.map(str::to_string),
        );
        Gateway::with_backend(cfg, Box::new(backend), None, Arc::new(SystemClock)).unwrap()
    }

    fn client_first(seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.gen_range(0..2u8) == 0
    }

    /// base seed such that both references (seed, seed+1) start with the
    /// client; keeps the therapist's one reply the only therapist utterance.
    fn client_first_base_seed() -> u64 {
        (0..).find(|&s| client_first(s) && client_first(s + 1)).unwrap()
    }

    #[test]
    fn identical_arms_give_zero_delta_p_one() {
        let taxonomy = load_builtin_taxonomy();
        let t = gateway_with("t", BTreeMap::new(), Some("Here is a solution plan."));
        let c = gateway_with("c", BTreeMap::new(), Some("I feel stuck."));
        let cl = gateway_with("cl", BTreeMap::new(), Some("Problem-Solving"));
        let backends = ModulationBackends {
            therapist: &t,
            client: &c,
            classifier: &cl,
        };
        let spec = &builtin_modulations()[1];
        let classifier = ClassifierSpec::new(ClassifierMode::MultiDef, Speaker::Therapist);
        let outcome = run_modulation_experiment(
            &backends,
            &PromptTemplateSet::default(),
            &[reference("r1"), reference("r2")],
            spec,
            &classifier,
            &taxonomy,
            client_first_base_seed(),
        )
        .unwrap();
        assert_eq!(outcome.delta, 0.0);
        assert_eq!(outcome.test.unwrap().p, 1.0);
        assert_eq!(outcome.baseline_freq, outcome.modulated_freq);
    }

    #[test]
    fn modulated_arm_drops_problem_solving() {
        let taxonomy = load_builtin_taxonomy();
        let templates = PromptTemplateSet::default();
        let spec = builtin_modulations()[1].clone();
        let base_seed = client_first_base_seed();

        // client always opens with the same line and ends the session on its
        // 2nd turn, so each arm is exactly [C, T, C(end)] per reference
        let client_line = "I feel stuck.";
        let params = GenerationParams::simulation();

        // therapist responses keyed per arm: the system prompt differs, so
        // the two arms produce different request keys for the same history
        let base_system = templates.therapist_full_system();
        let mut mod_templates = templates.clone();
        mod_templates.therapist_system =
            build_modulated_prompt(&templates.therapist_system, &spec).unwrap();
        let mod_system = mod_templates.therapist_full_system();
        let solution_text = "You could try making a plan.";
        let question_text = "What was happening when it started?";
        let mut therapist_responses = BTreeMap::new();
        for system in [&base_system, &mod_system] {
            let messages = vec![
                ChatMessage::system(system.clone()),
                ChatMessage::user(client_line),
            ];
            let key = request_key("t", "mock", &messages, &params);
            let text = if *system == base_system {
                solution_text
            } else {
                question_text
            };
            therapist_responses.insert(key, text.to_string());
        }

        // classifier keyed on the utterance text inside the prompt
        let cparams = GenerationParams::classification();
        let cspec = ClassifierSpec::new(ClassifierMode::MultiDef, Speaker::Therapist);
        let mut classifier_responses = BTreeMap::new();
        for (text, label) in [
            (solution_text, "Problem-Solving"),
            (question_text, "Questions on Experiences"),
        ] {
            let messages = build_multi_label_prompt(&cspec, &taxonomy, text).unwrap();
            classifier_responses.insert(
                request_key("cl", "mock", &messages, &cparams),
                label.to_string(),
            );
        }

        // client script per conversation: opening line, then a thanks that
        // ends the session, so every arm conversation is [C, T, C]
        let client_script: Vec<String> = (0..4)
            .flat_map(|_| {
                [
                    client_line.to_string(),
                    "Thanks. [END_OF_SESSION]".to_string(),
                ]
            })
            .collect();
        let t = gateway_with("t", therapist_responses, None);
        let c = gateway_with_fallback("c", client_script);
        let cl = gateway_with("cl", classifier_responses, None);
        let backends = ModulationBackends {
            therapist: &t,
            client: &c,
            classifier: &cl,
        };

        let outcome = run_modulation_experiment(
            &backends,
            &templates,
            &[reference("r1"), reference("r2")],
            &spec,
            &cspec,
            &taxonomy,
            base_seed,
        )
        .unwrap();
        assert_eq!(outcome.baseline_per_conversation, vec![100.0, 100.0]);
        assert_eq!(outcome.modulated_per_conversation, vec![0.0, 0.0]);
        assert!(outcome.delta < 0.0);
        assert_eq!(outcome.delta, outcome.modulated_freq - outcome.baseline_freq);
        assert_eq!(outcome.baseline_pooled_freq, 100.0);
        assert_eq!(outcome.modulated_pooled_freq, 0.0);
    }

    fn gateway_with_fallback(name: &str, fallback: Vec<String>) -> Gateway {
        let cfg = BackendConfig::scripted_mock(name, "mock", "/dev/null");
        let backend =
            ScriptedMockBackend::from_parts(name, "mock", BTreeMap::new(), fallback, None);
        Gateway::with_backend(cfg, Box::new(backend), None, Arc::new(SystemClock)).unwrap()
    }

    #[test]
    fn baseline_arm_shares_the_plain_simulation_code_path() {
        let taxonomy = load_builtin_taxonomy();
        let templates = PromptTemplateSet::default();
        let t = gateway_with("t", BTreeMap::new(), Some("Go on."));
        let c = gateway_with("c", BTreeMap::new(), Some("Okay. [END_OF_SESSION]"));
        let cl = gateway_with("cl", BTreeMap::new(), Some("None"));
        let backends = ModulationBackends {
            therapist: &t,
            client: &c,
            classifier: &cl,
        };
        let spec = builtin_modulations()[0].clone();
        let cspec = ClassifierSpec::new(ClassifierMode::MultiDef, Speaker::Therapist);
        let seed = 11;
        let outcome = run_modulation_experiment(
            &backends,
            &templates,
            &[reference("r1")],
            &spec,
            &cspec,
            &taxonomy,
            seed,
        )
        .unwrap();
        let job = SimulationJob {
            reference: reference("r1"),
            backend_therapist: t.config().clone(),
            backend_client: Some(c.config().clone()),
            mode: SimMode::Full,
            max_turns: crate::simulation::DEFAULT_MAX_TURNS,
            seed,
        };
        let direct = simulate_full_conversation(&job, &templates, &t, &c).unwrap();
        let arm = &outcome.baseline_corpus.conversations[0];
        assert_eq!(arm.id, direct.id);
        assert_eq!(
            arm.utterances.iter().map(|u| &u.text).collect::<Vec<_>>(),
            direct.utterances.iter().map(|u| &u.text).collect::<Vec<_>>()
        );
    }
}
