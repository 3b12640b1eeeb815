//! Conversation simulation: single-response generation over every
//! client-terminated prefix of a reference transcript, and full multi-turn
//! sessions between an LLM therapist and an LLM-simulated client derived
//! from a reference conversation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Conversation, Quality, Source, Utterance};
use crate::gateway::{BackendConfig, ChatMessage, Gateway, GenerationParams};
use crate::taxonomy::Speaker;
use crate::{Error, Result};

/// Base therapist persona prompt. Style variants extend it via
/// `PromptTemplateSet`, never replace it.
pub const THERAPIST_SYSTEM_PROMPT: &str = "Act as if you're a professional therapist. You provide evidence-based therapy to help clients seeking help with mental health challenges. You should maintain your therapist persona while responding. Communicate in a conversational style, mirroring the style of previous therapist responses.";

/// Client-simulator persona. `{reference}` is replaced with the transcript
/// of the reference conversation.
pub const CLIENT_PERSONA_TEMPLATE: &str = "Act as if you're the client from the reference therapy conversation below. You are now talking to a different therapist in a parallel universe. Ignore that the reference conversation ever happened, but keep the same conversational style, the same manner of addressing your topics and concerns, and the same life events and emotions.\n\nReference conversation:\n{reference}";

/// Session-termination sentinel; both parties are told to emit it and it is
/// stripped from transcripts.
pub const END_TOKEN: &str = "[END_OF_SESSION]";

pub const DEFAULT_MAX_TURNS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub therapist_system: String,
    pub client_persona: String,
    pub end_token: String,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        PromptTemplateSet {
            therapist_system: THERAPIST_SYSTEM_PROMPT.to_string(),
            client_persona: CLIENT_PERSONA_TEMPLATE.to_string(),
            end_token: END_TOKEN.to_string(),
        }
    }
}

impl PromptTemplateSet {
    pub fn validate(&self) -> Result<()> {
        if !self.therapist_system.contains(THERAPIST_SYSTEM_PROMPT) {
            return Err(Error::Config(
                "therapist_system must contain the base therapist prompt verbatim".into(),
            ));
        }
        if self.end_token.is_empty() {
            return Err(Error::Config("end_token must be non-empty".into()));
        }
        if self.therapist_system.contains(&self.end_token)
            || self.client_persona.contains(&self.end_token)
        {
            return Err(Error::Config(
                "end_token must not appear inside the base prompts".into(),
            ));
        }
        if !self.client_persona.contains("{reference}") {
            return Err(Error::Config(
                "client_persona must contain the {reference} slot".into(),
            ));
        }
        Ok(())
    }

    fn end_instruction(&self) -> String {
        format!(
            "When you feel the session has reached its natural end, output {} to end the session.",
            self.end_token
        )
    }

    /// Therapist system prompt for full simulations (base + termination rule).
    pub fn therapist_full_system(&self) -> String {
        format!("{}\n{}", self.therapist_system, self.end_instruction())
    }

    /// Client-simulator system prompt: persona rendered over the reference
    /// transcript, plus the termination rule.
    pub fn client_full_system(&self, reference: &Conversation) -> String {
        let transcript = render_transcript(reference);
        let persona = self.client_persona.replace("{reference}", &transcript);
        format!("{}\n{}", persona, self.end_instruction())
    }
}

fn render_transcript(conversation: &Conversation) -> String {
    conversation
        .utterances
        .iter()
        .map(|u| {
            let who = match u.speaker {
                Speaker::Therapist => "Therapist",
                Speaker::Client => "Client",
            };
            format!("{who}: {}", u.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    SingleResponse,
    Full,
}

#[derive(Debug, Clone)]
pub struct SimulationJob {
    pub reference: Conversation,
    pub backend_therapist: BackendConfig,
    pub backend_client: Option<BackendConfig>,
    pub mode: SimMode,
    pub max_turns: usize,
    pub seed: u64,
}

impl SimulationJob {
    pub fn validate(&self) -> Result<()> {
        match (self.mode, self.backend_client.is_some()) {
            (SimMode::Full, false) => Err(Error::Precondition(
                "full-mode simulation requires a client backend".into(),
            )),
            (SimMode::SingleResponse, true) => Err(Error::Precondition(
                "single-response simulation takes no client backend".into(),
            )),
            _ if self.max_turns == 0 => {
                Err(Error::Precondition("max_turns must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One prefix per client utterance: utterances `0..=j` for every client turn
/// `j`, in ascending order. Prefixes are verbatim slices of the reference.
pub fn extract_single_response_tasks(reference: &Conversation) -> Vec<&[Utterance]> {
    reference
        .utterances
        .iter()
        .enumerate()
        .filter(|(_, u)| u.speaker == Speaker::Client)
        .map(|(j, _)| &reference.utterances[..=j])
        .collect()
}

fn map_history(history: &[Utterance], assistant_side: Speaker) -> Vec<ChatMessage> {
    history
        .iter()
        .map(|u| {
            if u.speaker == assistant_side {
                ChatMessage::assistant(u.text.clone())
            } else {
                ChatMessage::user(u.text.clone())
            }
        })
        .collect()
}

/// Strip the end sentinel; `None` means the remainder is empty (pure
/// termination signal), `Some` keeps the surviving text.
fn strip_end_token(text: &str, end_token: &str) -> (bool, Option<String>) {
    if !text.contains(end_token) {
        return (false, Some(text.trim().to_string()));
    }
    let stripped = text.replace(end_token, " ");
    let stripped = stripped.trim();
    if stripped.is_empty() {
        (true, None)
    } else {
        (true, Some(stripped.to_string()))
    }
}

/// Generate one therapist reply to a client-terminated prefix. The returned
/// utterance continues the prefix (index = prefix length).
pub fn generate_single_response(
    gateway: &Gateway,
    templates: &PromptTemplateSet,
    prefix: &[Utterance],
) -> Result<Utterance> {
    templates.validate()?;
    match prefix.last() {
        Some(last) if last.speaker == Speaker::Client => {}
        _ => {
            return Err(Error::Precondition(
                "single-response prefix must end with a client utterance".into(),
            ))
        }
    }
    let mut messages = vec![ChatMessage::system(templates.therapist_system.clone())];
    messages.extend(map_history(prefix, Speaker::Therapist));
    let text = gateway.complete(&messages, &GenerationParams::simulation())?;
    let (_, remainder) = strip_end_token(&text, &templates.end_token);
    let text = remainder.filter(|t| !t.is_empty()).ok_or_else(|| {
        Error::MalformedResponse("backend generated an empty therapist turn".into())
    })?;
    Ok(Utterance::new(prefix.len(), Speaker::Therapist, text))
}

/// A failed full simulation keeps the utterances generated before the error
/// so the partial transcript can be persisted for diagnosis.
#[derive(Debug)]
pub struct SimulationFailure {
    pub error: Error,
    pub partial: Vec<Utterance>,
}

impl From<SimulationFailure> for Error {
    fn from(f: SimulationFailure) -> Self {
        f.error
    }
}

/// Run a full session: seeded coin flip picks the first speaker, sides
/// strictly alternate, and generation stops at the end sentinel (stripped)
/// or at `max_turns` total utterances.
pub fn simulate_full_conversation(
    job: &SimulationJob,
    templates: &PromptTemplateSet,
    therapist: &Gateway,
    client: &Gateway,
) -> std::result::Result<Conversation, SimulationFailure> {
    let fail = |error: Error, partial: &[Utterance]| SimulationFailure {
        error,
        partial: partial.to_vec(),
    };
    job.validate().map_err(|e| fail(e, &[]))?;
    if job.mode != SimMode::Full {
        return Err(fail(
            Error::Precondition("simulate_full_conversation requires mode=full".into()),
            &[],
        ));
    }
    templates.validate().map_err(|e| fail(e, &[]))?;

    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let first_speaker = if rng.gen_range(0..2u8) == 0 {
        Speaker::Client
    } else {
        Speaker::Therapist
    };

    let therapist_system = templates.therapist_full_system();
    let client_system = templates.client_full_system(&job.reference);

    let mut utterances: Vec<Utterance> = Vec::new();
    while utterances.len() < job.max_turns {
        let speaker = if utterances.len() % 2 == 0 {
            first_speaker
        } else {
            first_speaker.other()
        };
        let (gateway, system) = match speaker {
            Speaker::Therapist => (therapist, therapist_system.as_str()),
            Speaker::Client => (client, client_system.as_str()),
        };
        let mut messages = vec![ChatMessage::system(system)];
        messages.extend(map_history(&utterances, speaker));
        let text = gateway
            .complete(&messages, &GenerationParams::simulation())
            .map_err(|e| fail(e, &utterances))?;
        let (ended, remainder) = strip_end_token(&text, &templates.end_token);
        match remainder.filter(|t| !t.is_empty()) {
            Some(text) => {
                utterances.push(Utterance::new(utterances.len(), speaker, text));
            }
            None if ended => {}
            None => {
                return Err(fail(
                    Error::MalformedResponse(format!("backend generated an empty {speaker} turn")),
                    &utterances,
                ))
            }
        }
        if ended {
            break;
        }
    }

    Ok(Conversation {
        id: format!("{}-sim-full-{}", job.reference.id, job.seed),
        dataset_id: job.reference.dataset_id.clone(),
        quality: Quality::Unknown,
        source: Source::SimFull,
        model_id: Some(job.backend_therapist.model_id.clone()),
        utterances,
        extra: Default::default(),
    })
}
