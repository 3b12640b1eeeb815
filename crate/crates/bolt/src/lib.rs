//! Behavioral analysis of LLM therapists.
//!
//! The pipeline: simulate therapist conversations from reference transcripts
//! ([`simulation`]), code every utterance with psychotherapy behavior labels via
//! a prompted LLM backend ([`classification`]), and compare the resulting
//! behavior profiles against high- and low-quality human-therapy baselines
//! ([`analytics`], [`lexicon`]). [`gateway`] provides the chat-completion
//! transport (HTTP or scripted mock) with caching, retries, and rate limiting.

pub mod analytics;
pub mod classification;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod gateway;
pub mod lexicon;
pub mod modulation;
pub mod report;
pub mod simulation;
pub mod stats;
pub mod taxonomy;

mod error;

pub use error::{Error, Result};
