//! NewsLens: a five-agent adversarial pipeline for news bias analysis.
//!
//! An article flows through five specialist agents: a fact verifier, a
//! progressive analyst, a conservative analyst, a propaganda detector, and a
//! neutral summarizer. The two analysts and the detector see only the raw
//! article; the summarizer additionally receives the structured JSON the
//! earlier agents produced. From the agents' outputs the pipeline derives a
//! Polarization Divergence Score (PDS) and a Manipulation Index (MI) per
//! article, plus group-level statistics across a corpus.
//!
//! Everything runs against a pluggable chat backend. A scripted backend
//! replays canned fixture outputs so the full pipeline, metrics, and report
//! stack are testable offline and byte-for-byte reproducible.

pub mod backend;
pub mod cli;
pub mod corpus;
pub mod digest;
pub mod domain;
pub mod fixtures;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod stats;
