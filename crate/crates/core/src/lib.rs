//! Workbench for grounded multi-turn retrieval conversations.
//!
//! Two halves share this crate:
//!
//! - **Synthesis** — turn single-turn QA sources into fact-grounded
//!   multi-turn dialogues: alignment validation, aspect decomposition, atomic
//!   fact verification, and per-turn generation with retrieval reasoning
//!   ([`decompose`], [`facts`], [`turns`]).
//! - **Evaluation** — retrieval runs over query strategies and retrievers
//!   with nDCG/MAP/Recall/MRR, paired significance tests and analyses
//!   ([`retrieval`]); grounded-generation judging and lexical metrics
//!   ([`geneval`]); and automatic conversation-quality audits ([`audit`]).
//!
//! All model traffic flows through the provider-agnostic [`gateway`], which
//! ships a deterministic fixture-driven mock: every pipeline in the crate is
//! runnable offline and bit-reproducible.

pub mod audit;
pub mod corpus;
pub mod dataset;
pub mod decompose;
pub mod error;
pub mod facts;
pub mod gateway;
pub mod geneval;
pub mod par;
pub mod report;
pub mod retrieval;
pub mod turns;

pub use error::{Error, Result};
