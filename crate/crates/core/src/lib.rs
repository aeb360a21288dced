//! Cohort-level language and behaviour analytics for social-media corpora.
//!
//! The pipeline ingests per-user document streams labelled by cohort and
//! compares positive cohorts against their controls: vocabulary overlap,
//! smoothed unigram language models and their KL divergence, lexicon
//! category proportions, emotion profiles and correlations, engagement
//! markers, and posting time gaps. Results are written as CSV/JSON tables
//! and SVG charts.

pub mod behavior;
pub mod corpus;
pub mod lexicons;
pub mod openvocab;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;
pub mod textscan;
