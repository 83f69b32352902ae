//! Partisan alignment analysis for ideology-conditioned text.
//!
//! The crate compares model-generated corpora with real-world partisan
//! corpora along three annotated features (stance, emotion, moral
//! foundations) and two measures:
//!
//! - **divergence**: KL divergence between the normalized class
//!   distributions of generated and real text, per topic and ideology;
//! - **class tendency**: for each class, whether the model reproduces the
//!   real-world ordering of liberal versus conservative probability.
//!
//! Around those sit the upstream pieces: issue detection
//! ([`issue_tagger`]), instruction and probe construction
//! ([`instruction_builder`]), stance annotation through a chat-completions
//! endpoint ([`annotate`]) and table rendering ([`report`]). The
//! `partisan-lens` binary wires them into a command-line pipeline.

pub mod annotate;
pub mod cli;
pub mod corpus;
pub mod instruction_builder;
pub mod issue_tagger;
pub mod metrics;
pub mod report;
pub mod study;

pub use corpus::{
    filter_corpus, load_corpus, ClassRegistry, ClassSet, Corpus, CorpusFilter, FeatureKind,
    Ideology, Source, TextInstance,
};
pub use metrics::{
    class_distribution, kl_divergence, kld, tendency_accuracy, Cell, ClassDistribution, KldOptions,
    LogBase,
};
