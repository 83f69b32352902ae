//! Issue detection: distinctive-term lexicon construction and lexicon-based
//! tagging of instances with a topic.

mod distinctive;
pub mod tokenize;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;

pub use distinctive::{extract_distinctive_terms, score_terms, TermOptions, TermScore};
use tokenize::tokenize_with;

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("foreground and background corpora must both be non-empty")]
    EmptyCorpus,
    #[error("max_ngram must be 1, 2 or 3 (got {0})")]
    InvalidNgram(usize),
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("prior_strength must be finite and positive (got {0})")]
    InvalidPrior(f64),
    #[error("no lexicons given")]
    NoLexicons,
    #[error("lexicon {issue:?}: {reason}")]
    InvalidLexicon { issue: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown preset {0:?} (expected covid, abortion or congress)")]
    UnknownPreset(String),
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconTerm {
    pub term: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueLexicon {
    pub issue: String,
    #[serde(default)]
    pub case_sensitive: bool,
    pub terms: Vec<LexiconTerm>,
}

impl IssueLexicon {
    /// Builds a lexicon with unit weights.
    pub fn new<I, S>(issue: impl Into<String>, terms: I) -> Result<Self, TaggerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        IssueLexicon {
            issue: issue.into(),
            case_sensitive: false,
            terms: terms
                .into_iter()
                .map(|t| LexiconTerm {
                    term: t.into(),
                    weight: 1.0,
                })
                .collect(),
        }
        .validated()
    }

    /// Builds a lexicon from ranked distinctive terms, weighting each by its
    /// z-score. Non-positive scores are dropped.
    pub fn from_scores(
        issue: impl Into<String>,
        scores: &[TermScore],
    ) -> Result<Self, TaggerError> {
        IssueLexicon {
            issue: issue.into(),
            case_sensitive: false,
            terms: scores
                .iter()
                .filter(|s| s.zeta > 0.0)
                .map(|s| LexiconTerm {
                    term: s.term.clone(),
                    weight: s.zeta,
                })
                .collect(),
        }
        .validated()
    }

    /// Lowercases terms of case-insensitive lexicons and checks the
    /// non-empty and no-duplicate invariants.
    pub fn validated(mut self) -> Result<Self, TaggerError> {
        let invalid = |reason: String| TaggerError::InvalidLexicon {
            issue: self.issue.clone(),
            reason,
        };
        if self.terms.is_empty() {
            return Err(invalid("no terms".into()));
        }
        let mut seen = HashSet::new();
        for t in &mut self.terms {
            if !self.case_sensitive {
                t.term = t.term.to_lowercase();
            }
            if tokenize_with(&t.term, self.case_sensitive).is_empty() {
                return Err(invalid(format!("term {:?} has no tokens", t.term)));
            }
            if !t.weight.is_finite() {
                return Err(invalid(format!(
                    "term {:?} has a non-finite weight",
                    t.term
                )));
            }
            if !seen.insert(t.term.clone()) {
                return Err(invalid(format!("duplicate term {:?}", t.term)));
            }
        }
        Ok(self)
    }
}

/// Reads a lexicon file holding either one lexicon object or an array.
pub fn load_lexicons(path: &Path) -> Result<Vec<IssueLexicon>, TaggerError> {
    let text = fs::read_to_string(path).map_err(|source| TaggerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_lexicons(&text).map_err(|e| match e {
        LexParse::Json(source) => TaggerError::Json {
            path: path.to_path_buf(),
            source,
        },
        LexParse::Invalid(e) => e,
    })
}

enum LexParse {
    Json(serde_json::Error),
    Invalid(TaggerError),
}

fn parse_lexicons(text: &str) -> Result<Vec<IssueLexicon>, LexParse> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<IssueLexicon>),
        One(IssueLexicon),
    }
    let parsed: OneOrMany = serde_json::from_str(text).map_err(LexParse::Json)?;
    let list = match parsed {
        OneOrMany::Many(v) => v,
        OneOrMany::One(l) => vec![l],
    };
    list.into_iter()
        .map(|l| l.validated().map_err(LexParse::Invalid))
        .collect()
}

/// Bundled keyword lexicons for the COVID, abortion and congress issue sets.
pub fn preset_lexicons(name: &str) -> Result<Vec<IssueLexicon>, TaggerError> {
    let text = match name {
        "covid" => include_str!("../../presets/lexicons_covid.json"),
        "abortion" => include_str!("../../presets/lexicons_abortion.json"),
        "congress" => include_str!("../../presets/lexicons_congress.json"),
        other => return Err(TaggerError::UnknownPreset(other.to_string())),
    };
    parse_lexicons(text).map_err(|e| match e {
        LexParse::Json(source) => TaggerError::Json {
            path: PathBuf::from(format!("preset:{name}")),
            source,
        },
        LexParse::Invalid(e) => e,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagPolicy {
    /// One copy of the instance per matched issue.
    AllMatching,
    /// The issue with the largest matched weight; ties go to the earlier
    /// lexicon.
    #[default]
    BestSingle,
}

struct CompiledLexicon<'a> {
    lexicon: &'a IssueLexicon,
    terms: Vec<(Vec<String>, f64)>,
}

fn contains_seq(haystack: &[String], needle: &[String]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

impl CompiledLexicon<'_> {
    /// Sum of weights of distinct matched terms, or `None` if nothing matched.
    fn score(&self, lower: &[String], exact: &[String]) -> Option<f64> {
        let toks = if self.lexicon.case_sensitive {
            exact
        } else {
            lower
        };
        let mut matched = false;
        let mut sum = 0.0;
        for (seq, w) in &self.terms {
            if contains_seq(toks, seq) {
                matched = true;
                sum += w;
            }
        }
        matched.then_some(sum)
    }
}

/// Issues matched by `text`, in lexicon order, with their weight sums.
pub fn match_issues<'a>(text: &str, lexicons: &'a [IssueLexicon]) -> Vec<(&'a str, f64)> {
    let compiled = compile(lexicons);
    matches_compiled(text, &compiled)
}

fn compile(lexicons: &[IssueLexicon]) -> Vec<CompiledLexicon<'_>> {
    lexicons
        .iter()
        .map(|lexicon| CompiledLexicon {
            lexicon,
            terms: lexicon
                .terms
                .iter()
                .map(|t| (tokenize_with(&t.term, lexicon.case_sensitive), t.weight))
                .collect(),
        })
        .collect()
}

fn matches_compiled<'a>(text: &str, compiled: &[CompiledLexicon<'a>]) -> Vec<(&'a str, f64)> {
    let lower = tokenize_with(text, false);
    let exact = if compiled.iter().any(|c| c.lexicon.case_sensitive) {
        tokenize_with(text, true)
    } else {
        Vec::new()
    };
    compiled
        .iter()
        .filter_map(|c| {
            c.score(&lower, &exact)
                .map(|s| (c.lexicon.issue.as_str(), s))
        })
        .collect()
}

/// Assigns topics by lexicon matching. Unmatched instances pass through
/// unchanged. Under [`TagPolicy::AllMatching`] an instance matching several
/// issues appears once per issue, with the same id.
pub fn tag_issues(
    corpus: &Corpus,
    lexicons: &[IssueLexicon],
    policy: TagPolicy,
) -> Result<Corpus, TaggerError> {
    if lexicons.is_empty() {
        return Err(TaggerError::NoLexicons);
    }
    let compiled = compile(lexicons);
    let mut out = Vec::with_capacity(corpus.len());
    for inst in corpus.iter() {
        let hits = matches_compiled(&inst.text, &compiled);
        match policy {
            _ if hits.is_empty() => out.push(inst.clone()),
            TagPolicy::AllMatching => {
                for (issue, _) in hits {
                    out.push(inst.clone().with_topic(issue));
                }
            }
            TagPolicy::BestSingle => {
                let mut best = hits[0];
                for h in &hits[1..] {
                    if h.1 > best.1 {
                        best = *h;
                    }
                }
                out.push(inst.clone().with_topic(best.0));
            }
        }
    }
    Ok(Corpus::new(corpus.name.clone(), out))
}
