//! Distinctive term extraction: weighted log-odds ratio with an informative
//! Dirichlet prior, foreground against background.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tokenize::{ngrams, tokenize};
use super::TaggerError;
use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub term: String,
    /// Log-odds z-score; positive means over-represented in the foreground.
    pub zeta: f64,
    pub count_fg: u64,
    pub count_bg: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermOptions {
    pub max_ngram: usize,
    pub top_k: usize,
    pub prior_strength: f64,
}

impl Default for TermOptions {
    fn default() -> Self {
        TermOptions {
            max_ngram: 1,
            top_k: 50,
            prior_strength: 1.0,
        }
    }
}

fn count_terms(corpus: &Corpus, max_ngram: usize) -> (BTreeMap<String, u64>, u64) {
    let mut counts = BTreeMap::new();
    let mut total = 0;
    for inst in corpus.iter() {
        let toks = tokenize(&inst.text);
        for g in ngrams(&toks, max_ngram) {
            *counts.entry(g).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// Scores every term of the joint vocabulary, including terms that only
/// occur in the background. Sorted by term.
pub fn score_terms(
    foreground: &Corpus,
    background: &Corpus,
    max_ngram: usize,
    prior_strength: f64,
) -> Result<Vec<TermScore>, TaggerError> {
    if foreground.is_empty() || background.is_empty() {
        return Err(TaggerError::EmptyCorpus);
    }
    if !(1..=3).contains(&max_ngram) {
        return Err(TaggerError::InvalidNgram(max_ngram));
    }
    if !(prior_strength > 0.0 && prior_strength.is_finite()) {
        return Err(TaggerError::InvalidPrior(prior_strength));
    }
    let (fg, n_fg) = count_terms(foreground, max_ngram);
    let (bg, n_bg) = count_terms(background, max_ngram);

    let mut vocab: Vec<&String> = fg.keys().chain(bg.keys()).collect();
    vocab.sort();
    vocab.dedup();

    // Total prior mass. Each term gets its corpus-wide share of it, so the
    // "everything else" side of each odds, n + alpha0 - y - alpha, never
    // goes negative.
    let alpha0 = prior_strength * vocab.len() as f64;
    let single_term = vocab.len() == 1;
    let n_fg = n_fg as f64;
    let n_bg = n_bg as f64;
    let n_all = n_fg + n_bg;

    let scores = vocab
        .into_iter()
        .map(|term| {
            let c_fg = fg.get(term).copied().unwrap_or(0);
            let c_bg = bg.get(term).copied().unwrap_or(0);
            let (y_fg, y_bg) = (c_fg as f64, c_bg as f64);
            let alpha = (y_fg + y_bg) / n_all * alpha0;
            let log_odds_fg = ((y_fg + alpha) / (n_fg + alpha0 - y_fg - alpha)).ln();
            let log_odds_bg = ((y_bg + alpha) / (n_bg + alpha0 - y_bg - alpha)).ln();
            let delta = log_odds_fg - log_odds_bg;
            let variance = 1.0 / (y_fg + alpha) + 1.0 / (y_bg + alpha);
            TermScore {
                term: term.clone(),
                // A one-term vocabulary has infinite odds on both sides.
                zeta: if single_term {
                    0.0
                } else {
                    delta / variance.sqrt()
                },
                count_fg: c_fg,
                count_bg: c_bg,
            }
        })
        .collect();
    Ok(scores)
}

/// Ranks foreground terms by descending z-score (ties lexicographic) and
/// keeps the first `top_k`. A `top_k` beyond the vocabulary returns the
/// whole ranking.
pub fn extract_distinctive_terms(
    foreground: &Corpus,
    background: &Corpus,
    opts: &TermOptions,
) -> Result<Vec<TermScore>, TaggerError> {
    if opts.top_k == 0 {
        return Err(TaggerError::InvalidTopK);
    }
    let mut scores: Vec<TermScore> =
        score_terms(foreground, background, opts.max_ngram, opts.prior_strength)?
            .into_iter()
            .filter(|s| s.count_fg >= 1)
            .collect();
    scores.sort_by(|a, b| b.zeta.total_cmp(&a.zeta).then_with(|| a.term.cmp(&b.term)));
    scores.truncate(opts.top_k);
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Ideology, Source, TextInstance};

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(
            "c",
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| TextInstance::new(i.to_string(), *t, Ideology::Liberal, Source::Real))
                .collect(),
        )
    }

    #[test]
    fn identical_corpora_score_zero_with_lexicographic_ties() {
        let c = corpus(&["b a c", "a a"]);
        let ranked = extract_distinctive_terms(&c, &c, &TermOptions::default()).unwrap();
        assert!(ranked.iter().all(|s| s.zeta == 0.0));
        let terms: Vec<_> = ranked.iter().map(|s| s.term.as_str()).collect();
        assert_eq!(terms, ["a", "b", "c"]);
    }

    #[test]
    fn background_only_terms_are_negative_and_never_ranked() {
        let fg = corpus(&["vaccine works", "vaccine mandate"]);
        let bg = corpus(&["tax cut", "border wall", "vaccine"]);
        let all = score_terms(&fg, &bg, 1, 1.0).unwrap();
        let tax = all.iter().find(|s| s.term == "tax").unwrap();
        assert!(tax.zeta < 0.0);
        let ranked = extract_distinctive_terms(
            &fg,
            &bg,
            &TermOptions {
                top_k: 100,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(ranked.iter().all(|s| s.count_fg >= 1));
        assert_eq!(ranked.len(), 3);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = corpus(&["a"]);
        let empty = corpus(&[]);
        assert!(matches!(
            score_terms(&c, &empty, 1, 1.0),
            Err(TaggerError::EmptyCorpus)
        ));
        assert!(matches!(
            score_terms(&c, &c, 4, 1.0),
            Err(TaggerError::InvalidNgram(4))
        ));
        let opts = TermOptions {
            top_k: 0,
            ..Default::default()
        };
        assert!(matches!(
            extract_distinctive_terms(&c, &c, &opts),
            Err(TaggerError::InvalidTopK)
        ));
    }

    #[test]
    fn bigrams_are_scored() {
        let fg = corpus(&["mask mandate now", "mask mandate"]);
        let bg = corpus(&["tax cut now"]);
        let opts = TermOptions {
            max_ngram: 2,
            top_k: 3,
            prior_strength: 1.0,
        };
        let ranked = extract_distinctive_terms(&fg, &bg, &opts).unwrap();
        assert!(ranked.iter().any(|s| s.term == "mask mandate"));
    }
}
