//! Distinctive terms of an issue corpus against a background corpus, turned
//! into a tagging lexicon.
//!
//!     cargo run --example distinctive_terms

use partisan_lens::issue_tagger::{extract_distinctive_terms, IssueLexicon, TermOptions};
use partisan_lens::{Corpus, Ideology, Source, TextInstance};

fn corpus(name: &str, texts: &[&str]) -> Corpus {
    let instances = texts
        .iter()
        .enumerate()
        .map(|(i, t)| TextInstance::new(format!("{name}{i}"), *t, Ideology::Liberal, Source::Real))
        .collect();
    Corpus::new(name, instances)
}

fn main() {
    let vaccine = corpus(
        "fg",
        &[
            "Got my booster shot today, the vaccine works",
            "No vaccine mandate for my kids",
            "Vaccine side effects were mild, booster next month",
            "The mandate is about the vaccine, not the virus",
        ],
    );
    let background = corpus(
        "bg",
        &[
            "Tax cuts for the middle class now",
            "The border wall is a waste of money",
            "Great game last night",
            "Congress passed the budget today",
        ],
    );

    let opts = TermOptions {
        max_ngram: 2,
        top_k: 5,
        ..Default::default()
    };
    let top = extract_distinctive_terms(&vaccine, &background, &opts).unwrap();
    for s in &top {
        println!(
            "{:>7.3}  {:<16} fg={} bg={}",
            s.zeta, s.term, s.count_fg, s.count_bg
        );
    }

    let lexicon = IssueLexicon::from_scores("vaccine", &top).unwrap();
    println!("\n{}", serde_json::to_string_pretty(&lexicon).unwrap());
}
