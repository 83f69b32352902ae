//! Builds an ideology-conditioned instruction-tuning set: entities are found
//! with a small gazetteer, filtered by frequency, and woven into the
//! instruction for each tweet.
//!
//!     cargo run --example tuning_set

use partisan_lens::instruction_builder::{
    build_tuning_set, compute_entity_stats, write_tuning_set, EntityFilter, Gazetteer,
    IdeologyTerms, InstructionTemplates,
};
use partisan_lens::{Corpus, Ideology, Source, TextInstance};

fn main() {
    let texts = [
        ("Biden's plan helps working families", Ideology::Liberal),
        ("Proud of Biden today", Ideology::Liberal),
        ("Climate action cannot wait", Ideology::Liberal),
        ("Trump was right about the border", Ideology::Conservative),
        ("Trump rally tonight, Biden nowhere", Ideology::Conservative),
        ("Lower taxes, smaller government", Ideology::Conservative),
    ];
    let corpus = Corpus::new(
        "tweets",
        texts
            .iter()
            .enumerate()
            .map(|(i, (t, ideology))| {
                TextInstance::new(format!("tw{i}"), *t, *ideology, Source::Real)
            })
            .collect(),
    );

    let corpus = Gazetteer::new(["Biden", "Trump"]).annotate(&corpus);
    // Real corpora use min_count 100; this toy corpus keeps anything seen twice.
    let stats = compute_entity_stats(
        &corpus,
        EntityFilter {
            min_count: 2,
            ..Default::default()
        },
    );
    println!("entities kept: {:?}", stats.ranked());

    let examples = build_tuning_set(
        &corpus,
        &stats,
        &IdeologyTerms::default(),
        &InstructionTemplates::default(),
        2024,
    );
    write_tuning_set(&examples, std::io::stdout().lock()).unwrap();
}
