//! Evaluates a small in-memory study (one topic, two methods, stance only)
//! and renders the divergence and tendency tables.
//!
//!     cargo run --example report_tables

use partisan_lens::annotate::{AnnotationRecord, AnnotationStore};
use partisan_lens::report::render_all_tables;
use partisan_lens::study::{evaluate, AnnotatedCorpus, DatasetData, EvalOptions, MethodData};
use partisan_lens::{Corpus, FeatureKind, Ideology, Source, TextInstance};

/// One instance per stance label, all on the `masking` topic.
fn annotated(prefix: &str, source: Source, lib: &[&str], con: &[&str]) -> AnnotatedCorpus {
    let mut instances = Vec::new();
    let mut store = AnnotationStore::new();
    for (ideology, labels) in [(Ideology::Liberal, lib), (Ideology::Conservative, con)] {
        for (i, label) in labels.iter().enumerate() {
            let id = format!("{prefix}-{}-{i}", ideology.short());
            instances.push(TextInstance::new(&id, "…", ideology, source).with_topic("masking"));
            store
                .insert(AnnotationRecord::new(
                    id,
                    FeatureKind::Stance,
                    [*label],
                    "llm:demo",
                ))
                .unwrap();
        }
    }
    AnnotatedCorpus {
        corpus: Corpus::new(prefix, instances),
        annotations: store,
    }
}

fn main() {
    let real = annotated(
        "real",
        Source::Real,
        &["positive", "positive", "neutral", "negative"],
        &["negative", "negative", "negative", "neutral"],
    );
    let pretrained = annotated(
        "pre",
        Source::Generated,
        &["neutral", "neutral", "positive", "neutral"],
        &["neutral", "negative", "neutral", "neutral"],
    );
    let finetuned = annotated(
        "ft",
        Source::Generated,
        &["positive", "positive", "positive", "negative"],
        &["negative", "negative", "neutral", "negative"],
    );

    let study = DatasetData {
        name: "COVID-19".into(),
        topics: vec![],
        real,
        methods: vec![
            MethodData {
                name: "pretrained".into(),
                generated: pretrained,
            },
            MethodData {
                name: "finetuned".into(),
                generated: finetuned,
            },
        ],
    };
    let opts = EvalOptions {
        features: vec![FeatureKind::Stance],
        ..Default::default()
    };
    let evaluation = evaluate(&[study], &opts).unwrap();
    for table in render_all_tables(&evaluation.results).unwrap() {
        println!("{}", table.to_markdown());
    }
}
