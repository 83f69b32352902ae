//! Stance annotation against a chat-completions endpoint. A local mock
//! server stands in for the real one and fails the first request to show
//! the retry path.
//!
//!     cargo run --example stance_annotation

use std::collections::BTreeMap;

use partisan_lens::annotate::mock::{MockChatServer, MockReply};
use partisan_lens::annotate::{annotate_stances, AnnotationStore, ChatClient, EndpointConfig};
use partisan_lens::{Corpus, Ideology, Source, TextInstance};

fn main() {
    let server = MockChatServer::start(|req, index| {
        if index == 0 {
            return MockReply::error(503);
        }
        let prompt = req.prompt().unwrap_or_default().to_lowercase();
        MockReply::content(if prompt.contains("tyranny") {
            "Negative"
        } else {
            "positive."
        })
    })
    .unwrap();

    let corpus = Corpus::new(
        "tweets",
        vec![
            TextInstance::new("a", "Masks save lives", Ideology::Liberal, Source::Real)
                .with_topic("masking"),
            TextInstance::new(
                "b",
                "Mask mandates are tyranny",
                Ideology::Conservative,
                Source::Real,
            )
            .with_topic("masking"),
        ],
    );
    let targets = BTreeMap::from([("masking".to_string(), "mask mandates".to_string())]);

    let config = EndpointConfig {
        url: server.url().to_string(),
        token: std::env::var("ANNOTATOR_TOKEN").ok(),
        backoff_base_ms: 10,
        ..Default::default()
    };
    let client = ChatClient::new(config).unwrap();

    let run = annotate_stances(&corpus, &targets, &AnnotationStore::new(), &client, None).unwrap();
    for r in &run.records {
        println!("{} -> {} ({})", r.instance_id, r.labels[0], r.annotator);
    }
    println!("{} requests, {} skipped", run.requests, run.skipped.len());
    println!("\nprompt sent:\n{}", server.requests()[1].prompt().unwrap());
}
