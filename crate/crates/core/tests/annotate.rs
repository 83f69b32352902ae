use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use partisan_lens::annotate::mock::{MockChatServer, MockReply};
use partisan_lens::annotate::{
    annotate_stances, load_annotations, AnnotationRecord, AnnotationSink, AnnotationStore,
    ChatClient, EndpointConfig, STANCE_INSTRUCTION,
};
use partisan_lens::{ClassRegistry, Corpus, FeatureKind, Ideology, Source, TextInstance};
use serde_json::Value;

fn contract() -> Value {
    serde_json::from_str(include_str!("fixtures/mock_contract.json")).unwrap()
}

fn endpoint(server: &MockChatServer) -> EndpointConfig {
    EndpointConfig {
        url: server.url().to_string(),
        token: Some("test-token".into()),
        backoff_base_ms: 1,
        max_backoff_ms: 5,
        ..Default::default()
    }
}

fn corpus(n: usize) -> Corpus {
    Corpus::new(
        "c",
        (0..n)
            .map(|i| {
                TextInstance::new(
                    format!("i{i}"),
                    format!("text {i}"),
                    Ideology::Liberal,
                    Source::Real,
                )
                .with_topic("masking")
            })
            .collect(),
    )
}

fn targets() -> BTreeMap<String, String> {
    BTreeMap::from([("masking".to_string(), "mask mandates".to_string())])
}

#[test]
fn instruction_matches_contract() {
    assert_eq!(
        contract()["instruction"].as_str().unwrap(),
        STANCE_INSTRUCTION
    );
}

#[test]
fn wire_format_matches_contract() {
    let c = contract();
    let cases = c["cases"].as_array().unwrap().clone();
    let replies: Vec<(String, String)> = cases
        .iter()
        .map(|k| {
            (
                k["prompt"].as_str().unwrap().to_string(),
                k["reply"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    let server = MockChatServer::start(move |req, _| {
        let prompt = req.prompt().unwrap_or_default();
        let reply = replies
            .iter()
            .find(|(p, _)| p == prompt)
            .map(|(_, r)| r.clone());
        reply
            .map(MockReply::content)
            .unwrap_or_else(|| MockReply::error(400))
    })
    .unwrap();

    let mut targets = BTreeMap::new();
    let instances: Vec<TextInstance> = cases
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let topic = format!("t{i}");
            targets.insert(topic.clone(), k["target"].as_str().unwrap().to_string());
            TextInstance::new(
                format!("k{i}"),
                k["statement"].as_str().unwrap(),
                Ideology::Liberal,
                Source::Real,
            )
            .with_topic(topic)
        })
        .collect();
    let corpus = Corpus::new("contract", instances);
    let cfg = EndpointConfig {
        max_inflight: 1,
        ..endpoint(&server)
    };
    let client = ChatClient::new(cfg).unwrap();
    let run = annotate_stances(&corpus, &targets, &AnnotationStore::new(), &client, None).unwrap();

    assert!(run.skipped.is_empty(), "{:?}", run.skipped);
    assert_eq!(run.requests, cases.len());
    let requests = server.requests();
    for (i, k) in cases.iter().enumerate() {
        assert_eq!(requests[i].body, k["request"], "request body for case {i}");
        assert_eq!(requests[i].prompt().unwrap(), k["prompt"].as_str().unwrap());
        assert_eq!(
            requests[i].authorization.as_deref(),
            Some("Bearer test-token")
        );
        assert_eq!(
            run.records[i].labels,
            vec![k["stance"].as_str().unwrap().to_string()]
        );
        assert_eq!(run.records[i].annotator, "llm:gpt-3.5-turbo");
    }
}

#[test]
fn every_instance_gets_one_record() {
    let server = MockChatServer::always("neutral").unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let run = annotate_stances(
        &corpus(5),
        &targets(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap();
    assert_eq!(run.records.len(), 5);
    assert_eq!(run.requests, 5);
    assert!(run.records.iter().all(|r| r.labels == ["neutral"]));
    let ids: Vec<&str> = run.records.iter().map(|r| r.instance_id.as_str()).collect();
    assert_eq!(ids, ["i0", "i1", "i2", "i3", "i4"]);
}

#[test]
fn transient_failures_are_retried() {
    let server = MockChatServer::sequence(
        vec![MockReply::error(500), MockReply::error(503)],
        MockReply::content("positive"),
    )
    .unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let run = annotate_stances(
        &corpus(1),
        &targets(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap();
    assert_eq!(server.request_count(), 3);
    assert_eq!(run.requests, 3);
    assert_eq!(run.records[0].labels, ["positive"]);
}

#[test]
fn unparseable_replies_exhaust_the_budget_and_skip() {
    let server = MockChatServer::always("it depends").unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let run = annotate_stances(
        &corpus(1),
        &targets(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap();
    assert!(run.records.is_empty());
    assert_eq!(run.skipped.len(), 1);
    assert_eq!(run.skipped[0].attempts, 4);
    assert_eq!(server.request_count(), 4);
    assert!(run.skipped[0].reason.contains("it depends"));
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockChatServer::start(|_, _| MockReply::error(401)).unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let run = annotate_stances(
        &corpus(1),
        &targets(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap();
    assert_eq!(server.request_count(), 1);
    assert_eq!(run.skipped[0].attempts, 1);
}

#[test]
fn rate_limit_honours_retry_after() {
    let server = MockChatServer::sequence(
        vec![MockReply::rate_limited(1)],
        MockReply::content("negative"),
    )
    .unwrap();
    let cfg = EndpointConfig {
        max_backoff_ms: 5_000,
        ..endpoint(&server)
    };
    let client = ChatClient::new(cfg).unwrap();
    let start = Instant::now();
    let run = annotate_stances(
        &corpus(1),
        &targets(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap();
    assert!(start.elapsed() >= Duration::from_millis(950));
    assert_eq!(run.records[0].labels, ["negative"]);
    assert_eq!(server.request_count(), 2);
}

#[test]
fn resume_only_requests_missing_instances() {
    let server = MockChatServer::always("neutral").unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let mut existing = AnnotationStore::new();
    for id in ["i0", "i2", "i4"] {
        existing
            .insert(AnnotationRecord::new(
                id,
                FeatureKind::Stance,
                ["positive"],
                "llm:gpt-3.5-turbo",
            ))
            .unwrap();
    }
    let run = annotate_stances(&corpus(5), &targets(), &existing, &client, None).unwrap();
    assert_eq!(server.request_count(), 2);
    let ids: Vec<&str> = run.records.iter().map(|r| r.instance_id.as_str()).collect();
    assert_eq!(ids, ["i1", "i3"]);
}

#[test]
fn other_annotators_do_not_count_as_done() {
    let server = MockChatServer::always("neutral").unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let mut existing = AnnotationStore::new();
    existing
        .insert(AnnotationRecord::new(
            "i0",
            FeatureKind::Stance,
            ["positive"],
            "human",
        ))
        .unwrap();
    annotate_stances(&corpus(1), &targets(), &existing, &client, None).unwrap();
    assert_eq!(server.request_count(), 1);
}

#[test]
fn rerun_over_the_sink_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stance.jsonl");
    let registry = ClassRegistry::default();
    let server = MockChatServer::always("positive").unwrap();
    let cfg = EndpointConfig {
        max_inflight: 3,
        ..endpoint(&server)
    };
    let client = ChatClient::new(cfg).unwrap();
    let corpus = corpus(12);

    let sink = AnnotationSink::open(&path).unwrap();
    annotate_stances(
        &corpus,
        &targets(),
        &AnnotationStore::new(),
        &client,
        Some(&sink),
    )
    .unwrap();
    drop(sink);
    let first = load_annotations(&path, &registry).unwrap();
    assert_eq!(first.len(), 12);

    let sink = AnnotationSink::open(&path).unwrap();
    let run = annotate_stances(&corpus, &targets(), &first, &client, Some(&sink)).unwrap();
    assert_eq!(run.requests, 0);
    assert_eq!(server.request_count(), 12);
    let second = load_annotations(&path, &registry).unwrap();
    assert_eq!(
        first.iter().collect::<Vec<_>>(),
        second.iter().collect::<Vec<_>>()
    );
}

#[test]
fn concurrent_results_keep_corpus_order() {
    let server = MockChatServer::start(|req, _| {
        let prompt = req.prompt().unwrap_or_default();
        let n: usize = prompt
            .split("text ")
            .nth(1)
            .and_then(|s| s.split('\n').next())
            .and_then(|s| s.parse().ok())
            .unwrap();
        std::thread::sleep(Duration::from_millis(((n * 7) % 5) as u64));
        MockReply::content(["negative", "neutral", "positive"][n % 3])
    })
    .unwrap();
    let cfg = EndpointConfig {
        max_inflight: 8,
        ..endpoint(&server)
    };
    let client = ChatClient::new(cfg).unwrap();
    let run = annotate_stances(
        &corpus(30),
        &targets(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap();
    for (i, r) in run.records.iter().enumerate() {
        assert_eq!(r.instance_id, format!("i{i}"));
        assert_eq!(r.labels, [["negative", "neutral", "positive"][i % 3]]);
    }
}

#[test]
fn missing_target_is_rejected_before_any_request() {
    let server = MockChatServer::always("neutral").unwrap();
    let client = ChatClient::new(endpoint(&server)).unwrap();
    let err = annotate_stances(
        &corpus(2),
        &BTreeMap::new(),
        &AnnotationStore::new(),
        &client,
        None,
    )
    .unwrap_err();
    assert!(err.to_string().contains("i0"));
    assert_eq!(server.request_count(), 0);
}
