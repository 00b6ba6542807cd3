use std::io::{Read, Write};
use std::net::TcpListener;

use serde_json::json;

use super::*;
use crate::scene::{DistanceMetric, Granularity, SceneGraph};

fn record(object: &str, probability: f64, duration_s: f64) -> CandidateRecord {
    CandidateRecord {
        object: object.to_string(),
        action: "use".to_string(),
        probability,
        duration_s,
        reasoning: "nearby".to_string(),
    }
}

fn config(granularity: Granularity, width: usize) -> PredictorConfig {
    PredictorConfig { granularity, width }
}

/// Line of places 1 m apart with chairs anchored at p1 and p2 and a sink at p1.
fn line_scene() -> SceneGraph {
    let doc = json!({
        "name": "line",
        "nodes": [
            {"id": "r1", "layer": "room", "class": "kitchen", "label": "kitchen", "pos": [0, 5]},
            {"id": "p0", "layer": "place", "pos": [0, 0]},
            {"id": "p1", "layer": "place", "pos": [1, 0]},
            {"id": "p2", "layer": "place", "pos": [2, 0]},
            {"id": "chair_a", "layer": "object", "class": "chair", "pos": [1.0, 0.1]},
            {"id": "chair_b", "layer": "object", "class": "chair", "pos": [2.0, 0.1]},
            {"id": "sink_1", "layer": "object", "class": "sink", "pos": [1.0, -0.1]}
        ],
        "edges": [["p0", "p1"], ["p1", "p2"],
                  ["chair_a", "r1"], ["chair_b", "r1"], ["sink_1", "r1"]]
    })
    .to_string();
    SceneGraph::load(&doc).unwrap()
}

#[test]
fn fixture_passthrough_is_stable() {
    let past = vec![PastInteraction::new("sink_1", "wash hands", 12.0)];
    let mut fixture = FixturePredictor::new();
    fixture.insert(
        &past,
        &[],
        vec![record("chair", 0.5, 30.0), record("sink", 0.3, 10.0)],
    );
    let cfg = config(Granularity::Semantic, 6);
    let first = fixture.predict_next("scene", &past, &[], &cfg).unwrap();
    let second = fixture.predict_next("scene", &past, &[], &cfg).unwrap();
    assert_eq!(first.len(), 2);
    assert_eq!(first, second);
    assert_eq!(first[0].target, Target::Class("chair".into()));
}

#[test]
fn fixture_miss_is_an_error() {
    let fixture = FixturePredictor::new();
    let err = fixture
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap_err();
    assert!(matches!(err, PredictError::FixtureMiss { .. }));
}

#[test]
fn fixture_key_ignores_probability_changes() {
    let assumed_a = vec![InteractionCandidate {
        target: Target::Instance("chair_a".into()),
        action: "sit".into(),
        probability: 0.4,
        duration_s: 30.0,
        reasoning: String::new(),
    }];
    let mut assumed_b = assumed_a.clone();
    assumed_b[0].probability = 0.123;
    assert_eq!(
        fixture_key("v1", &[], &assumed_a),
        fixture_key("v1", &[], &assumed_b)
    );
    // But a different target changes the key.
    assumed_b[0].target = Target::Instance("chair_b".into());
    assert_ne!(
        fixture_key("v1", &[], &assumed_a),
        fixture_key("v1", &[], &assumed_b)
    );
}

#[test]
fn zero_probability_is_rejected() {
    let mut fixture = FixturePredictor::new();
    fixture.insert(&[], &[], vec![record("chair", 0.0, 30.0)]);
    let err = fixture
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap_err();
    assert!(matches!(err, PredictError::Format { .. }), "{err}");
}

#[test]
fn overgeneration_truncates_by_probability() {
    let mut fixture = FixturePredictor::new();
    let response: Vec<CandidateRecord> = (0..9)
        .map(|i| record(&format!("class_{i}"), 0.1 * (i + 1) as f64, 10.0))
        .collect();
    fixture.insert(&[], &[], response);
    let out = fixture
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap();
    assert_eq!(out.len(), 6);
    assert_eq!(out[0].probability, 0.9);
    assert!(out.iter().all(|c| c.probability >= 0.4));
}

#[test]
fn ground_semantic_singleton_keeps_mass() {
    let graph = line_scene();
    let candidates = vec![InteractionCandidate {
        target: Target::Class("sink".into()),
        action: "wash hands".into(),
        probability: 0.6,
        duration_s: 12.0,
        reasoning: "r".into(),
    }];
    let grounded = ground_semantic(
        &candidates,
        &graph,
        &"p0".into(),
        3,
        DistanceMetric::Geodesic,
    )
    .unwrap();
    assert_eq!(grounded.candidates.len(), 1);
    assert_eq!(grounded.candidates[0].probability, 0.6);
    assert_eq!(
        grounded.candidates[0].target,
        Target::Instance("sink_1".into())
    );
}

#[test]
fn ground_semantic_inverse_distance_weights() {
    let graph = line_scene();
    let candidates = vec![InteractionCandidate {
        target: Target::Class("chair".into()),
        action: "sit".into(),
        probability: 0.6,
        duration_s: 30.0,
        reasoning: "r".into(),
    }];
    // chair_a is 1 m, chair_b 2 m geodesic from p0.
    let grounded = ground_semantic(
        &candidates,
        &graph,
        &"p0".into(),
        3,
        DistanceMetric::Geodesic,
    )
    .unwrap();
    assert_eq!(grounded.candidates.len(), 2);
    assert!((grounded.candidates[0].probability - 0.4).abs() < 1e-12);
    assert!((grounded.candidates[1].probability - 0.2).abs() < 1e-12);
    let total: f64 = grounded.candidates.iter().map(|c| c.probability).sum();
    assert!((total - 0.6).abs() < 1e-12);
}

#[test]
fn ground_semantic_clamps_zero_distance() {
    let graph = line_scene();
    let candidates = vec![InteractionCandidate {
        target: Target::Class("chair".into()),
        action: "sit".into(),
        probability: 0.6,
        duration_s: 30.0,
        reasoning: String::new(),
    }];
    // From p1 chair_a is at distance 0 (clamped to 0.5) and chair_b at 1.
    let grounded = ground_semantic(
        &candidates,
        &graph,
        &"p1".into(),
        3,
        DistanceMetric::Geodesic,
    )
    .unwrap();
    assert_eq!(grounded.candidates.len(), 2);
    assert!((grounded.candidates[0].probability - 0.4).abs() < 1e-12);
    assert!((grounded.candidates[1].probability - 0.2).abs() < 1e-12);
}

#[test]
fn ground_semantic_drops_absent_class_with_warning() {
    let graph = line_scene();
    let candidates = vec![InteractionCandidate {
        target: Target::Class("piano".into()),
        action: "play".into(),
        probability: 0.9,
        duration_s: 60.0,
        reasoning: String::new(),
    }];
    let grounded = ground_semantic(
        &candidates,
        &graph,
        &"p0".into(),
        3,
        DistanceMetric::Geodesic,
    )
    .unwrap();
    assert!(grounded.candidates.is_empty());
    assert_eq!(grounded.warnings.len(), 1);
    assert!(grounded.warnings[0].contains("piano"));
}

#[test]
fn prompt_mentions_missing_past() {
    let cfg = config(Granularity::Semantic, 6);
    let prompt = build_prompt("scene text", &[], &[], &cfg);
    assert!(prompt.contains("no previous interactions observed"));
    let with_past = build_prompt(
        "scene text",
        &[PastInteraction::new("sink_1", "wash hands", 12.0)],
        &[],
        &cfg,
    );
    assert!(!with_past.contains("no previous interactions observed"));
    assert!(with_past.contains("sink_1: wash hands (12.0 s)"));
}

#[test]
fn parse_strips_code_fences() {
    let raw = "Here you go:\n```json\n{\"predictions\": [{\"object\": \"sink\", \"action\": \"wash\", \"probability\": 0.5, \"duration_s\": 10, \"reasoning\": \"\"}]}\n```\nHope that helps!";
    let parsed = parse_response(raw, Granularity::Semantic).unwrap();
    assert_eq!(parsed.len(), 1);
    assert_eq!(parsed[0].target, Target::Class("sink".into()));
}

#[test]
fn parse_accepts_bare_array_with_commentary() {
    let raw = "[{\"object\": \"sink\", \"action\": \"wash\", \"probability\": 0.5, \"duration_s\": 10, \"reasoning\": \"\"}] trailing words";
    assert_eq!(parse_response(raw, Granularity::Semantic).unwrap().len(), 1);
}

#[test]
fn parse_rejects_non_numeric_duration() {
    let raw = r#"{"predictions": [{"object": "sink", "action": "wash", "probability": 0.5, "duration_s": "about 30", "reasoning": ""}]}"#;
    let err = parse_response(raw, Granularity::Semantic).unwrap_err();
    assert!(matches!(err, PredictError::Format { .. }));
}

#[test]
fn parse_serialize_roundtrip() {
    let candidates = vec![
        InteractionCandidate {
            target: Target::Class("chair".into()),
            action: "sit".into(),
            probability: 0.52,
            duration_s: 33.5,
            reasoning: "tired".into(),
        },
        InteractionCandidate {
            target: Target::Class("sink".into()),
            action: "wash".into(),
            probability: 0.11,
            duration_s: 8.0,
            reasoning: String::new(),
        },
    ];
    let records: Vec<CandidateRecord> =
        candidates.iter().map(CandidateRecord::from_candidate).collect();
    let raw = serde_json::to_string(&serde_json::json!({ "predictions": records })).unwrap();
    let parsed = parse_response(&raw, Granularity::Semantic).unwrap();
    assert_eq!(parsed, candidates);
}

#[test]
fn sequence_predictor_steps_through_script() {
    let script = vec![
        InteractionCandidate {
            target: Target::Instance("sink_1".into()),
            action: "wash".into(),
            probability: 1.0,
            duration_s: 10.0,
            reasoning: String::new(),
        },
        InteractionCandidate {
            target: Target::Instance("chair_a".into()),
            action: "sit".into(),
            probability: 1.0,
            duration_s: 20.0,
            reasoning: String::new(),
        },
    ];
    let oracle = SequencePredictor::new(script.clone());
    let cfg = config(Granularity::Instance, 6);
    let first = oracle.predict_next("s", &[], &[], &cfg).unwrap();
    assert_eq!(first, vec![script[0].clone()]);
    let second = oracle.predict_next("s", &[], &script[..1], &cfg).unwrap();
    assert_eq!(second, vec![script[1].clone()]);
    assert!(oracle.predict_next("s", &[], &script, &cfg).is_err());
}

// ---------------------------------------------------------------------
// Wire client against an in-process HTTP mock.

/// Serve canned HTTP responses; `bodies[i]` answers the i-th request.
/// A body of `None` answers with a 500.
fn spawn_mock(bodies: Vec<Option<String>>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        let mut seen = Vec::new();
        for body in bodies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).to_string();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        break text;
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            seen.push(request);
            let reply = match &body {
                Some(content) => format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    content.len(),
                    content
                ),
                None => "HTTP/1.1 500 Internal Server Error\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string(),
            };
            stream.write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (format!("http://{addr}/v1/chat/completions"), handle)
}

fn completion_envelope(content: &str) -> String {
    serde_json::to_string(&json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    }))
    .unwrap()
}

fn wire_client(endpoint: String) -> WireClient {
    WireClient::with_api_key(
        WireConfig {
            endpoint,
            model: "test-model".into(),
            timeout_s: 5.0,
            max_retries: 1,
            max_in_flight: 2,
        },
        "test-key".into(),
    )
    .unwrap()
}

#[test]
fn wire_round_trip() {
    let content = r#"{"predictions": [{"object": "sink", "action": "wash", "probability": 0.7, "duration_s": 12, "reasoning": "routine"}]}"#;
    let (endpoint, handle) = spawn_mock(vec![Some(completion_envelope(content))]);
    let client = wire_client(endpoint);
    let out = client
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].probability, 0.7);
    let requests = handle.join().unwrap();
    assert!(requests[0].contains("Bearer test-key"));
    assert!(requests[0].contains("test-model"));
}

#[test]
fn wire_retries_transport_failures() {
    let content = r#"{"predictions": [{"object": "sink", "action": "wash", "probability": 0.7, "duration_s": 12, "reasoning": ""}]}"#;
    let (endpoint, handle) = spawn_mock(vec![None, Some(completion_envelope(content))]);
    let client = wire_client(endpoint);
    let out = client
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap();
    assert_eq!(out.len(), 1);
    handle.join().unwrap();
}

#[test]
fn wire_repairs_malformed_reply_once() {
    let good = r#"{"predictions": [{"object": "sink", "action": "wash", "probability": 0.7, "duration_s": 12, "reasoning": ""}]}"#;
    let (endpoint, handle) = spawn_mock(vec![
        Some(completion_envelope("sorry, no JSON today")),
        Some(completion_envelope(good)),
    ]);
    let client = wire_client(endpoint);
    let out = client
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap();
    assert_eq!(out.len(), 1);
    let requests = handle.join().unwrap();
    assert_eq!(requests.len(), 2);
    assert!(requests[1].contains("could not be parsed"));
}

#[test]
fn wire_fails_hard_after_failed_repair() {
    let (endpoint, handle) = spawn_mock(vec![
        Some(completion_envelope("garbage")),
        Some(completion_envelope("more garbage")),
    ]);
    let client = wire_client(endpoint);
    let err = client
        .predict_next("scene", &[], &[], &config(Granularity::Semantic, 6))
        .unwrap_err();
    assert!(matches!(err, PredictError::Format { .. }));
    handle.join().unwrap();
}
