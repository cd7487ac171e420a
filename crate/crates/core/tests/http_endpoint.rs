use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use instruct_curation::corpus::TaskKind;
use instruct_curation::fewshot::{
    complete, evaluate_task, CompletionClient, EndpointConfig, EndpointError, EvalOptions,
    HttpTransport, TransportError,
};
use instruct_curation::corpus::parse_ni_task;
use instruct_curation::testing::{synthetic, MockServer};

fn config(url: String) -> EndpointConfig {
    EndpointConfig {
        base_url: url,
        model: Some("local-model".into()),
        retry_backoff_ms: 1,
        timeout_secs: 5,
        ..EndpointConfig::default()
    }
}

#[test]
fn request_body_and_post_processing() {
    let server = MockServer::constant("  forty two\n\nInput: next").unwrap();
    let got = complete("Question?\nOutput:", &config(server.url())).unwrap();
    assert_eq!(got.text, "forty two");
    assert_eq!(got.attempts, 1);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].prompt, "Question?\nOutput:");
    assert_eq!(reqs[0].model.as_deref(), Some("local-model"));
    assert_eq!(reqs[0].max_tokens, 128);
    assert_eq!(reqs[0].temperature, 0.0);
    assert_eq!(reqs[0].stop, vec!["\n\n".to_string()]);
}

#[test]
fn transient_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let server = MockServer::start(move |_| {
        if c.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, "{}".into())
        } else {
            (200, r#"{"choices":[{"text":"ok"}]}"#.into())
        }
    })
    .unwrap();
    let got = complete("p", &config(server.url())).unwrap();
    assert_eq!(got.text, "ok");
    assert_eq!(got.attempts, 3);
}

#[test]
fn retries_are_bounded() {
    let server = MockServer::start(|_| (500, "{}".into())).unwrap();
    let mut cfg = config(server.url());
    cfg.retries = 2;
    let err = complete("p", &cfg).unwrap_err();
    assert_eq!(err, EndpointError::Exhausted { attempts: 3, last: TransportError::Status(500) });
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_| (400, "{}".into())).unwrap();
    let err = complete("p", &config(server.url())).unwrap_err();
    assert!(matches!(err, EndpointError::Fatal { attempts: 1, error: TransportError::Status(400) }));
}

#[test]
fn malformed_body_is_a_protocol_error() {
    let server = MockServer::start(|_| (200, "not json".into())).unwrap();
    let err = complete("p", &config(server.url())).unwrap_err();
    assert!(matches!(err, EndpointError::Fatal { error: TransportError::Protocol(_), .. }));
}

#[test]
fn unreachable_endpoint_is_reported() {
    let url = {
        let server = MockServer::constant("x").unwrap();
        server.url()
    };
    let mut cfg = config(url);
    cfg.retries = 1;
    let err = complete("p", &cfg).unwrap_err();
    assert!(matches!(err, EndpointError::Exhausted { attempts: 2, last: TransportError::Connect(_) }));
}

#[test]
fn evaluation_over_http_matches_in_process() {
    let tmp = tempfile::tempdir().unwrap();
    synthetic::write_corpus(tmp.path(), 0, 1, 40).unwrap();
    let task = parse_ni_task(&tmp.path().join(format!("{}.json", synthetic::gen_task_id(500)))).unwrap();
    let opts = EvalOptions { max_instances: 25, seed: 9, ..EvalOptions::default() };

    let server = MockServer::start(|req| {
        let body = serde_json::json!({"choices": [{"text": synthetic::respond(&req.prompt)}]});
        (200, body.to_string())
    })
    .unwrap();
    let cfg = EndpointConfig { max_in_flight: 4, ..config(server.url()) };
    let http = CompletionClient::new(HttpTransport::new(&cfg).unwrap(), cfg.clone());
    let local = CompletionClient::new(synthetic::SyntheticTransport, cfg);

    let a = evaluate_task(&task, TaskKind::Generation, &http, &opts).unwrap();
    let b = evaluate_task(&task, TaskKind::Generation, &local, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_evaluated, 25);
    assert_eq!(server.requests().len(), 25);
}
