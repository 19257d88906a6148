mod common;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use common::{MockServer, Reply};
use socbal::dynamics::build_context;
use socbal::gateway::sample_context;
use socbal::{
    AgentBackend, ChatClient, EndpointConfig, Error, InteractionKind, InteractionMatrix, LlmAgent, ParsedAnswer,
    PromptDialect, Sign, UpdateMechanism,
};

fn config(url: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: url.to_string(),
        model: "test-model".into(),
        timeout_secs: 2.0,
        retries: 3,
        backoff_ms: 5,
        api_key_env: "SOCBAL_TEST_UNSET_KEY".into(),
        ..EndpointConfig::default()
    }
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = MockServer::start(|n, _| if n < 2 { Reply::status(500) } else { Reply::ok("Positive.") });
    let client = ChatClient::new(config(&server.url));
    assert_eq!(client.chat_complete("hi").unwrap(), "Positive.");
    assert_eq!(server.count(), 3);
}

#[test]
fn rate_limits_are_retried() {
    let server = MockServer::start(|n, _| if n == 0 { Reply::status(429) } else { Reply::ok("Negative.") });
    let client = ChatClient::new(config(&server.url));
    assert_eq!(client.chat_complete("hi").unwrap(), "Negative.");
    assert_eq!(server.count(), 2);
}

#[test]
fn exhausted_budget_is_a_transport_error() {
    let server = MockServer::start(|_, _| Reply::status(503));
    let mut cfg = config(&server.url);
    cfg.retries = 2;
    let err = ChatClient::new(cfg).chat_complete("hi").unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(server.count(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| Reply::status(400));
    let err = ChatClient::new(config(&server.url)).chat_complete("hi").unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert_eq!(server.count(), 1);
}

#[test]
fn malformed_bodies_are_protocol_errors() {
    let server = MockServer::start(|_, _| Reply::raw(200, "{\"choices\": []}"));
    let err = ChatClient::new(config(&server.url)).chat_complete("hi").unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert_eq!(server.count(), 1);
}

#[test]
fn slow_server_times_out_and_retries() {
    let server = MockServer::start(|n, _| {
        if n == 0 {
            Reply::ok("late").delayed(Duration::from_millis(800))
        } else {
            Reply::ok("Positive.")
        }
    });
    let mut cfg = config(&server.url);
    cfg.timeout_secs = 0.2;
    assert_eq!(ChatClient::new(cfg).chat_complete("hi").unwrap(), "Positive.");
    assert_eq!(server.count(), 2);
}

#[test]
fn unreachable_endpoint_is_transport() {
    let mut cfg = config("http://127.0.0.1:9/v1");
    cfg.retries = 1;
    let err = ChatClient::new(cfg).chat_complete("hi").unwrap_err();
    assert!(err.is_transport(), "{err}");
}

#[test]
fn request_shape_is_single_user_message_at_zero_temperature() {
    let server = MockServer::start(|_, _| Reply::ok("Positive."));
    let ctx = sample_context(3, InteractionKind::Appraisal, UpdateMechanism::Homophily).unwrap();
    let agent = LlmAgent::new(ChatClient::new(config(&server.url)), PromptDialect::Llama);
    let d = agent.decide(&ctx).unwrap();
    assert_eq!(d.parsed, ParsedAnswer::Positive);

    let reqs = server.requests.lock().unwrap();
    let req = &reqs[0];
    assert_eq!(req.path, "/v1/chat/completions");
    let body = req.json();
    assert_eq!(body["temperature"].as_f64(), Some(0.0));
    assert_eq!(body["model"], "test-model");
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 1);
    assert_eq!(messages[0]["role"], "user");
    assert_eq!(messages[0]["content"].as_str(), d.prompt.as_deref());
    assert!(req.header("authorization").is_none());
}

#[test]
fn bearer_token_comes_from_the_environment() {
    let server = MockServer::start(|_, _| Reply::ok("Positive."));
    let mut cfg = config(&server.url);
    cfg.api_key_env = "SOCBAL_TEST_TOKEN_FOR_GATEWAY".into();
    // SAFETY: no other test reads this variable.
    unsafe { std::env::set_var(&cfg.api_key_env, "sekret") };
    ChatClient::new(cfg).chat_complete("hi").unwrap();
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs[0].header("authorization"), Some("Bearer sekret"));
}

#[test]
fn in_flight_requests_are_capped() {
    let server = MockServer::start(|_, _| Reply::ok("Positive.").delayed(Duration::from_millis(60)));
    let mut cfg = config(&server.url);
    cfg.max_in_flight = 2;
    let client = Arc::new(ChatClient::new(cfg));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let c = client.clone();
            thread::spawn(move || c.chat_complete("hi").unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.count(), 8);
    assert!(server.in_flight_peak.load(std::sync::atomic::Ordering::SeqCst) <= 2);
}

#[test]
fn mistral_replies_are_parsed_by_header() {
    let server = MockServer::start(|_, _| {
        Reply::ok("New opinion: negative.\n\nJustification for answer: Individual 2 dislikes me, so I side against Individual 1.")
    });
    let m = InteractionMatrix::uniform(3, Sign::Positive).unwrap();
    let ctx = build_context(&m, 0, 1, InteractionKind::Opinion, UpdateMechanism::Influence).unwrap();
    let agent = LlmAgent::new(ChatClient::new(config(&server.url)), PromptDialect::Mistral);
    let d = agent.decide(&ctx).unwrap();
    assert_eq!(d.parsed, ParsedAnswer::Negative);
    assert!(d.prompt.unwrap().contains("A \"neutral\" opinion is not allowed."));
    assert_eq!(agent.label(), "test-model");
}
