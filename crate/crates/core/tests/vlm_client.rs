mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use scenenav::backend::BackendError;
use scenenav::explore::{explore, Budget, ExplorationConfig, Termination};
use scenenav::plan::{ConstraintSet, TaskPrompt};
use scenenav::scenegraph::{render_observation, render_ppm, SceneGraph};
use scenenav::vlmclient::mock::{MockReply, MockServer};
use scenenav::vlmclient::{
    build_deployment_prompt, build_exploration_prompt, parse_action, VlmBackend, VlmClient, VlmConfig,
};
use scenenav::world::{Action, Heading, Pose};
use serde::Deserialize;

fn client(server: &MockServer, max_retries: u32) -> VlmClient {
    VlmClient::new(VlmConfig {
        endpoint: server.url(),
        model: "test-model".into(),
        api_key: Some("secret".into()),
        timeout: Duration::from_secs(5),
        max_retries,
        backoff_base: Duration::from_millis(1),
        price_per_call_usd: 0.25,
    })
    .unwrap()
}

fn bundle() -> scenenav::vlmclient::PromptBundle {
    build_exploration_prompt(&ConstraintSet::default(), b"P6 1 1 255 abc", b"P6 1 1 255 xyz")
}

#[derive(Deserialize)]
struct Paraphrase {
    reply: String,
    action: Option<Action>,
}

#[test]
fn paraphrase_corpus_parses() {
    let text = std::fs::read_to_string(common::fixture_path("paraphrases.json")).unwrap();
    let corpus: Vec<Paraphrase> = serde_json::from_str(&text).unwrap();
    assert_eq!(corpus.len(), 20);
    for p in corpus {
        match (parse_action(&p.reply), p.action) {
            (Ok(a), Some(b)) => assert_eq!(a, b, "{:?}", p.reply),
            (Err(BackendError::UnparseableAction(_)), None) => {}
            (got, want) => panic!("{:?}: got {got:?}, want {want:?}", p.reply),
        }
    }
}

#[test]
fn transport_errors_stop_after_the_retry_budget() {
    for retries in 0..3 {
        let server = MockServer::start(vec![MockReply::Drop]).unwrap();
        let c = client(&server, retries);
        let err = c.decide(&bundle()).unwrap_err();
        assert!(matches!(err, BackendError::Transport { attempts, .. } if attempts == retries + 1));
        assert_eq!(c.attempts(), u64::from(retries + 1));
        assert_eq!(server.requests().len() as u32, retries + 1);
        assert_eq!(c.calls(), 0);
    }
}

#[test]
fn protocol_errors_are_not_retried() {
    for reply in [
        MockReply::Status(503, "busy".into()),
        MockReply::Status(200, "{not json".into()),
        MockReply::Status(200, "{}".into()),
    ] {
        let server = MockServer::start(vec![reply, MockReply::content("stop")]).unwrap();
        let c = client(&server, 3);
        assert!(matches!(c.decide(&bundle()), Err(BackendError::Protocol(_))));
        assert_eq!(c.attempts(), 1);
    }
}

#[test]
fn unparseable_reply_counts_as_a_call() {
    let server = MockServer::start(vec![MockReply::content("proceed north")]).unwrap();
    let c = client(&server, 3);
    assert!(matches!(c.decide(&bundle()), Err(BackendError::UnparseableAction(r)) if r == "proceed north"));
    assert_eq!(c.calls(), 1);
    assert_eq!(c.cost_usd(), 0.25);
}

#[test]
fn request_carries_key_model_and_images() {
    let server = MockServer::start(vec![MockReply::content("Turn right.")]).unwrap();
    let c = client(&server, 0);
    assert_eq!(c.decide(&bundle()).unwrap(), Action::TurnRight);
    let req = &server.requests()[0];
    assert_eq!(req.header("authorization"), Some("Bearer secret"));
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "test-model");
    let images: Vec<_> =
        body["messages"][1]["content"].as_array().unwrap().iter().filter(|p| p["type"] == "image").collect();
    assert_eq!(images.len(), 2);
    assert_eq!(images[0]["data_base64"], "UDYgMSAxIDI1NSBhYmM=");
}

#[test]
fn exploration_through_the_remote_backend() {
    let world = common::load("open_room");
    let server = MockServer::start(vec![
        MockReply::content("move forward"),
        MockReply::content("I'll turn left here"),
        MockReply::content("hmm"),
    ])
    .unwrap();
    let c = Arc::new(client(&server, 0));
    let mut backend = VlmBackend::new(c.clone());
    let cfg =
        ExplorationConfig { budget: Budget::MaxSteps(10), void_threshold: 1, fov_deg: 30.0, ..Default::default() };
    let r = explore(&world, common::start(&world), &mut backend, &cfg).unwrap();
    // The third reply has no action and ends exploration.
    assert_eq!(r.termination, Termination::BackendStopped);
    assert_eq!(r.steps_taken, 3);
    assert_eq!(c.calls(), 3);
    assert_eq!(r.final_pose, Pose::new(5, 4, Heading::West));
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, text: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text, "{name}");
}

#[test]
fn prompt_templates_are_stable() {
    let world = common::load("apartment");
    let start = common::start(&world);
    let graph = SceneGraph::from_world(&world, start);
    let g = render_ppm(&graph, None);
    let f = render_observation(&world.observe(start, 90.0, 12, 0), 12);
    let explore = build_exploration_prompt(&ConstraintSet::new(["do not enter bedrooms"]), &g, &f);
    check_golden("exploration_prompt.txt", &explore.transcript());
    let deploy = build_deployment_prompt(
        &ConstraintSet::default(),
        &g,
        &f,
        &TaskPrompt::new("Go to the bookshelf and then go to the fridge"),
        Some(&TaskPrompt::new("go to the bookshelf")),
    );
    check_golden("deployment_prompt.txt", &deploy.transcript());
    assert_eq!(
        deploy.transcript(),
        build_deployment_prompt(
            &ConstraintSet::default(),
            &g,
            &f,
            &TaskPrompt::new("Go to the bookshelf and then go to the fridge"),
            Some(&TaskPrompt::new("go to the bookshelf"))
        )
        .transcript()
    );
}
