use std::sync::{mpsc, Arc};

use axum::body::Body;
use axum::http::{Request as HttpRequest, StatusCode};
use http_body_util::BodyExt;
use rhumo_client::{Client, ClientError};
use rhumo_core::api::{CreateSessionRequest, ErrorBody, PairLabel, Phase, StatusSnapshot, WorkloadSource};
use rhumo_core::oracle::{OracleConfig, SimulatedOracle};
use rhumo_core::selection::{drive, StepRecord};
use rhumo_core::synth::{self, Profile, SynthSpec};
use rhumo_core::{Engine, EngineConfig, QualityRequirement};
use rhumo_service::{router, AppState};
use tower::ServiceExt;

fn spec() -> SynthSpec {
    SynthSpec::new(Profile::Ab, 0.1, 7)
}

fn request(config: EngineConfig) -> CreateSessionRequest {
    CreateSessionRequest {
        source: WorkloadSource::Synthetic { spec: spec() },
        requirement: QualityRequirement::new(0.9, 0.9, 0.9).unwrap(),
        config,
    }
}

fn small_batches() -> EngineConfig {
    EngineConfig {
        max_batch: Some(25),
        ..EngineConfig::default()
    }
}

async fn start() -> Client {
    let (tx, rx) = mpsc::channel();
    tokio::spawn(rhumo_service::serve("127.0.0.1:0".parse().unwrap(), move |addr| {
        tx.send(addr).unwrap();
    }));
    let addr = tokio::task::spawn_blocking(move || rx.recv().unwrap()).await.unwrap();
    Client::new(format!("http://{addr}"))
}

fn oracle() -> SimulatedOracle {
    let (workload, truth) = synth::build(&spec()).unwrap();
    SimulatedOracle::new(
        workload.pairs.iter().zip(&truth.equivalent).map(|(p, &t)| (p.pair_id, t)),
        OracleConfig::default(),
    )
    .unwrap()
}

fn api_code(err: ClientError) -> (u16, String) {
    match err {
        ClientError::Api { status, body } => (status, body.code),
        other => panic!("expected an API error, got {other}"),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a == b) || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn same_record(a: &StepRecord, b: &StepRecord) -> bool {
    let opt = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        // non-finite values travel as null
        (Some(x), None) | (None, Some(x)) => !x.is_finite(),
    };
    a.step == b.step
        && a.kind == b.kind
        && a.side == b.side
        && a.batch_size == b.batch_size
        && a.candidate_remaining == b.candidate_remaining
        && opt(a.mep, b.mep)
        && opt(a.remaining_ep, b.remaining_ep)
        && close(a.precision_lower, b.precision_lower)
        && close(a.recall_lower, b.recall_lower)
        && a.sampling_cost == b.sampling_cost
        && a.dh_cost == b.dh_cost
        && a.iterations == b.iterations
        && a.expanded == b.expanded
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn api_run_matches_in_process_run() {
    let client = start().await;
    let created = client.create_session(&request(small_batches())).await.unwrap();
    assert_eq!(created.status.phase, Phase::Sampling);
    let outcome = client.drive(&created.session_id, &mut oracle()).await.unwrap();
    let remote_log = client.run_log(&created.session_id).await.unwrap();

    let local = tokio::task::spawn_blocking(|| {
        let (workload, _) = synth::build(&spec()).unwrap();
        let req = request(small_batches());
        let mut engine = Engine::new(Arc::new(workload), req.requirement, req.config, None).unwrap();
        drive(&mut engine, &mut oracle()).unwrap();
        (engine.snapshot(), engine.log().to_vec())
    })
    .await
    .unwrap();

    assert!(outcome.status.done);
    assert_eq!(outcome.status.success, local.0.success);
    assert_eq!(outcome.status.human_cost, local.0.human_cost);
    assert_eq!(outcome.status.interactions, local.0.interactions);
    assert!(!remote_log.is_empty());
    assert_eq!(remote_log.len(), local.1.len());
    for (r, l) in remote_log.iter().zip(&local.1) {
        assert!(same_record(r, l), "log diverged:\n{r:?}\n{l:?}");
    }
    assert_eq!(outcome.history.len(), remote_log.len());
}

fn monotone(prev: &StatusSnapshot, next: &StatusSnapshot) -> bool {
    next.human_cost >= prev.human_cost
        && next.sampling_cost >= prev.sampling_cost
        && next.dh_cost >= prev.dh_cost
        && next.iterations >= prev.iterations
        && next.interactions >= prev.interactions
        && next.remaining_minus <= prev.remaining_minus
        && next.remaining_plus <= prev.remaining_plus
        && (!prev.done || next.done)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn status_is_monotone_and_done_batch_is_empty() {
    let client = start().await;
    let id = client.create_session(&request(small_batches())).await.unwrap().session_id;
    let outcome = client.drive(&id, &mut oracle()).await.unwrap();
    for w in outcome.history.windows(2) {
        assert!(monotone(&w[0], &w[1]), "{:?}\n{:?}", w[0], w[1]);
    }
    let status = client.status(&id).await.unwrap();
    assert_eq!(status, outcome.status);
    assert_eq!(status.phase, Phase::Done);
    assert_eq!(status.human_cost, status.sampling_cost + status.dh_cost);

    let again = client.next_batch(&id).await.unwrap();
    assert!(again.done && again.pairs.is_empty());
    let err = client.submit_labels(&id, vec![]).await.unwrap_err();
    assert_eq!(api_code(err), (409, "no_pending_batch".to_string()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn protocol_errors_carry_codes_and_leave_state_unchanged() {
    let client = start().await;
    let a = client.create_session(&request(small_batches())).await.unwrap().session_id;
    let b = client.create_session(&request(small_batches())).await.unwrap().session_id;
    assert_ne!(a, b);

    let err = client.next_batch("nope").await.unwrap_err();
    assert_eq!(api_code(err), (404, "unknown_session".to_string()));
    let err = client.status("nope").await.unwrap_err();
    assert_eq!(api_code(err), (404, "unknown_session".to_string()));

    let batch = client.next_batch(&a).await.unwrap();
    assert!(!batch.done && !batch.pairs.is_empty());
    assert!(batch.pairs.iter().all(|p| !p.left.id.is_empty() && !p.right.id.is_empty()));
    let err = client.next_batch(&a).await.unwrap_err();
    assert_eq!(api_code(err), (409, "batch_pending".to_string()));

    let before = client.status(&a).await.unwrap();
    let partial: Vec<PairLabel> = batch.pairs[1..]
        .iter()
        .map(|p| PairLabel { pair_id: p.pair_id, matching: false })
        .collect();
    let err = client.submit_labels(&a, partial).await.unwrap_err();
    assert_eq!(api_code(err), (422, "label_mismatch".to_string()));
    assert_eq!(client.status(&a).await.unwrap(), before);

    // the other session is untouched by all of the above
    let other = client.status(&b).await.unwrap();
    assert_eq!(other.human_cost, 0);
    assert_eq!(other.pending, 0);
}

async fn raw(method: &str, uri: &str, body: &str) -> (StatusCode, ErrorBody) {
    let req = HttpRequest::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router(AppState::new()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn malformed_requests_are_rejected_with_codes() {
    let (status, body) = raw("POST", "/sessions", "{not json").await;
    assert_eq!((status, body.code.as_str()), (StatusCode::BAD_REQUEST, "invalid_request"));

    let bad_req = r#"{"source":{"kind":"synthetic","spec":{"profile":"ab","scale":0.1}},
        "requirement":{"alpha":1.5,"beta":0.9,"theta":0.9}}"#;
    let (status, body) = raw("POST", "/sessions", bad_req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(!body.code.is_empty() && !body.message.is_empty());

    let missing = r#"{"source":{"kind":"dataset","spec":{"left":"/no/such/left.csv","right":"/no/such/right.csv",
        "ground_truth":"/no/such/truth.csv","threshold":0.2,"attributes":[{"column":"title","kind":"jaro_winkler"}]}},
        "requirement":{"alpha":0.9,"beta":0.9,"theta":0.9}}"#;
    let (status, body) = raw("POST", "/sessions", missing).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body:?}");

    let (status, body) = raw("POST", "/sessions/s1/labels", r#"{"labels":[]}"#).await;
    assert_eq!((status, body.code.as_str()), (StatusCode::NOT_FOUND, "unknown_session"));
}
