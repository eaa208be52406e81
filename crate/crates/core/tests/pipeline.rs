//! Pipeline-level integration: resumability, manifest guarding,
//! temperature sweeps, and the live backend against a mock endpoint.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use common::*;
use ppibench_core::chat::{
    complete, BackendError, ChatBackend, ChatRequest, CorruptionParams, LiveBackend, LiveConfig,
    ModelLimits, ReplayBackend, RetryPolicy,
};
use ppibench_core::folds::ByteHeuristic;
use ppibench_core::prompt::PromptSetting;
use ppibench_core::runner::{
    completed_items, read_journal, run_experiment, run_experiment_with_backends, sweep_temperature,
    BackendSpec, BudgetConfig, DatasetConfig, DictionaryScope, ModelConfig, RunConfig, RunError,
    Seeds,
};
use ppibench_core::score::MatchConfig;

fn replay_config(corpus_path: std::path::PathBuf, out: std::path::PathBuf) -> RunConfig {
    RunConfig {
        run_id: Some("itest".into()),
        datasets: vec![DatasetConfig {
            name: "fixture".into(),
            path: corpus_path,
        }],
        models: vec![ModelConfig {
            name: "replay-model".into(),
            context_window: 4096,
            temperature_min: 0.0,
            temperature_max: 2.0,
        }],
        settings: vec![PromptSetting::Base, PromptSetting::Masked],
        temperatures: vec![0.0],
        k: 3,
        runs: 2,
        seeds: Seeds::default(),
        backend: BackendSpec::Replay {
            corruption: CorruptionParams::default(),
        },
        budgets: BudgetConfig::default(),
        match_config: MatchConfig::default(),
        dictionary_scope: DictionaryScope::WholeCorpus,
        sweep: Default::default(),
        workers: 1,
        output_root: out,
        base_library: None,
        masked_library: None,
    }
}

/// Succeeds for the first `allow` sends, then fails fatally.
struct FailAfter {
    inner: ReplayBackend,
    allow: u32,
    sent: AtomicU32,
}

#[async_trait]
impl ChatBackend for FailAfter {
    fn tag(&self) -> &str {
        "flaky-replay"
    }
    async fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let n = self.sent.fetch_add(1, Ordering::SeqCst);
        if n >= self.allow {
            return Err(BackendError::Fatal("simulated outage".into()));
        }
        self.inner.send(request).await
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn interrupted_run_resumes_with_remaining_items_only() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = write_fixture_file(dir.path());
    let config = replay_config(corpus_path, dir.path().join("runs"));

    // Learn the schedule size from a throwaway complete run.
    let probe = {
        let mut probe_cfg = config.clone();
        probe_cfg.output_root = dir.path().join("probe");
        run_experiment(probe_cfg).await.unwrap()
    };
    let total = probe.executed_items;
    assert!(total >= 8, "schedule unexpectedly small: {total}");
    let allow = (total / 2) as u32;

    let gold = fixture_corpus();
    let flaky: Arc<dyn ChatBackend> = Arc::new(FailAfter {
        inner: ReplayBackend::new(gold.clone(), CorruptionParams::default()),
        allow,
        sent: AtomicU32::new(0),
    });
    let backends = BTreeMap::from([("fixture".to_string(), flaky)]);
    let first = run_experiment_with_backends(config.clone(), Some(backends))
        .await
        .unwrap();
    assert_eq!(first.executed_items, total);
    assert_eq!(first.failed_items, total - allow as usize);

    // Restart with a healthy backend: only the non-completed items run.
    let healthy: Arc<dyn ChatBackend> =
        Arc::new(ReplayBackend::new(gold, CorruptionParams::default()));
    let backends = BTreeMap::from([("fixture".to_string(), healthy)]);
    let second = run_experiment_with_backends(config, Some(backends))
        .await
        .unwrap();
    assert_eq!(second.skipped_items, allow as usize);
    assert_eq!(second.executed_items, total - allow as usize);
    assert_eq!(second.failed_items, 0);
    for report in second.aggregates.values() {
        assert_eq!(report.grand_mean.f1, 1.0);
        assert_eq!(report.failed_cells, 0);
    }

    let done = completed_items(&read_journal(&second.run_dir).unwrap());
    assert_eq!(done.len(), total);
}

#[tokio::test(flavor = "multi_thread")]
async fn changed_config_is_rejected_by_manifest_digest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = write_fixture_file(dir.path());
    let config = replay_config(corpus_path, dir.path().join("runs"));
    run_experiment(config.clone()).await.unwrap();

    let mut changed = config;
    changed.runs = 3;
    let err = run_experiment(changed).await.unwrap_err();
    assert!(matches!(err, RunError::ManifestMismatch { .. }));
}

#[tokio::test(flavor = "multi_thread")]
async fn sweep_is_flat_under_replay_and_caps_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = write_fixture_file(dir.path());
    let mut config = replay_config(corpus_path, dir.path().join("runs"));
    config.run_id = Some("sweep-test".into());
    config.settings = vec![PromptSetting::Base];
    config.runs = 1;

    let sweep = sweep_temperature(config.clone(), &[0.0, 0.5, 1.0]).await.unwrap();
    assert_eq!(sweep.per_temperature.len(), 3);
    let f1s: Vec<f64> = sweep
        .per_temperature
        .iter()
        .map(|(_, o)| o.aggregates.values().next().unwrap().grand_mean.f1)
        .collect();
    assert!(f1s.iter().all(|&v| v == f1s[0]), "replay is temperature-blind");
    assert!(sweep.table_csv.exists() && sweep.table_md.exists());
    let table = std::fs::read_to_string(&sweep.table_csv).unwrap();
    assert_eq!(table.lines().count(), 1 + 3);

    // Grid outside the sweep cap is rejected pre-flight.
    let err = sweep_temperature(config.clone(), &[1.5]).await.unwrap_err();
    assert!(matches!(err, RunError::Config(_)), "got {err:?}");

    // A single-point grid reproduces run_experiment's aggregates.
    let mut single = config.clone();
    single.run_id = Some("single-point".into());
    let direct = run_experiment(single).await.unwrap();
    let (_, swept) = &sweep.per_temperature[0];
    let a = direct.aggregates.values().next().unwrap();
    let b = swept.aggregates.values().next().unwrap();
    assert_eq!(a.grand_mean, b.grand_mean);
}

// ---------------------------------------------------------------------
// Live backend against a local mock chat-completions endpoint.
// ---------------------------------------------------------------------

async fn spawn_mock_endpoint(
    fail_first: u32,
) -> (String, Arc<AtomicU32>, tokio::task::JoinHandle<()>) {
    use axum::extract::State;
    use axum::http::{HeaderMap, StatusCode};
    use axum::routing::post;
    use axum::{Json, Router};

    #[derive(Clone)]
    struct Mock {
        calls: Arc<AtomicU32>,
        fail_first: u32,
    }

    async fn handler(
        State(mock): State<Mock>,
        headers: HeaderMap,
        Json(body): Json<serde_json::Value>,
    ) -> Result<Json<serde_json::Value>, StatusCode> {
        let auth = headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default();
        if auth != "Bearer test-key" {
            return Err(StatusCode::UNAUTHORIZED);
        }
        let call = mock.calls.fetch_add(1, Ordering::SeqCst);
        if call < mock.fail_first {
            return Err(StatusCode::TOO_MANY_REQUESTS);
        }
        assert_eq!(body["messages"][0]["role"], "user");
        assert!(body["messages"][0]["content"].is_string());
        assert!(body["model"].is_string());
        Ok(Json(serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "a.s0,X,Y,binds\nDone"}}]
        })))
    }

    let calls = Arc::new(AtomicU32::new(0));
    let mock = Mock {
        calls: Arc::clone(&calls),
        fail_first,
    };
    let app = Router::new()
        .route("/v1/chat/completions", post(handler))
        .with_state(mock);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    (format!("http://{addr}/v1"), calls, handle)
}

fn live_request() -> ChatRequest {
    ChatRequest {
        model: "mock-model".into(),
        temperature: 0.0,
        max_tokens: 64,
        prompt_text: "extract".into(),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn live_backend_speaks_the_wire_protocol_and_retries() {
    let (base_url, calls, server) = spawn_mock_endpoint(2).await;
    let config = LiveConfig {
        base_url,
        timeout_s: 5,
        requests_per_minute: 1000,
    };
    let backend = LiveBackend::new(&config, "test-key".into()).unwrap();
    let retry = RetryPolicy {
        max_attempts: 4,
        base_delay_ms: 1,
    };
    let exchange = complete(
        live_request(),
        &backend,
        &ModelLimits::default(),
        &retry,
        &ByteHeuristic,
    )
    .await
    .unwrap();
    assert_eq!(exchange.response_text, "a.s0,X,Y,binds\nDone");
    assert_eq!(exchange.attempt_count, 3, "two 429s then success");
    assert_eq!(exchange.backend, "live");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    server.abort();
}

#[tokio::test(flavor = "multi_thread")]
async fn live_backend_surfaces_auth_failure_without_retry() {
    let (base_url, _calls, server) = spawn_mock_endpoint(0).await;
    let config = LiveConfig {
        base_url,
        timeout_s: 5,
        requests_per_minute: 1000,
    };
    let backend = LiveBackend::new(&config, "wrong-key".into()).unwrap();
    let err = complete(
        live_request(),
        &backend,
        &ModelLimits::default(),
        &RetryPolicy::default(),
        &ByteHeuristic,
    )
    .await
    .unwrap_err();
    let ppibench_core::chat::ClientError::Backend(BackendError::Auth(_)) = err else {
        panic!("expected auth failure, got {err:?}");
    };
    server.abort();
}
