#![cfg(feature = "serve")]

use std::path::Path;
use std::sync::Arc;

use posekit::catalog::{read_log, AnnotationStore, Catalog, LOG_FILE};
use posekit::fixture::{write_fixture, FixtureCatalog};
use posekit::service::{bind, AppState, ServiceConfig};
use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Server {
    base: String,
    state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<posekit::Result<()>>,
    http: reqwest::Client,
}

impl Server {
    async fn start(dir: &Path, min_models: usize) -> Self {
        let cfg = ServiceConfig {
            catalog_dir: dir.to_path_buf(),
            addr: ([127, 0, 0, 1], 0).into(),
            min_models,
            annotator: "tester".into(),
        };
        let bound = bind(&cfg).await.unwrap();
        let base = format!("http://{}", bound.local_addr().unwrap());
        let state = bound.state.clone();
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(bound.run(async {
            let _ = rx.await;
        }));
        Server { base, state, stop: Some(tx), task, http: reqwest::Client::new() }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (r.status(), r.json().await.unwrap_or(Value::Null))
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap().unwrap();
    }
}

fn fixture(models: usize) -> (tempfile::TempDir, FixtureCatalog) {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_fixture(dir.path(), models, 5, 0.75, 256).unwrap();
    (dir, fx)
}

/// A group that survives the threshold and has a known target.
fn mapped_group(fx: &FixtureCatalog, min: usize) -> (String, u8) {
    let counts = fx.catalog.name_counts();
    let (name, _) = counts
        .iter()
        .filter(|(n, c)| **c >= min && fx.truth[*n].is_some())
        .max_by_key(|(n, c)| (**c, std::cmp::Reverse(n.to_string())))
        .unwrap();
    (name.clone(), fx.truth[name].unwrap().id())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn stats_and_groups_reflect_the_catalog() {
    let (dir, fx) = fixture(8);
    let srv = Server::start(dir.path(), 3).await;
    let (status, stats) = srv.get("/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["model_count"], 8);
    assert_eq!(stats["unique_morph_names"], fx.catalog.name_counts().len());
    assert_eq!(stats["progress"], 0.0);
    assert_eq!(stats["snapshot_version"], 0);

    let (_, groups) = srv.get("/groups").await;
    let rows = groups["groups"].as_array().unwrap();
    assert_eq!(rows.len(), fx.catalog.name_counts().len());
    let counts: Vec<u64> = rows.iter().map(|r| r["count"].as_u64().unwrap()).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    for r in rows {
        assert_eq!(r["filtered"], r["count"].as_u64().unwrap() < 3);
    }
    let (_, few) = srv.get("/groups?min_count=5").await;
    assert!(few["groups"].as_array().unwrap().iter().all(|r| r["count"].as_u64().unwrap() >= 5));
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn annotate_then_snapshot_reads_your_writes() {
    let (dir, fx) = fixture(8);
    let srv = Server::start(dir.path(), 3).await;
    let (name, target) = mapped_group(&fx, 3);
    let (_, samples) = srv.get(&format!("/groups/{name}/samples")).await;
    let samples = samples["samples"].as_array().unwrap().clone();
    assert_eq!(samples.len(), fx.catalog.models_with(&name).len());
    for s in &samples {
        for key in ["neutral", "morph"] {
            let url = s[key].as_str().unwrap();
            let r = srv.http.get(format!("{}{url}", srv.base)).send().await.unwrap();
            assert_eq!(r.status(), StatusCode::OK, "{url}");
            assert_eq!(&r.bytes().await.unwrap()[1..4], b"PNG");
        }
    }

    let (status, body) = srv.post(&format!("/groups/{name}/annotate"), json!({ "target": target })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["created"], samples.len());
    assert_eq!(body["version"], samples.len());
    let (_, snap) = srv.get("/snapshot").await;
    assert_eq!(snap["version"], body["version"]);
    let records = snap["records"].as_array().unwrap();
    assert_eq!(records.len(), samples.len());
    assert!(records.iter().all(|r| r["name"] == name && r["target"] == target && r["annotator"] == "tester"));
    let tsv = srv.http.get(format!("{}/snapshot?format=tsv", srv.base)).send().await.unwrap().text().await.unwrap();
    assert_eq!(
        tsv.lines().filter(|l| l.contains(&format!("\t{name}\t{target}\tgroup_annotated"))).count(),
        samples.len()
    );
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn rejection_removes_morph_from_availability() {
    let (dir, fx) = fixture(8);
    let srv = Server::start(dir.path(), 3).await;
    let (name, target) = mapped_group(&fx, 3);
    srv.post(&format!("/groups/{name}/annotate"), json!({ "target": target })).await;
    let models = fx.catalog.models_with(&name);
    let (keep, drop) = (models[0], models[1]);
    let (status, body) =
        srv.post("/inspect", json!({ "model_id": keep, "name": name, "verdict": "accept", "annotator": "a2" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["record"]["stage"], "inspected");
    assert_eq!(body["record"]["annotator"], "a2");
    let (status, body) = srv.post("/inspect", json!({ "model_id": drop, "name": name, "verdict": "reject" })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["record"]["target"], "REJECT");

    let (_, kept) = srv.get(&format!("/models/{keep}/morphs")).await;
    assert!(kept["available"].as_array().unwrap().contains(&json!(target)));
    let (_, dropped) = srv.get(&format!("/models/{drop}/morphs")).await;
    assert!(!dropped["available"].as_array().unwrap().contains(&json!(target)));
    let avail = srv.state.store().availability(drop, 0).unwrap();
    assert!(!avail.available.contains(&target));

    let (status, err) = srv.post("/inspect", json!({ "model_id": drop, "name": name, "verdict": "accept" })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["reason"], "conflict");
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn errors_carry_reasons() {
    let (dir, fx) = fixture(6);
    let srv = Server::start(dir.path(), 3).await;
    let cases = [
        srv.get("/models/nope/morphs").await,
        srv.get("/groups/nope/samples").await,
        srv.post("/groups/nope/annotate", json!({ "target": 1 })).await,
        srv.post("/inspect", json!({ "model_id": "nope", "name": "x", "verdict": "accept" })).await,
    ];
    for (status, body) in cases {
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["reason"], "not_found");
    }
    let (name, _) = mapped_group(&fx, 3);
    let (status, body) = srv.post(&format!("/groups/{name}/annotate"), json!({ "target": 23 })).await;
    assert_eq!((status, body["reason"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid")));
    let rare = fx.catalog.name_counts().into_iter().find(|(_, c)| *c < 3).unwrap().0;
    let (status, body) = srv.post(&format!("/groups/{rare}/annotate"), json!({ "target": 0 })).await;
    assert_eq!((status, body["reason"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid")));
    let (status, _) = srv.get("/snapshot?format=xml").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    for bad in ["/images/../catalog.tsv", "/images/%2e%2e/catalog.tsv", "/images/model_0000/missing.png"] {
        let r = srv.http.get(format!("{}{bad}", srv.base)).send().await.unwrap();
        assert_ne!(r.status(), StatusCode::OK, "{bad}");
    }
    srv.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn parallel_mutations_replay_to_the_same_state() {
    let (dir, fx) = fixture(12);
    let srv = Arc::new(Server::start(dir.path(), 3).await);
    let groups: Vec<(String, u8)> = fx
        .catalog
        .name_counts()
        .into_iter()
        .filter(|(n, c)| *c >= 3 && fx.truth[n].is_some())
        .map(|(n, _)| {
            let t = fx.truth[&n].unwrap().id();
            (n, t)
        })
        .collect();
    assert!(groups.len() > 4);

    let mut tasks = Vec::new();
    for round in 0..3 {
        for (name, target) in groups.clone() {
            let srv = srv.clone();
            // later rounds re-target, exercising replacement under contention
            let t = if round == 1 { (target + 1) % 23 } else { target };
            tasks.push(tokio::spawn(async move {
                let (status, _) = srv.post(&format!("/groups/{name}/annotate"), json!({ "target": t })).await;
                assert_eq!(status, StatusCode::OK);
            }));
        }
    }
    for t in tasks {
        t.await.unwrap();
    }

    let pending: Vec<(String, String)> = {
        let store = srv.state.store();
        store.records().map(|r| (r.model_id.clone(), r.name.clone())).collect()
    };
    let mut tasks = Vec::new();
    for (i, (m, n)) in pending.into_iter().enumerate() {
        let srv = srv.clone();
        tasks.push(tokio::spawn(async move {
            let verdict = if i % 5 == 0 { "reject" } else { "accept" };
            // two clients race on each pair; exactly one wins
            let a = srv.post("/inspect", json!({ "model_id": m, "name": n, "verdict": verdict }));
            let b = srv.post("/inspect", json!({ "model_id": m, "name": n, "verdict": verdict }));
            let (ra, rb) = tokio::join!(a, b);
            let mut codes = [ra.0, rb.0];
            codes.sort();
            assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT]);
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }

    let (live_snapshot, live_version) = {
        let store = srv.state.store();
        (store.snapshot_table(), store.version())
    };
    let Ok(srv) = Arc::try_unwrap(srv) else { panic!("server still shared") };
    srv.stop().await;

    let events = read_log(&dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(events.len() as u64, live_version);
    let replayed = AnnotationStore::replay(Catalog::load(dir.path()).unwrap(), 3, events).unwrap();
    assert_eq!(replayed.snapshot_table(), live_snapshot);
    assert_eq!(replayed.stats().progress, 1.0);
}

#[tokio::test]
async fn startup_fails_cleanly() {
    let missing = ServiceConfig {
        catalog_dir: "/nonexistent/catalog".into(),
        addr: ([127, 0, 0, 1], 0).into(),
        min_models: 3,
        annotator: "t".into(),
    };
    assert!(matches!(bind(&missing).await.err(), Some(posekit::Error::NotFound(_))));

    let (dir, _) = fixture(2);
    let first = bind(&ServiceConfig { catalog_dir: dir.path().into(), ..missing.clone() }).await.unwrap();
    let busy = ServiceConfig { catalog_dir: dir.path().into(), addr: first.local_addr().unwrap(), ..missing };
    assert!(matches!(bind(&busy).await.err(), Some(posekit::Error::Io { .. })));
}
