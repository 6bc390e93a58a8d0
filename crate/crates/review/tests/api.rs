use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ils_core::config::Config;
use ils_core::model::{Polarity, Split};
use ils_core::pipeline::{run_pipeline, RunOptions};
use ils_core::report::LocationLexicon;
use ils_core::synth::{corpus_specs, write_corpus, DetectorNoise};
use ils_review::server::WorklistResponse;
use ils_review::{load_samples, router, Export, ReviewState, Sample};
use serde_json::{json, Value};
use tower::ServiceExt;

fn dataset(dir: &Path) -> Vec<Sample> {
    let mut specs = corpus_specs(6, 21, DetectorNoise::NONE);
    for s in &mut specs {
        s.split = Split::Test;
    }
    let (manifest, _) = write_corpus(&specs, &dir.join("corpus")).unwrap();
    let out = dir.join("out");
    run_pipeline(&manifest, &Config::default(), &LocationLexicon::default(), &out, RunOptions::default()).unwrap();
    load_samples(&out, &manifest, Split::Test).unwrap()
}

fn experts() -> Vec<String> {
    ["ana", "bo", "cy", "dee"].map(String::from).to_vec()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get_json<T: serde::de::DeserializeOwned>(app: &Router, uri: &str) -> T {
    let (status, body) = call(app, "GET", uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

async fn verdict(app: &Router, expert: &str, sample: &str, decision: &str) -> StatusCode {
    call(app, "POST", "/api/verdict", Some(json!({"expert": expert, "sample": sample, "decision": decision})))
        .await
        .0
}

#[tokio::test]
async fn review_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dataset(dir.path());
    let positives: Vec<String> = samples
        .iter()
        .filter(|s| s.polarity == Polarity::Positive)
        .map(|s| s.sample_id.clone())
        .collect();
    assert!(positives.len() >= 2, "corpus too small");
    let log = dir.path().join("review/verdicts.jsonl");
    let state = Arc::new(ReviewState::new(samples.clone(), &experts(), 5, &log).unwrap());
    let app = router(state);

    let mut lists = Vec::new();
    for e in experts() {
        let w: WorklistResponse = get_json(&app, &format!("/api/worklist?expert={e}")).await;
        for p in &positives {
            assert!(w.items.iter().any(|i| &i.sample_id == p), "{e} lacks positive {p}");
        }
        lists.push(w);
    }

    // everyone accepts everything, except bo rejects one positive
    let rejected = positives[0].clone();
    for w in &lists {
        for item in &w.items {
            let d = if w.expert == "bo" && item.sample_id == rejected { "not_acceptable" } else { "acceptable" };
            assert_eq!(verdict(&app, &w.expert, &item.sample_id, d).await, StatusCode::NO_CONTENT);
        }
    }

    let ex: Export = get_json(&app, "/api/export").await;
    assert_eq!(ex.excluded, vec![rejected.clone()]);
    assert_eq!(ex.samples.len(), samples.len() - 1);
    assert!(ex.unreviewed.is_empty());
    let n = positives.len() as f64;
    let overall = ex.report.overall.positive;
    assert_eq!(overall.accepted as f64, n - 1.0);
    assert_eq!(overall.percent, Some(100.0 * (n - 1.0) / n));
    assert_eq!(ex.report.experts["bo"].positive.percent, Some(100.0 * (n - 1.0) / n));
    assert_eq!(ex.report.experts["ana"].positive.percent, Some(100.0));

    // a change of mind replaces the earlier verdict
    assert_eq!(verdict(&app, "bo", &rejected, "acceptable").await, StatusCode::NO_CONTENT);
    let ex: Export = get_json(&app, "/api/export").await;
    assert!(ex.excluded.is_empty());

    // the log replays to the same state after a restart
    let again = router(Arc::new(ReviewState::new(samples, &experts(), 5, &log).unwrap()));
    let replayed: Export = get_json(&again, "/api/export").await;
    assert_eq!(replayed, ex);
}

#[tokio::test]
async fn verdict_errors() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dataset(dir.path());
    let negative = samples.iter().find(|s| s.polarity == Polarity::Negative).unwrap().sample_id.clone();
    let state = Arc::new(ReviewState::new(samples, &experts(), 5, &dir.path().join("v.jsonl")).unwrap());
    let owner = state.worklists().iter().find(|(_, l)| l.contains(&negative)).unwrap().0.clone();
    let other = experts().into_iter().find(|e| *e != owner).unwrap();
    let app = router(state);

    assert_eq!(verdict(&app, &other, &negative, "acceptable").await, StatusCode::FORBIDDEN);
    assert_eq!(verdict(&app, "mallory", &negative, "acceptable").await, StatusCode::FORBIDDEN);
    assert_eq!(verdict(&app, &owner, "nope", "acceptable").await, StatusCode::NOT_FOUND);
    assert_eq!(verdict(&app, &owner, &negative, "maybe").await, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(call(&app, "GET", "/api/worklist?expert=mallory", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/sample/nope", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sample_metadata_and_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dataset(dir.path());
    let pos = samples.iter().find(|s| s.polarity == Polarity::Positive).unwrap().clone();
    let app = router(Arc::new(ReviewState::new(samples, &experts(), 5, &dir.path().join("v.jsonl")).unwrap()));

    let meta: Value = get_json(&app, &format!("/api/sample/{}", pos.sample_id)).await;
    assert_eq!(meta["instruction"], pos.instruction.as_str());
    assert_eq!(meta["lesion"], pos.lesion.as_str());
    assert!(!meta["report_text"].as_str().unwrap().is_empty());
    assert!(meta.get("image_path").is_none());

    let (status, png) = call(&app, "GET", &format!("/api/sample/{}/overlay.png", pos.sample_id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let img = image::load_from_memory(&png).unwrap().to_rgb8();
    let mask = ils_core::io::read_mask(pos.mask_path.as_ref().unwrap()).unwrap();
    let (r, c) = mask.first().unwrap();
    let px = img.get_pixel(c, r).0;
    assert!(px[0] > px[1], "mask pixel not tinted: {px:?}");
}
