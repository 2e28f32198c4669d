#![allow(dead_code)]

use std::path::PathBuf;

use affordance_vqa::augment::{
    augment_categories, grounding_categories, HttpTransport, LlmEndpointConfig, TaskArtifact,
};
use affordance_vqa::ingest::{self, AnnotationStore, CorpusSpec};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus_specs() -> Vec<CorpusSpec> {
    let root = fixtures();
    vec![
        format!("coco-detection:H={}", root.join("coco").display()),
        format!("part-affordance-maps:R={}", root.join("labels").display()),
        format!("physical-properties:Phy={}", root.join("physical").display()),
    ]
    .into_iter()
    .map(|s| s.parse().unwrap())
    .collect()
}

/// The three fixture corpora merged; panics on any record error.
pub fn fixture_store() -> AnnotationStore {
    let mut stores = Vec::new();
    for spec in corpus_specs() {
        let (store, report) = ingest::load(&spec).unwrap();
        assert!(report.errors.is_empty(), "{}: {:?}", spec.tag, report.errors);
        stores.push(store);
    }
    ingest::merge(stores).unwrap()
}

pub fn offline_tasks(store: &AnnotationStore) -> TaskArtifact {
    let cats = grounding_categories(store);
    let (tasks, report) = augment_categories(
        &cats,
        &TaskArtifact::default(),
        &LlmEndpointConfig::offline(),
        &HttpTransport,
    )
    .unwrap();
    assert!(report.failed.is_empty() && report.empty.is_empty(), "{report:?}");
    tasks
}
