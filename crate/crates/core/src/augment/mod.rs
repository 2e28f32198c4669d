//! Task-description augmentation for affordance grounding.
//!
//! Descriptions come from a chat-completion endpoint or from a built-in
//! table when running offline. Every description is checked for leakage of
//! the object name and for near-duplicates before it is kept. The result
//! is a reviewable JSON artifact mapping category to descriptions.

mod client;
mod fallback;
mod prompt;
mod validate;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use client::{parse_reply, request_grounding_tasks, ChatMessage, ChatTransport, HttpTransport, LlmEndpointConfig};
pub use fallback::{fallback_categories, fallback_generate};
pub use prompt::{build_grounding_prompt, prompt_history};
pub use validate::{
    jaccard, leaks_object_name, tokens, validate_grounding_task, RejectReason, Verdict, DEFAULT_DUPLICATE_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::ingest::AnnotationStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Llm,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingTask {
    pub object: String,
    pub description: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub description: String,
    pub origin: Origin,
}

/// Category name to accepted descriptions, in acceptance order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskArtifact {
    pub tasks: BTreeMap<String, Vec<TaskEntry>>,
}

impl TaskArtifact {
    pub fn get(&self, category: &str) -> &[TaskEntry] {
        self.tasks.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.tasks.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::file_io(path, e))
    }
}

/// Categories that own at least one affordance region, sorted.
pub fn grounding_categories(store: &AnnotationStore) -> Vec<String> {
    let mut cats: Vec<String> = store
        .annotations
        .values()
        .filter(|r| r.has_affordance_region())
        .map(|r| r.category.clone())
        .collect();
    cats.sort();
    cats.dedup();
    cats
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    /// Categories whose request failed after all retries, with the error.
    pub failed: BTreeMap<String, String>,
    /// Categories for which nothing was accepted.
    pub empty: Vec<String>,
}

/// Requests descriptions for each category, extending `existing`.
/// Entries already in `existing` serve as history. Up to
/// `cfg.max_concurrent` categories are processed at once.
pub fn augment_categories(
    categories: &[String],
    existing: &TaskArtifact,
    cfg: &LlmEndpointConfig,
    transport: &dyn ChatTransport,
) -> Result<(TaskArtifact, AugmentReport)> {
    cfg.check()?;
    let out = Mutex::new(existing.clone());
    let report = Mutex::new(AugmentReport::default());
    let queue = Mutex::new(categories.iter().rev().cloned().collect::<Vec<_>>());
    let workers = cfg.max_concurrent.min(categories.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let Some(cat) = queue.lock().unwrap().pop() else {
                    break;
                };
                let history: Vec<String> = out
                    .lock()
                    .unwrap()
                    .get(&cat)
                    .iter()
                    .map(|e| e.description.clone())
                    .collect();
                match request_grounding_tasks(&cat, &history, cfg, transport) {
                    Ok(tasks) => {
                        let mut out = out.lock().unwrap();
                        let entry = out.tasks.entry(cat.clone()).or_default();
                        // another worker never touches the same category, so
                        // the history read above is still current
                        entry.extend(tasks.into_iter().map(|t| TaskEntry {
                            description: t.description,
                            origin: t.origin,
                        }));
                        if entry.is_empty() {
                            out.tasks.remove(&cat);
                            report.lock().unwrap().empty.push(cat);
                        }
                    }
                    Err(e) => {
                        log::error!("augmenting {cat}: {e}");
                        report.lock().unwrap().failed.insert(cat, e.to_string());
                    }
                }
            });
        }
    });
    let mut report = report.into_inner().unwrap();
    report.empty.sort();
    Ok((out.into_inner().unwrap(), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl ChatTransport for Echo {
        fn complete(&self, _: &LlmEndpointConfig, m: &[ChatMessage]) -> std::result::Result<String, String> {
            let obj = m[0]
                .content
                .lines()
                .find_map(|l| l.strip_prefix("OBJECT_NAME: "))
                .unwrap()
                .to_string();
            if obj == "broken" {
                return Err("down".into());
            }
            Ok(serde_json::json!({ obj: ["sort the mail", "sort the mail today", "water the plants"] }).to_string())
        }
    }

    #[test]
    fn concurrent_run_is_sorted_and_filtered() {
        let cats: Vec<String> = ["mug", "broken", "pan", "knife"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cfg = LlmEndpointConfig {
            max_retries: 0,
            max_concurrent: 3,
            ..Default::default()
        };
        let (art, report) = augment_categories(&cats, &TaskArtifact::default(), &cfg, &Echo).unwrap();
        assert_eq!(art.tasks.keys().collect::<Vec<_>>(), vec!["knife", "mug", "pan"]);
        assert_eq!(art.get("mug").len(), 2);
        assert!(report.failed.contains_key("broken"));
    }

    #[test]
    fn existing_entries_act_as_history() {
        let mut existing = TaskArtifact::default();
        existing.tasks.insert(
            "mug".into(),
            vec![TaskEntry {
                description: "water the plants".into(),
                origin: Origin::Llm,
            }],
        );
        let cfg = LlmEndpointConfig {
            max_retries: 0,
            ..Default::default()
        };
        let (art, _) = augment_categories(&["mug".to_string()], &existing, &cfg, &Echo).unwrap();
        let d: Vec<&str> = art.get("mug").iter().map(|e| e.description.as_str()).collect();
        assert_eq!(d, vec!["water the plants", "sort the mail"]);
    }

    #[test]
    fn offline_artifact_round_trips() {
        let cats = vec!["hammer".to_string(), "unknown-thing".to_string()];
        let (art, report) =
            augment_categories(&cats, &TaskArtifact::default(), &LlmEndpointConfig::offline(), &Echo).unwrap();
        assert_eq!(report.empty, vec!["unknown-thing"]);
        let back: TaskArtifact = serde_json::from_str(&art.to_json()).unwrap();
        assert_eq!(back, art);
        assert!(art.to_json().contains("\"origin\": \"fallback\""));
    }
}
