use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::Deserialize;

use super::{GroundingTask, Origin};

#[derive(Deserialize)]
struct Table {
    #[allow(dead_code)]
    version: u32,
    tasks: BTreeMap<String, Vec<String>>,
}

fn table() -> &'static BTreeMap<String, Vec<String>> {
    static TABLE: OnceLock<BTreeMap<String, Vec<String>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let t: Table = serde_json::from_str(include_str!("../../resources/fallback_tasks.json"))
            .expect("built-in fallback table is valid JSON");
        t.tasks
    })
}

/// Categories covered by the built-in table, sorted.
pub fn fallback_categories() -> Vec<&'static str> {
    table().keys().map(String::as_str).collect()
}

/// Returns up to `n` canned descriptions for `object`, always the same
/// ones in the same order. Lookup ignores case and surrounding space.
pub fn fallback_generate(object: &str, n: usize) -> Vec<GroundingTask> {
    let key = object.trim().to_lowercase();
    let Some(list) = table().get(&key) else {
        log::warn!("no fallback tasks for category {object:?}");
        return Vec::new();
    };
    list.iter()
        .take(n)
        .map(|d| GroundingTask {
            object: object.trim().to_string(),
            description: d.clone(),
            origin: Origin::Fallback,
        })
        .collect()
}
