use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Token-set Jaccard similarity at or above which a candidate counts as a
/// duplicate of an earlier description.
pub const DEFAULT_DUPLICATE_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    /// The candidate names the object or one of its name tokens.
    Leakage,
    /// Too similar to a description already in the history.
    Duplicate {
        similarity: f64,
    },
    Empty,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Leakage => f.write_str("leakage"),
            RejectReason::Duplicate { similarity } => write!(f, "duplicate (jaccard {similarity:.3})"),
            RejectReason::Empty => f.write_str("empty"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

/// Lowercase alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn same_word(token: &str, name: &str) -> bool {
    token == name
        || token.strip_suffix('s') == Some(name)
        || token.strip_suffix("es") == Some(name)
        || name.strip_suffix('s') == Some(token)
}

/// True when `candidate` mentions any token of the object name
/// ("measuring cup" blocks both "measuring" and "cup"), compared as whole
/// lowercase words with simple plural folding.
pub fn leaks_object_name(candidate: &str, object: &str) -> bool {
    let cand = tokens(candidate);
    let name = tokens(object);
    name.iter().any(|n| cand.iter().any(|t| same_word(t, n)))
}

/// Checks a generated description against the leakage and diversity rules.
pub fn validate_grounding_task(candidate: &str, object: &str, history: &[String], threshold: f64) -> Verdict {
    if candidate.trim().is_empty() {
        return Verdict::Reject(RejectReason::Empty);
    }
    if leaks_object_name(candidate, object) {
        return Verdict::Reject(RejectReason::Leakage);
    }
    let cand = tokens(candidate);
    let worst = history.iter().map(|h| jaccard(&cand, &tokens(h))).fold(0.0, f64::max);
    if !history.is_empty() && worst >= threshold {
        return Verdict::Reject(RejectReason::Duplicate { similarity: worst });
    }
    Verdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accepts_clean_candidate() {
        assert!(validate_grounding_task("tighten a bolt", "wrench", &[], DEFAULT_DUPLICATE_THRESHOLD).is_accept());
    }

    #[test]
    fn rejects_named_object() {
        let v = validate_grounding_task("use the wrench on the bolt", "wrench", &[], 0.6);
        assert_eq!(v, Verdict::Reject(RejectReason::Leakage));
        let v = validate_grounding_task("Swing the HAMMER", "hammer", &[], 0.6);
        assert_eq!(v, Verdict::Reject(RejectReason::Leakage));
        let v = validate_grounding_task("line up the wrenches", "wrench", &[], 0.6);
        assert_eq!(v, Verdict::Reject(RejectReason::Leakage));
    }

    #[test]
    fn rejects_sub_tokens_of_multiword_names() {
        for c in ["measure some flour", "fill the cup", "use the measuring line"] {
            let v = validate_grounding_task(c, "measuring cup", &[], 0.6);
            if c == "measure some flour" {
                assert!(v.is_accept(), "{c}");
            } else {
                assert_eq!(v, Verdict::Reject(RejectReason::Leakage), "{c}");
            }
        }
        let v = validate_grounding_task("grip the pliers firmly", "pliers-locking", &[], 0.6);
        assert_eq!(v, Verdict::Reject(RejectReason::Leakage));
        // whole words only: "pancake" does not reveal "pan"
        assert!(validate_grounding_task("flip a pancake", "pan", &[], 0.6).is_accept());
    }

    #[test]
    fn near_duplicate_is_rejected() {
        // oracle: {tighten, a, small, bolt} vs {tighten, a, bolt}: 3 shared of 4 total
        let a = tokens("tighten a small bolt");
        let b = tokens("tighten a bolt");
        let shared = a.iter().filter(|t| b.contains(*t)).count();
        let all: BTreeSet<_> = a.iter().chain(b.iter()).collect();
        assert_eq!((shared, all.len()), (3, 4));
        assert_eq!(jaccard(&a, &b), 0.75);
        let v = validate_grounding_task("tighten a small bolt", "wrench", &hist(&["tighten a bolt"]), 0.6);
        assert_eq!(v, Verdict::Reject(RejectReason::Duplicate { similarity: 0.75 }));
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        // 3 shared of 5 total
        let h = hist(&["tighten a bolt"]);
        let v = validate_grounding_task("tighten a bolt with force", "wrench", &h, 0.6);
        assert_eq!(v, Verdict::Reject(RejectReason::Duplicate { similarity: 0.6 }));
        // 59 shared of 100 total
        let shared: Vec<String> = (0..59).map(|i| format!("s{i}")).collect();
        let cand = [shared.clone(), (0..21).map(|i| format!("c{i}")).collect()]
            .concat()
            .join(" ");
        let prior = [shared, (0..20).map(|i| format!("h{i}")).collect()].concat().join(" ");
        assert_eq!(jaccard(&tokens(&cand), &tokens(&prior)), 0.59);
        assert!(validate_grounding_task(&cand, "wrench", &[prior], 0.6).is_accept());
    }

    #[test]
    fn empty_candidate_rejected() {
        assert_eq!(
            validate_grounding_task("  ", "mug", &[], 0.6),
            Verdict::Reject(RejectReason::Empty)
        );
    }
}
