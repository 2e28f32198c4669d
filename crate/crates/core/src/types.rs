//! Annotation-level domain types shared by the loaders, the compiler and
//! the evaluators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelBBox;
use crate::mask::RleMask;

/// The seven closed-set part affordances, in label-raster order (raster
/// value `k` encodes `ALL[k - 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Affordance {
    Grasp,
    Cut,
    Scoop,
    Contain,
    Pound,
    Support,
    WrapGrasp,
}

impl Affordance {
    pub const ALL: [Affordance; 7] = [
        Affordance::Grasp,
        Affordance::Cut,
        Affordance::Scoop,
        Affordance::Contain,
        Affordance::Pound,
        Affordance::Support,
        Affordance::WrapGrasp,
    ];

    /// Maps a label-raster value in `1..=7` to its affordance.
    pub fn from_label_value(v: u8) -> Option<Affordance> {
        (1..=7).contains(&v).then(|| Affordance::ALL[v as usize - 1])
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Affordance::Grasp => "grasp",
            Affordance::Cut => "cut",
            Affordance::Scoop => "scoop",
            Affordance::Contain => "contain",
            Affordance::Pound => "pound",
            Affordance::Support => "support",
            Affordance::WrapGrasp => "wrap-grasp",
        }
    }
}

impl fmt::Display for Affordance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Affordance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Affordance::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown affordance {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffordanceLabel {
    Closed(Affordance),
    /// Free-text description of a task-specific affordance.
    Task(String),
}

impl AffordanceLabel {
    pub fn task(description: impl Into<String>) -> Result<Self> {
        let d = description.into();
        if d.trim().is_empty() {
            return Err(Error::InvalidInput("task affordance description is empty".into()));
        }
        Ok(AffordanceLabel::Task(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransparencyLevel {
    Transparent,
    Translucent,
    Opaque,
}

impl TransparencyLevel {
    pub const ALL: [TransparencyLevel; 3] = [
        TransparencyLevel::Transparent,
        TransparencyLevel::Translucent,
        TransparencyLevel::Opaque,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TransparencyLevel::Transparent => "transparent",
            TransparencyLevel::Translucent => "translucent",
            TransparencyLevel::Opaque => "opaque",
        }
    }
}

impl FromStr for TransparencyLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransparencyLevel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown transparency level {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalConcept {
    Transparency,
    LiquidStorage,
    Sealability,
}

impl PhysicalConcept {
    pub const ALL: [PhysicalConcept; 3] = [
        PhysicalConcept::Transparency,
        PhysicalConcept::LiquidStorage,
        PhysicalConcept::Sealability,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PhysicalConcept::Transparency => "transparency",
            PhysicalConcept::LiquidStorage => "liquid_storage",
            PhysicalConcept::Sealability => "sealability",
        }
    }

    /// Boolean concepts versus the leveled one.
    pub fn is_boolean(&self) -> bool {
        !matches!(self, PhysicalConcept::Transparency)
    }
}

impl FromStr for PhysicalConcept {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhysicalConcept::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown physical concept {s:?}")))
    }
}

/// A physical concept paired with a value of the matching kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "concept", content = "value", rename_all = "snake_case")]
pub enum PhysicalProperty {
    Transparency(TransparencyLevel),
    LiquidStorage(bool),
    Sealability(bool),
}

impl PhysicalProperty {
    pub fn concept(&self) -> PhysicalConcept {
        match self {
            PhysicalProperty::Transparency(_) => PhysicalConcept::Transparency,
            PhysicalProperty::LiquidStorage(_) => PhysicalConcept::LiquidStorage,
            PhysicalProperty::Sealability(_) => PhysicalConcept::Sealability,
        }
    }

    /// Builds a property from a table cell: `true`/`false` for booleans,
    /// a level name for transparency.
    pub fn parse(concept: PhysicalConcept, cell: &str) -> Result<Self> {
        let cell = cell.trim();
        let boolean = || match cell.to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Error::InvalidInput(format!(
                "{} expects true/false, got {cell:?}",
                concept.as_str()
            ))),
        };
        Ok(match concept {
            PhysicalConcept::Transparency => PhysicalProperty::Transparency(cell.parse()?),
            PhysicalConcept::LiquidStorage => PhysicalProperty::LiquidStorage(boolean()?),
            PhysicalConcept::Sealability => PhysicalProperty::Sealability(boolean()?),
        })
    }

    /// Answer token: `True`, `False` or a capitalized level label.
    pub fn answer_token(&self) -> String {
        match self {
            PhysicalProperty::Transparency(l) => capitalize(l.as_str()),
            PhysicalProperty::LiquidStorage(b) | PhysicalProperty::Sealability(b) => {
                if *b { "True" } else { "False" }.to_string()
            }
        }
    }
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub image: String,
    pub bbox: PixelBBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affordance: Option<AffordanceLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub physical: Vec<PhysicalProperty>,
    pub source: String,
}

/// Part names treated as graspable regions for affordance tasks.
pub const GRASPABLE_PARTS: [&str; 3] = ["handle", "grip", "handles"];

impl AnnotationRecord {
    pub fn has_graspable_part(&self) -> bool {
        self.part
            .as_deref()
            .is_some_and(|p| GRASPABLE_PARTS.contains(&p.trim().to_ascii_lowercase().as_str()))
    }

    /// Whether the record localizes an affordance region: a closed-set
    /// label or a graspable part.
    pub fn has_affordance_region(&self) -> bool {
        matches!(self.affordance, Some(AffordanceLabel::Closed(_))) || self.has_graspable_part()
    }

    pub fn property(&self, concept: PhysicalConcept) -> Option<&PhysicalProperty> {
        self.physical.iter().find(|p| p.concept() == concept)
    }
}

/// The task families of the compiled dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    RecObject,
    RegObject,
    RecAffordance,
    RegAffordance,
    RecGroundingAffordance,
    RegPhysical,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::RecObject,
        TaskType::RegObject,
        TaskType::RecAffordance,
        TaskType::RegAffordance,
        TaskType::RecGroundingAffordance,
        TaskType::RegPhysical,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskType::RecObject => "rec_object",
            TaskType::RegObject => "reg_object",
            TaskType::RecAffordance => "rec_affordance",
            TaskType::RegAffordance => "reg_affordance",
            TaskType::RecGroundingAffordance => "rec_grounding_affordance",
            TaskType::RegPhysical => "reg_physical",
        }
    }

    /// REC tasks answer with a box.
    pub fn is_rec(&self) -> bool {
        matches!(
            self,
            TaskType::RecObject | TaskType::RecAffordance | TaskType::RecGroundingAffordance
        )
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        TaskType::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| Error::InvalidInput(format!("unknown task type {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_values_follow_enumeration_order() {
        assert_eq!(Affordance::from_label_value(1), Some(Affordance::Grasp));
        assert_eq!(Affordance::from_label_value(4), Some(Affordance::Contain));
        assert_eq!(Affordance::from_label_value(7), Some(Affordance::WrapGrasp));
        assert_eq!(Affordance::from_label_value(0), None);
        assert_eq!(Affordance::from_label_value(8), None);
        assert_eq!("wrap-grasp".parse::<Affordance>().unwrap(), Affordance::WrapGrasp);
    }

    #[test]
    fn property_cells() {
        assert_eq!(
            PhysicalProperty::parse(PhysicalConcept::LiquidStorage, "TRUE").unwrap(),
            PhysicalProperty::LiquidStorage(true)
        );
        assert!(PhysicalProperty::parse(PhysicalConcept::Transparency, "shiny").is_err());
        assert!(PhysicalProperty::parse(PhysicalConcept::Sealability, "yes").is_err());
        assert_eq!(
            PhysicalProperty::Transparency(TransparencyLevel::Opaque).answer_token(),
            "Opaque"
        );
        assert_eq!(PhysicalProperty::Sealability(false).answer_token(), "False");
    }

    #[test]
    fn property_serde_shape() {
        let p = PhysicalProperty::Transparency(TransparencyLevel::Translucent);
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"concept":"transparency","value":"translucent"}"#
        );
        let q: PhysicalProperty = serde_json::from_str(r#"{"concept":"liquid_storage","value":true}"#).unwrap();
        assert_eq!(q, PhysicalProperty::LiquidStorage(true));
    }

    #[test]
    fn empty_task_affordance_rejected() {
        assert!(AffordanceLabel::task("  ").is_err());
        assert!(AffordanceLabel::task("tighten bolts").is_ok());
    }

    #[test]
    fn task_type_names() {
        assert_eq!(
            "rec-grounding-affordance".parse::<TaskType>().unwrap(),
            TaskType::RecGroundingAffordance
        );
        assert_eq!(
            serde_json::to_string(&TaskType::RegPhysical).unwrap(),
            "\"reg_physical\""
        );
        assert!(TaskType::RecAffordance.is_rec());
        assert!(!TaskType::RegObject.is_rec());
    }
}
