use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::keyed;
use crate::types::PhysicalConcept;

/// Prompt wordings per task family. The first entry of each list is the
/// canonical phrasing; the rest are paraphrases picked by seeded choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub version: u32,
    /// REC prompts, with a `{phrase}` slot.
    pub rec: Vec<String>,
    /// REG prompts, with a `{bbox}` slot.
    pub reg: Vec<String>,
    /// Grounding prompts, with a `{phrase}` slot.
    pub grounding: Vec<String>,
    /// Physical-concept prompts keyed by concept name, with a `{bbox}` slot.
    pub physical: BTreeMap<String, Vec<String>>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::from_json(include_str!("../../resources/templates.json")).expect("built-in templates are valid")
    }
}

impl Templates {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: Templates = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("templates: {e}")))?;
        t.check()?;
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file_io(path, e))?;
        Templates::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        let need = |name: &str, list: &[String], slot: &str| -> Result<()> {
            if list.is_empty() {
                return Err(Error::InvalidInput(format!("templates: {name} is empty")));
            }
            match list.iter().find(|t| t.matches(slot).count() != 1) {
                Some(t) => Err(Error::InvalidInput(format!(
                    "templates: {name} entry {t:?} needs one {slot}"
                ))),
                None => Ok(()),
            }
        };
        need("rec", &self.rec, "{phrase}")?;
        need("reg", &self.reg, "{bbox}")?;
        need("grounding", &self.grounding, "{phrase}")?;
        for c in PhysicalConcept::ALL {
            let list = self.physical.get(c.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            need(&format!("physical.{}", c.as_str()), list, "{bbox}")?;
        }
        Ok(())
    }

    pub fn physical_for(&self, concept: PhysicalConcept) -> &[String] {
        &self.physical[concept.as_str()]
    }
}

/// Picks one template for `sample_id`. With `paraphrase` off, always the
/// canonical first entry.
pub fn choose<'a>(list: &'a [String], seed: u64, sample_id: &str, paraphrase: bool) -> &'a str {
    if !paraphrase || list.len() == 1 {
        return &list[0];
    }
    &list[(keyed(seed, sample_id) % list.len() as u64) as usize]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_loads() {
        let t = Templates::default();
        assert_eq!(t.reg[0], "Please provide a short description of this region: {bbox}.");
        assert_eq!(
            t.rec[0],
            "Please provide bounding box coordinates of this region: {phrase}."
        );
        assert_eq!(t.grounding.len(), 1);
        assert!(t.physical_for(PhysicalConcept::LiquidStorage)[0].contains("whether this object can contain liquid"));
    }

    #[test]
    fn rejects_missing_slot() {
        let mut t = Templates::default();
        t.reg.push("no slot here".into());
        assert!(Templates::from_json(&serde_json::to_string(&t).unwrap()).is_err());
    }

    #[test]
    fn choice_is_stable() {
        let t = Templates::default();
        let a = choose(&t.rec, 3, "rec_object/42", true);
        assert_eq!(a, choose(&t.rec, 3, "rec_object/42", true));
        assert_eq!(choose(&t.rec, 3, "rec_object/42", false), t.rec[0]);
    }
}
