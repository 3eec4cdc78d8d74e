//! Main-character and modifier inventories and their Unicode composition.
//!
//! The inventory is data: [`Taxonomy::desk`] loads the bundled 52 × 21 file,
//! and any other file with the same shape can be loaded at run time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

const DESK_JSON: &str = include_str!("../data/taxonomy_desk.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainKind {
    Vowel,
    Consonant,
}

/// Where a modifier sits relative to its base glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    None,
    /// Joined to the right side of the base.
    Right,
    /// Detached, above the base.
    Above,
    /// Detached, below the base.
    Below,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MainEntry {
    pub id: usize,
    pub name: String,
    /// Hex codepoints, e.g. `"0C15"`.
    pub codepoints: Vec<String>,
    pub kind: MainKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierEntry {
    pub id: usize,
    pub name: String,
    pub codepoints: Vec<String>,
    pub placement: Placement,
    /// Vowel signs, virama and conjuncts only attach to consonants.
    #[serde(default)]
    pub requires_consonant: bool,
}

/// `(main_id, modifier_id)`; modifier 0 is "no modifier".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompositeLabel {
    pub main_id: usize,
    pub modifier_id: usize,
}

impl CompositeLabel {
    pub fn new(main_id: usize, modifier_id: usize) -> Self {
        Self {
            main_id,
            modifier_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub name: String,
    pub mains: Vec<MainEntry>,
    pub modifiers: Vec<ModifierEntry>,
    #[serde(skip)]
    main_text: Vec<String>,
    #[serde(skip)]
    modifier_text: Vec<String>,
}

fn decode_codepoints(cps: &[String], what: &str) -> Result<String> {
    cps.iter()
        .map(|hex| {
            u32::from_str_radix(hex.trim_start_matches("U+"), 16)
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| CoreError::Taxonomy(format!("{what}: bad codepoint {hex:?}")))
        })
        .collect()
}

impl Taxonomy {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut t: Taxonomy = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Bundled 16 vowels + 36 consonants × 21 modifiers.
    pub fn desk() -> Self {
        Self::from_json(DESK_JSON).expect("bundled taxonomy is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }

    fn validate(&mut self) -> Result<()> {
        if self.mains.is_empty() {
            return Err(CoreError::Taxonomy("no main entries".into()));
        }
        for (i, m) in self.mains.iter().enumerate() {
            if m.id != i {
                return Err(CoreError::Taxonomy(format!(
                    "main ids must be dense: entry {i} has id {}",
                    m.id
                )));
            }
            if m.codepoints.is_empty() {
                return Err(CoreError::Taxonomy(format!("main {} has no codepoints", m.name)));
            }
        }
        for (i, m) in self.modifiers.iter().enumerate() {
            if m.id != i {
                return Err(CoreError::Taxonomy(format!(
                    "modifier ids must be dense: entry {i} has id {}",
                    m.id
                )));
            }
        }
        match self.modifiers.first() {
            Some(m) if m.codepoints.is_empty() && m.placement == Placement::None => {}
            _ => {
                return Err(CoreError::Taxonomy(
                    "modifier 0 must be the empty modifier".into(),
                ))
            }
        }
        self.main_text = self
            .mains
            .iter()
            .map(|m| decode_codepoints(&m.codepoints, &m.name))
            .collect::<Result<_>>()?;
        self.modifier_text = self
            .modifiers
            .iter()
            .map(|m| decode_codepoints(&m.codepoints, &m.name))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn n_main(&self) -> usize {
        self.mains.len()
    }

    pub fn n_modifier(&self) -> usize {
        self.modifiers.len()
    }

    pub fn main_text(&self, id: usize) -> Result<&str> {
        self.main_text
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| CoreError::Taxonomy(format!("unknown main id {id}")))
    }

    pub fn modifier_text(&self, id: usize) -> Result<&str> {
        self.modifier_text
            .get(id)
            .map(String::as_str)
            .ok_or_else(|| CoreError::Taxonomy(format!("unknown modifier id {id}")))
    }

    pub fn check(&self, label: CompositeLabel) -> Result<()> {
        self.main_text(label.main_id)?;
        self.modifier_text(label.modifier_id)?;
        Ok(())
    }

    /// Base codepoints followed by the modifier's combining sequence.
    pub fn compose(&self, label: CompositeLabel) -> Result<String> {
        let mut text = self.main_text(label.main_id)?.to_string();
        text.push_str(self.modifier_text(label.modifier_id)?);
        Ok(text)
    }

    /// False for pairs the script does not form, such as a vowel carrying a
    /// vowel sign. Such pairs still compose; callers flag them.
    pub fn is_valid(&self, label: CompositeLabel) -> Result<bool> {
        self.check(label)?;
        let m = &self.modifiers[label.modifier_id];
        Ok(!(m.requires_consonant && self.mains[label.main_id].kind == MainKind::Vowel))
    }

    /// Every `(main, modifier)` pair in id order.
    pub fn all_labels(&self) -> Vec<CompositeLabel> {
        (0..self.n_main())
            .flat_map(|m| (0..self.n_modifier()).map(move |k| CompositeLabel::new(m, k)))
            .collect()
    }

    pub fn main_by_name(&self, name: &str) -> Option<usize> {
        self.mains.iter().position(|m| m.name == name)
    }

    pub fn modifier_by_name(&self, name: &str) -> Option<usize> {
        self.modifiers.iter().position(|m| m.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_inventory_shape() {
        let t = Taxonomy::desk();
        assert_eq!(t.n_main(), 52);
        assert_eq!(t.n_modifier(), 21);
        let vowels = t.mains.iter().filter(|m| m.kind == MainKind::Vowel).count();
        assert_eq!((vowels, 52 - vowels), (16, 36));
        let count = |p| t.modifiers.iter().filter(|m| m.placement == p).count();
        assert_eq!(count(Placement::Right), 7);
        assert_eq!(count(Placement::Above), 9);
        assert_eq!(count(Placement::Below), 4);
        // json round trip
        assert_eq!(Taxonomy::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn composition_against_unicode_chart() {
        let t = Taxonomy::desk();
        let ka = t.main_by_name("ka").unwrap();
        let aa = t.modifier_by_name("sign_aa").unwrap();
        assert_eq!(t.compose(CompositeLabel::new(ka, 0)).unwrap(), "క");
        assert_eq!(t.compose(CompositeLabel::new(ka, aa)).unwrap(), "\u{0C15}\u{0C3E}");
        assert_eq!(t.compose(CompositeLabel::new(ka, aa)).unwrap(), "కా");
        let ra = t.modifier_by_name("vattu_ra").unwrap();
        assert_eq!(t.compose(CompositeLabel::new(ka, ra)).unwrap(), "క్ర");
        let ksha = t.main_by_name("ksha").unwrap();
        assert_eq!(t.compose(CompositeLabel::new(ksha, 0)).unwrap(), "క్ష");
        assert!(t.compose(CompositeLabel::new(ka, 999)).is_err());
        assert!(t.compose(CompositeLabel::new(52, 0)).is_err());
    }

    #[test]
    fn empty_modifier_is_identity() {
        let t = Taxonomy::desk();
        for m in 0..t.n_main() {
            assert_eq!(
                t.compose(CompositeLabel::new(m, 0)).unwrap(),
                t.main_text(m).unwrap()
            );
        }
    }

    #[test]
    fn vowel_with_sign_is_flagged() {
        let t = Taxonomy::desk();
        let a = t.main_by_name("a").unwrap();
        let ka = t.main_by_name("ka").unwrap();
        let i = t.modifier_by_name("sign_i").unwrap();
        let anusvara = t.modifier_by_name("anusvara").unwrap();
        assert!(!t.is_valid(CompositeLabel::new(a, i)).unwrap());
        assert!(t.is_valid(CompositeLabel::new(ka, i)).unwrap());
        assert!(t.is_valid(CompositeLabel::new(a, anusvara)).unwrap());
    }

    #[test]
    fn rejects_malformed_files() {
        let bad_zero = r#"{"name":"x","mains":[{"id":0,"name":"a","codepoints":["0C05"],"kind":"vowel"}],
            "modifiers":[{"id":0,"name":"aa","codepoints":["0C3E"],"placement":"right"}]}"#;
        assert!(Taxonomy::from_json(bad_zero).is_err());
        let sparse = r#"{"name":"x","mains":[{"id":1,"name":"a","codepoints":["0C05"],"kind":"vowel"}],
            "modifiers":[{"id":0,"name":"none","codepoints":[],"placement":"none"}]}"#;
        assert!(Taxonomy::from_json(sparse).is_err());
        let bad_cp = r#"{"name":"x","mains":[{"id":0,"name":"a","codepoints":["ZZ"],"kind":"vowel"}],
            "modifiers":[{"id":0,"name":"none","codepoints":[],"placement":"none"}]}"#;
        assert!(Taxonomy::from_json(bad_cp).is_err());
    }
}
