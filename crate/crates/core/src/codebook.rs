//! The annotation codebook: the IHRA Working Definition and the inferences
//! used to apply it, as structured entries, plus an assistive scanner.
//!
//! The scanner only points annotators at entries whose trigger strings occur
//! in a tweet. It never classifies; most entries have no triggers at all
//! because they describe context-dependent judgments.
//!
//! # File format
//!
//! A codebook file is a JSON array of entries:
//!
//! ```json
//! [{"entry_id": "ANNEX2-SYM-88", "category": "symbol",
//!   "surface_forms": ["88"], "description": "Heil Hitler",
//!   "source_quote": "numbers representing “Heil Hitler” (88)",
//!   "ambiguity_note": "Common number; only meaningful as a deliberate code."}]
//! ```
//!
//! `subcategory` and `ambiguity_note` are optional. Surface forms are
//! lowercase; a space in a surface form matches any single whitespace
//! character.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{eq_ignore_case, is_letter};

const SHIPPED_CODEBOOK: &str = include_str!("../data/codebook.json");
const SHIPPED_MANIFEST: &str = include_str!("../data/codebook_manifest.json");

/// Sections of the definition that every codebook must carry.
pub const REQUIRED_SECTIONS: [&str; 6] = ["IHRA-1.0", "IHRA-2.0", "IHRA-3.0", "IHRA-4.0", "IHRA-5.0", "IHRA-6.0"];
pub const CONTEMPORARY_EXAMPLE_COUNT: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    DefinitionSection,
    ContemporaryExample,
    CharacterStereotype,
    PhysicalStereotype,
    Imagery,
    CrimeAllegation,
    DemonizationTarget,
    PhraseMeme,
    PunishmentCall,
    HolocaustDenial,
    NazismEndorsement,
    IsraelRelated,
    Symbol,
    Slur,
}

impl Category {
    pub const ALL: [Category; 14] = [
        Category::DefinitionSection,
        Category::ContemporaryExample,
        Category::CharacterStereotype,
        Category::PhysicalStereotype,
        Category::Imagery,
        Category::CrimeAllegation,
        Category::DemonizationTarget,
        Category::PhraseMeme,
        Category::PunishmentCall,
        Category::HolocaustDenial,
        Category::NazismEndorsement,
        Category::IsraelRelated,
        Category::Symbol,
        Category::Slur,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::DefinitionSection => "definition_section",
            Category::ContemporaryExample => "contemporary_example",
            Category::CharacterStereotype => "character_stereotype",
            Category::PhysicalStereotype => "physical_stereotype",
            Category::Imagery => "imagery",
            Category::CrimeAllegation => "crime_allegation",
            Category::DemonizationTarget => "demonization_target",
            Category::PhraseMeme => "phrase_meme",
            Category::PunishmentCall => "punishment_call",
            Category::HolocaustDenial => "holocaust_denial",
            Category::NazismEndorsement => "nazism_endorsement",
            Category::IsraelRelated => "israel_related",
            Category::Symbol => "symbol",
            Category::Slur => "slur",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookEntry {
    pub entry_id: String,
    pub category: Category,
    /// `unequivocal_endorsement` or `context_dependent_endorsement` for
    /// figures and organizations whose endorsement is treated as a symbol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<String>,
    #[serde(default)]
    pub surface_forms: Vec<String>,
    pub description: String,
    pub source_quote: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookHit {
    pub entry_id: String,
    /// Character offsets into the scanned text.
    pub span: (usize, usize),
    pub surface_form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodebookError {
    #[error("invalid codebook JSON: {0}")]
    Json(String),
    #[error("duplicate entry id {0}")]
    DuplicateId(String),
    #[error("missing mandatory entry {0}")]
    MissingSection(String),
    #[error("{0} is not one of IHRA-3.1.1 to IHRA-3.1.11")]
    UnexpectedExample(String),
    #[error("{0} has category {1:?}, expected {2:?}")]
    WrongCategory(String, Category, Category),
    #[error("symbol entry {0} has no surface forms")]
    SymbolWithoutSurfaceForm(String),
    #[error("entry {id} has invalid surface form {form:?}; forms must be non-empty and lowercase")]
    BadSurfaceForm { id: String, form: String },
    #[error("unknown codebook entry {0}")]
    UnknownId(String),
}

#[derive(Debug, Clone)]
struct Trigger {
    form: Vec<char>,
    entry: usize,
    form_index: usize,
}

/// A validated codebook, indexed by id and by surface form.
#[derive(Debug, Clone)]
pub struct Codebook {
    entries: Vec<CodebookEntry>,
    by_id: BTreeMap<String, usize>,
    by_form: BTreeMap<String, Vec<usize>>,
    triggers: Vec<Trigger>,
}

fn contemporary_ids() -> impl Iterator<Item = String> {
    (1..=CONTEMPORARY_EXAMPLE_COUNT).map(|i| alloc::format!("IHRA-3.1.{i}"))
}

impl Codebook {
    pub fn from_json(json: &str) -> Result<Self, CodebookError> {
        let entries: Vec<CodebookEntry> = serde_json::from_str(json).map_err(|e| CodebookError::Json(e.to_string()))?;
        Self::from_entries(entries)
    }

    /// The codebook bundled with the crate.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_CODEBOOK).expect("bundled codebook is valid")
    }

    pub fn shipped_json() -> &'static str {
        SHIPPED_CODEBOOK
    }

    pub fn from_entries(entries: Vec<CodebookEntry>) -> Result<Self, CodebookError> {
        let book = Self::index(entries)?;
        for id in REQUIRED_SECTIONS {
            match book.get(id) {
                Some(e) if e.category == Category::DefinitionSection => {}
                Some(e) => return Err(CodebookError::WrongCategory(id.into(), e.category, Category::DefinitionSection)),
                None => return Err(CodebookError::MissingSection(id.into())),
            }
        }
        for id in contemporary_ids() {
            match book.get(&id) {
                Some(e) if e.category == Category::ContemporaryExample => {}
                Some(e) => return Err(CodebookError::WrongCategory(id, e.category, Category::ContemporaryExample)),
                None => return Err(CodebookError::MissingSection(id)),
            }
        }
        if let Some(extra) = book.by_category(Category::ContemporaryExample).find(|e| !contemporary_ids().any(|id| id == e.entry_id)) {
            return Err(CodebookError::UnexpectedExample(extra.entry_id.clone()));
        }
        Ok(book)
    }

    /// Checks the per-entry invariants and builds the indexes, without
    /// requiring the definition sections.
    fn index(entries: Vec<CodebookEntry>) -> Result<Self, CodebookError> {
        let mut by_id = BTreeMap::new();
        let mut by_form: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut triggers = Vec::new();
        for (i, e) in entries.iter().enumerate() {
            if by_id.insert(e.entry_id.clone(), i).is_some() {
                return Err(CodebookError::DuplicateId(e.entry_id.clone()));
            }
            if e.category == Category::Symbol && e.surface_forms.is_empty() {
                return Err(CodebookError::SymbolWithoutSurfaceForm(e.entry_id.clone()));
            }
            for (form_index, form) in e.surface_forms.iter().enumerate() {
                if form.trim().is_empty() || form.to_lowercase() != *form || form.trim() != form {
                    return Err(CodebookError::BadSurfaceForm { id: e.entry_id.clone(), form: form.clone() });
                }
                by_form.entry(form.clone()).or_default().push(i);
                triggers.push(Trigger { form: form.chars().collect(), entry: i, form_index });
            }
        }
        Ok(Codebook { entries, by_id, by_form, triggers })
    }

    /// Adds user-supplied symbol entries (for example from a hate-symbol
    /// database export) in the same schema.
    pub fn import_symbols(self, symbols: Vec<CodebookEntry>) -> Result<Self, CodebookError> {
        if let Some(e) = symbols.iter().find(|e| e.category != Category::Symbol) {
            return Err(CodebookError::WrongCategory(e.entry_id.clone(), e.category, Category::Symbol));
        }
        let mut entries = self.entries;
        entries.extend(symbols);
        Self::from_entries(entries)
    }

    pub fn entries(&self) -> &[CodebookEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entry_id: &str) -> Option<&CodebookEntry> {
        self.by_id.get(entry_id).map(|&i| &self.entries[i])
    }

    /// Looks up an entry so its governing text can be shown to annotators.
    pub fn get_section(&self, entry_id: &str) -> Result<&CodebookEntry, CodebookError> {
        self.get(entry_id).ok_or_else(|| CodebookError::UnknownId(entry_id.to_string()))
    }

    pub fn by_surface_form(&self, form: &str) -> impl Iterator<Item = &CodebookEntry> {
        self.by_form.get(form).into_iter().flatten().map(|&i| &self.entries[i])
    }

    pub fn by_category(&self, category: Category) -> impl Iterator<Item = &CodebookEntry> {
        self.entries.iter().filter(move |e| e.category == category)
    }

    pub fn category_counts(&self) -> BTreeMap<Category, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.category).or_insert(0) += 1;
        }
        counts
    }

    /// Every occurrence of every surface form at a token boundary, sorted by
    /// span start.
    pub fn scan(&self, text: &str) -> Vec<CodebookHit> {
        let chars: Vec<char> = text.chars().collect();
        let mut hits = Vec::new();
        for trigger in &self.triggers {
            let len = trigger.form.len();
            if len > chars.len() {
                continue;
            }
            for start in 0..=chars.len() - len {
                if surface_matches_at(&chars, start, &trigger.form) {
                    let entry = &self.entries[trigger.entry];
                    hits.push(CodebookHit {
                        entry_id: entry.entry_id.clone(),
                        span: (start, start + len),
                        surface_form: entry.surface_forms[trigger.form_index].clone(),
                        ambiguity_note: entry.ambiguity_note.clone(),
                    });
                }
            }
        }
        hits.sort_by(|a, b| a.span.cmp(&b.span).then_with(|| a.entry_id.cmp(&b.entry_id)));
        hits
    }
}

/// Expected category counts, checked into the repository alongside the codebook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookManifest {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub categories: BTreeMap<Category, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestMismatch {
    pub category: Category,
    pub expected: usize,
    pub found: usize,
}

impl fmt::Display for ManifestMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: manifest lists {}, codebook has {}", self.category, self.expected, self.found)
    }
}

impl CodebookManifest {
    pub fn shipped() -> Self {
        serde_json::from_str(SHIPPED_MANIFEST).expect("bundled manifest is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, CodebookError> {
        serde_json::from_str(json).map_err(|e| CodebookError::Json(e.to_string()))
    }

    /// Categories whose count differs from the manifest. Categories absent
    /// from the manifest are expected to be empty.
    pub fn check(&self, book: &Codebook) -> Vec<ManifestMismatch> {
        let found = book.category_counts();
        Category::ALL
            .iter()
            .filter_map(|&category| {
                let expected = self.categories.get(&category).copied().unwrap_or(0);
                let found = found.get(&category).copied().unwrap_or(0);
                (expected != found).then_some(ManifestMismatch { category, expected, found })
            })
            .collect()
    }
}

/// Token boundary for the scanner: a neighbour only blocks a match when it
/// continues the same kind of run (letter next to letter, digit next to
/// digit). So `88` is found in `#88` and `white88` but not in `1988`.
fn continues_run(neighbour: char, edge: char) -> bool {
    (is_letter(neighbour) && is_letter(edge)) || (neighbour.is_numeric() && edge.is_numeric())
}

/// Whether `form` occurs at `start` in `text` under the scanner's boundary rule.
pub fn surface_matches_at(text: &[char], start: usize, form: &[char]) -> bool {
    let Some((&first, &last)) = form.first().zip(form.last()) else {
        return false;
    };
    let end = start + form.len();
    if end > text.len() {
        return false;
    }
    let body = text[start..end].iter().zip(form).all(|(&t, &f)| if f == ' ' { t.is_whitespace() } else { eq_ignore_case(t, f) });
    if !body {
        return false;
    }
    let left_ok = start == 0 || !continues_run(text[start - 1], first);
    let right_ok = end == text.len() || !continues_run(text[end], last);
    left_ok && right_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn entry(id: &str, category: Category, forms: &[&str]) -> CodebookEntry {
        CodebookEntry {
            entry_id: id.into(),
            category,
            subcategory: None,
            surface_forms: forms.iter().map(|s| s.to_string()).collect(),
            description: "d".into(),
            source_quote: "q".into(),
            ambiguity_note: None,
        }
    }

    fn minimal() -> Vec<CodebookEntry> {
        let mut v: Vec<_> = REQUIRED_SECTIONS.iter().map(|id| entry(id, Category::DefinitionSection, &[])).collect();
        v.extend(contemporary_ids().map(|id| entry(&id, Category::ContemporaryExample, &[])));
        v
    }

    #[test]
    fn category_names_match_serde() {
        for c in Category::ALL {
            assert_eq!(serde_json::to_string(&c).unwrap(), alloc::format!("\"{c}\""));
        }
    }

    #[test]
    fn minimal_codebook_loads() {
        assert_eq!(Codebook::from_entries(minimal()).unwrap().len(), 17);
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut v = minimal();
        v.push(entry("IHRA-1.0", Category::DefinitionSection, &[]));
        assert_eq!(Codebook::from_entries(v).unwrap_err(), CodebookError::DuplicateId("IHRA-1.0".into()));
    }

    #[test]
    fn missing_section_rejected() {
        let mut v = minimal();
        v.retain(|e| e.entry_id != "IHRA-3.1.7");
        assert_eq!(Codebook::from_entries(v).unwrap_err(), CodebookError::MissingSection("IHRA-3.1.7".into()));
        let mut v = minimal();
        v.retain(|e| e.entry_id != "IHRA-4.0");
        assert_eq!(Codebook::from_entries(v).unwrap_err(), CodebookError::MissingSection("IHRA-4.0".into()));
    }

    #[test]
    fn extra_contemporary_example_rejected() {
        let mut v = minimal();
        v.push(entry("IHRA-3.1.12", Category::ContemporaryExample, &[]));
        assert_eq!(Codebook::from_entries(v).unwrap_err(), CodebookError::UnexpectedExample("IHRA-3.1.12".into()));
    }

    #[test]
    fn symbol_needs_surface_form() {
        let mut v = minimal();
        v.push(entry("SYM-x", Category::Symbol, &[]));
        assert!(matches!(Codebook::from_entries(v), Err(CodebookError::SymbolWithoutSurfaceForm(_))));
        let mut v = minimal();
        v.push(entry("SYM-x", Category::Symbol, &["Upper"]));
        assert!(matches!(Codebook::from_entries(v), Err(CodebookError::BadSurfaceForm { .. })));
    }

    #[test]
    fn boundary_rule() {
        let form: Vec<char> = "88".chars().collect();
        let t = |s: &str, at: usize| surface_matches_at(&s.chars().collect::<Vec<_>>(), at, &form);
        assert!(t("the number 88 in", 11));
        assert!(t("#88", 1));
        assert!(t("white88", 5));
        assert!(!t("1988", 2));
        assert!(!t("881", 0));
    }

    #[test]
    fn multiword_forms_match_any_whitespace() {
        let mut v = minimal();
        v.push(entry("SYM-x", Category::Symbol, &["blut und ehre"]));
        let book = Codebook::from_entries(v).unwrap();
        assert_eq!(book.scan("Blut\tund Ehre!")[0].span, (0, 13));
        assert!(book.scan("blutund ehre").is_empty());
    }

    #[test]
    fn import_symbols_only() {
        let book = Codebook::from_entries(minimal()).unwrap();
        let err = book.clone().import_symbols(vec![entry("X", Category::Slur, &["x"])]).unwrap_err();
        assert!(matches!(err, CodebookError::WrongCategory(..)));
        let book = book.import_symbols(vec![entry("ADL-1", Category::Symbol, &["1488"])]).unwrap();
        assert_eq!(book.scan("code 1488")[0].entry_id, "ADL-1");
    }

    #[test]
    fn shipped_examples() {
        let book = Codebook::shipped();
        assert_eq!(book.by_category(Category::ContemporaryExample).count(), 11);
        assert_eq!(book.get_section("ANNEX2-SYM-88").unwrap().description, "Heil Hitler");
        assert!(book.get_section("IHRA-3.1.7").unwrap().source_quote.contains("right to self-determination"));
        assert!(book.get_section("IHRA-3.1.10").unwrap().source_quote.contains("comparisons of contemporary Israeli policy to that of the Nazis"));
        assert_eq!(book.get_section("IHRA-9.9.9").unwrap_err(), CodebookError::UnknownId("IHRA-9.9.9".into()));
        assert_eq!(book.by_surface_form("88").next().unwrap().entry_id, "ANNEX2-SYM-88");
    }

    #[test]
    fn shipped_scan() {
        let book = Codebook::shipped();
        let hits = book.scan("the number 88 in his handle");
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].entry_id, "ANNEX2-SYM-88");
        assert_eq!(hits[0].span, (11, 13));

        let hits = book.scan("Kike scored twice for Eibar");
        assert_eq!(hits[0].entry_id, "ANNEX2-SLUR-kike");
        assert!(hits[0].ambiguity_note.as_deref().unwrap().contains("footballer"));

        assert!(book.scan("good morning everyone").is_empty());
    }

    #[test]
    fn shipped_manifest_matches() {
        assert!(CodebookManifest::shipped().check(&Codebook::shipped()).is_empty());
    }
}
