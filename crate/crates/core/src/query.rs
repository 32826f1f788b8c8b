//! Keyword query semantics for archive selection.
//!
//! Two modes exist. In [`MatchMode::WordBoundary`] the pattern must be
//! flanked on both sides by a non-letter or a string edge, so `Israel`
//! matches `"Israel."` but not `"Israelis"`. In [`MatchMode::Prefix`] only
//! the left side is constrained and any suffix is allowed, so `Jew` matches
//! `"#Jewish"`. Letters are Unicode alphabetic characters; digits,
//! punctuation, underscore and emoji all count as signs.
//!
//! Offsets in [`MatchResult::spans`] are character (Unicode scalar) offsets,
//! not byte offsets.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TweetRecord;
use crate::text::{is_letter, matches_at};

/// Misspellings of "jewelry" that are dropped from `Jew*` samples.
pub const JEWELRY_EXCLUSIONS: [&str; 3] = ["jewelry", "jewerly", "jewery"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    WordBoundary,
    Prefix,
}

/// Serializable description of a keyword query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub pattern: String,
    pub mode: MatchMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<String>,
    #[serde(default)]
    pub case_sensitive: bool,
}

impl QuerySpec {
    pub fn word_boundary(pattern: impl Into<String>) -> Self {
        QuerySpec { pattern: pattern.into(), mode: MatchMode::WordBoundary, exclusions: Vec::new(), case_sensitive: false }
    }

    pub fn prefix(pattern: impl Into<String>) -> Self {
        QuerySpec { pattern: pattern.into(), mode: MatchMode::Prefix, exclusions: Vec::new(), case_sensitive: false }
    }

    /// The `"Israel"` query: whole word, derivatives such as "Israelis" excluded.
    pub fn israel() -> Self {
        Self::word_boundary("Israel")
    }

    /// The `"Jew*"` query with the jewelry exclusion set attached.
    pub fn jew() -> Self {
        let mut spec = Self::prefix("Jew");
        spec.exclusions = JEWELRY_EXCLUSIONS.iter().map(|s| String::from(*s)).collect();
        spec
    }

    pub fn compile(&self) -> Result<Matcher, QueryError> {
        Matcher::new(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query pattern is empty")]
    EmptyPattern,
}

/// Outcome of matching one text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    pub spans: Vec<(usize, usize)>,
    /// Every matching token is in the exclusion set (prefix mode only).
    pub excluded_only: bool,
}

/// A compiled, immutable query.
#[derive(Debug, Clone)]
pub struct Matcher {
    pattern: Vec<char>,
    mode: MatchMode,
    exclusions: Vec<String>,
    case_sensitive: bool,
}

impl Matcher {
    pub fn new(spec: &QuerySpec) -> Result<Self, QueryError> {
        if spec.pattern.is_empty() {
            return Err(QueryError::EmptyPattern);
        }
        Ok(Matcher {
            pattern: spec.pattern.chars().collect(),
            mode: spec.mode,
            exclusions: spec.exclusions.iter().map(|e| e.to_lowercase()).collect(),
            case_sensitive: spec.case_sensitive,
        })
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn matches(&self, text: &str) -> MatchResult {
        let chars: Vec<char> = text.chars().collect();
        let plen = self.pattern.len();
        let mut spans = Vec::new();
        let mut all_excluded = true;

        let mut i = 0;
        while i + plen <= chars.len() {
            let left_ok = i == 0 || !is_letter(chars[i - 1]);
            if !left_ok || !matches_at(&chars, i, &self.pattern, self.case_sensitive) {
                i += 1;
                continue;
            }
            let pat_end = i + plen;
            let end = match self.mode {
                MatchMode::WordBoundary => {
                    if pat_end < chars.len() && is_letter(chars[pat_end]) {
                        i += 1;
                        continue;
                    }
                    pat_end
                }
                // The token runs on through any trailing letters.
                MatchMode::Prefix => {
                    let mut end = pat_end;
                    while end < chars.len() && is_letter(chars[end]) {
                        end += 1;
                    }
                    end
                }
            };
            if self.mode == MatchMode::Prefix && all_excluded {
                let token: String = chars[i..end].iter().flat_map(|c| c.to_lowercase()).collect();
                all_excluded = self.exclusions.contains(&token);
            }
            spans.push((i, end));
            i = end.max(i + 1);
        }

        let matched = !spans.is_empty();
        MatchResult {
            matched,
            excluded_only: matched && self.mode == MatchMode::Prefix && !self.exclusions.is_empty() && all_excluded,
            spans,
        }
    }

    /// True when the text matches and every matching token is excluded.
    pub fn is_excluded(&self, text: &str) -> bool {
        self.matches(text).excluded_only
    }
}

/// Whether a `Jew*` record only mentions jewelry (or a misspelling of it) and
/// must therefore be dropped from an annotation sample.
pub fn jewelry_excluded(record: &TweetRecord, matcher: &Matcher) -> bool {
    matcher.is_excluded(&record.text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jew() -> Matcher {
        QuerySpec::jew().compile().unwrap()
    }

    fn israel() -> Matcher {
        QuerySpec::israel().compile().unwrap()
    }

    #[test]
    fn word_boundary_accepts_punctuation_neighbours() {
        assert!(israel().matches("I love Israel!").matched);
        assert!(israel().matches("Sheriff Scott Israel resigned").matched);
        assert_eq!(israel().matches("Israel.").spans, [(0, 6)]);
    }

    #[test]
    fn word_boundary_rejects_derivatives() {
        assert!(!israel().matches("Israelis protest").matched);
        assert!(!israel().matches("proIsrael").matched);
    }

    #[test]
    fn prefix_allows_suffix() {
        let m = jew().matches("Jewish holiday");
        assert!(m.matched);
        assert_eq!(m.spans, [(0, 6)]);
        assert!(!m.excluded_only);
    }

    #[test]
    fn hashtag_offset_is_in_chars() {
        assert_eq!(jew().matches("#Jew").spans, [(1, 4)]);
        // two-byte char before the hashtag still counts as one offset
        assert_eq!(jew().matches("é #Jew").spans, [(3, 6)]);
    }

    #[test]
    fn jewel_is_not_excluded() {
        let m = jew().matches("jewel thief");
        assert!(m.matched);
        assert!(!m.excluded_only);
    }

    #[test]
    fn jewelry_filter() {
        assert!(jew().is_excluded("check out my new jewelry line"));
        assert!(jew().is_excluded("my jewerly shop"));
        assert!(jew().is_excluded("JEWERY sale, jewelry too"));
        assert!(!jew().is_excluded("Jewelry made by a Jew in Tel Aviv"));
        assert!(!jew().is_excluded("nothing relevant"));
    }

    #[test]
    fn letters_before_prefix_block_match() {
        assert!(!jew().matches("bluejewish").matched);
        assert!(jew().matches("3jews").matched);
        assert!(jew().matches("_jew_").matched);
    }

    #[test]
    fn unicode_letters_are_letters() {
        assert!(!israel().matches("Israelé").matched);
        assert!(!israel().matches("éIsrael").matched);
        assert!(israel().matches("🇮🇱Israel🇮🇱").matched);
    }

    #[test]
    fn case_sensitivity_is_opt_in() {
        let mut spec = QuerySpec::israel();
        assert!(spec.compile().unwrap().matches("ISRAEL").matched);
        spec.case_sensitive = true;
        assert!(!spec.compile().unwrap().matches("ISRAEL").matched);
        assert!(spec.compile().unwrap().matches("Israel").matched);
    }

    #[test]
    fn empty_pattern_rejected() {
        assert_eq!(QuerySpec::prefix("").compile().unwrap_err(), QueryError::EmptyPattern);
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_string(&QuerySpec::jew()).unwrap();
        assert_eq!(json, r#"{"pattern":"Jew","mode":"prefix","exclusions":["jewelry","jewerly","jewery"],"case_sensitive":false}"#);
        let back: QuerySpec =
            serde_json::from_str(r#"{"pattern":"Jew","mode":"prefix","exclusions":["jewelry","jewerly","jewery"]}"#).unwrap();
        assert_eq!(back, QuerySpec::jew());
    }
}
