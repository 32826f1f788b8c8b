//! Annotation records and their validation.
//!
//! Both judgment scales are signed five-point scales from −2 to +2. For the
//! antisemitism score positive means antisemitic:
//!
//! | value | meaning |
//! |------:|---------|
//! | +2 | antisemitic (confident) |
//! | +1 | antisemitic (not confident) |
//! |  0 | not comprehensible |
//! | −1 | not antisemitic (not confident) |
//! | −2 | not antisemitic (confident) |
//!
//! Sentiment towards Jews, Judaism or Israel runs from −2 (very negative)
//! through 0 (neutral or not comprehensible) to +2 (very positive).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize};

use crate::codebook::CodebookHit;
use crate::corpus::TweetId;

/// A value on a −2..=+2 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Scale(i8);

impl Scale {
    pub const MIN: i64 = -2;
    pub const MAX: i64 = 2;
    pub const ALL: [Scale; 5] = [Scale(-2), Scale(-1), Scale(0), Scale(1), Scale(2)];

    pub fn new(value: i64) -> Option<Self> {
        (Self::MIN..=Self::MAX).contains(&value).then_some(Scale(value as i8))
    }

    pub fn value(self) -> i8 {
        self.0
    }

    /// Position in `ALL`, 0 for −2 up to 4 for +2.
    pub fn index(self) -> usize {
        (self.0 + 2) as usize
    }

    pub fn antisemitism_label(self) -> &'static str {
        match self.0 {
            2 => "antisemitic (confident)",
            1 => "antisemitic (not confident)",
            0 => "not comprehensible",
            -1 => "not antisemitic (not confident)",
            _ => "not antisemitic (confident)",
        }
    }

    pub fn sentiment_label(self) -> &'static str {
        match self.0 {
            2 => "very positive",
            1 => "positive",
            0 => "neutral or not comprehensible",
            -1 => "negative",
            _ => "very negative",
        }
    }
}

impl<'de> Deserialize<'de> for Scale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Scale::new(v).ok_or_else(|| serde::de::Error::custom(alloc::format!("{v} is outside -2..=2")))
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    pub display_name: String,
    /// The annotator confirmed training on the codebook.
    #[serde(default)]
    pub training_ack: bool,
}

impl AnnotatorProfile {
    pub fn new(id: impl Into<String>) -> Self {
        let annotator_id = id.into();
        AnnotatorProfile { display_name: annotator_id.clone(), annotator_id, training_ack: true }
    }
}

/// One tweet as presented to an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub sample_id: String,
    pub tweet_id: TweetId,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub author_handle: String,
    pub permalink: String,
    pub codebook_hits: Vec<CodebookHit>,
    /// 1-based position within the annotator's queue.
    pub position: usize,
    pub total: usize,
}

/// A stored judgment of one tweet by one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample_id: String,
    pub tweet_id: TweetId,
    pub annotator_id: String,
    pub deleted: bool,
    pub foreign_language: bool,
    pub score: Option<Scale>,
    pub ihra_disagree: bool,
    pub alt_judgment: Option<Scale>,
    pub sentiment: Option<Scale>,
    pub calling_out: bool,
    pub comment: String,
    pub duration_seconds: f64,
    pub submitted_at: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn key(&self) -> (&str, &TweetId, &str) {
        (&self.sample_id, &self.tweet_id, &self.annotator_id)
    }

    /// Deleted and foreign-language tweets carry no judgment.
    pub fn is_scored(&self) -> bool {
        !self.deleted && !self.foreign_language && self.score.is_some()
    }
}

/// Raw submission as it arrives over the wire. Scale fields are plain
/// integers here so that out-of-range values become field-level validation
/// errors instead of parse failures.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSubmission {
    pub sample_id: String,
    pub tweet_id: String,
    pub annotator_id: String,
    #[serde(default)]
    pub deleted: bool,
    #[serde(default)]
    pub foreign_language: bool,
    #[serde(default)]
    pub score: Option<i64>,
    #[serde(default)]
    pub ihra_disagree: bool,
    #[serde(default)]
    pub alt_judgment: Option<i64>,
    #[serde(default)]
    pub sentiment: Option<i64>,
    #[serde(default)]
    pub calling_out: bool,
    #[serde(default)]
    pub comment: String,
    #[serde(default)]
    pub duration_seconds: f64,
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        FieldError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn scale_field(field: &str, value: Option<i64>, errors: &mut Vec<FieldError>) -> Option<Scale> {
    let v = value?;
    let scale = Scale::new(v);
    if scale.is_none() {
        errors.push(FieldError::new(field, alloc::format!("{v} is outside the scale -2..=2")));
    }
    scale
}

impl AnnotationSubmission {
    /// Validates the submission, stamping `now` when the client sent no
    /// submission time. All violations are reported, not just the first.
    pub fn validate(self, now: DateTime<Utc>) -> Result<AnnotationRecord, Vec<FieldError>> {
        let mut errors = Vec::new();
        if self.sample_id.is_empty() {
            errors.push(FieldError::new("sample_id", "must not be empty"));
        }
        if self.annotator_id.is_empty() {
            errors.push(FieldError::new("annotator_id", "must not be empty"));
        }
        let tweet_id = TweetId::new(self.tweet_id.clone()).map_err(|e| errors.push(FieldError::new("tweet_id", alloc::format!("{e}")))).ok();

        let score = scale_field("score", self.score, &mut errors);
        let sentiment = scale_field("sentiment", self.sentiment, &mut errors);
        let alt_judgment = scale_field("alt_judgment", self.alt_judgment, &mut errors);

        let excluded = self.deleted || self.foreign_language;
        let flag = if self.deleted { "deleted" } else { "foreign-language" };
        if excluded {
            if self.score.is_some() {
                errors.push(FieldError::new("score", alloc::format!("must be absent on a {flag} tweet")));
            }
            if self.sentiment.is_some() {
                errors.push(FieldError::new("sentiment", alloc::format!("must be absent on a {flag} tweet")));
            }
            if self.alt_judgment.is_some() {
                errors.push(FieldError::new("alt_judgment", alloc::format!("must be absent on a {flag} tweet")));
            }
        } else {
            if self.score.is_none() {
                errors.push(FieldError::new("score", "required unless the tweet is flagged deleted or foreign-language"));
            }
            if self.sentiment.is_none() {
                errors.push(FieldError::new("sentiment", "required unless the tweet is flagged deleted or foreign-language"));
            }
        }
        if self.alt_judgment.is_some() && !self.ihra_disagree {
            errors.push(FieldError::new("alt_judgment", "only allowed together with ihra_disagree"));
        }
        if !self.duration_seconds.is_finite() || self.duration_seconds < 0.0 {
            errors.push(FieldError::new("duration_seconds", "must be a non-negative number"));
        }

        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(AnnotationRecord {
            sample_id: self.sample_id,
            tweet_id: tweet_id.expect("validated above"),
            annotator_id: self.annotator_id,
            deleted: self.deleted,
            foreign_language: self.foreign_language,
            score,
            ihra_disagree: self.ihra_disagree,
            alt_judgment,
            sentiment,
            calling_out: self.calling_out,
            comment: self.comment,
            duration_seconds: self.duration_seconds,
            submitted_at: self.submitted_at.unwrap_or(now),
        })
    }
}

impl From<&AnnotationRecord> for AnnotationSubmission {
    fn from(r: &AnnotationRecord) -> Self {
        AnnotationSubmission {
            sample_id: r.sample_id.clone(),
            tweet_id: r.tweet_id.as_str().into(),
            annotator_id: r.annotator_id.clone(),
            deleted: r.deleted,
            foreign_language: r.foreign_language,
            score: r.score.map(|s| s.value().into()),
            ihra_disagree: r.ihra_disagree,
            alt_judgment: r.alt_judgment.map(|s| s.value().into()),
            sentiment: r.sentiment.map(|s| s.value().into()),
            calling_out: r.calling_out,
            comment: r.comment.clone(),
            duration_seconds: r.duration_seconds,
            submitted_at: Some(r.submitted_at),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2019, 3, 1, 12, 0, 0).unwrap()
    }

    fn base() -> AnnotationSubmission {
        AnnotationSubmission {
            sample_id: "jew-2018".into(),
            tweet_id: "1060000000000000000".into(),
            annotator_id: "B".into(),
            score: Some(2),
            sentiment: Some(-2),
            duration_seconds: 95.5,
            ..Default::default()
        }
    }

    fn fields(errors: Vec<FieldError>) -> Vec<String> {
        errors.into_iter().map(|e| e.field).collect()
    }

    #[test]
    fn valid_record_accepted() {
        let r = base().validate(now()).unwrap();
        assert_eq!(r.score, Scale::new(2));
        assert_eq!(r.sentiment, Scale::new(-2));
        assert!(!r.calling_out);
        assert_eq!(r.submitted_at, now());
        assert!(r.is_scored());
    }

    #[test]
    fn out_of_range_score() {
        let s = AnnotationSubmission { score: Some(3), ..base() };
        assert_eq!(fields(s.validate(now()).unwrap_err()), ["score"]);
    }

    #[test]
    fn deleted_with_score() {
        let s = AnnotationSubmission { deleted: true, score: Some(-1), sentiment: None, ..base() };
        assert_eq!(fields(s.validate(now()).unwrap_err()), ["score"]);
    }

    #[test]
    fn foreign_without_scores_ok() {
        let s = AnnotationSubmission { foreign_language: true, score: None, sentiment: None, ..base() };
        let r = s.validate(now()).unwrap();
        assert!(!r.is_scored());
    }

    #[test]
    fn live_tweet_needs_score() {
        let s = AnnotationSubmission { score: None, sentiment: None, ..base() };
        assert_eq!(fields(s.validate(now()).unwrap_err()), ["score", "sentiment"]);
    }

    #[test]
    fn alt_judgment_requires_disagreement() {
        let s = AnnotationSubmission { alt_judgment: Some(1), ..base() };
        assert_eq!(fields(s.validate(now()).unwrap_err()), ["alt_judgment"]);
        let s = AnnotationSubmission { alt_judgment: Some(1), ihra_disagree: true, ..base() };
        assert_eq!(s.validate(now()).unwrap().alt_judgment, Scale::new(1));
    }

    #[test]
    fn bad_duration_and_ids() {
        let s = AnnotationSubmission { duration_seconds: -1.0, tweet_id: "x1".into(), annotator_id: String::new(), ..base() };
        assert_eq!(fields(s.validate(now()).unwrap_err()), ["annotator_id", "tweet_id", "duration_seconds"]);
    }

    #[test]
    fn scale_json() {
        assert_eq!(serde_json::to_string(&Scale::new(-2).unwrap()).unwrap(), "-2");
        assert!(serde_json::from_str::<Scale>("3").is_err());
        assert_eq!(Scale::new(1).unwrap().antisemitism_label(), "antisemitic (not confident)");
    }

    #[test]
    fn record_to_submission_round_trip() {
        let r = AnnotationSubmission { ihra_disagree: true, alt_judgment: Some(0), calling_out: true, comment: "irony".into(), ..base() }
            .validate(now())
            .unwrap();
        let again = AnnotationSubmission::from(&r).validate(now()).unwrap();
        assert_eq!(again, r);
    }
}
