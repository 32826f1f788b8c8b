//! Archived tweets, corpus statistics and liveness.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Twitter's `created_at` layout, e.g. `Tue Apr 03 12:00:00 +0000 2018`.
pub const ARCHIVE_TIME_FORMAT: &str = "%a %b %d %H:%M:%S %z %Y";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("tweet id is empty")]
    EmptyId,
    #[error("tweet id {0:?} contains non-digit characters")]
    NonDigitId(String),
    #[error("unparseable timestamp {0:?}")]
    Timestamp(String),
}

/// A tweet id kept as its decimal string so 64-bit ids survive JSON
/// round-trips through tools that read numbers as doubles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct TweetId(String);

impl TweetId {
    pub fn new(id: impl Into<String>) -> Result<Self, RecordError> {
        let id = id.into();
        if id.is_empty() {
            return Err(RecordError::EmptyId);
        }
        if !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(RecordError::NonDigitId(id));
        }
        Ok(TweetId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn significant(&self) -> &str {
        let trimmed = self.0.trim_start_matches('0');
        if trimmed.is_empty() { "0" } else { trimmed }
    }
}

impl<'de> Deserialize<'de> for TweetId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TweetId::new(s).map_err(serde::de::Error::custom)
    }
}

/// Numeric order, which for tweet ids is also creation order.
impl Ord for TweetId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.significant(), other.significant());
        a.len().cmp(&b.len()).then_with(|| a.cmp(b)).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for TweetId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TweetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Liveness {
    Live,
    Deleted,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: TweetId,
    pub text: String,
    pub author_handle: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub retweet_count: u64,
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default)]
    pub live: Liveness,
}

impl TweetRecord {
    pub fn day(&self) -> NaiveDate {
        self.created_at.date_naive()
    }

    pub fn permalink(&self) -> String {
        permalink(&self.tweet_id)
    }
}

pub fn permalink(id: &TweetId) -> String {
    format!("https://twitter.com/i/web/status/{id}")
}

pub fn parse_archive_time(s: &str) -> Result<DateTime<Utc>, RecordError> {
    DateTime::parse_from_str(s, ARCHIVE_TIME_FORMAT)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| RecordError::Timestamp(s.to_string()))
}

pub fn format_archive_time(t: &DateTime<Utc>) -> String {
    t.format(ARCHIVE_TIME_FORMAT).to_string()
}

/// Corpus-level counts for one ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub total_records: u64,
    pub distinct_users: u64,
    pub parse_failures: u64,
    #[serde(rename = "per_day")]
    pub per_day_counts: BTreeMap<NaiveDate, u64>,
}

/// Single-pass builder for [`CorpusStats`].
///
/// Users are keyed on the lowercased screen name; the set of seen names is
/// the only state that grows with the corpus.
#[derive(Debug, Default)]
pub struct StatsAccumulator {
    stats: CorpusStats,
    users: BTreeSet<String>,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        StatsAccumulator { stats: CorpusStats { schema_version: crate::SCHEMA_VERSION, ..Default::default() }, users: BTreeSet::new() }
    }

    pub fn record(&mut self, record: &TweetRecord) {
        self.stats.total_records += 1;
        *self.stats.per_day_counts.entry(record.day()).or_insert(0) += 1;
        if self.users.insert(record.author_handle.to_lowercase()) {
            self.stats.distinct_users += 1;
        }
    }

    pub fn record_failure(&mut self) {
        self.stats.parse_failures += 1;
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn finish(self) -> CorpusStats {
        self.stats
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessWarning {
    pub tweet_id: TweetId,
    pub message: String,
}

/// Sets `live` on every record from the oracle's verdict. Oracle failures
/// leave the record at [`Liveness::Unknown`] and produce a warning; no other
/// field is touched and order is preserved.
pub fn apply_liveness<F, E>(records: &mut [TweetRecord], mut oracle: F) -> Vec<LivenessWarning>
where
    F: FnMut(&TweetId) -> Result<Liveness, E>,
    E: fmt::Display,
{
    let mut warnings = Vec::new();
    for record in records.iter_mut() {
        match oracle(&record.tweet_id) {
            Ok(Liveness::Unknown) => {
                record.live = Liveness::Unknown;
                warnings.push(LivenessWarning { tweet_id: record.tweet_id.clone(), message: "oracle returned no status".into() });
            }
            Ok(status) => record.live = status,
            Err(e) => {
                record.live = Liveness::Unknown;
                warnings.push(LivenessWarning { tweet_id: record.tweet_id.clone(), message: e.to_string() });
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(id: &str, user: &str, when: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: TweetId::new(id).unwrap(),
            text: "x".into(),
            author_handle: user.into(),
            created_at: parse_archive_time(when).unwrap(),
            retweet_count: 0,
            lang: Some("en".into()),
            live: Liveness::Unknown,
        }
    }

    #[test]
    fn tweet_id_validation() {
        assert_eq!(TweetId::new(""), Err(RecordError::EmptyId));
        assert!(matches!(TweetId::new("12a"), Err(RecordError::NonDigitId(_))));
        assert_eq!(TweetId::new("1060000000000000000").unwrap().as_str(), "1060000000000000000");
    }

    #[test]
    fn tweet_id_orders_numerically() {
        let small = TweetId::new("999").unwrap();
        let big = TweetId::new("1000").unwrap();
        assert!(small < big);
    }

    #[test]
    fn archive_time_round_trips() {
        let s = "Tue Apr 03 12:00:00 +0000 2018";
        let t = parse_archive_time(s).unwrap();
        assert_eq!(t.to_rfc3339(), "2018-04-03T12:00:00+00:00");
        assert_eq!(format_archive_time(&t), s);
    }

    #[test]
    fn archive_time_normalises_offset() {
        let t = parse_archive_time("Sat Oct 27 01:30:00 +0200 2018").unwrap();
        assert_eq!(t.date_naive(), NaiveDate::from_ymd_opt(2018, 10, 26).unwrap());
    }

    #[test]
    fn stats_count_users_case_insensitively() {
        let mut acc = StatsAccumulator::new();
        acc.record(&rec("1", "Alice", "Tue Apr 03 12:00:00 +0000 2018"));
        acc.record(&rec("2", "alice", "Tue Apr 03 13:00:00 +0000 2018"));
        acc.record(&rec("3", "bob", "Wed Apr 04 13:00:00 +0000 2018"));
        acc.record_failure();
        let stats = acc.finish();
        assert_eq!(stats.total_records, 3);
        assert_eq!(stats.distinct_users, 2);
        assert_eq!(stats.parse_failures, 1);
        assert_eq!(stats.per_day_counts.values().sum::<u64>(), 3);
    }

    #[test]
    fn stats_json_shape() {
        let mut acc = StatsAccumulator::new();
        acc.record(&rec("1", "a", "Sat Oct 27 12:00:00 +0000 2018"));
        let json = serde_json::to_string(&acc.finish()).unwrap();
        assert_eq!(json, r#"{"schema_version":1,"total_records":1,"distinct_users":1,"parse_failures":0,"per_day":{"2018-10-27":1}}"#);
    }

    #[test]
    fn liveness_oracle_error_leaves_unknown() {
        let mut records = vec![
            rec("1", "a", "Tue Apr 03 12:00:00 +0000 2018"),
            rec("2", "b", "Tue Apr 03 12:00:00 +0000 2018"),
            rec("3", "c", "Tue Apr 03 12:00:00 +0000 2018"),
        ];
        let warnings = apply_liveness(&mut records, |id| match id.as_str() {
            "2" => Err("timeout"),
            "3" => Ok(Liveness::Deleted),
            _ => Ok(Liveness::Live),
        });
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].tweet_id.as_str(), "2");
        let live: Vec<_> = records.iter().map(|r| r.live).collect();
        assert_eq!(live, [Liveness::Live, Liveness::Unknown, Liveness::Deleted]);
    }

    #[test]
    fn liveness_constant_oracle() {
        let mut records = vec![rec("1", "a", "Tue Apr 03 12:00:00 +0000 2018"); 5];
        let before = records.clone();
        assert!(apply_liveness(&mut records, |_| Ok::<_, &str>(Liveness::Live)).is_empty());
        for (after, before) in records.iter().zip(&before) {
            assert_eq!(after.live, Liveness::Live);
            assert_eq!(TweetRecord { live: Liveness::Unknown, ..after.clone() }, *before);
        }
    }
}
