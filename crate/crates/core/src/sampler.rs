//! Stratified random sampling over date ranges.
//!
//! A [`SamplePlan`] splits the calendar into ordered, non-overlapping strata,
//! each with an explicit allocation. [`draw`] takes a simple random sample
//! without replacement inside every stratum.
//!
//! The generator is fixed so draws reproduce across builds and ports:
//!
//! 1. Records sharing a tweet id collapse to the earliest one. Each
//!    stratum's population is then the set of ids whose UTC date falls in
//!    the stratum, sorted by `(created_at, numeric id)`. Input order
//!    therefore does not matter.
//! 2. Stratum `i` uses ChaCha20 seeded with `ChaCha20Rng::seed_from_u64(seed)`
//!    (the `rand_core` PCG32 key expansion) and switched to stream `i`.
//! 3. A partial Fisher–Yates shuffle picks the allocation: for position `k`
//!    an index in `k..n` is drawn with Lemire's widening-multiply rejection
//!    on `next_u64`.
//! 4. The selected records are re-sorted by `(created_at, numeric id)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{NaiveDate, Utc, DateTime};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Liveness, TweetId, TweetRecord};
use crate::query::Matcher;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpec {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub stream_rate: f64,
    pub allocation: u32,
}

impl StratumSpec {
    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start_date <= day && day <= self.end_date
    }

    /// Inclusive length in calendar days.
    pub fn days(&self) -> i64 {
        (self.end_date - self.start_date).num_days() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("plan has no strata")]
    Empty,
    #[error("stratum {0} ends before it starts")]
    InvertedRange(usize),
    #[error("stratum {0} overlaps or precedes the previous stratum")]
    Unordered(usize),
    #[error("stratum {index} has stream rate {rate}, expected a value in (0, 1]")]
    BadRate { index: usize, rate: f64 },
    #[error("allocations sum to {sum} but plan total is {total}")]
    AllocationMismatch { sum: u64, total: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub strata: Vec<StratumSpec>,
    pub total: u64,
    pub seed: u64,
}

fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

impl SamplePlan {
    pub fn new(strata: Vec<StratumSpec>, seed: u64) -> Result<Self, PlanError> {
        let total = strata.iter().map(|s| u64::from(s.allocation)).sum();
        let plan = SamplePlan { schema_version: crate::SCHEMA_VERSION, strata, total, seed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.strata.is_empty() {
            return Err(PlanError::Empty);
        }
        for (index, s) in self.strata.iter().enumerate() {
            if s.start_date > s.end_date {
                return Err(PlanError::InvertedRange(index));
            }
            if !(s.stream_rate > 0.0 && s.stream_rate <= 1.0) {
                return Err(PlanError::BadRate { index, rate: s.stream_rate });
            }
            if index > 0 && s.start_date <= self.strata[index - 1].end_date {
                return Err(PlanError::Unordered(index));
            }
        }
        let sum = self.strata.iter().map(|s| u64::from(s.allocation)).sum();
        if sum != self.total {
            return Err(PlanError::AllocationMismatch { sum, total: self.total });
        }
        Ok(())
    }

    /// The 2018 design: the first half-year and the tail of the year came from
    /// a ten percent stream, 1–25 July from a one percent stream.
    pub fn default_2018(seed: u64) -> Self {
        let strata = alloc::vec![
            StratumSpec { start_date: day(2018, 1, 1), end_date: day(2018, 6, 30), stream_rate: 0.10, allocation: 198 },
            StratumSpec { start_date: day(2018, 7, 1), end_date: day(2018, 7, 25), stream_rate: 0.01, allocation: 26 },
            StratumSpec { start_date: day(2018, 7, 26), end_date: day(2018, 12, 31), stream_rate: 0.10, allocation: 176 },
        ];
        SamplePlan::new(strata, seed).expect("built-in plan is valid")
    }

    pub fn allocations(&self) -> Vec<u32> {
        self.strata.iter().map(|s| s.allocation).collect()
    }

    pub fn stratum_of(&self, day: NaiveDate) -> Option<usize> {
        self.strata.iter().position(|s| s.contains(day))
    }

    /// Stream rate in effect on `day`, if the plan covers it.
    pub fn rate_on(&self, day: NaiveDate) -> Option<f64> {
        self.stratum_of(day).map(|i| self.strata[i].stream_rate)
    }
}

pub fn default_plan_2018(seed: u64) -> SamplePlan {
    SamplePlan::default_2018(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    #[serde(default = "crate::schema_version")]
    pub schema_version: u32,
    pub plan: SamplePlan,
    pub tweet_ids: Vec<TweetId>,
    pub per_stratum_counts: Vec<u64>,
    /// Allocation minus population for each stratum, zero when fully served.
    pub shortfalls: Vec<u64>,
}

/// Uniform integer in `0..bound` (Lemire, "Fast random integer generation in an interval").
fn bounded(rng: &mut impl RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(bound);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

fn stratum_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn chrono_key(r: &TweetRecord) -> (DateTime<Utc>, &TweetId) {
    (r.created_at, &r.tweet_id)
}

/// Draws the stratified sample. Shortfalls are recorded, never fatal.
pub fn draw(plan: &SamplePlan, corpus: &[TweetRecord]) -> SampleDraw {
    let mut tweet_ids = Vec::with_capacity(plan.total as usize);
    let mut per_stratum_counts = Vec::with_capacity(plan.strata.len());
    let mut shortfalls = Vec::with_capacity(plan.strata.len());

    let mut earliest: BTreeMap<&TweetId, &TweetRecord> = BTreeMap::new();
    for r in corpus {
        earliest.entry(&r.tweet_id).and_modify(|e| if r.created_at < e.created_at { *e = r }).or_insert(r);
    }

    for (index, stratum) in plan.strata.iter().enumerate() {
        let mut population: Vec<&TweetRecord> = earliest.values().copied().filter(|r| stratum.contains(r.day())).collect();
        population.sort_by(|a, b| chrono_key(a).cmp(&chrono_key(b)));

        let n = population.len();
        let take = (stratum.allocation as usize).min(n);
        let mut rng = stratum_rng(plan.seed, index);
        for k in 0..take {
            let j = k + bounded(&mut rng, (n - k) as u64) as usize;
            population.swap(k, j);
        }
        let mut chosen = population[..take].to_vec();
        chosen.sort_by(|a, b| chrono_key(a).cmp(&chrono_key(b)));
        tweet_ids.extend(chosen.into_iter().map(|r| r.tweet_id.clone()));

        per_stratum_counts.push(take as u64);
        shortfalls.push(u64::from(stratum.allocation) - take as u64);
    }

    SampleDraw { schema_version: crate::SCHEMA_VERSION, plan: plan.clone(), tweet_ids, per_stratum_counts, shortfalls }
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Keep records whose liveness was never established.
    pub keep_unknown: bool,
    /// Archive language tags accepted as non-foreign. A missing tag counts as `und`.
    pub languages: Vec<String>,
    /// Prefix matcher carrying the jewelry exclusion set, for `Jew*` samples.
    pub jewelry: Option<Matcher>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { keep_unknown: false, languages: alloc::vec!["en".to_string(), "und".to_string()], jewelry: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiscardReport {
    pub deleted: u64,
    pub unknown_liveness: u64,
    pub foreign_language: u64,
    pub jewelry: u64,
    /// Drawn ids with no matching record in the supplied corpus.
    pub missing: u64,
}

impl DiscardReport {
    pub fn total(&self) -> u64 {
        self.deleted + self.unknown_liveness + self.foreign_language + self.jewelry + self.missing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    Deleted,
    UnknownLiveness,
    ForeignLanguage,
    Jewelry,
}

/// First applicable reason in the order deleted, unknown, foreign, jewelry.
pub fn discard_reason(record: &TweetRecord, config: &FilterConfig) -> Option<DiscardReason> {
    match record.live {
        Liveness::Deleted => return Some(DiscardReason::Deleted),
        Liveness::Unknown if !config.keep_unknown => return Some(DiscardReason::UnknownLiveness),
        _ => {}
    }
    let lang = record.lang.as_deref().unwrap_or("und");
    if !config.languages.iter().any(|l| l.eq_ignore_ascii_case(lang)) {
        return Some(DiscardReason::ForeignLanguage);
    }
    if let Some(matcher) = &config.jewelry {
        if matcher.is_excluded(&record.text) {
            return Some(DiscardReason::Jewelry);
        }
    }
    None
}

/// Reduces a draw to the records annotators will see, in draw order.
pub fn filter_for_annotation(draw: &SampleDraw, records: &[TweetRecord], config: &FilterConfig) -> (Vec<TweetRecord>, DiscardReport) {
    let mut report = DiscardReport::default();
    let mut kept = Vec::new();
    let wanted: BTreeSet<&TweetId> = draw.tweet_ids.iter().collect();
    let mut by_id = BTreeMap::new();
    for r in records.iter().filter(|r| wanted.contains(&r.tweet_id)) {
        by_id.entry(&r.tweet_id).or_insert(r);
    }
    for id in &draw.tweet_ids {
        let Some(&record) = by_id.get(id) else {
            report.missing += 1;
            continue;
        };
        match discard_reason(record, config) {
            None => kept.push(record.clone()),
            Some(DiscardReason::Deleted) => report.deleted += 1,
            Some(DiscardReason::UnknownLiveness) => report.unknown_liveness += 1,
            Some(DiscardReason::ForeignLanguage) => report.foreign_language += 1,
            Some(DiscardReason::Jewelry) => report.jewelry += 1,
        }
    }
    (kept, report)
}
