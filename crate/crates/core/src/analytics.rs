//! Summary statistics: margin of error, category proportions,
//! inter-annotator agreement and daily timelines.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotationRecord, Scale};
use crate::corpus::{TweetId, TweetRecord};
use crate::sampler::SamplePlan;

/// Two-sided 95% critical value of the standard normal distribution.
pub const Z_95: f64 = 1.959964;
/// Upper bound on the share of antisemitic tweets assumed when planning samples.
pub const DEFAULT_ASSUMED_PROPORTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("proportion {0} is outside [0, 1]")]
    Proportion(f64),
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("confidence {0} is outside (0, 1)")]
    Confidence(f64),
    #[error("margin of error {0} is outside (0, 1)")]
    MarginOfError(f64),
    #[error("no scored annotations to summarize")]
    Empty,
    #[error("annotations mix samples or annotators ({0})")]
    Mixed(String),
    #[error("the two annotators share no scored tweets")]
    EmptyIntersection,
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error below 1.15e-9) with
/// fixed coefficients, so results are identical wherever it is evaluated.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02, 1.38357751867269e+02, -3.066479806614716e+01, 2.506628277459239e+00];
    const B: [f64; 5] = [-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02, 6.680131188771972e+01, -1.328068155288572e+01];
    const C: [f64; 6] = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00, -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0);
    if p < P_LOW {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - P_LOW {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Two-sided critical value for a confidence level; exactly [`Z_95`] at 95%.
pub fn z_value(confidence: f64) -> Result<f64, AnalyticsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(AnalyticsError::Confidence(confidence));
    }
    if (confidence - 0.95).abs() < 1e-12 {
        return Ok(Z_95);
    }
    Ok(normal_quantile(1.0 - (1.0 - confidence) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoEQuery {
    pub n: u64,
    pub p: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

impl MoEQuery {
    pub fn new(n: u64, p: f64) -> Self {
        MoEQuery { n, p, confidence: 0.95 }
    }
}

fn check_proportion(p: f64) -> Result<(), AnalyticsError> {
    if (0.0..=1.0).contains(&p) { Ok(()) } else { Err(AnalyticsError::Proportion(p)) }
}

/// `z * sqrt(p (1 - p) / n)`.
pub fn margin_of_error(q: &MoEQuery) -> Result<f64, AnalyticsError> {
    check_proportion(q.p)?;
    if q.n == 0 {
        return Err(AnalyticsError::ZeroSampleSize);
    }
    let z = z_value(q.confidence)?;
    Ok(z * libm::sqrt(q.p * (1.0 - q.p) / q.n as f64))
}

/// Smallest `n` with `p (1 - p) (z / me)^2 <= n`, i.e. the ceiling of the
/// classic sample-size formula.
pub fn required_sample_size(p: f64, me: f64, confidence: f64) -> Result<u64, AnalyticsError> {
    check_proportion(p)?;
    if !(me > 0.0 && me < 1.0) {
        return Err(AnalyticsError::MarginOfError(me));
    }
    let z = z_value(confidence)?;
    let exact = p * (1.0 - p) * (z / me) * (z / me);
    let mut n = libm::ceil(exact) as u64;
    // ceil of a value that rounded just under an integer
    if n > 0 && z * libm::sqrt(p * (1.0 - p) / n as f64) > me {
        n += 1;
    }
    Ok(n)
}

/// `100 * count / n` rounded half-up to one decimal, computed in integers.
pub fn percent_one_decimal(count: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let tenths = (2000 * u128::from(count) + u128::from(n)) / (2 * u128::from(n));
    tenths as f64 / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub count: u64,
    pub percent: f64,
}

impl CategoryCount {
    fn of(count: u64, n: u64) -> Self {
        CategoryCount { count, percent: percent_one_decimal(count, n) }
    }
}

/// Per-annotator category counts for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionSummary {
    pub sample_id: String,
    pub annotator_id: String,
    pub n: u64,
    pub confident_antisemitic: CategoryCount,
    pub probably_antisemitic: CategoryCount,
    pub sum_antisemitic: CategoryCount,
    pub not_comprehensible: CategoryCount,
    pub probably_not: CategoryCount,
    pub confident_not: CategoryCount,
    pub calling_out: CategoryCount,
    /// Assumed true proportion used for `moe_at_p`.
    pub assumed_p: f64,
    pub moe_at_p: f64,
    pub mean_duration_seconds: f64,
}

/// Summarizes one annotator's judgments of one sample. Deleted and
/// foreign-language records are skipped; `n` counts the scored ones.
pub fn summarize(records: &[AnnotationRecord]) -> Result<ProportionSummary, AnalyticsError> {
    summarize_with(records, DEFAULT_ASSUMED_PROPORTION, 0.95)
}

pub fn summarize_with(records: &[AnnotationRecord], assumed_p: f64, confidence: f64) -> Result<ProportionSummary, AnalyticsError> {
    let first = records.first().ok_or(AnalyticsError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.sample_id != first.sample_id || r.annotator_id != first.annotator_id) {
        let mut msg = String::new();
        let _ = write!(msg, "{}/{} vs {}/{}", first.sample_id, first.annotator_id, other.sample_id, other.annotator_id);
        return Err(AnalyticsError::Mixed(msg));
    }
    let mut by_score = [0u64; 5];
    let mut calling_out = 0;
    let mut duration = 0.0;
    let mut n = 0u64;
    for r in records.iter().filter(|r| r.is_scored()) {
        let score = r.score.expect("scored");
        by_score[score.index()] += 1;
        if r.calling_out {
            calling_out += 1;
        }
        duration += r.duration_seconds;
        n += 1;
    }
    if n == 0 {
        return Err(AnalyticsError::Empty);
    }
    let at = |v: i64| by_score[Scale::new(v).expect("in range").index()];
    Ok(ProportionSummary {
        sample_id: first.sample_id.clone(),
        annotator_id: first.annotator_id.clone(),
        n,
        confident_antisemitic: CategoryCount::of(at(2), n),
        probably_antisemitic: CategoryCount::of(at(1), n),
        sum_antisemitic: CategoryCount::of(at(2) + at(1), n),
        not_comprehensible: CategoryCount::of(at(0), n),
        probably_not: CategoryCount::of(at(-1), n),
        confident_not: CategoryCount::of(at(-2), n),
        calling_out: CategoryCount::of(calling_out, n),
        assumed_p,
        moe_at_p: margin_of_error(&MoEQuery { n, p: assumed_p, confidence })?,
        mean_duration_seconds: duration / n as f64,
    })
}

/// Renders summaries side by side in the layout of a results table.
pub fn render_table(summaries: &[ProportionSummary]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    let header = summaries.iter().map(|s| alloc::format!("{} {}", s.sample_id, s.annotator_id)).collect();
    rows.push((String::new(), header));
    rows.push(("Sample size".into(), summaries.iter().map(|s| alloc::format!("{}", s.n)).collect()));
    let cells = |f: fn(&ProportionSummary) -> CategoryCount| summaries.iter().map(|s| { let c = f(s); alloc::format!("{} {:.1}%", c.count, c.percent) }).collect::<Vec<_>>();
    rows.push(("Confident antisemitic".into(), cells(|s| s.confident_antisemitic)));
    rows.push(("Probably antisemitic".into(), cells(|s| s.probably_antisemitic)));
    rows.push(("SUM (probably) antisemitic".into(), cells(|s| s.sum_antisemitic)));
    rows.push(("Not comprehensible".into(), cells(|s| s.not_comprehensible)));
    rows.push(("Probably not antisemitic".into(), cells(|s| s.probably_not)));
    rows.push(("Confident not antisemitic".into(), cells(|s| s.confident_not)));
    rows.push(("Calling out antisemitism".into(), cells(|s| s.calling_out)));
    rows.push(("Margin of error".into(), summaries.iter().map(|s| alloc::format!("{:.1}%", s.moe_at_p * 100.0)).collect()));

    let label_width = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let col_width = rows.iter().flat_map(|(_, c)| c.iter().map(|s| s.chars().count())).max().unwrap_or(0);
    let mut out = String::new();
    for (label, cells) in rows {
        let _ = write!(out, "{label:<label_width$}");
        for cell in cells {
            let _ = write!(out, "  {cell:>col_width$}");
        }
        out.push('\n');
    }
    out
}

/// Cohen's kappa from a square confusion matrix. When chance agreement is
/// total (both raters constant on the same class) the raters agree
/// perfectly and kappa is taken as 1.
pub fn cohen_kappa<const K: usize>(matrix: &[[u64; K]; K]) -> Option<f64> {
    let n: u64 = matrix.iter().flatten().sum();
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let observed = (0..K).map(|i| matrix[i][i]).sum::<u64>() as f64 / n;
    let chance: f64 = (0..K)
        .map(|i| {
            let row: u64 = matrix[i].iter().sum();
            let col: u64 = matrix.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if chance >= 1.0 {
        return Some(1.0);
    }
    Some((observed - chance) / (1.0 - chance))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotator_a: String,
    pub annotator_b: String,
    pub n_common: u64,
    /// Rows are annotator A's score, columns annotator B's, both indexed −2..=+2.
    pub confusion_matrix: [[u64; 5]; 5],
    pub percent_agreement_5way: f64,
    pub kappa_5way: f64,
    /// Common tweets that neither annotator scored 0.
    pub n_binary: u64,
    pub percent_agreement_binary: Option<f64>,
    pub kappa_binary: Option<f64>,
    /// Tweets on which the binary labels differ.
    pub disagreement_list: Vec<TweetId>,
}

/// Binary label: `Some(true)` for antisemitic (+1, +2), `Some(false)` for
/// not antisemitic (−1, −2), `None` for not comprehensible.
pub fn binary_label(score: Scale) -> Option<bool> {
    match score.value() {
        0 => None,
        v => Some(v > 0),
    }
}

fn scored_by_tweet(records: &[AnnotationRecord]) -> BTreeMap<&TweetId, Scale> {
    records.iter().filter(|r| r.is_scored()).map(|r| (&r.tweet_id, r.score.expect("scored"))).collect()
}

/// Compares two annotators over the tweets both of them scored.
pub fn agreement(records_a: &[AnnotationRecord], records_b: &[AnnotationRecord]) -> Result<AgreementReport, AnalyticsError> {
    let a = scored_by_tweet(records_a);
    let b = scored_by_tweet(records_b);
    let mut matrix = [[0u64; 5]; 5];
    let mut binary = [[0u64; 2]; 2];
    let mut disagreement_list = Vec::new();
    let mut n_common = 0;
    for (id, sa) in &a {
        let Some(sb) = b.get(id) else { continue };
        n_common += 1;
        matrix[sa.index()][sb.index()] += 1;
        if let (Some(la), Some(lb)) = (binary_label(*sa), binary_label(*sb)) {
            binary[usize::from(la)][usize::from(lb)] += 1;
            if la != lb {
                disagreement_list.push((*id).clone());
            }
        }
    }
    if n_common == 0 {
        return Err(AnalyticsError::EmptyIntersection);
    }
    let agree5: u64 = (0..5).map(|i| matrix[i][i]).sum();
    let n_binary: u64 = binary.iter().flatten().sum();
    let agree2 = binary[0][0] + binary[1][1];
    let name = |rs: &[AnnotationRecord]| rs.first().map(|r| r.annotator_id.clone()).unwrap_or_default();
    Ok(AgreementReport {
        annotator_a: name(records_a),
        annotator_b: name(records_b),
        n_common,
        confusion_matrix: matrix,
        percent_agreement_5way: agree5 as f64 / n_common as f64,
        kappa_5way: cohen_kappa(&matrix).expect("non-empty"),
        n_binary,
        percent_agreement_binary: (n_binary > 0).then(|| agree2 as f64 / n_binary as f64),
        kappa_binary: cohen_kappa(&binary),
        disagreement_list,
    })
}

/// Tweets per UTC day. Values are `f64` so that rate-normalized volumes
/// share the representation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimelineBucket {
    pub counts: BTreeMap<NaiveDate, f64>,
}

impl TimelineBucket {
    pub fn from_counts(counts: &BTreeMap<NaiveDate, u64>) -> Self {
        TimelineBucket { counts: counts.iter().map(|(&d, &c)| (d, c as f64)).collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Scales each day by the inverse stream rate in effect that day,
    /// estimating full-stream volume. Days outside the plan are unchanged.
    pub fn normalized(&self, plan: &SamplePlan) -> Self {
        let counts = self.counts.iter().map(|(&d, &c)| (d, plan.rate_on(d).map_or(c, |rate| c / rate))).collect();
        TimelineBucket { counts }
    }

    /// `date,count` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,count\n");
        for (d, c) in &self.counts {
            let _ = writeln!(out, "{d},{c}");
        }
        out
    }
}

/// Daily counts of the records' UTC creation dates.
pub fn timeline(records: &[TweetRecord]) -> TimelineBucket {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.day()).or_insert(0.0) += 1.0;
    }
    TimelineBucket { counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub date: NaiveDate,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakReport {
    pub peaks: Vec<Peak>,
}

/// The `k` busiest non-empty days, by count descending and then by date.
pub fn top_peaks(bucket: &TimelineBucket, k: usize) -> PeakReport {
    let mut peaks: Vec<Peak> = bucket.counts.iter().filter(|(_, &c)| c > 0.0).map(|(&date, &count)| Peak { date, count }).collect();
    peaks.sort_by(|a, b| b.count.total_cmp(&a.count).then(a.date.cmp(&b.date)));
    peaks.truncate(k);
    PeakReport { peaks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::AnnotationSubmission;
    use alloc::format;
    use alloc::vec;
    use chrono::{TimeZone, Utc};

    fn ann(annotator: &str, tweet: u64, score: i64, calling_out: bool) -> AnnotationRecord {
        AnnotationSubmission {
            sample_id: "s".into(),
            tweet_id: format!("{tweet}"),
            annotator_id: annotator.into(),
            score: Some(score),
            sentiment: Some(0),
            calling_out,
            duration_seconds: 120.0,
            ..Default::default()
        }
        .validate(Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap())
        .unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn moe_reported_values() {
        let m172 = margin_of_error(&MoEQuery::new(172, 0.2)).unwrap();
        assert!(close(m172, 0.0598, 5e-5), "{m172}");
        let m247 = margin_of_error(&MoEQuery::new(247, 0.2)).unwrap();
        assert!(close(m247, 0.0499, 5e-5), "{m247}");
        assert_eq!(margin_of_error(&MoEQuery::new(10, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn moe_input_errors() {
        assert_eq!(margin_of_error(&MoEQuery::new(0, 0.2)), Err(AnalyticsError::ZeroSampleSize));
        assert_eq!(margin_of_error(&MoEQuery::new(5, 1.2)), Err(AnalyticsError::Proportion(1.2)));
        assert!(matches!(margin_of_error(&MoEQuery { n: 5, p: 0.2, confidence: 1.0 }), Err(AnalyticsError::Confidence(_))));
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(required_sample_size(0.2, 0.04, 0.95).unwrap(), 385);
        assert_eq!(required_sample_size(0.5, 0.05, 0.95).unwrap(), 385);
        assert_eq!(required_sample_size(0.0, 0.05, 0.95).unwrap(), 0);
        assert_eq!(required_sample_size(0.2, 0.0, 0.95), Err(AnalyticsError::MarginOfError(0.0)));
    }

    #[test]
    fn quantile_known_points() {
        // reference values of the standard normal quantile
        assert!(close(normal_quantile(0.975), 1.959963984540054, 1e-8));
        assert!(close(normal_quantile(0.995), 2.575829303548901, 1e-8));
        assert!(close(normal_quantile(0.5), 0.0, 1e-15));
        assert!(close(normal_quantile(0.01), -2.326347874040841, 1e-8));
        assert_eq!(z_value(0.95).unwrap(), Z_95);
        assert!(close(z_value(0.99).unwrap(), 2.575829303548901, 1e-8));
    }

    #[test]
    fn percent_rounding_is_half_up() {
        assert_eq!(percent_one_decimal(10, 172), 5.8);
        assert_eq!(percent_one_decimal(31, 172), 18.0);
        assert_eq!(percent_one_decimal(1, 8), 12.5);
        assert_eq!(percent_one_decimal(1, 16), 6.3); // 6.25 rounds up
        assert_eq!(percent_one_decimal(1, 0), 0.0);
    }

    #[test]
    fn summarize_all_negative() {
        let records: Vec<_> = (0..5).map(|i| ann("B", i, -2, false)).collect();
        let s = summarize(&records).unwrap();
        assert_eq!(s.n, 5);
        assert_eq!(s.confident_not.percent, 100.0);
        assert_eq!(s.sum_antisemitic.count, 0);
        assert_eq!(s.calling_out.count, 0);
        assert_eq!(s.mean_duration_seconds, 120.0);
    }

    #[test]
    fn summarize_rejects_empty_and_mixed() {
        assert_eq!(summarize(&[]), Err(AnalyticsError::Empty));
        assert!(matches!(summarize(&[ann("B", 1, 0, false), ann("G", 2, 0, false)]), Err(AnalyticsError::Mixed(_))));
    }

    #[test]
    fn agreement_hand_example() {
        let a: Vec<_> = [2, 1, -2, -1].iter().enumerate().map(|(i, &s)| ann("A", i as u64, s, false)).collect();
        let b: Vec<_> = [2, -1, -2, -1].iter().enumerate().map(|(i, &s)| ann("B", i as u64, s, false)).collect();
        let r = agreement(&a, &b).unwrap();
        assert_eq!(r.n_common, 4);
        assert_eq!(r.percent_agreement_5way, 0.75);
        assert_eq!(r.percent_agreement_binary, Some(0.75));
        assert_eq!(r.disagreement_list, [TweetId::new("1").unwrap()]);
        // binary table [[2,0],[1,1]]: po = 3/4, pe = (2/4)(3/4) + (2/4)(1/4) = 1/2
        assert!(close(r.kappa_binary.unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn agreement_with_self_is_total() {
        let a: Vec<_> = [2, 0, -1, 1, -2].iter().enumerate().map(|(i, &s)| ann("A", i as u64, s, false)).collect();
        let r = agreement(&a, &a).unwrap();
        assert_eq!(r.percent_agreement_5way, 1.0);
        assert_eq!(r.kappa_5way, 1.0);
        assert_eq!(r.kappa_binary, Some(1.0));
        assert_eq!(r.n_binary, 4);
    }

    #[test]
    fn agreement_needs_overlap() {
        assert_eq!(agreement(&[ann("A", 1, 1, false)], &[ann("B", 2, 1, false)]), Err(AnalyticsError::EmptyIntersection));
    }

    #[test]
    fn peaks_order_and_ties() {
        let d = |m, day| NaiveDate::from_ymd_opt(2018, m, day).unwrap();
        let bucket = TimelineBucket { counts: [(d(1, 2), 5.0), (d(1, 1), 5.0), (d(3, 1), 9.0), (d(4, 1), 0.0)].into_iter().collect() };
        let report = top_peaks(&bucket, 10);
        let dates: Vec<_> = report.peaks.iter().map(|p| p.date).collect();
        assert_eq!(dates, [d(3, 1), d(1, 1), d(1, 2)]);
        assert_eq!(top_peaks(&bucket, 1).peaks.len(), 1);
        assert!(top_peaks(&TimelineBucket::default(), 3).peaks.is_empty());
    }

    #[test]
    fn july_normalization() {
        let d = NaiveDate::from_ymd_opt(2018, 7, 10).unwrap();
        let outside = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let bucket = TimelineBucket { counts: [(d, 3.0), (outside, 4.0)].into_iter().collect() };
        let n = bucket.normalized(&SamplePlan::default_2018(0));
        assert_eq!(n.counts[&d], 300.0);
        assert_eq!(n.counts[&outside], 4.0);
        assert_eq!(bucket.to_csv(), "date,count\n2018-07-10,3\n2019-01-01,4\n");
    }

    #[test]
    fn table_renders_rows() {
        let records = vec![ann("B", 1, 2, true), ann("B", 2, -2, false)];
        let table = render_table(&[summarize(&records).unwrap()]);
        assert!(table.contains("Confident antisemitic"));
        assert!(table.contains("1 50.0%"));
    }
}
