use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use workbench::cli;
use workbench::ingest::{self, Ingestion, LivenessTable};
use workbench_core::corpus::apply_liveness;
use workbench_core::{Liveness, QuerySpec, TweetRecord};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ingest_all(path: &Path, query: Option<QuerySpec>) -> (Vec<TweetRecord>, workbench_core::CorpusStats) {
    let mut ing = ingest::ingest_archives(&[path.to_path_buf()], query.map(|q| q.compile().unwrap())).unwrap();
    let records: Vec<_> = ing.by_ref().collect();
    (records, ing.finish().unwrap())
}

#[test]
fn full_fixture_parses_every_line() {
    let path = fixture("jew_172.ndjson");
    let lines = fs::read_to_string(&path).unwrap().lines().filter(|l| !l.trim().is_empty()).count();
    let (records, stats) = ingest_all(&path, None);
    assert_eq!(records.len(), lines);
    assert_eq!(stats.total_records, 172);
    assert_eq!(stats.parse_failures, 0);
    assert_eq!(stats.per_day_counts.values().sum::<u64>(), 172);
    // truncated tweets carry their full text
    assert!(records[0].text.ends_with("(continued)"));
}

#[test]
fn israel_query_keeps_whole_words() {
    let (records, stats) = ingest_all(&fixture("israel_10.ndjson"), Some(QuerySpec::israel()));
    let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    assert_eq!(texts, ["I love Israel!", "Sheriff Scott Israel resigned", "#Israel70 celebrations", "ISRAEL."]);
    assert_eq!(stats.total_records, 4);
}

#[test]
fn duplicate_handles_count_once() {
    let (records, stats) = ingest_all(&fixture("dup_users.ndjson"), Some(QuerySpec::jew()));
    // "new jewelry store" matches the prefix query; exclusion happens at sampling time
    assert_eq!(records.len(), 6);
    let (records, stats_no_jewelry) = {
        let kept: Vec<_> = records.into_iter().filter(|r| !QuerySpec::jew().compile().unwrap().is_excluded(&r.text)).collect();
        let mut acc = workbench_core::corpus::StatsAccumulator::new();
        kept.iter().for_each(|r| acc.record(r));
        (kept, acc.finish())
    };
    assert_eq!(records.len(), 5);
    assert_eq!(stats_no_jewelry.distinct_users, 4);
    assert_eq!(stats.distinct_users, 5);
}

#[test]
fn empty_archive() {
    let (records, stats) = ingest_all(&fixture("empty.ndjson"), Some(QuerySpec::jew()));
    assert!(records.is_empty());
    assert_eq!((stats.total_records, stats.distinct_users, stats.parse_failures), (0, 0, 0));
}

#[test]
fn gzip_detected_by_magic_bytes() {
    let dir = tempfile::tempdir().unwrap();
    // no .gz extension on purpose
    let gz = dir.path().join("archive.ndjson");
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(&fs::read(fixture("jew_172.ndjson")).unwrap()).unwrap();
    fs::write(&gz, enc.finish().unwrap()).unwrap();
    let plain = ingest_all(&fixture("jew_172.ndjson"), None);
    assert_eq!(ingest_all(&gz, None), plain);
}

#[test]
fn ingestion_is_deterministic() {
    let a = ingest_all(&fixture("jew_172.ndjson"), Some(QuerySpec::jew()));
    let b = ingest_all(&fixture("jew_172.ndjson"), Some(QuerySpec::jew()));
    assert_eq!(a, b);
}

#[test]
fn missing_archive_is_an_io_error() {
    let err = ingest::ingest_archives(&[PathBuf::from("/no/such/archive")], None).err().unwrap();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn malformed_lines_are_counted_not_fatal() {
    let good = fs::read_to_string(fixture("israel_10.ndjson")).unwrap();
    let data = format!("{}\n{{\"id_str\":\"5\"}}\nnot json at all\n{}", good.lines().next().unwrap(), good);
    let mut ing = Ingestion::from_reader(data.as_bytes(), None);
    assert_eq!(ing.by_ref().count(), 11);
    assert_eq!(ing.errors().len(), 2);
    assert_eq!(ing.finish().unwrap().parse_failures, 2);
}

#[test]
fn liveness_oracle_deleting_31_of_400() {
    let (base, _) = ingest_all(&fixture("jew_172.ndjson"), None);
    let mut records: Vec<TweetRecord> = (0..400).map(|i| base[i % base.len()].clone()).collect();
    for (i, r) in records.iter_mut().enumerate() {
        r.tweet_id = workbench_core::TweetId::new((1_000_000 + i).to_string()).unwrap();
    }
    let mut csv = String::from("tweet_id,status\n");
    for (i, r) in records.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", r.tweet_id, if i % 13 == 0 { "deleted" } else { "live" }));
    }
    let table = LivenessTable::from_reader(csv.as_bytes(), Path::new("oracle.csv")).unwrap();
    let warnings = apply_liveness(&mut records, |id| table.lookup(id));
    assert!(warnings.is_empty());
    assert_eq!(records.iter().filter(|r| r.live == Liveness::Deleted).count(), 31);
    assert_eq!(records.iter().filter(|r| r.live == Liveness::Live).count(), 369);
}

fn run(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("workbench").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn cli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    // a year of synthetic tweets, dense enough to fill every stratum
    let mut archive = String::new();
    let start = chrono::NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    for i in 0..1460u64 {
        let day = start + chrono::Duration::days((i / 4) as i64);
        let stamp = day.and_hms_opt((i % 24) as u32, 0, 0).unwrap().format("%a %b %d %H:%M:%S +0000 %Y");
        let text = if i % 50 == 0 { "jewelry sale" } else { "Jewish life" };
        archive.push_str(&format!(
            "{{\"id_str\":\"{}\",\"text\":\"{text}\",\"created_at\":\"{stamp}\",\"user\":{{\"screen_name\":\"u{}\"}},\"lang\":\"en\"}}\n",
            10_000 + i,
            i % 97
        ));
    }
    fs::write(d("archive.ndjson"), archive).unwrap();
    let mut oracle = String::from("tweet_id,status\n");
    for i in 0..1460u64 {
        oracle.push_str(&format!("{},{}\n", 10_000 + i, if i % 9 == 0 { "deleted" } else { "live" }));
    }
    fs::write(d("live.csv"), oracle).unwrap();

    let (code, out, _) = run(&["--data-dir", &d("data"), "ingest", "--jew", "--liveness", &d("live.csv"), &d("archive.ndjson")]);
    assert_eq!(code, 0);
    assert!(out.starts_with("1460 records"));
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(d("data/corpus_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["schema_version"], 1);
    assert_eq!(stats["total_records"], 1460);

    let (code, out, err) = run(&[
        "--data-dir",
        &d("data"),
        "--json",
        "sample",
        "--default-2018",
        "--seed",
        "42",
        "--corpus",
        &d("data/corpus.ndjson"),
        "--annotatable",
        &d("annotatable.ndjson"),
        "--jewelry-filter",
    ]);
    assert_eq!(code, 0, "{err}");
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["per_stratum_counts"], serde_json::json!([198, 26, 176]));
    assert_eq!(report["schema_version"], 1);
    let ids = fs::read_to_string(d("data/draw.txt")).unwrap();
    assert_eq!(ids.lines().count(), 400);
    let discards = &report["discards"];
    let kept = fs::read_to_string(d("annotatable.ndjson")).unwrap().lines().count() as u64;
    let dropped: u64 = ["deleted", "unknown_liveness", "foreign_language", "jewelry", "missing"].iter().map(|k| discards[k].as_u64().unwrap()).sum();
    assert_eq!(kept + dropped, 400);
    assert!(discards["deleted"].as_u64().unwrap() > 0);

    // same seed, same draw
    let (_, again, _) = run(&["--data-dir", &d("data"), "--json", "sample", "--default-2018", "--seed", "42", "--corpus", &d("data/corpus.ndjson")]);
    let again: serde_json::Value = serde_json::from_str(&again).unwrap();
    assert_eq!(again["tweet_ids"], report["tweet_ids"]);

    let (code, out, _) = run(&["timeline", "--corpus", &d("data/corpus.ndjson"), "--default-2018", "--top", "1", "--csv", &d("t.csv")]);
    assert_eq!(code, 0);
    // July days are scaled by 100
    assert!(out.starts_with("1. 2018-07-01 400"), "{out}");
    assert!(fs::read_to_string(d("t.csv")).unwrap().starts_with("date,count\n2018-01-01,40\n"));
}

#[test]
fn cli_usage_and_io_exit_codes() {
    assert_eq!(run(&["report", "moe", "--n", "172", "--p", "0.2"]), (0, "0.0598\n".into(), String::new()));
    assert_eq!(run(&["report", "sample-size", "--p", "0.2", "--me", "0.04"]).1, "385\n");
    let (code, out, _) = run(&["codebook-validate"]);
    assert_eq!(code, 0);
    assert!(out.contains("11 contemporary examples"));
    assert_eq!(run(&["--frobnicate"]).0, 1);
    assert_eq!(run(&["sample", "--default-2018", "--corpus", "x"]).0, 1);
    assert_eq!(run(&["sample", "--default-2018", "--plan", "p.json", "--seed", "1", "--corpus", "x"]).0, 1);
    assert_eq!(run(&["report", "moe", "--n", "0", "--p", "0.2"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["sample", "--default-2018", "--seed", "1", "--corpus", "/no/such/file"]).0, 2);
}

#[test]
fn data_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("from-env");
    // the only test in this binary that reads the variable
    std::env::set_var("WORKBENCH_DATA_DIR", &data);
    let (code, _, err) = run(&["ingest", "--all", fixture("israel_10.ndjson").to_str().unwrap()]);
    std::env::remove_var("WORKBENCH_DATA_DIR");
    assert_eq!(code, 0, "{err}");
    assert!(data.join("corpus.ndjson").exists());
    let (records, _) = ingest_all(&data.join("corpus.ndjson"), None);
    assert_eq!(records.len(), 10);
}
