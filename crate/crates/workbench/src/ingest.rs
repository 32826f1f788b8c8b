//! Line-delimited archive ingestion.
//!
//! Archive lines use v1.1-style field names (`id_str`, `full_text`/`text`,
//! `created_at`, `user.screen_name`, `retweet_count`, `lang`). Files may be
//! gzip-compressed; compression is detected from the first two bytes, not
//! the file name. Ingestion is a single pass: parsed records are filtered by
//! the query and handed out one at a time while [`CorpusStats`] accumulate.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use workbench_core::corpus::{format_archive_time, parse_archive_time, StatsAccumulator};
use workbench_core::{CorpusStats, Liveness, Matcher, TweetId, TweetRecord, SCHEMA_VERSION};

use crate::error::{Result, WorkbenchError};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];
/// Parse errors kept verbatim for reporting; the rest are only counted.
const KEPT_ERRORS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Byte offset of the offending line in the decompressed stream.
    pub offset: u64,
    pub line: u64,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} (byte {}): {}", self.line, self.offset, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Deserialize)]
struct RawUser {
    screen_name: Option<String>,
}

#[derive(Deserialize)]
struct RawExtended {
    full_text: Option<String>,
}

#[derive(Deserialize)]
struct RawTweet {
    id_str: Option<String>,
    full_text: Option<String>,
    text: Option<String>,
    extended_tweet: Option<RawExtended>,
    created_at: Option<String>,
    user: Option<RawUser>,
    #[serde(default)]
    retweet_count: Option<u64>,
    lang: Option<String>,
    #[serde(default)]
    live: Option<Liveness>,
}

/// Parses one archive line. `offset` and `line_no` only label errors.
pub fn parse_tweet_line(line: &str, offset: u64, line_no: u64) -> Result<TweetRecord, ParseError> {
    let err = |message: String| ParseError { offset, line: line_no, message };
    let raw: RawTweet = serde_json::from_str(line).map_err(|e| err(format!("malformed record: {e}")))?;

    let id = raw.id_str.ok_or_else(|| err("missing id_str".into()))?;
    let tweet_id = TweetId::new(id).map_err(|e| err(e.to_string()))?;
    let text = raw
        .full_text
        .or(raw.extended_tweet.and_then(|x| x.full_text))
        .or(raw.text)
        .ok_or_else(|| err("missing text".into()))?;
    let created = raw.created_at.ok_or_else(|| err("missing created_at".into()))?;
    let created_at = parse_archive_time(&created).map_err(|e| err(e.to_string()))?;
    let author_handle = raw.user.and_then(|u| u.screen_name).ok_or_else(|| err("missing user.screen_name".into()))?;

    Ok(TweetRecord {
        tweet_id,
        text,
        author_handle,
        created_at,
        retweet_count: raw.retweet_count.unwrap_or(0),
        lang: raw.lang,
        live: raw.live.unwrap_or_default(),
    })
}

/// Opens a file, transparently decompressing gzip.
pub fn open_archive(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|e| WorkbenchError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let head = reader.fill_buf().map_err(|e| WorkbenchError::io(path, e))?;
    if head.starts_with(&GZIP_MAGIC) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Streaming ingestion over one or more readers.
pub struct Ingestion<R> {
    sources: std::vec::IntoIter<(PathBuf, R)>,
    current: Option<(PathBuf, R)>,
    matcher: Option<Matcher>,
    stats: StatsAccumulator,
    errors: Vec<(PathBuf, ParseError)>,
    io_error: Option<WorkbenchError>,
    offset: u64,
    line_no: u64,
    buf: String,
}

impl<R: BufRead> Ingestion<R> {
    /// `matcher = None` keeps every parsed record.
    pub fn new(sources: Vec<(PathBuf, R)>, matcher: Option<Matcher>) -> Self {
        Ingestion {
            sources: sources.into_iter(),
            current: None,
            matcher,
            stats: StatsAccumulator::new(),
            errors: Vec::new(),
            io_error: None,
            offset: 0,
            line_no: 0,
            buf: String::new(),
        }
    }

    pub fn from_reader(reader: R, matcher: Option<Matcher>) -> Self {
        Self::new(vec![(PathBuf::from("-"), reader)], matcher)
    }

    pub fn stats(&self) -> &CorpusStats {
        self.stats.stats()
    }

    /// The first few parse errors, with the file they came from.
    pub fn errors(&self) -> &[(PathBuf, ParseError)] {
        &self.errors
    }

    /// Consumes the ingestion. A read failure mid-stream surfaces here.
    pub fn finish(self) -> Result<CorpusStats> {
        match self.io_error {
            Some(e) => Err(e),
            None => Ok(self.stats.finish()),
        }
    }

    fn next_line(&mut self) -> Option<(u64, u64)> {
        loop {
            if self.current.is_none() {
                self.current = Some(self.sources.next()?);
                self.offset = 0;
                self.line_no = 0;
            }
            let (path, reader) = self.current.as_mut().expect("set above");
            self.buf.clear();
            match reader.read_line(&mut self.buf) {
                Ok(0) => self.current = None,
                Ok(n) => {
                    let at = self.offset;
                    self.offset += n as u64;
                    self.line_no += 1;
                    return Some((at, self.line_no));
                }
                Err(e) => {
                    self.io_error = Some(WorkbenchError::io(path.clone(), e));
                    self.current = None;
                    self.sources = Vec::new().into_iter();
                    return None;
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for Ingestion<R> {
    type Item = TweetRecord;

    fn next(&mut self) -> Option<TweetRecord> {
        while let Some((offset, line_no)) = self.next_line() {
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            match parse_tweet_line(line, offset, line_no) {
                Ok(record) => {
                    if self.matcher.as_ref().is_some_and(|m| !m.matches(&record.text).matched) {
                        continue;
                    }
                    self.stats.record(&record);
                    return Some(record);
                }
                Err(e) => {
                    self.stats.record_failure();
                    if self.errors.len() < KEPT_ERRORS {
                        let path = self.current.as_ref().map(|(p, _)| p.clone()).unwrap_or_default();
                        self.errors.push((path, e));
                    }
                }
            }
        }
        None
    }
}

/// Opens every archive up front (so a missing file fails fast) and streams
/// the records matching `matcher`.
pub fn ingest_archives(paths: &[PathBuf], matcher: Option<Matcher>) -> Result<Ingestion<Box<dyn BufRead + Send>>> {
    let sources = paths.iter().map(|p| Ok((p.clone(), open_archive(p)?))).collect::<Result<Vec<_>>>()?;
    Ok(Ingestion::new(sources, matcher))
}

pub fn ingest_archive(path: &Path, matcher: &Matcher) -> Result<Ingestion<Box<dyn BufRead + Send>>> {
    ingest_archives(&[path.to_path_buf()], Some(matcher.clone()))
}

#[derive(Serialize)]
struct NormalizedUser<'a> {
    screen_name: &'a str,
}

/// The archive-compatible line written for every normalized record.
#[derive(Serialize)]
struct NormalizedTweet<'a> {
    schema_version: u32,
    id_str: &'a str,
    full_text: &'a str,
    created_at: String,
    user: NormalizedUser<'a>,
    retweet_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lang: Option<&'a str>,
    live: Liveness,
}

/// Writes one record as an archive-compatible JSON line, so normalized files
/// can be fed back through [`parse_tweet_line`].
pub fn write_normalized<W: Write>(out: &mut W, record: &TweetRecord) -> io::Result<()> {
    let line = NormalizedTweet {
        schema_version: SCHEMA_VERSION,
        id_str: record.tweet_id.as_str(),
        full_text: &record.text,
        created_at: format_archive_time(&record.created_at),
        user: NormalizedUser { screen_name: &record.author_handle },
        retweet_count: record.retweet_count,
        lang: record.lang.as_deref(),
        live: record.live,
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")
}

/// Reads a whole corpus file into memory. Parse failures are fatal here:
/// corpus files are expected to be normalized output.
pub fn read_corpus(path: &Path) -> Result<Vec<TweetRecord>> {
    let mut ingestion = ingest_archives(&[path.to_path_buf()], None)?;
    let records: Vec<TweetRecord> = ingestion.by_ref().collect();
    if let Some((p, e)) = ingestion.errors().first() {
        return Err(WorkbenchError::format(p, e));
    }
    ingestion.finish()?;
    Ok(records)
}

/// Liveness verdicts loaded from a `tweet_id,status` CSV file, where status
/// is `live` or `deleted`. Ids absent from the table are an oracle failure.
#[derive(Debug, Clone, Default)]
pub struct LivenessTable {
    verdicts: HashMap<TweetId, Liveness>,
}

#[derive(Debug, Deserialize)]
struct LivenessRow {
    tweet_id: String,
    status: String,
}

impl LivenessTable {
    pub fn from_reader<R: Read>(reader: R, label: &Path) -> Result<Self> {
        let mut verdicts = HashMap::new();
        for row in csv::Reader::from_reader(reader).deserialize::<LivenessRow>() {
            let row = row.map_err(|e| WorkbenchError::format(label, e))?;
            let id = TweetId::new(row.tweet_id).map_err(|e| WorkbenchError::format(label, e))?;
            let status = match row.status.trim().to_ascii_lowercase().as_str() {
                "live" => Liveness::Live,
                "deleted" => Liveness::Deleted,
                other => return Err(WorkbenchError::format(label, format!("unknown status {other:?} for {id}"))),
            };
            verdicts.insert(id, status);
        }
        Ok(LivenessTable { verdicts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| WorkbenchError::io(path, e))?;
        Self::from_reader(file, path)
    }

    pub fn lookup(&self, id: &TweetId) -> Result<Liveness, String> {
        self.verdicts.get(id).copied().ok_or_else(|| format!("no status for {id}"))
    }
}
