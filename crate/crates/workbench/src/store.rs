//! Annotation sessions and their durable store.
//!
//! Every mutation is an [`Event`] appended to `journal.ndjson` and synced to
//! disk before the caller is acknowledged. Every `snapshot_every` events the
//! whole state is written to `snapshot.json` (via a temporary file and a
//! rename). Opening a data directory loads the snapshot and replays the
//! journal entries that follow it. The journal is never truncated, so it
//! alone also reconstructs the store.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use workbench_core::annotation::{AnnotationSubmission, AnnotationTask, AnnotatorProfile};
use workbench_core::{AnnotationRecord, Codebook, SampleDraw, TweetId, TweetRecord, SCHEMA_VERSION};

use crate::error::{Result, WorkbenchError};
use crate::formats;

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

/// A sample opened for annotation. Every annotator gets every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub sample_id: String,
    pub annotators: Vec<AnnotatorProfile>,
    pub tasks: Vec<TweetRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionCreated { session: Session },
    AnnotationSubmitted { record: AnnotationRecord },
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalEntry {
    seq: u64,
    event: Event,
}

#[derive(Debug, Clone, PartialEq)]
struct SessionState {
    session: Session,
    positions: HashMap<TweetId, usize>,
    records: BTreeMap<(TweetId, String), AnnotationRecord>,
}

impl SessionState {
    fn new(session: Session) -> Self {
        let positions = session.tasks.iter().enumerate().map(|(i, t)| (t.tweet_id.clone(), i)).collect();
        SessionState { session, positions, records: BTreeMap::new() }
    }

    fn has_annotator(&self, id: &str) -> bool {
        self.session.annotators.iter().any(|a| a.annotator_id == id)
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
struct State {
    seq: u64,
    sessions: BTreeMap<String, SessionState>,
}

impl State {
    fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::SessionCreated { session } => {
                if self.sessions.contains_key(&session.sample_id) {
                    return Err(WorkbenchError::Invalid(format!("session {} already exists", session.sample_id)));
                }
                Ok(())
            }
            Event::AnnotationSubmitted { record } => {
                let s = self.sessions.get(&record.sample_id).ok_or_else(|| WorkbenchError::UnknownSession(record.sample_id.clone()))?;
                if !s.has_annotator(&record.annotator_id) {
                    return Err(WorkbenchError::UnknownAnnotator { session: record.sample_id.clone(), annotator: record.annotator_id.clone() });
                }
                if !s.positions.contains_key(&record.tweet_id) {
                    return Err(WorkbenchError::UnknownTask {
                        session: record.sample_id.clone(),
                        tweet: record.tweet_id.to_string(),
                        annotator: record.annotator_id.clone(),
                    });
                }
                Ok(())
            }
        }
    }

    /// Applies a checked event.
    fn apply(&mut self, seq: u64, event: Event) {
        self.seq = seq;
        match event {
            Event::SessionCreated { session } => {
                self.sessions.insert(session.sample_id.clone(), SessionState::new(session));
            }
            Event::AnnotationSubmitted { record } => {
                let s = self.sessions.get_mut(&record.sample_id).expect("checked");
                s.records.insert((record.tweet_id.clone(), record.annotator_id.clone()), record);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotSession {
    session: Session,
    records: Vec<AnnotationRecord>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    schema_version: u32,
    seq: u64,
    sessions: Vec<SnapshotSession>,
}

impl Snapshot {
    fn of(state: &State) -> Self {
        Snapshot {
            schema_version: SCHEMA_VERSION,
            seq: state.seq,
            sessions: state
                .sessions
                .values()
                .map(|s| SnapshotSession { session: s.session.clone(), records: s.records.values().cloned().collect() })
                .collect(),
        }
    }

    fn into_state(self) -> State {
        let mut state = State { seq: self.seq, sessions: BTreeMap::new() };
        for s in self.sessions {
            let mut ss = SessionState::new(s.session);
            for r in s.records {
                ss.records.insert((r.tweet_id.clone(), r.annotator_id.clone()), r);
            }
            state.sessions.insert(ss.session.sample_id.clone(), ss);
        }
        state
    }
}

struct Persistence {
    dir: PathBuf,
    journal: File,
    since_snapshot: u64,
    snapshot_every: u64,
}

impl Persistence {
    fn journal_path(&self) -> PathBuf {
        self.dir.join(JOURNAL_FILE)
    }

    fn append(&mut self, entry: &JournalEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).expect("in-memory serialization");
        line.push(b'\n');
        let path = self.journal_path();
        self.journal.write_all(&line).map_err(|e| WorkbenchError::io(&path, e))?;
        self.journal.sync_data().map_err(|e| WorkbenchError::io(&path, e))
    }

    fn snapshot(&mut self, state: &State) -> Result<()> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let io = |e| WorkbenchError::io(&tmp, e);
        let mut f = File::create(&tmp).map_err(io)?;
        f.write_all(formats::to_json_pretty(&Snapshot::of(state)).as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(|e| WorkbenchError::io(&path, e))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

struct Inner {
    state: State,
    persistence: Option<Persistence>,
}

impl Inner {
    fn commit(&mut self, event: Event) -> Result<()> {
        self.state.check(&event)?;
        let seq = self.state.seq + 1;
        let entry = JournalEntry { seq, event };
        if let Some(p) = &mut self.persistence {
            p.append(&entry)?;
        }
        self.state.apply(seq, entry.event);
        if let Some(p) = &mut self.persistence {
            p.since_snapshot += 1;
            if p.since_snapshot >= p.snapshot_every {
                // The journal already holds the event, so a failed snapshot loses nothing.
                if let Err(e) = p.snapshot(&self.state) {
                    tracing::warn!("snapshot failed: {e}");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub submitted: usize,
    pub remaining: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionProgress {
    pub schema_version: u32,
    pub sample_id: String,
    pub total: usize,
    pub annotators: BTreeMap<String, AnnotatorProgress>,
}

/// Thread-safe annotation store. All operations take one lock, so every
/// read sees a consistent state containing only acknowledged writes.
pub struct AnnotationStore {
    inner: Mutex<Inner>,
    codebook: Arc<Codebook>,
}

fn read_journal(path: &Path) -> Result<Vec<JournalEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(WorkbenchError::io(path, e)),
    };
    let mut entries = Vec::new();
    let mut lines = BufReader::new(file).lines().enumerate().peekable();
    while let Some((i, line)) = lines.next() {
        let line = line.map_err(|e| WorkbenchError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JournalEntry>(&line) {
            Ok(entry) => entries.push(entry),
            // A torn final line is a write that was never acknowledged.
            Err(_) if lines.peek().is_none() => tracing::warn!("ignoring incomplete final journal line {}", i + 1),
            Err(e) => return Err(WorkbenchError::Journal(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    Ok(entries)
}

/// Cuts an unterminated final line so that new entries start on a fresh line.
fn trim_torn_tail(path: &Path) -> Result<()> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(WorkbenchError::io(path, e)),
    };
    if bytes.last().is_none_or(|&b| b == b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(|e| WorkbenchError::io(path, e))?;
    f.set_len(keep as u64).map_err(|e| WorkbenchError::io(path, e))
}

fn replay(mut state: State, entries: Vec<JournalEntry>) -> Result<State> {
    for entry in entries {
        if entry.seq <= state.seq {
            continue;
        }
        if entry.seq != state.seq + 1 {
            return Err(WorkbenchError::Journal(format!("sequence gap: expected {}, found {}", state.seq + 1, entry.seq)));
        }
        state.check(&entry.event).map_err(|e| WorkbenchError::Journal(format!("entry {}: {e}", entry.seq)))?;
        state.apply(entry.seq, entry.event);
    }
    Ok(state)
}

impl AnnotationStore {
    pub fn in_memory(codebook: Arc<Codebook>) -> Self {
        AnnotationStore { inner: Mutex::new(Inner { state: State::default(), persistence: None }), codebook }
    }

    /// Opens (or initializes) a data directory.
    pub fn open(dir: &Path, codebook: Arc<Codebook>) -> Result<Self> {
        Self::open_with(dir, codebook, DEFAULT_SNAPSHOT_EVERY)
    }

    pub fn open_with(dir: &Path, codebook: Arc<Codebook>, snapshot_every: u64) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| WorkbenchError::io(dir, e))?;
        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let state = if snapshot_path.exists() {
            let snap: Snapshot = formats::read_json_file(&snapshot_path)?;
            snap.into_state()
        } else {
            State::default()
        };
        let journal_path = dir.join(JOURNAL_FILE);
        let state = replay(state, read_journal(&journal_path)?)?;
        trim_torn_tail(&journal_path)?;
        let journal = OpenOptions::new().create(true).append(true).open(&journal_path).map_err(|e| WorkbenchError::io(&journal_path, e))?;
        let persistence = Persistence { dir: dir.to_path_buf(), journal, since_snapshot: 0, snapshot_every: snapshot_every.max(1) };
        Ok(AnnotationStore { inner: Mutex::new(Inner { state, persistence: Some(persistence) }), codebook })
    }

    /// Rebuilds a store from the journal alone, ignoring any snapshot. The
    /// result is in-memory.
    pub fn replay_journal(dir: &Path, codebook: Arc<Codebook>) -> Result<Self> {
        let state = replay(State::default(), read_journal(&dir.join(JOURNAL_FILE))?)?;
        Ok(AnnotationStore { inner: Mutex::new(Inner { state, persistence: None }), codebook })
    }

    /// Number of entries in a data directory's journal.
    pub fn journal_len(dir: &Path) -> Result<usize> {
        Ok(read_journal(&dir.join(JOURNAL_FILE))?.len())
    }

    /// Forces a snapshot now.
    pub fn snapshot(&self) -> Result<()> {
        let mut inner = self.lock();
        let Inner { state, persistence } = &mut *inner;
        match persistence {
            Some(p) => p.snapshot(state),
            None => Ok(()),
        }
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    /// Opens a session over the annotatable records of a draw, in draw order.
    /// Draw ids without a record (filtered out) are skipped.
    pub fn create_session(&self, sample_id: &str, draw: &SampleDraw, records: &[TweetRecord], annotators: Vec<AnnotatorProfile>) -> Result<String> {
        let by_id: HashMap<&TweetId, &TweetRecord> = records.iter().map(|r| (&r.tweet_id, r)).collect();
        let tasks = draw.tweet_ids.iter().filter_map(|id| by_id.get(id).map(|r| (*r).clone())).collect();
        self.create_session_with_tasks(sample_id, tasks, annotators)
    }

    pub fn create_session_with_tasks(&self, sample_id: &str, mut tasks: Vec<TweetRecord>, annotators: Vec<AnnotatorProfile>) -> Result<String> {
        if sample_id.is_empty() {
            return Err(WorkbenchError::Invalid("sample id must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        tasks.retain(|t| seen.insert(t.tweet_id.clone()));
        if tasks.is_empty() {
            return Err(WorkbenchError::Invalid("cannot create a session from an empty sample".into()));
        }
        if annotators.is_empty() {
            return Err(WorkbenchError::Invalid("a session needs at least one annotator".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for a in &annotators {
            if a.annotator_id.is_empty() || !ids.insert(a.annotator_id.as_str()) {
                return Err(WorkbenchError::Invalid(format!("annotator id {:?} is empty or repeated", a.annotator_id)));
            }
        }
        let session = Session { sample_id: sample_id.into(), annotators, tasks };
        self.lock().commit(Event::SessionCreated { session })?;
        Ok(sample_id.into())
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.lock().state.sessions.keys().cloned().collect()
    }

    pub fn session(&self, sample_id: &str) -> Option<Session> {
        self.lock().state.sessions.get(sample_id).map(|s| s.session.clone())
    }

    /// The lowest-position task the annotator has not submitted, or `None`
    /// when all are done.
    pub fn next_task(&self, sample_id: &str, annotator_id: &str) -> Result<Option<AnnotationTask>> {
        let inner = self.lock();
        let s = inner.state.sessions.get(sample_id).ok_or_else(|| WorkbenchError::UnknownSession(sample_id.into()))?;
        if !s.has_annotator(annotator_id) {
            return Err(WorkbenchError::UnknownAnnotator { session: sample_id.into(), annotator: annotator_id.into() });
        }
        let total = s.session.tasks.len();
        let found = s
            .session
            .tasks
            .iter()
            .enumerate()
            .find(|(_, t)| !s.records.contains_key(&(t.tweet_id.clone(), annotator_id.to_string())))
            .map(|(i, t)| (i, t.clone()));
        drop(inner);
        Ok(found.map(|(i, t)| AnnotationTask {
            sample_id: sample_id.into(),
            permalink: t.permalink(),
            codebook_hits: self.codebook.scan(&t.text),
            tweet_id: t.tweet_id,
            text: t.text,
            created_at: t.created_at,
            author_handle: t.author_handle,
            position: i + 1,
            total,
        }))
    }

    /// Validates and stores a submission. Returns once the journal entry is
    /// on disk.
    pub fn submit(&self, submission: AnnotationSubmission) -> Result<AnnotationRecord> {
        let record = submission.validate(Utc::now()).map_err(WorkbenchError::Validation)?;
        self.put(record.clone())?;
        Ok(record)
    }

    fn put(&self, record: AnnotationRecord) -> Result<()> {
        self.lock().commit(Event::AnnotationSubmitted { record })
    }

    /// Upserts already validated records, e.g. from an export file.
    pub fn import(&self, records: Vec<AnnotationRecord>) -> Result<usize> {
        let n = records.len();
        for r in records {
            self.put(r)?;
        }
        Ok(n)
    }

    pub fn progress(&self, sample_id: &str) -> Result<SessionProgress> {
        let inner = self.lock();
        let s = inner.state.sessions.get(sample_id).ok_or_else(|| WorkbenchError::UnknownSession(sample_id.into()))?;
        let total = s.session.tasks.len();
        let mut annotators: BTreeMap<String, AnnotatorProgress> = s
            .session
            .annotators
            .iter()
            .map(|a| (a.annotator_id.clone(), AnnotatorProgress { submitted: 0, remaining: total, total }))
            .collect();
        for (_, aid) in s.records.keys() {
            if let Some(p) = annotators.get_mut(aid) {
                p.submitted += 1;
                p.remaining -= 1;
            }
        }
        Ok(SessionProgress { schema_version: SCHEMA_VERSION, sample_id: sample_id.into(), total, annotators })
    }

    /// Stored records of a session ordered by tweet id, then annotator.
    pub fn records(&self, sample_id: &str) -> Result<Vec<AnnotationRecord>> {
        let inner = self.lock();
        let s = inner.state.sessions.get(sample_id).ok_or_else(|| WorkbenchError::UnknownSession(sample_id.into()))?;
        Ok(s.records.values().cloned().collect())
    }

    pub fn record_count(&self) -> usize {
        self.lock().state.sessions.values().map(|s| s.records.len()).sum()
    }

    pub fn export_csv(&self, sample_id: &str) -> Result<String> {
        Ok(formats::annotations_to_csv(&self.records(sample_id)?))
    }

    pub fn export_json(&self, sample_id: &str) -> Result<String> {
        Ok(formats::annotations_to_json(sample_id, &self.records(sample_id)?))
    }

    /// Compares complete store contents.
    pub fn same_contents(&self, other: &AnnotationStore) -> bool {
        let a = self.lock().state.clone();
        let b = other.lock().state.clone();
        a == b
    }
}
