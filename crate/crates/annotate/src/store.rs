//! Task state backed by an append-only JSONL event log.
//!
//! Every mutation is checked against the current state, appended to the log,
//! then applied. Opening a store replays the log through the same checks, so
//! the in-memory state is a pure function of corpus + log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use quadfuse_core::record::normalize_hashtag;
use quadfuse_core::{Dataset, Label, QuadrupleRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AnnotateError, Result};
use crate::model::{validate_submission, Corpus, CorpusPost, HomepageView, Submission, TaskStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    Assign {
        task_id: String,
        annotator: String,
    },
    Release {
        task_id: String,
        annotator: String,
    },
    Submit {
        task_id: String,
        annotator: String,
        submission: Submission,
    },
    Reopen {
        task_id: String,
        annotator: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub revision: u32,
    pub annotator: String,
    pub submission: Submission,
}

#[derive(Clone, Debug, PartialEq, Default)]
struct TaskState {
    status: TaskStatus,
    assignee: Option<String>,
    revisions: Vec<Revision>,
}

impl Default for TaskStatus {
    fn default() -> Self {
        TaskStatus::Unlabeled
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskView {
    pub task_id: String,
    pub status: TaskStatus,
    pub assignee: Option<String>,
    pub revisions: usize,
    pub post: CorpusPost,
    pub latest: Option<Revision>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubmitOutcome {
    pub task_id: String,
    pub revision: u32,
    /// True when an idempotency key matched and nothing new was recorded.
    pub replayed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub tasks: usize,
    pub unlabeled: usize,
    pub in_progress: usize,
    pub done: usize,
    pub revisions: usize,
    pub posts_with_dealer: usize,
    pub per_annotator: BTreeMap<String, usize>,
}

pub struct Store {
    corpus: Corpus,
    index: BTreeMap<String, usize>,
    tasks: Vec<TaskState>,
    next_seq: u64,
    log: Option<(PathBuf, File)>,
}

impl Store {
    /// A store with no log file; events are applied in memory only.
    pub fn in_memory(corpus: Corpus) -> Self {
        let index = corpus
            .posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.post_id.clone(), i))
            .collect();
        let tasks = vec![TaskState::default(); corpus.posts.len()];
        Store {
            corpus,
            index,
            tasks,
            next_seq: 1,
            log: None,
        }
    }

    /// Opens (or creates) the log at `path` and replays it. A final line
    /// without a trailing newline that does not parse is treated as a torn
    /// write and cut off; any other bad line is an error.
    pub fn open(corpus: Corpus, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut store = Store::in_memory(corpus);
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(AnnotateError::io(path, e)),
        };
        let mut good_len = 0;
        let mut offset = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            offset += line.len();
            let complete = line.ends_with('\n');
            let body = line.trim_end_matches(['\n', '\r']);
            if body.trim().is_empty() {
                good_len = offset;
                continue;
            }
            match parse_entry(body) {
                Ok(entry) => {
                    if entry.seq != store.next_seq {
                        return Err(AnnotateError::Parse {
                            line: i + 1,
                            message: format!("expected seq {}, found {}", store.next_seq, entry.seq),
                        });
                    }
                    store.check(&entry.event).map_err(|e| AnnotateError::Parse {
                        line: i + 1,
                        message: format!("event cannot be applied: {e}"),
                    })?;
                    store.apply(entry.event);
                    good_len = offset;
                }
                Err(_) if !complete => break,
                Err(message) => return Err(AnnotateError::Parse { line: i + 1, message }),
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| AnnotateError::io(path, e))?;
        if good_len < text.len() {
            file.set_len(good_len as u64).map_err(|e| AnnotateError::io(path, e))?;
        } else if !text.is_empty() && !text.ends_with('\n') {
            // Last entry parsed but lacks its newline.
            file.write_all(b"\n").map_err(|e| AnnotateError::io(path, e))?;
        }
        store.log = Some((path.to_path_buf(), file));
        Ok(store)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn task_index(&self, task_id: &str) -> Result<usize> {
        self.index
            .get(task_id)
            .copied()
            .ok_or_else(|| AnnotateError::NotFound(format!("no task {task_id:?}")))
    }

    fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::Assign { task_id, annotator } => {
                let t = &self.tasks[self.task_index(task_id)?];
                if t.status != TaskStatus::Unlabeled {
                    return Err(AnnotateError::Conflict(format!(
                        "task {task_id} is {}, not unlabeled",
                        t.status
                    )));
                }
                nonempty(annotator)
            }
            Event::Release { task_id, annotator } => {
                let t = &self.tasks[self.task_index(task_id)?];
                if t.status != TaskStatus::InProgress || t.assignee.as_deref() != Some(annotator) {
                    return Err(AnnotateError::Conflict(format!(
                        "task {task_id} is not in progress for {annotator}"
                    )));
                }
                Ok(())
            }
            Event::Submit {
                task_id,
                annotator,
                submission,
            } => {
                let i = self.task_index(task_id)?;
                let t = &self.tasks[i];
                let allowed = match t.status {
                    TaskStatus::InProgress => t.assignee.as_deref() == Some(annotator),
                    TaskStatus::Done => t.revisions.last().map(|r| r.annotator.as_str()) == Some(annotator),
                    TaskStatus::Unlabeled => false,
                };
                if !allowed {
                    return Err(AnnotateError::Conflict(format!(
                        "task {task_id} is {} and not held by {annotator}",
                        t.status
                    )));
                }
                // Re-validate so a hand-edited log cannot smuggle in bad data.
                let value = serde_json::to_value(submission).expect("submissions serialize");
                validate_submission(&value, &self.corpus.posts[i])?;
                Ok(())
            }
            Event::Reopen { task_id, annotator } => {
                let t = &self.tasks[self.task_index(task_id)?];
                if t.status != TaskStatus::Done {
                    return Err(AnnotateError::Conflict(format!("task {task_id} is {}, not done", t.status)));
                }
                nonempty(annotator)
            }
        }
    }

    fn apply(&mut self, event: Event) {
        self.next_seq += 1;
        match event {
            Event::Assign { task_id, annotator } | Event::Reopen { task_id, annotator } => {
                let t = &mut self.tasks[self.index[&task_id]];
                t.status = TaskStatus::InProgress;
                t.assignee = Some(annotator);
            }
            Event::Release { task_id, .. } => {
                let t = &mut self.tasks[self.index[&task_id]];
                t.status = if t.revisions.is_empty() {
                    TaskStatus::Unlabeled
                } else {
                    TaskStatus::Done
                };
                t.assignee = None;
            }
            Event::Submit {
                task_id,
                annotator,
                submission,
            } => {
                let t = &mut self.tasks[self.index[&task_id]];
                t.status = TaskStatus::Done;
                t.assignee = None;
                let revision = t.revisions.len() as u32 + 1;
                t.revisions.push(Revision {
                    revision,
                    annotator,
                    submission,
                });
            }
        }
    }

    fn record(&mut self, event: Event) -> Result<()> {
        self.check(&event)?;
        if let Some((path, file)) = &mut self.log {
            let entry = LogEntry {
                seq: self.next_seq,
                event: event.clone(),
            };
            let mut line = serde_json::to_string(&entry).expect("log entries serialize");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| AnnotateError::io(&*path, e))?;
        }
        self.apply(event);
        Ok(())
    }

    pub fn task(&self, task_id: &str) -> Result<TaskView> {
        let i = self.task_index(task_id)?;
        let t = &self.tasks[i];
        Ok(TaskView {
            task_id: task_id.to_string(),
            status: t.status,
            assignee: t.assignee.clone(),
            revisions: t.revisions.len(),
            post: self.corpus.posts[i].clone(),
            latest: t.revisions.last().cloned(),
        })
    }

    /// The caller's open task if they hold one, otherwise the oldest
    /// unlabeled task, newly assigned to them. `None` when nothing is left.
    pub fn next_task(&mut self, annotator: &str) -> Result<Option<TaskView>> {
        nonempty(annotator)?;
        let held = self
            .tasks
            .iter()
            .position(|t| t.status == TaskStatus::InProgress && t.assignee.as_deref() == Some(annotator));
        let i = match held {
            Some(i) => i,
            None => match self.tasks.iter().position(|t| t.status == TaskStatus::Unlabeled) {
                Some(i) => {
                    self.record(Event::Assign {
                        task_id: self.corpus.posts[i].post_id.clone(),
                        annotator: annotator.to_string(),
                    })?;
                    i
                }
                None => return Ok(None),
            },
        };
        let id = self.corpus.posts[i].post_id.clone();
        self.task(&id).map(Some)
    }

    pub fn submit(&mut self, task_id: &str, annotator: &str, payload: &Value) -> Result<SubmitOutcome> {
        let i = self.task_index(task_id)?;
        let submission = validate_submission(payload, &self.corpus.posts[i])?;
        if let (Some(key), Some(last)) = (&submission.idempotency_key, self.tasks[i].revisions.last()) {
            if last.submission.idempotency_key.as_ref() == Some(key) {
                if last.annotator != annotator {
                    return Err(AnnotateError::Conflict(format!(
                        "idempotency key {key:?} belongs to another annotator"
                    )));
                }
                return Ok(SubmitOutcome {
                    task_id: task_id.to_string(),
                    revision: last.revision,
                    replayed: true,
                });
            }
        }
        self.record(Event::Submit {
            task_id: task_id.to_string(),
            annotator: annotator.to_string(),
            submission,
        })?;
        Ok(SubmitOutcome {
            task_id: task_id.to_string(),
            revision: self.tasks[i].revisions.len() as u32,
            replayed: false,
        })
    }

    pub fn release(&mut self, task_id: &str, annotator: &str) -> Result<TaskView> {
        self.record(Event::Release {
            task_id: task_id.to_string(),
            annotator: annotator.to_string(),
        })?;
        self.task(task_id)
    }

    pub fn reopen(&mut self, task_id: &str, annotator: &str) -> Result<TaskView> {
        self.record(Event::Reopen {
            task_id: task_id.to_string(),
            annotator: annotator.to_string(),
        })?;
        self.task(task_id)
    }

    pub fn homepage(&self, user_id: &str) -> Result<HomepageView> {
        self.corpus
            .users
            .get(user_id)
            .map(|u| u.homepage())
            .ok_or_else(|| AnnotateError::NotFound(format!("no user {user_id:?}")))
    }

    pub fn stats(&self) -> Stats {
        let count = |s: TaskStatus| self.tasks.iter().filter(|t| t.status == s).count();
        let mut per_annotator = BTreeMap::new();
        for r in self.tasks.iter().flat_map(|t| &t.revisions) {
            *per_annotator.entry(r.annotator.clone()).or_insert(0) += 1;
        }
        Stats {
            tasks: self.tasks.len(),
            unlabeled: count(TaskStatus::Unlabeled),
            in_progress: count(TaskStatus::InProgress),
            done: count(TaskStatus::Done),
            revisions: self.tasks.iter().map(|t| t.revisions.len()).sum(),
            posts_with_dealer: self
                .tasks
                .iter()
                .filter_map(|t| t.revisions.last())
                .filter(|r| r.submission.verdict.contains_dealer)
                .count(),
            per_annotator,
        }
    }

    /// Labeled quadruples from the latest revision of every finished task,
    /// in corpus order. Each named dealer becomes a positive; every other
    /// commenter becomes a negative.
    pub fn export(&self) -> Dataset {
        let mut records = Vec::new();
        for (post, task) in self.corpus.posts.iter().zip(&self.tasks) {
            let Some(latest) = task.revisions.last() else { continue };
            let dealers = &latest.submission.verdict.dealer_user_ids;
            for d in dealers {
                records.push(self.quadruple(post, d, Label::Dealer));
            }
            let mut seen = BTreeSet::new();
            for c in &post.comments {
                if !dealers.contains(&c.user_id) && seen.insert(c.user_id.as_str()) {
                    records.push(self.quadruple(post, &c.user_id, Label::NonDealer));
                }
            }
        }
        Dataset::new(records)
    }

    fn quadruple(&self, post: &CorpusPost, user_id: &str, label: Label) -> QuadrupleRecord {
        let mut r = QuadrupleRecord::new(user_id, &post.post_id, label);
        let said: Vec<&str> = post
            .comments
            .iter()
            .filter(|c| c.user_id == user_id)
            .map(|c| c.text.as_str())
            .collect();
        if !said.is_empty() {
            r = r.with_pc(said.join("\n"));
        } else if user_id == post.author_id && !post.caption.is_empty() {
            r = r.with_pc(post.caption.clone());
        }
        if let Some(img) = post.image_refs.first() {
            r = r.with_pi(img.clone());
        }
        if let Some(user) = self.corpus.users.get(user_id) {
            let home = user.homepage();
            if !home.bio.is_empty() {
                r = r.with_hb(home.bio);
            }
            r = r.with_hi(home.image_refs);
        }
        r.with_hashtags(
            post.hashtags
                .iter()
                .map(|t| normalize_hashtag(t))
                .filter(|t| !t.is_empty()),
        )
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }
}

fn nonempty(annotator: &str) -> Result<()> {
    if annotator.is_empty() {
        return Err(AnnotateError::BadRequest("empty annotator id".into()));
    }
    Ok(())
}

fn parse_entry(line: &str) -> std::result::Result<LogEntry, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

/// Parses a whole log without applying it. Used by tooling and fuzzing.
pub fn parse_log(text: &str) -> Result<Vec<LogEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_entry(l).map_err(|message| AnnotateError::Parse { line: i + 1, message }))
        .collect()
}
