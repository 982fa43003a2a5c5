//! Annotation service: hands out posts to annotators, records their labels
//! in an append-only log, and exports labeled quadruples.

pub mod api;
pub mod error;
pub mod model;
pub mod store;

pub use api::{router, serve, AppState};
pub use error::{AnnotateError, Result};
pub use model::{
    validate_submission, Comment, CommentAnnotation, ContactApp, Corpus, CorpusPost, CorpusUser, DrugForm, HomepageView,
    ImageAnnotation, PostVerdict, Role, Submission, TaskStatus,
};
pub use store::{parse_log, Event, LogEntry, Stats, Store, SubmitOutcome, TaskView};

/// Parses `token<TAB>annotator` lines; `#` starts a comment line.
pub fn parse_tokens(text: &str) -> Result<std::collections::BTreeMap<String, String>> {
    let mut out = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| AnnotateError::Parse {
            line: i + 1,
            message: message.to_string(),
        };
        let (token, who) = line.split_once('\t').ok_or_else(|| err("expected token<TAB>annotator"))?;
        let (token, who) = (token.trim(), who.trim());
        if token.is_empty() || who.is_empty() {
            return Err(err("empty token or annotator"));
        }
        if out.insert(token.to_string(), who.to_string()).is_some() {
            return Err(err("token listed twice"));
        }
    }
    Ok(out)
}
