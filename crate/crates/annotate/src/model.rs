//! Corpus, annotation and verdict types, and validation of submitted
//! payloads against a task.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{AnnotateError, Result};

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

closed_enum!(DrugForm {
    Powder => "powder",
    Pills => "pills",
    Liquid => "liquid",
    Cannabis => "cannabis",
    Mushroom => "mushroom",
    Lsd => "lsd",
    None => "none",
});

closed_enum!(ContactApp {
    Snapchat => "snapchat",
    Wickr => "wickr",
    Kik => "kik",
    Whatsapp => "whatsapp",
    Telegram => "telegram",
    Email => "email",
    None => "none",
});

closed_enum!(Role {
    Dealer => "dealer",
    Consumer => "consumer",
    Neither => "neither",
});

closed_enum!(TaskStatus {
    Unlabeled => "unlabeled",
    InProgress => "in_progress",
    Done => "done",
});

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub user_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusPost {
    pub post_id: String,
    pub author_id: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub hashtags: BTreeSet<String>,
    #[serde(default)]
    pub comments: Vec<Comment>,
}

impl CorpusPost {
    pub fn commenters(&self) -> BTreeSet<&str> {
        self.comments.iter().map(|c| c.user_id.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomepagePost {
    pub image_ref: String,
    /// Any monotone timestamp; larger is newer.
    pub posted_at: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusUser {
    pub user_id: String,
    #[serde(default)]
    pub bio: String,
    #[serde(default)]
    pub posts: Vec<HomepagePost>,
}

pub const HOMEPAGE_IMAGES: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomepageView {
    pub user_id: String,
    pub bio: String,
    /// Newest first, at most ten.
    pub image_refs: Vec<String>,
}

impl CorpusUser {
    pub fn homepage(&self) -> HomepageView {
        let mut posts: Vec<(usize, &HomepagePost)> = self.posts.iter().enumerate().collect();
        // Newest first; among equal timestamps the later-listed post is newer.
        posts.sort_by(|(ia, a), (ib, b)| b.posted_at.cmp(&a.posted_at).then(ib.cmp(ia)));
        HomepageView {
            user_id: self.user_id.clone(),
            bio: self.bio.clone(),
            image_refs: posts
                .into_iter()
                .take(HOMEPAGE_IMAGES)
                .map(|(_, p)| p.image_ref.clone())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub posts: Vec<CorpusPost>,
    pub users: BTreeMap<String, CorpusUser>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum CorpusLine {
    Post(CorpusPost),
    User(CorpusUser),
}

impl Corpus {
    /// One JSON object per line tagged `post` or `user`. Posts keep file
    /// order, which is also task order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut corpus = Corpus::default();
        let mut post_ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| AnnotateError::Parse { line: i + 1, message };
            match serde_json::from_str(line).map_err(|e| err(e.to_string()))? {
                CorpusLine::Post(p) => {
                    if p.post_id.is_empty() {
                        return Err(err("empty post id".into()));
                    }
                    if !post_ids.insert(p.post_id.clone()) {
                        return Err(err(format!("duplicate post {}", p.post_id)));
                    }
                    let mut seen = BTreeSet::new();
                    if let Some(c) = p.comments.iter().find(|c| !seen.insert(&c.comment_id)) {
                        return Err(err(format!("duplicate comment {} in post {}", c.comment_id, p.post_id)));
                    }
                    corpus.posts.push(p);
                }
                CorpusLine::User(u) => {
                    if corpus.users.contains_key(&u.user_id) {
                        return Err(err(format!("duplicate user {}", u.user_id)));
                    }
                    corpus.users.insert(u.user_id.clone(), u);
                }
            }
        }
        Ok(corpus)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.posts {
            out.push_str(&serde_json::to_string(&CorpusLine::Post(p.clone())).expect("posts serialize"));
            out.push('\n');
        }
        for u in self.users.values() {
            out.push_str(&serde_json::to_string(&CorpusLine::User(u.clone())).expect("users serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub image_ref: String,
    pub drug_form: DrugForm,
    pub contact_app: ContactApp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentAnnotation {
    pub comment_id: String,
    pub role: Role,
    pub has_contact_info: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostVerdict {
    pub contains_dealer: bool,
    pub dealer_user_ids: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub image_annotations: Vec<ImageAnnotation>,
    pub comment_annotations: Vec<CommentAnnotation>,
    pub verdict: PostVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> AnnotateError {
    AnnotateError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn object<'a>(v: &'a Value, field: &str, allowed: &[&str]) -> Result<&'a serde_json::Map<String, Value>> {
    let obj = v.as_object().ok_or_else(|| invalid(field, "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        let path = if field.is_empty() { k.clone() } else { format!("{field}.{k}") };
        return Err(invalid(path, "unknown field"));
    }
    Ok(obj)
}

fn member<'a>(obj: &'a serde_json::Map<String, Value>, parent: &str, key: &str) -> Result<(&'a Value, String)> {
    let path = if parent.is_empty() { key.to_string() } else { format!("{parent}.{key}") };
    let v = obj.get(key).ok_or_else(|| invalid(&path, "missing field"))?;
    Ok((v, path))
}

fn string(v: &Value, path: &str) -> Result<String> {
    v.as_str().map(str::to_string).ok_or_else(|| invalid(path, "expected a string"))
}

fn boolean(v: &Value, path: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| invalid(path, "expected a boolean"))
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| invalid(path, "expected an array"))
}

fn enum_value<T>(v: &Value, path: &str, parse: fn(&str) -> Option<T>, all: &[T]) -> Result<T>
where
    T: fmt::Display,
{
    let s = string(v, path)?;
    parse(&s).ok_or_else(|| {
        let allowed: Vec<String> = all.iter().map(ToString::to_string).collect();
        invalid(path, format!("{s:?} is not one of {}", allowed.join(", ")))
    })
}

/// Decodes a submit payload and checks it against the post it annotates.
/// Errors name the offending field with a JSON-style path.
pub fn validate_submission(payload: &Value, post: &CorpusPost) -> Result<Submission> {
    let top = object(
        payload,
        "",
        &["image_annotations", "comment_annotations", "verdict", "idempotency_key"],
    )?;

    let (images, path) = member(top, "", "image_annotations")?;
    let mut image_annotations = Vec::new();
    let mut seen_images = BTreeSet::new();
    for (i, item) in array(images, &path)?.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let obj = object(item, &p, &["post_id", "image_ref", "drug_form", "contact_app"])?;
        if let Some(pid) = obj.get("post_id") {
            if string(pid, &format!("{p}.post_id"))? != post.post_id {
                return Err(invalid(format!("{p}.post_id"), "does not match the task"));
            }
        }
        let (v, fp) = member(obj, &p, "image_ref")?;
        let image_ref = string(v, &fp)?;
        if !post.image_refs.contains(&image_ref) {
            return Err(invalid(fp, format!("{image_ref:?} is not an image of this post")));
        }
        if !seen_images.insert(image_ref.clone()) {
            return Err(invalid(fp, "image annotated twice"));
        }
        let (v, fp) = member(obj, &p, "drug_form")?;
        let drug_form = enum_value(v, &fp, DrugForm::parse, DrugForm::ALL)?;
        let (v, fp) = member(obj, &p, "contact_app")?;
        let contact_app = enum_value(v, &fp, ContactApp::parse, ContactApp::ALL)?;
        image_annotations.push(ImageAnnotation {
            image_ref,
            drug_form,
            contact_app,
        });
    }

    let (comments, path) = member(top, "", "comment_annotations")?;
    let mut comment_annotations = Vec::new();
    let mut seen_comments = BTreeSet::new();
    for (i, item) in array(comments, &path)?.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let obj = object(item, &p, &["comment_id", "role", "has_contact_info"])?;
        let (v, fp) = member(obj, &p, "comment_id")?;
        let comment_id = string(v, &fp)?;
        if !post.comments.iter().any(|c| c.comment_id == comment_id) {
            return Err(invalid(fp, format!("{comment_id:?} is not a comment of this post")));
        }
        if !seen_comments.insert(comment_id.clone()) {
            return Err(invalid(fp, "comment annotated twice"));
        }
        let (v, fp) = member(obj, &p, "role")?;
        let role = enum_value(v, &fp, Role::parse, Role::ALL)?;
        let (v, fp) = member(obj, &p, "has_contact_info")?;
        let has_contact_info = boolean(v, &fp)?;
        comment_annotations.push(CommentAnnotation {
            comment_id,
            role,
            has_contact_info,
        });
    }

    let (v, vpath) = member(top, "", "verdict")?;
    let obj = object(v, &vpath, &["contains_dealer", "dealer_user_ids"])?;
    let (v, fp) = member(obj, &vpath, "contains_dealer")?;
    let contains_dealer = boolean(v, &fp)?;
    let (v, ids_path) = member(obj, &vpath, "dealer_user_ids")?;
    let mut dealer_user_ids = BTreeSet::new();
    let commenters = post.commenters();
    for (j, id) in array(v, &ids_path)?.iter().enumerate() {
        let p = format!("{ids_path}[{j}]");
        let id = string(id, &p)?;
        if id != post.author_id && !commenters.contains(id.as_str()) {
            return Err(invalid(p, format!("{id:?} neither wrote nor commented on this post")));
        }
        dealer_user_ids.insert(id);
    }
    if contains_dealer == dealer_user_ids.is_empty() {
        return Err(invalid(
            ids_path,
            "must be non-empty exactly when contains_dealer is true",
        ));
    }
    for (i, a) in comment_annotations.iter().enumerate() {
        if a.role == Role::Dealer {
            let c = post.comments.iter().find(|c| c.comment_id == a.comment_id).unwrap();
            if !dealer_user_ids.contains(&c.user_id) {
                return Err(invalid(
                    format!("comment_annotations[{i}].role"),
                    format!("comment by {} marked dealer but the verdict does not name them", c.user_id),
                ));
            }
        }
    }

    let idempotency_key = match top.get("idempotency_key") {
        None | Some(Value::Null) => None,
        Some(v) => Some(string(v, "idempotency_key")?),
    };
    Ok(Submission {
        image_annotations,
        comment_annotations,
        verdict: PostVerdict {
            contains_dealer,
            dealer_user_ids,
        },
        idempotency_key,
    })
}
