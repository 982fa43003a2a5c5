#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_annotate::{validate_submission, Corpus};

const CORPUS: &str = r#"{"kind":"post","post_id":"p1","author_id":"a1","image_refs":["p1.jpg","p1b.jpg"],"caption":"c","hashtags":["x"],"comments":[{"comment_id":"c1","user_id":"u1","text":"hi"},{"comment_id":"c2","user_id":"u2","text":"yo"}]}"#;

fuzz_target!(|data: &[u8]| {
    let Ok(payload) = serde_json::from_slice::<serde_json::Value>(data) else { return };
    let corpus = Corpus::parse(CORPUS).unwrap();
    let _ = validate_submission(&payload, &corpus.posts[0]);
});
