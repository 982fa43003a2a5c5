#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_annotate::Corpus;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(corpus) = Corpus::parse(text) {
        let again = Corpus::parse(&corpus.to_jsonl()).expect("serialized corpus reparses");
        assert_eq!(again.posts.len(), corpus.posts.len());
    }
});
