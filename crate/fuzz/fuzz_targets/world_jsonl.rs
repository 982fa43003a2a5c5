#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_crawl::{parse_world, run_crawl, CrawlIndex, CrawlState};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(world) = parse_world(text) else { return };
    let seeds: Vec<String> = world.posts.iter().flat_map(|p| p.hashtags.iter().cloned()).take(2).collect();
    if let Ok(state) = CrawlState::seed_hashtags(&seeds) {
        let mut state = state.with_threshold(usize::MAX);
        let report = run_crawl(&mut state, &CrawlIndex::new(&world), 0.5);
        assert!((0.0..=1.0).contains(&report.dealer_recall));
    }
});
