//! Simulated hashtag-driven collection of drug-related posts and the
//! accounts commenting on them.
//!
//! A crawl starts from seed hashtags, visits one hashtag per step, keeps the
//! posts whose image score clears the detector threshold, records their
//! commenters, and grows the hashtag pool from co-occurring tags. The next
//! hashtag is the most frequent unvisited one.

mod crawl;
mod error;
mod world;

pub use crawl::{
    crawl_step, parse_scores, run_crawl, CrawlIndex, CrawlReport, CrawlState, Detector, StepLog,
    DEFAULT_ACCOUNT_THRESHOLD,
};
pub use error::{CrawlError, Result};
pub use world::{
    default_seeds, generate_world, load_world, parse_world, save_world, write_world, SimHomepage, SimPost,
    SyntheticWorld, WorldSpec,
};
