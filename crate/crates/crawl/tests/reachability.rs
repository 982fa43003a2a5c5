use std::collections::{BTreeSet, VecDeque};

use proptest::prelude::*;
use quadfuse_crawl::{
    crawl_step, default_seeds, generate_world, run_crawl, CrawlIndex, CrawlState, SyntheticWorld, WorldSpec,
};

/// Breadth-first closure over the hashtag–post bipartite graph, keeping only
/// posts at or above the threshold. Returns (posts, commenters).
fn bfs_closure(world: &SyntheticWorld, seeds: &[String], threshold: f64) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut seen_tags: BTreeSet<String> = seeds.iter().cloned().collect();
    let mut queue: VecDeque<String> = seeds.iter().cloned().collect();
    let mut posts = BTreeSet::new();
    let mut accounts = BTreeSet::new();
    while let Some(tag) = queue.pop_front() {
        for p in world.posts.iter().filter(|p| p.hashtags.contains(&tag)) {
            if p.image_drug_score < threshold || !posts.insert(p.post_id.clone()) {
                continue;
            }
            accounts.extend(p.commenter_ids.iter().cloned());
            for t in &p.hashtags {
                if seen_tags.insert(t.clone()) {
                    queue.push_back(t.clone());
                }
            }
        }
    }
    (posts, accounts)
}

fn world_spec(i: u64) -> WorldSpec {
    WorldSpec {
        posts: 100 + 20 * i as usize,
        users: 150,
        dealer_fraction: 0.15,
        clusters: 2 + (i % 3) as usize,
        disconnected_clusters: (i % 2) as usize,
        dealer_score: (0.3, 1.0),
        other_score: (0.0, 0.7),
        seed: i,
        ..WorldSpec::default()
    }
}

#[test]
fn recall_matches_bfs_reachable_fraction() {
    let seeds = default_seeds();
    for i in 0..20 {
        let world = generate_world(&world_spec(i)).unwrap();
        assert!(world.posts.len() <= 500);
        let index = CrawlIndex::new(&world);
        let truth = world.ground_truth_dealers.len();
        let mut state = CrawlState::seed_hashtags(&seeds).unwrap().with_threshold(truth + 1);
        let report = run_crawl(&mut state, &index, 0.5);
        assert!(report.exhausted);

        let (posts, accounts) = bfs_closure(&world, &seeds, 0.5);
        assert_eq!(state.collected_posts, posts, "world {i}");
        assert_eq!(state.collected_accounts, accounts, "world {i}");
        let reachable = accounts.intersection(&world.ground_truth_dealers).count();
        assert_eq!(report.dealer_recall, reachable as f64 / truth as f64, "world {i}");
        let tags: Vec<_> = report.trajectory.iter().map(|s| &s.hashtag).collect();
        let unique: BTreeSet<_> = tags.iter().collect();
        assert_eq!(unique.len(), tags.len(), "world {i}: revisited a hashtag");
    }
}

#[test]
fn connected_world_reaches_every_dealer() {
    let world = generate_world(&WorldSpec {
        posts: 400,
        users: 200,
        clusters: 4,
        seed: 11,
        ..WorldSpec::default()
    })
    .unwrap();
    let index = CrawlIndex::new(&world);
    let mut state = CrawlState::seed_hashtags(default_seeds())
        .unwrap()
        .with_threshold(world.ground_truth_dealers.len());
    let report = run_crawl(&mut state, &index, 0.5);
    assert_eq!(report.dealer_recall, 1.0);
    assert_eq!(report.dealers_collected, world.ground_truth_dealers.len());
}

#[test]
fn disconnected_cluster_lowers_recall() {
    let world = generate_world(&WorldSpec {
        posts: 300,
        users: 200,
        clusters: 3,
        disconnected_clusters: 1,
        seed: 5,
        ..WorldSpec::default()
    })
    .unwrap();
    let index = CrawlIndex::new(&world);
    let mut state = CrawlState::seed_hashtags(default_seeds()).unwrap().with_threshold(usize::MAX);
    let report = run_crawl(&mut state, &index, 0.5);
    assert!(report.dealer_recall < 1.0);
    let (_, accounts) = bfs_closure(&world, &default_seeds(), 0.5);
    let reachable = accounts.intersection(&world.ground_truth_dealers).count();
    assert_eq!(report.dealers_collected, reachable);
}

#[test]
fn trajectory_is_deterministic() {
    let world = generate_world(&world_spec(3)).unwrap();
    let run = || {
        let index = CrawlIndex::new(&world);
        let mut state = CrawlState::seed_hashtags(default_seeds()).unwrap().with_threshold(10);
        run_crawl(&mut state, &index, 0.5)
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn collected_sets_only_grow(seed in 0u64..1000, threshold in 0.0f64..1.0) {
        let world = generate_world(&WorldSpec { posts: 120, users: 60, seed, ..WorldSpec::default() }).unwrap();
        let index = CrawlIndex::new(&world);
        let mut state = CrawlState::seed_hashtags(default_seeds()).unwrap();
        let mut steps = 0;
        loop {
            let before = state.clone();
            if crawl_step(&mut state, &index, threshold).is_err() {
                break;
            }
            steps += 1;
            prop_assert!(before.collected_posts.is_subset(&state.collected_posts));
            prop_assert!(before.collected_accounts.is_subset(&state.collected_accounts));
            prop_assert!(before.hashtag_pool.is_subset(&state.hashtag_pool));
            prop_assert!(state.visited_hashtags.is_subset(&state.hashtag_pool));
            prop_assert_eq!(state.visited_hashtags.len(), before.visited_hashtags.len() + 1);
        }
        prop_assert_eq!(steps, state.hashtag_pool.len());
        let (posts, _) = bfs_closure(&world, &default_seeds(), threshold);
        prop_assert!(state.collected_posts.is_subset(&posts));
    }
}
