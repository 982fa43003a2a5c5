use std::collections::BTreeSet;

use proptest::prelude::*;
use quadfuse_community::{
    betweenness, build_graph, clustering_coefficient, detect_communities, modularity, sunburst_export, Grouping,
    HashtagGraph, Lexicon,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(seed: u64) -> (usize, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let p = rng.gen_range(0.1..0.9);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    (n, edges)
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    adj
}

/// All simple paths from s to t, by depth-first enumeration.
fn simple_paths(adj: &[Vec<bool>], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn walk(adj: &[Vec<bool>], path: &mut Vec<usize>, t: usize, out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if v == t {
            out.push(path.clone());
            return;
        }
        for w in 0..adj.len() {
            if adj[v][w] && !path.contains(&w) {
                path.push(w);
                walk(adj, path, t, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(adj, &mut vec![s], t, &mut out);
    out
}

fn brute_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let adj = adjacency(n, edges);
    let mut cb = vec![0.0; n];
    for s in 0..n {
        for t in s + 1..n {
            let paths = simple_paths(&adj, s, t);
            let Some(shortest) = paths.iter().map(Vec::len).min() else { continue };
            let best: Vec<_> = paths.iter().filter(|p| p.len() == shortest).collect();
            for v in (0..n).filter(|&v| v != s && v != t) {
                let through = best.iter().filter(|p| p.contains(&v)).count();
                cb[v] += through as f64 / best.len() as f64;
            }
        }
    }
    let pairs = if n > 2 { ((n - 1) * (n - 2)) as f64 / 2.0 } else { 1.0 };
    cb.into_iter().map(|c| if n > 2 { c / pairs } else { 0.0 }).collect()
}

fn brute_clustering(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let adj = adjacency(n, edges);
    (0..n)
        .map(|v| {
            let mut open = 0;
            let mut closed = 0;
            for a in 0..n {
                for b in a + 1..n {
                    if a != v && b != v && adj[v][a] && adj[v][b] {
                        open += 1;
                        if adj[a][b] {
                            closed += 1;
                        }
                    }
                }
            }
            if open == 0 {
                0.0
            } else {
                closed as f64 / open as f64
            }
        })
        .collect()
}

#[test]
fn centrality_matches_brute_force_on_small_graphs() {
    for seed in 0..100 {
        let (n, edges) = random_graph(seed);
        let g = HashtagGraph::from_edges(n, &edges);
        let bc = betweenness(&g);
        let cc = clustering_coefficient(&g);
        let bc_oracle = brute_betweenness(n, &edges);
        let cc_oracle = brute_clustering(n, &edges);
        for v in 0..n {
            let name = g.name(v);
            assert!((bc[name] - bc_oracle[v]).abs() < 1e-9, "seed {seed} node {v} betweenness");
            assert!((cc[name] - cc_oracle[v]).abs() < 1e-9, "seed {seed} node {v} clustering");
        }
    }
}

/// Q = 1/2m Σ_ij (A_ij − k_i k_j / 2m) δ(c_i, c_j), summed over ordered pairs.
fn brute_modularity(g: &HashtagGraph, labels: &[usize]) -> f64 {
    let n = g.node_count();
    let m = g.total_weight() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let a = if i == j { 0.0 } else { g.weight(i, j) as f64 };
                q += a - (g.weighted_degree(i) * g.weighted_degree(j)) as f64 / (2.0 * m);
            }
        }
    }
    q / (2.0 * m)
}

fn labels_of(g: &HashtagGraph, clusters: &[Vec<String>]) -> Vec<usize> {
    let mut labels = vec![usize::MAX; g.node_count()];
    for (l, c) in clusters.iter().enumerate() {
        for name in c {
            let v = g.node(name).unwrap();
            assert_eq!(labels[v], usize::MAX, "{name} in two clusters");
            labels[v] = l;
        }
    }
    assert!(labels.iter().all(|&l| l != usize::MAX), "node missing from partition");
    labels
}

#[test]
fn planted_partition_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 24;
    let planted: Vec<usize> = (0..n).map(|v| v / 12).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if planted[a] == planted[b] { 0.9 } else { 0.05 };
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    let g = HashtagGraph::from_edges(n, &edges);
    let partition = detect_communities(&g, 10);
    let found = labels_of(&g, &partition.clusters);
    // Best one-to-one matching of found clusters onto the two blocks.
    let k = partition.clusters.len();
    let mut best = 0;
    for x in 0..k {
        for y in 0..k {
            if x == y && k > 1 {
                continue;
            }
            let agree = (0..n)
                .filter(|&v| (planted[v] == 0 && found[v] == x) || (planted[v] == 1 && found[v] == y))
                .count();
            best = best.max(agree);
        }
    }
    let agreement = best as f64 / n as f64;
    assert!(agreement >= 0.9, "agreement {agreement}");
    assert!(partition.reported().iter().all(|c| c.len() <= 10));
}

fn arb_posts() -> impl Strategy<Value = Vec<Vec<String>>> {
    proptest::collection::vec(proptest::collection::vec("[a-f]", 1..5), 0..20)
}

proptest! {
    #[test]
    fn graph_is_order_invariant(posts in arb_posts(), seed in any::<u64>()) {
        let mut shuffled = posts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(build_graph(&posts), build_graph(&shuffled));
    }

    #[test]
    fn partition_is_valid_and_modularity_consistent(posts in arb_posts()) {
        let g = build_graph(&posts);
        let p = detect_communities(&g, 3);
        let labels = labels_of(&g, &p.clusters);
        prop_assert!((p.modularity - brute_modularity(&g, &labels)).abs() < 1e-9);
        prop_assert!((p.modularity - modularity(&g, &labels)).abs() < 1e-9);
        prop_assert!(p.modularity >= -0.5 - 1e-12 && p.modularity <= 1.0);
        let members: BTreeSet<&String> = p.clusters.iter().flatten().collect();
        prop_assert_eq!(members.len(), g.node_count());
    }

    #[test]
    fn sunburst_levels_sum_to_one(posts in arb_posts()) {
        prop_assume!(!posts.is_empty());
        let lex = Lexicon::parse("a\tfirst\nb\tfirst\nc\tsecond\n").unwrap();
        let doc = sunburst_export(&posts, Grouping::DrugType, &lex, None).unwrap();
        let groups: f64 = doc.children.iter().map(|c| c.value).sum();
        let leaves: f64 = doc.children.iter().flat_map(|c| &c.children).map(|l| l.value).sum();
        prop_assert!((groups - 1.0).abs() < 1e-9);
        prop_assert!((leaves - 1.0).abs() < 1e-9);
        for c in &doc.children {
            let sub: f64 = c.children.iter().map(|l| l.value).sum();
            prop_assert!((sub - c.value).abs() < 1e-12);
        }
    }
}
