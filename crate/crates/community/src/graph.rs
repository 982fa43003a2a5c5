use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use quadfuse_core::record::normalize_hashtag;

/// Undirected weighted co-occurrence graph. Nodes are sorted by name, so
/// node indices are stable for a given tag set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HashtagGraph {
    names: Vec<String>,
    freq: Vec<u64>,
    adj: Vec<BTreeMap<usize, u64>>,
    index: BTreeMap<String, usize>,
}

/// Node frequency counts posts containing the tag; edge weight counts posts
/// containing both. Tags are normalized first, so `#LSD` and `lsd` are the
/// same node.
pub fn build_graph<I, P, S>(posts: I) -> HashtagGraph
where
    I: IntoIterator<Item = P>,
    P: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let sets: Vec<BTreeSet<String>> = posts
        .into_iter()
        .map(|p| {
            p.into_iter()
                .map(|t| normalize_hashtag(t.as_ref()))
                .filter(|t| !t.is_empty())
                .collect()
        })
        .collect();
    let names: Vec<String> = sets.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let mut freq = vec![0; names.len()];
    let mut adj = vec![BTreeMap::new(); names.len()];
    for set in &sets {
        let ids: Vec<usize> = set.iter().map(|t| index[t]).collect();
        for (k, &a) in ids.iter().enumerate() {
            freq[a] += 1;
            for &b in &ids[k + 1..] {
                *adj[a].entry(b).or_insert(0) += 1;
                *adj[b].entry(a).or_insert(0) += 1;
            }
        }
    }
    HashtagGraph { names, freq, adj, index }
}

impl HashtagGraph {
    /// Builds an unweighted graph (frequency 1 per node) from explicit
    /// edges. Self-loops are ignored.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Self {
        let width = nodes.saturating_sub(1).to_string().len();
        let names: Vec<String> = (0..nodes).map(|i| format!("n{i:0width$}")).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut adj = vec![BTreeMap::new(); nodes];
        for &(a, b) in edges {
            if a != b {
                adj[a].insert(b, 1);
                adj[b].insert(a, 1);
            }
        }
        HashtagGraph {
            names,
            freq: vec![1; nodes],
            adj,
            index,
        }
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn name(&self, node: usize) -> &str {
        &self.names[node]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn frequency(&self, node: usize) -> u64 {
        self.freq[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn weight(&self, a: usize, b: usize) -> u64 {
        self.adj[a].get(&b).copied().unwrap_or(0)
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[node].keys().copied()
    }

    /// Each undirected edge once, with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, m)| m.range(a + 1..).map(move |(&b, &w)| (a, b, w)))
    }

    pub fn total_weight(&self) -> u64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    pub fn weighted_degree(&self, node: usize) -> u64 {
        self.adj[node].values().sum()
    }

    /// `tag<TAB>tag<TAB>weight` per edge, sorted by tag pair.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b, w) in self.edges() {
            writeln!(out, "{}\t{}\t{w}", self.names[a], self.names[b]).unwrap();
        }
        out
    }
}

/// Brandes' algorithm on unweighted shortest paths, normalized by
/// (n−1)(n−2)/2. Graphs with fewer than three nodes score 0 everywhere.
pub fn betweenness(g: &HashtagGraph) -> BTreeMap<String, f64> {
    let n = g.node_count();
    let mut cb = vec![0.0; n];
    for s in 0..n {
        let mut stack = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    // Each unordered pair was counted from both endpoints.
    let scale = if n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.0
    };
    g.names.iter().cloned().zip(cb.into_iter().map(|c| c * scale)).collect()
}

pub fn clustering_coefficient(g: &HashtagGraph) -> BTreeMap<String, f64> {
    (0..g.node_count())
        .map(|v| {
            let nbrs: Vec<usize> = g.neighbors(v).collect();
            let d = nbrs.len();
            let c = if d < 2 {
                0.0
            } else {
                let mut links = 0usize;
                for (i, &a) in nbrs.iter().enumerate() {
                    links += nbrs[i + 1..].iter().filter(|&&b| g.weight(a, b) > 0).count();
                }
                2.0 * links as f64 / (d * (d - 1)) as f64
            };
            (g.names[v].clone(), c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(posts: &[&[&str]]) -> HashtagGraph {
        build_graph(posts.iter().map(|p| p.iter()))
    }

    #[test]
    fn triangle_from_one_post() {
        let g = tags(&[&["a", "b", "c"]]);
        assert_eq!(g.edge_count(), 3);
        assert!(g.edges().all(|(_, _, w)| w == 1));
    }

    #[test]
    fn repeated_pairs_accumulate_weight() {
        let g = tags(&[&["a", "b"], &["#A", "b"]]);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.weight(0, 1), 2);
        assert_eq!(g.frequency(0), 2);
        assert_eq!(g.edge_list(), "a\tb\t2\n");
    }

    #[test]
    fn lone_tag_has_no_self_loop() {
        let g = tags(&[&["a"], &["a", "a"]]);
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
        assert_eq!(g.frequency(0), 2);
    }

    #[test]
    fn path_and_star_betweenness() {
        let path = HashtagGraph::from_edges(3, &[(0, 1), (1, 2)]);
        let b = betweenness(&path);
        assert_eq!(b["n1"], 1.0);
        assert_eq!(b["n0"], 0.0);
        let star = HashtagGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let b = betweenness(&star);
        assert!((b["n0"] - 1.0).abs() < 1e-12);
        assert_eq!(b["n3"], 0.0);
    }

    #[test]
    fn triangle_and_star_clustering() {
        let tri = HashtagGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        assert!(clustering_coefficient(&tri).values().all(|&c| c == 1.0));
        let star = HashtagGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(clustering_coefficient(&star)["n0"], 0.0);
    }
}
