use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::HashtagGraph;

pub const DEFAULT_MAX_NODES_PER_CLUSTER: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Full membership. Clusters are ordered by total tag frequency
    /// (descending), members by frequency then name.
    pub clusters: Vec<Vec<String>>,
    pub modularity: f64,
    pub max_nodes_per_cluster: usize,
}

impl CommunityPartition {
    /// The most frequent members of each cluster, at most
    /// `max_nodes_per_cluster` of them.
    pub fn reported(&self) -> Vec<&[String]> {
        self.clusters
            .iter()
            .map(|c| &c[..c.len().min(self.max_nodes_per_cluster)])
            .collect()
    }
}

/// Weighted Newman modularity of a node labelling. An edgeless graph has
/// modularity 0.
pub fn modularity(g: &HashtagGraph, labels: &[usize]) -> f64 {
    let m = g.total_weight() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let n_labels = labels.iter().max().map_or(0, |&l| l + 1);
    let mut internal = vec![0.0; n_labels];
    let mut degree = vec![0.0; n_labels];
    for (a, b, w) in g.edges() {
        if labels[a] == labels[b] {
            internal[labels[a]] += w as f64;
        }
    }
    for v in 0..g.node_count() {
        degree[labels[v]] += g.weighted_degree(v) as f64;
    }
    internal
        .iter()
        .zip(&degree)
        .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
        .sum()
}

/// Greedy agglomerative modularity maximization: repeatedly merge the pair
/// of adjacent communities with the largest gain until no merge gains.
/// Ties go to the pair with the smallest community indices.
pub fn detect_communities(g: &HashtagGraph, max_nodes_per_cluster: usize) -> CommunityPartition {
    let n = g.node_count();
    let m = g.total_weight() as f64;
    let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    let mut alive = vec![true; n];
    if m > 0.0 {
        // e[i][j]: fraction of edge endpoints between communities i and j (each
        // direction counted), a[i]: fraction of endpoints in community i.
        let mut e: Vec<BTreeMap<usize, f64>> = (0..n)
            .map(|v| {
                g.neighbors(v)
                    .map(|u| (u, g.weight(v, u) as f64 / (2.0 * m)))
                    .collect()
            })
            .collect();
        let mut a: Vec<f64> = (0..n).map(|v| g.weighted_degree(v) as f64 / (2.0 * m)).collect();
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in (0..n).filter(|&i| alive[i]) {
                for (&j, &eij) in e[i].range(i + 1..) {
                    let gain = 2.0 * (eij - a[i] * a[j]);
                    if best.map_or(true, |(bg, _, _)| gain > bg) {
                        best = Some((gain, i, j));
                    }
                }
            }
            let Some((gain, i, j)) = best else { break };
            if gain <= 1e-15 {
                break;
            }
            // Merge j into i.
            let ej = std::mem::take(&mut e[j]);
            for (k, w) in ej {
                if k == i {
                    continue;
                }
                *e[i].entry(k).or_insert(0.0) += w;
                let ek = &mut e[k];
                ek.remove(&j);
                *ek.entry(i).or_insert(0.0) += w;
            }
            e[i].remove(&j);
            a[i] += a[j];
            a[j] = 0.0;
            alive[j] = false;
            let moved = std::mem::take(&mut members[j]);
            members[i].extend(moved);
        }
    }

    let mut labels = vec![0; n];
    let mut clusters: Vec<Vec<usize>> = members.into_iter().filter(|c| !c.is_empty()).collect();
    for c in &mut clusters {
        c.sort_by(|&x, &y| g.frequency(y).cmp(&g.frequency(x)).then(g.name(x).cmp(g.name(y))));
    }
    let total = |c: &Vec<usize>| c.iter().map(|&v| g.frequency(v)).sum::<u64>();
    clusters.sort_by(|x, y| total(y).cmp(&total(x)).then(g.name(x[0]).cmp(g.name(y[0]))));
    for (label, c) in clusters.iter().enumerate() {
        for &v in c {
            labels[v] = label;
        }
    }
    CommunityPartition {
        modularity: modularity(g, &labels),
        clusters: clusters
            .into_iter()
            .map(|c| c.into_iter().map(|v| g.name(v).to_string()).collect())
            .collect(),
        max_nodes_per_cluster,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_triangles_split_into_components() {
        let g = HashtagGraph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let p = detect_communities(&g, 10);
        let mut clusters: Vec<Vec<String>> = p.clusters.clone();
        for c in &mut clusters {
            c.sort();
        }
        clusters.sort();
        assert_eq!(clusters, [["n0", "n1", "n2"], ["n3", "n4", "n5"]]);
        assert!((p.modularity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reported_clusters_are_truncated() {
        let edges: Vec<(usize, usize)> = (0..15).flat_map(|a| (a + 1..15).map(move |b| (a, b))).collect();
        let g = HashtagGraph::from_edges(15, &edges);
        let p = detect_communities(&g, 10);
        assert_eq!(p.clusters.len(), 1);
        assert_eq!(p.clusters[0].len(), 15);
        assert_eq!(p.reported()[0].len(), 10);
    }

    #[test]
    fn edgeless_graph_keeps_singletons() {
        let g = HashtagGraph::from_edges(3, &[]);
        let p = detect_communities(&g, 10);
        assert_eq!(p.clusters.len(), 3);
        assert_eq!(p.modularity, 0.0);
    }
}
