use std::collections::VecDeque;

use crate::data::{Edge, EdgeSet};

/// Unnormalised betweenness of every node in the unweighted undirected graph.
///
/// Each unordered pair `{s, t}` spreads one unit over its shortest paths;
/// disconnected pairs contribute nothing.
pub fn betweenness(edges: &EdgeSet, p: usize) -> Vec<f64> {
    let mut adj = vec![Vec::new(); p];
    for &Edge(a, b) in edges {
        assert!(b < p, "edge ({a}, {b}) outside {p} nodes");
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut score = vec![0.0; p];
    let mut sigma = vec![0.0f64; p];
    let mut dist = vec![usize::MAX; p];
    let mut delta = vec![0.0f64; p];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut order = Vec::with_capacity(p);
    let mut queue = VecDeque::with_capacity(p);
    for s in 0..p {
        sigma.iter_mut().for_each(|v| *v = 0.0);
        dist.iter_mut().for_each(|v| *v = usize::MAX);
        delta.iter_mut().for_each(|v| *v = 0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
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
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                score[w] += delta[w];
            }
        }
    }
    // every unordered pair was visited from both ends
    score.iter_mut().for_each(|v| *v /= 2.0);
    score
}
