//! Graph fixtures with a known betweenness effect.
//!
//! Node `effect_node` bridges clique A (2 nodes) and clique B. Off-task B has
//! 2 nodes and the bridge scores 4; on-task B absorbs a spare pair and the
//! bridge scores 8. Remaining nodes form an Erdős–Rényi component that is
//! drawn from the same law in both conditions. Every edge is dropped
//! independently with a per-subject rate.

use rand::Rng;

use super::analysis::SubjectGraphs;
use crate::data::{Edge, EdgeSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedEffect {
    /// At least 8.
    pub p: usize,
    pub subjects: usize,
    pub on_len: usize,
    pub off_len: usize,
    pub effect_node: usize,
    pub noise_density: f64,
    /// Upper bound of the per-subject dropout rate.
    pub max_dropout: f64,
}

impl Default for PlantedEffect {
    fn default() -> Self {
        Self { p: 10, subjects: 24, on_len: 20, off_len: 20, effect_node: 0, noise_density: 0.4, max_dropout: 0.2 }
    }
}

/// Draws subjects; with `effect == false` both conditions use the off law.
pub fn planted_effect<R: Rng + ?Sized>(cfg: &PlantedEffect, effect: bool, rng: &mut R) -> Vec<SubjectGraphs> {
    assert!(cfg.p >= 8 && cfg.effect_node < cfg.p);
    // node roles after relabelling so that the bridge lands on effect_node
    let mut label: Vec<usize> = (0..cfg.p).collect();
    label.swap(0, cfg.effect_node);
    let (a, b, spare, noise) = ([1, 2], [3, 4], [5, 6], 7..cfg.p);

    let structure = |on: bool| -> EdgeSet {
        let mut e = EdgeSet::new();
        let mut b_nodes = b.to_vec();
        if on {
            b_nodes.extend(spare);
        } else {
            e.insert(Edge::new(spare[0], spare[1]));
        }
        for clique in [&a[..], &b_nodes[..]] {
            for (i, &u) in clique.iter().enumerate() {
                e.insert(Edge::new(0, u));
                for &v in &clique[i + 1..] {
                    e.insert(Edge::new(u, v));
                }
            }
        }
        e
    };
    let (on_base, off_base) = (structure(effect), structure(false));

    let draw = |base: &EdgeSet, dropout: f64, rng: &mut R| -> EdgeSet {
        let mut e: EdgeSet = base.iter().copied().filter(|_| !rng.random_bool(dropout)).collect();
        let nodes: Vec<usize> = noise.clone().collect();
        for (i, &u) in nodes.iter().enumerate() {
            for &v in &nodes[i + 1..] {
                if rng.random_bool(cfg.noise_density) {
                    e.insert(Edge::new(u, v));
                }
            }
        }
        e.into_iter().map(|Edge(u, v)| Edge::new(label[u], label[v])).collect()
    };

    (0..cfg.subjects)
        .map(|_| {
            let dropout = rng.random_range(0.0..=cfg.max_dropout);
            SubjectGraphs {
                on: (0..cfg.on_len).map(|_| draw(&on_base, dropout, rng)).collect(),
                off: (0..cfg.off_len).map(|_| draw(&off_base, dropout, rng)).collect(),
            }
        })
        .collect()
}
