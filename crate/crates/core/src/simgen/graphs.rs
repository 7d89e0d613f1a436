use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Edge, EdgeSet};
use crate::error::{Error, Result};

/// Random graph families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum GraphModel {
    ErdosRenyi { theta: f64 },
    BarabasiAlbert { power: f64 },
    WattsStrogatz { beta: f64, base_degree: usize },
}

impl GraphModel {
    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if p < 2 {
            return bad(format!("graphs need at least 2 nodes, got {p}"));
        }
        match *self {
            GraphModel::ErdosRenyi { theta } if !(0.0..=1.0).contains(&theta) => {
                bad(format!("edge probability {theta} outside [0, 1]"))
            }
            GraphModel::BarabasiAlbert { power } if !(power.is_finite() && power > 0.0) => {
                bad(format!("attachment power must be positive, got {power}"))
            }
            GraphModel::WattsStrogatz { beta, .. } if !(0.0..=1.0).contains(&beta) => {
                bad(format!("rewiring probability {beta} outside [0, 1]"))
            }
            GraphModel::WattsStrogatz { base_degree: k, .. } if k < 2 || k % 2 == 1 || k >= p => {
                bad(format!("lattice degree must be even, >= 2 and < {p}, got {k}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeStrengthLaw {
    Fixed {
        value: f64,
    },
    /// Uniform on `[-hi, -lo] ∪ [lo, hi]`, each side with probability 1/2.
    UniformSymmetric {
        lo: f64,
        hi: f64,
    },
}

impl EdgeStrengthLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EdgeStrengthLaw::Fixed { value } if !value.is_finite() => {
                Err(Error::InvalidInput(format!("edge strength {value} is not finite")))
            }
            EdgeStrengthLaw::UniformSymmetric { lo, hi } if !(lo > 0.0 && lo < hi && hi.is_finite()) => {
                Err(Error::InvalidInput(format!("need 0 < lo < hi, got [{lo}, {hi}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            EdgeStrengthLaw::Fixed { value } => value,
            EdgeStrengthLaw::UniformSymmetric { lo, hi } => {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.random_range(lo..=hi)
            }
        }
    }
}

/// Draws an undirected simple graph on `p` nodes.
pub fn gen_graph(model: &GraphModel, p: usize, rng: &mut impl Rng) -> Result<EdgeSet> {
    model.validate(p)?;
    Ok(match *model {
        GraphModel::ErdosRenyi { theta } => erdos_renyi(p, theta, rng),
        GraphModel::BarabasiAlbert { power } => barabasi_albert(p, power, rng),
        GraphModel::WattsStrogatz { beta, base_degree } => watts_strogatz(p, base_degree, beta, rng),
    })
}

fn erdos_renyi(p: usize, theta: f64, rng: &mut impl Rng) -> EdgeSet {
    let mut edges = EdgeSet::new();
    for a in 0..p {
        for b in (a + 1)..p {
            if rng.random_bool(theta) {
                edges.insert(Edge(a, b));
            }
        }
    }
    edges
}

/// Seed edge 0-1, then each arriving node attaches once with probability
/// proportional to `degree^power`. Always a spanning tree.
fn barabasi_albert(p: usize, power: f64, rng: &mut impl Rng) -> EdgeSet {
    let mut degree = vec![0usize; p];
    let mut edges = EdgeSet::new();
    edges.insert(Edge(0, 1));
    degree[0] = 1;
    degree[1] = 1;
    for v in 2..p {
        let weights: Vec<f64> = degree[..v].iter().map(|&d| (d as f64).powf(power)).collect();
        let target = WeightedIndex::new(&weights).expect("existing nodes all have degree >= 1").sample(rng);
        edges.insert(Edge::new(target, v));
        degree[target] += 1;
        degree[v] = 1;
    }
    edges
}

/// Ring lattice where each node links to its `k/2` nearest neighbours on
/// each side; each lattice edge `(i, i+j)` then has its far end moved to a
/// uniformly chosen non-neighbour with probability `beta`.
fn watts_strogatz(p: usize, k: usize, beta: f64, rng: &mut impl Rng) -> EdgeSet {
    let mut adj = vec![vec![false; p]; p];
    for i in 0..p {
        for j in 1..=k / 2 {
            let b = (i + j) % p;
            adj[i][b] = true;
            adj[b][i] = true;
        }
    }
    for j in 1..=k / 2 {
        for i in 0..p {
            let b = (i + j) % p;
            if !adj[i][b] || !rng.random_bool(beta) {
                continue;
            }
            let free: Vec<usize> = (0..p).filter(|&w| w != i && !adj[i][w]).collect();
            if free.is_empty() {
                continue;
            }
            let w = free[rng.random_range(0..free.len())];
            adj[i][b] = false;
            adj[b][i] = false;
            adj[i][w] = true;
            adj[w][i] = true;
        }
    }
    let mut edges = EdgeSet::new();
    for (a, row) in adj.iter().enumerate() {
        for b in (a + 1)..p {
            if row[b] {
                edges.insert(Edge(a, b));
            }
        }
    }
    edges
}

/// Weighted adjacency plus diagonal loading `1 + max(0, rowsum|w| - 0.9)`.
/// Every Gershgorin disc then sits at or right of 0.1.
pub fn graph_to_precision(
    edges: &EdgeSet,
    p: usize,
    law: &EdgeStrengthLaw,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    law.validate()?;
    let mut m = DMatrix::zeros(p, p);
    for &Edge(a, b) in edges {
        if b >= p {
            return Err(Error::InvalidInput(format!("edge ({a}, {b}) outside {p} nodes")));
        }
        let w = law.sample(rng);
        m[(a, b)] = w;
        m[(b, a)] = w;
    }
    for j in 0..p {
        let rowsum: f64 = m.row(j).iter().map(|v| v.abs()).sum();
        m[(j, j)] = 1.0 + (rowsum - 0.9).max(0.0);
    }
    Ok(m)
}
