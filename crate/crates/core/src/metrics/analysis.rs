use serde::{Deserialize, Serialize};

use super::graph::betweenness;
use super::prf::{mean, MeanCi, PrfCurve};
use super::stats::{holm_adjust, wilcoxon_rank_sum};
use crate::data::EdgeSet;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// One subject's graphs split by condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectGraphs {
    pub on: Vec<EdgeSet>,
    pub off: Vec<EdgeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChange {
    pub id: usize,
    /// Group mean of per-subject mean betweenness.
    pub betweenness_on: f64,
    pub betweenness_off: f64,
    /// Percent; `None` when off is zero but on is not.
    pub pct_change: Option<f64>,
    pub p: f64,
    pub p_adj: f64,
    pub flagged: bool,
}

/// Mean betweenness across a sequence of graphs.
pub fn mean_betweenness(graphs: &[EdgeSet], p: usize) -> Result<Vec<f64>> {
    if graphs.is_empty() {
        return Err(Error::InvalidInput("no graphs to average".into()));
    }
    let per: Vec<Vec<f64>> = graphs.iter().map(|g| betweenness(g, p)).collect();
    Ok((0..p).map(|v| mean(&per.iter().map(|b| b[v]).collect::<Vec<_>>())).collect())
}

/// Per-node on-versus-off betweenness comparison across subjects.
///
/// Each subject contributes its mean betweenness within each condition; nodes
/// are tested with the rank-sum test and adjusted together by Holm.
pub fn betweenness_change(subjects: &[SubjectGraphs], p: usize, alpha: f64) -> Result<Vec<NodeChange>> {
    if subjects.is_empty() {
        return Err(Error::InvalidInput("no subjects".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut on = Vec::with_capacity(subjects.len());
    let mut off = Vec::with_capacity(subjects.len());
    for (i, s) in subjects.iter().enumerate() {
        if s.on.is_empty() || s.off.is_empty() {
            return Err(Error::InvalidInput(format!("subject {i} lacks graphs in one condition")));
        }
        on.push(mean_betweenness(&s.on, p)?);
        off.push(mean_betweenness(&s.off, p)?);
    }
    let mut nodes = Vec::with_capacity(p);
    let mut pvalues = Vec::with_capacity(p);
    for v in 0..p {
        let x: Vec<f64> = on.iter().map(|b| b[v]).collect();
        let y: Vec<f64> = off.iter().map(|b| b[v]).collect();
        let (m_on, m_off) = (mean(&x), mean(&y));
        let degenerate = x.iter().chain(&y).all(|&b| b == 0.0);
        let pct_change = if degenerate {
            Some(0.0)
        } else if m_off == 0.0 {
            (m_on == 0.0).then_some(0.0)
        } else {
            Some(100.0 * (m_on - m_off) / m_off)
        };
        let pv = if degenerate { 1.0 } else { wilcoxon_rank_sum(&x, &y)? };
        pvalues.push(pv);
        nodes.push(NodeChange {
            id: v,
            betweenness_on: m_on,
            betweenness_off: m_off,
            pct_change,
            p: pv,
            p_adj: f64::NAN,
            flagged: false,
        });
    }
    for (node, adj) in nodes.iter_mut().zip(holm_adjust(&pvalues)?) {
        node.p_adj = adj;
        node.flagged = adj < alpha;
    }
    Ok(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerTime {
    pub t: usize,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "mean_F")]
    pub mean_f: f64,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub per_time: Vec<PerTime>,
    pub summary: Option<Summary>,
    pub nodes: Vec<NodeChange>,
}

impl MetricsReport {
    /// Scores a single curve; the interval is over time points.
    pub fn from_curve(curve: &PrfCurve) -> Self {
        let per_time = (0..curve.len())
            .map(|t| PerTime { t, precision: curve.precision[t], recall: curve.recall[t], f: curve.f[t] })
            .collect();
        let s = MeanCi::of(&curve.f);
        Self { per_time, summary: Some(Summary { mean_f: s.mean, ci: s.ci }), nodes: Vec::new() }
    }

    pub fn from_nodes(nodes: Vec<NodeChange>) -> Self {
        Self { nodes, ..Self::default() }
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
