//! Synthetic piecewise-stationary VAR(1) data with known networks.

mod graphs;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{matrix_edges, EdgeSet, GraphSequence, MatrixKind, MatrixSequence, TimeSeries};
use crate::error::{Error, Result};

pub use graphs::{gen_graph, graph_to_precision, EdgeStrengthLaw, GraphModel};

/// Name of the generator recorded in every output.
pub const RNG_ALGORITHM: &str = "ChaCha20";

pub const PRESETS: [&str; 8] = ["sim1a", "sim1b", "sim1c", "sim2a", "sim2b", "sim2c", "sim3a", "sim3b"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub model: GraphModel,
    pub strength: EdgeStrengthLaw,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub p: usize,
    pub segments: Vec<Segment>,
    /// Segment `k >= 2` reuses the network of segment `k - 2`.
    #[serde(default)]
    pub cyclic: bool,
    #[serde(rename = "ar", default = "default_ar")]
    pub ar_coefficient: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_ar() -> f64 {
    0.3
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("scenario has no segments".into()));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(Error::InvalidInput(format!("AR coefficient {} outside [0, 1)", self.ar_coefficient)));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if s.length < 2 {
                return Err(Error::InvalidInput(format!("segment {k} shorter than 2")));
            }
            s.model.validate(self.p)?;
            s.strength.validate()?;
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn from_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Self = serde_json::from_str(&text)?;
        s.validate()?;
        Ok(s)
    }

    /// Three segments on `p = 10` nodes. `seglen` overrides the default
    /// length of 100 and is meant for the `sim3*` family.
    pub fn preset(name: &str, seglen: Option<usize>, seed: u64) -> Result<Self> {
        let er = GraphModel::ErdosRenyi { theta: 0.1 };
        let ba = GraphModel::BarabasiAlbert { power: 1.0 };
        let ws = GraphModel::WattsStrogatz { beta: 0.75, base_degree: 2 };
        let fixed = EdgeStrengthLaw::Fixed { value: 0.6 };
        let uniform = EdgeStrengthLaw::UniformSymmetric { lo: 0.25, hi: 0.5 };
        let (model, strength, cyclic) = match name {
            "sim1a" => (er, fixed, false),
            "sim1b" => (ba, uniform, false),
            "sim1c" => (ws, uniform, false),
            "sim2a" => (er, fixed, true),
            "sim2b" => (ba, uniform, true),
            "sim2c" => (ws, uniform, true),
            "sim3a" => (ba, uniform, false),
            "sim3b" => (ws, uniform, false),
            _ => {
                return Err(Error::InvalidInput(format!("unknown preset {name:?}; available: {}", PRESETS.join(", "))))
            }
        };
        let length = seglen.unwrap_or(100);
        let s = Self {
            p: 10,
            segments: vec![Segment { model, strength, length }; 3],
            cyclic,
            ar_coefficient: default_ar(),
            seed,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub true_precisions: MatrixSequence,
    pub true_edge_sets: GraphSequence,
    /// First time index of every segment after the first.
    pub change_points: Vec<usize>,
    pub segment_precisions: Vec<DMatrix<f64>>,
}

impl GroundTruth {
    pub fn write_json(&self, path: &Path, scenario: &SimScenario, replicate: u64) -> Result<()> {
        #[derive(Serialize)]
        struct SegmentOut<'a> {
            start: usize,
            end: usize,
            precision: Vec<Vec<f64>>,
            edges: &'a EdgeSet,
        }
        #[derive(Serialize)]
        struct TruthFile<'a> {
            p: usize,
            #[serde(rename = "T")]
            t: usize,
            rng: &'static str,
            seed: u64,
            replicate: u64,
            change_points: &'a [usize],
            segments: Vec<SegmentOut<'a>>,
        }
        let mut start = 0;
        let mut segments = Vec::new();
        for (seg, m) in scenario.segments.iter().zip(&self.segment_precisions) {
            segments.push(SegmentOut {
                start,
                end: start + seg.length,
                precision: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
                edges: &self.true_edge_sets.edge_sets[start],
            });
            start += seg.length;
        }
        let doc = TruthFile {
            p: scenario.p,
            t: self.true_precisions.len(),
            rng: RNG_ALGORITHM,
            seed: scenario.seed,
            replicate,
            change_points: &self.change_points,
            segments,
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, &doc)?;
        writeln!(out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Generator for replicate `replicate` of a scenario: the scenario seed picks
/// the key and the replicate index picks the stream.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

pub fn simulate(scenario: &SimScenario) -> Result<(TimeSeries, GroundTruth)> {
    simulate_replicate(scenario, 0)
}

pub fn simulate_replicate(scenario: &SimScenario, replicate: u64) -> Result<(TimeSeries, GroundTruth)> {
    scenario.validate()?;
    let mut rng = replicate_rng(scenario.seed, replicate);
    let p = scenario.p;

    let mut segment_precisions: Vec<DMatrix<f64>> = Vec::new();
    for (k, seg) in scenario.segments.iter().enumerate() {
        let m = if scenario.cyclic && k >= 2 {
            segment_precisions[k - 2].clone()
        } else {
            let g = gen_graph(&seg.model, p, &mut rng)?;
            graph_to_precision(&g, p, &seg.strength, &mut rng)?
        };
        segment_precisions.push(m);
    }

    let a = scenario.ar_coefficient;
    let mut factors = Vec::new();
    for (k, m) in segment_precisions.iter().enumerate() {
        let sigma =
            m.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(format!("segment {k} precision")))?.inverse();
        let stationary =
            sigma.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite(format!("segment {k} covariance")))?;
        let innovation = (sigma * (1.0 - a * a))
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("segment {k} innovation")))?;
        factors.push((stationary.l(), innovation.l()));
    }

    let t_total = scenario.total_len();
    let mut values = DMatrix::zeros(t_total, p);
    let mut prev = DVector::zeros(p);
    let mut t = 0;
    for (k, seg) in scenario.segments.iter().enumerate() {
        for _ in 0..seg.length {
            let eps = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = if t == 0 { &factors[0].0 * eps } else { &prev * a + &factors[k].1 * eps };
            values.set_row(t, &x.transpose());
            prev = x;
            t += 1;
        }
    }

    let mut per_time = Vec::with_capacity(t_total);
    let mut edge_sets = Vec::with_capacity(t_total);
    let mut change_points = Vec::new();
    for (k, (seg, m)) in scenario.segments.iter().zip(&segment_precisions).enumerate() {
        if k > 0 {
            change_points.push(per_time.len());
        }
        let edges = matrix_edges(m, 0.0);
        for _ in 0..seg.length {
            per_time.push(m.clone());
            edge_sets.push(edges.clone());
        }
    }
    let truth = GroundTruth {
        true_precisions: MatrixSequence::new(MatrixKind::Precision, per_time)?,
        true_edge_sets: GraphSequence::new(p, 0.0, edge_sets)?,
        change_points,
        segment_precisions,
    };
    let labels = (0..p).map(|i| format!("x{i}")).collect();
    Ok((TimeSeries::new(values, Some(labels))?, truth))
}
