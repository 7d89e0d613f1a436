use serde::{Deserialize, Serialize};

use crate::data::{EdgeSet, GraphSequence};
use crate::error::{Error, Result};

/// Precision, recall and F of a reported edge set against the truth.
///
/// Empty-set conventions: nothing reported scores precision 1 only when
/// nothing is true; nothing true scores recall 1; `P + R = 0` scores F 0.
pub fn prf_at_t(estimated: &EdgeSet, truth: &EdgeSet) -> (f64, f64, f64) {
    let hits = estimated.intersection(truth).count() as f64;
    let p = if estimated.is_empty() {
        if truth.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        hits / estimated.len() as f64
    };
    let r = if truth.is_empty() { 1.0 } else { hits / truth.len() as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
}

impl PrfCurve {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn mean_f(&self) -> f64 {
        mean(&self.f)
    }

    /// Mean F over time points `range`.
    pub fn mean_f_over(&self, range: std::ops::Range<usize>) -> f64 {
        mean(&self.f[range])
    }
}

pub fn f_curve(result: &GraphSequence, truth: &GraphSequence) -> Result<PrfCurve> {
    if result.len() != truth.len() || result.p != truth.p {
        return Err(Error::InvalidInput(format!(
            "graph sequences differ in shape: T={} p={} vs T={} p={}",
            result.len(),
            result.p,
            truth.len(),
            truth.p
        )));
    }
    let (mut precision, mut recall, mut f) = (Vec::new(), Vec::new(), Vec::new());
    for (d, t) in result.edge_sets.iter().zip(&truth.edge_sets) {
        let (a, b, c) = prf_at_t(d, t);
        precision.push(a);
        recall.push(b);
        f.push(c);
    }
    Ok(PrfCurve { precision, recall, f })
}

/// Mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// Absent with fewer than two samples.
    pub ci: Option<(f64, f64)>,
    pub sd: Option<f64>,
}

impl MeanCi {
    pub fn of(xs: &[f64]) -> Self {
        let m = mean(xs);
        if xs.len() < 2 {
            return Self { mean: m, ci: None, sd: None };
        }
        let var = compensated_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64;
        let sd = var.sqrt();
        let half = 1.96 * sd / (xs.len() as f64).sqrt();
        Self { mean: m, ci: Some((m - half, m + half)), sd: Some(sd) }
    }
}

/// Per-time mean F and 95% interval over replicates.
pub fn mean_f(curves: &[PrfCurve]) -> Result<Vec<MeanCi>> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidInput("no curves to average".into()));
    };
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::InvalidInput("curves differ in length".into()));
    }
    Ok((0..first.len()).map(|t| MeanCi::of(&curves.iter().map(|c| c.f[t]).collect::<Vec<_>>())).collect())
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Neumaier summation.
pub(crate) fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Edge;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn set(pairs: &[(usize, usize)]) -> EdgeSet {
        pairs.iter().map(|&(a, b)| Edge::new(a, b)).collect()
    }

    #[test]
    fn perfect_recovery() {
        let t = set(&[(0, 1), (2, 3)]);
        assert_eq!(prf_at_t(&t, &t), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_precision_full_recall() {
        let (p, r, f) = prf_at_t(&set(&[(0, 1), (1, 2)]), &set(&[(0, 1)]));
        assert_eq!((p, r), (0.5, 1.0));
        assert_abs_diff_eq!(f, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn partial_overlap() {
        assert_eq!(prf_at_t(&set(&[(0, 1), (1, 2)]), &set(&[(1, 2), (2, 3)])), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_conventions() {
        let e = EdgeSet::new();
        assert_eq!(prf_at_t(&e, &e), (1.0, 1.0, 1.0));
        assert_eq!(prf_at_t(&e, &set(&[(0, 1)])), (0.0, 0.0, 0.0));
        assert_eq!(prf_at_t(&set(&[(0, 1)]), &e), (0.0, 1.0, 0.0));
    }

    #[test]
    fn mean_curves() {
        let c = PrfCurve { precision: vec![1.0; 3], recall: vec![1.0; 3], f: vec![1.0; 3] };
        let m = mean_f(&[c.clone(), c.clone()]).unwrap();
        assert!(m.iter().all(|x| x.mean == 1.0 && x.ci == Some((1.0, 1.0))));
        let single = mean_f(std::slice::from_ref(&c)).unwrap();
        assert!(single.iter().all(|x| x.ci.is_none()));
        let short = PrfCurve { f: vec![1.0], ..c.clone() };
        assert!(mean_f(&[c, short]).is_err());
        assert!(mean_f(&[]).is_err());
    }

    #[test]
    fn interval_width() {
        let m = MeanCi::of(&[0.0, 1.0, 2.0, 3.0]);
        let sd = (5.0f64 / 3.0).sqrt();
        let (lo, hi) = m.ci.unwrap();
        assert_abs_diff_eq!(hi - lo, 2.0 * 1.96 * sd / 2.0, epsilon = 1e-12);
        assert_eq!(m.mean, 1.5);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs.into_iter()), 2.0);
    }

    fn edge_set(p: usize) -> impl Strategy<Value = EdgeSet> {
        proptest::collection::btree_set((0..p, 0..p), 0..12)
            .prop_map(|s| s.into_iter().filter(|(a, b)| a != b).map(|(a, b)| Edge::new(a, b)).collect())
    }

    proptest! {
        #[test]
        fn scores_are_bounded(d in edge_set(6), t in edge_set(6)) {
            let (p, r, f) = prf_at_t(&d, &t);
            for v in [p, r, f] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let lo = p.min(r);
            prop_assert!(f <= 2.0 * lo / (1.0 + lo) + 1e-12);
            if p + r > 0.0 {
                prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-15);
            }
        }
    }
}
