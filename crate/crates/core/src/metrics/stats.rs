use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest pooled sample size handled by exact enumeration.
const EXACT_MAX: usize = 12;

/// Two-sided Wilcoxon rank-sum p-value.
///
/// Exact over all rank assignments (midranks for ties) when the pooled size
/// is at most 12, otherwise the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidInput("rank-sum test needs two nonempty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("rank-sum test got NaN".into()));
    }
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(1.0);
    }
    let w: f64 = ranks[..n].iter().sum();
    let total = (n + m) as f64;
    let expected = n as f64 * (total + 1.0) / 2.0;
    let observed = (w - expected).abs();

    if n + m <= EXACT_MAX {
        let (mut extreme, mut count) = (0u64, 0u64);
        for_each_subset_sum(&ranks, n, |s| {
            count += 1;
            if (s - expected).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        });
        return Ok(extreme as f64 / count as f64);
    }

    let ties: f64 = tie_groups(&pooled).map(|t| t * t * t - t).sum();
    let var = n as f64 * m as f64 / 12.0 * ((total + 1.0) - ties / (total * (total - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((observed - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z)).min(1.0))
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_groups(v: &[f64]) -> impl Iterator<Item = f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        sizes.push((j - i + 1) as f64);
        i = j + 1;
    }
    sizes.into_iter()
}

/// Calls `f` with the sum of every `k`-subset of `vals`.
fn for_each_subset_sum(vals: &[f64], k: usize, mut f: impl FnMut(f64)) {
    fn rec(vals: &[f64], k: usize, start: usize, acc: f64, f: &mut dyn FnMut(f64)) {
        if k == 0 {
            f(acc);
            return;
        }
        for i in start..=(vals.len() - k) {
            rec(vals, k - 1, i + 1, acc + vals[i], f);
        }
    }
    rec(vals, k, 0, 0.0, &mut f);
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * pvalues[i]).min(1.0));
        out[i] = running;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_separated_samples() {
        let p = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_abs_diff_eq!(p, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn identical_samples() {
        assert_eq!(wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(wilcoxon_rank_sum(&[4.0; 10], &[4.0; 9]).unwrap(), 1.0);
    }

    #[test]
    fn exact_with_ties() {
        // pooled midranks 1.5 1.5 3 4; x takes {1.5, 1.5}: W = 3, E = 5
        // the six 2-subsets sum to 3, 4.5, 5.5, 4.5, 5.5, 7 and two are >= 2 from E
        let p = wilcoxon_rank_sum(&[1.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(p, 2.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn normal_approximation_matches_reference() {
        // reference: two-sided asymptotic Mann-Whitney with continuity correction
        let x = [0.3, 1.2, 2.5, 2.5, 3.1, 4.0, 4.4, 5.9, 6.1, 7.3, 8.8, 9.0];
        let y = [1.0, 2.5, 3.3, 3.3, 5.0, 5.5, 7.7, 8.1, 9.4, 9.9, 10.2, 11.5, 12.0, 12.5];
        assert_abs_diff_eq!(wilcoxon_rank_sum(&x, &y).unwrap(), 0.06762678995114928, epsilon = 1e-3);
        let x: Vec<f64> = (1..=7).map(f64::from).collect();
        let y: Vec<f64> = (8..=13).map(f64::from).collect();
        assert_abs_diff_eq!(wilcoxon_rank_sum(&x, &y).unwrap(), 0.0034052358212947604, epsilon = 1e-3);
    }

    #[test]
    fn rejects_empty() {
        assert!(wilcoxon_rank_sum(&[], &[1.0]).is_err());
    }

    #[test]
    fn holm_examples() {
        assert_eq!(holm_adjust(&[0.01, 0.04]).unwrap(), vec![0.02, 0.04]);
        assert_eq!(holm_adjust(&[0.04, 0.01]).unwrap(), vec![0.04, 0.02]);
        assert_eq!(holm_adjust(&[0.2; 3]).unwrap(), vec![0.6000000000000001; 3]);
        assert_eq!(holm_adjust(&[0.5; 3]).unwrap(), vec![1.0; 3]);
        assert_eq!(holm_adjust(&[0.3]).unwrap(), vec![0.3]);
        assert!(holm_adjust(&[1.5]).is_err());
    }

    proptest! {
        #[test]
        fn holm_is_monotone_and_conservative(ps in proptest::collection::vec(0.0f64..=1.0, 1..20)) {
            let adj = holm_adjust(&ps).unwrap();
            let mut order: Vec<usize> = (0..ps.len()).collect();
            order.sort_by(|&a, &b| ps[a].total_cmp(&ps[b]));
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
            for (a, p) in adj.iter().zip(&ps) {
                prop_assert!(a >= p && *a <= 1.0);
            }
        }

        #[test]
        fn rank_sum_is_symmetric(x in proptest::collection::vec(-5.0f64..5.0, 1..9),
                                 y in proptest::collection::vec(-5.0f64..5.0, 1..9)) {
            let a = wilcoxon_rank_sum(&x, &y).unwrap();
            let b = wilcoxon_rank_sum(&y, &x).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
