//! Two-sided Wilcoxon rank-sum test with midranks for ties.
//!
//! Small samples (`|a| + |b| <= 12`) use the exact null distribution of the
//! rank sum; larger ones the normal approximation with tie and continuity
//! correction. Lower values are better, so `a` is `Better` when it ranks
//! significantly lower than `b`.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

pub const ALPHA: f64 = 0.05;
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Better,
    Worse,
    Identical,
    Insignificant,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Better => "better",
            Verdict::Worse => "worse",
            Verdict::Identical => "identical",
            Verdict::Insignificant => "insignificant",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonVerdict {
    pub verdict: Verdict,
    pub p_value: f64,
    /// Rank sum of `a`.
    pub statistic: f64,
}

/// Midranks (1-based) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share the average of ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Exact two-sided p-value: the probability, over all ways of assigning
/// `na` of the pooled ranks to `a`, of a rank sum at least as far from its
/// mean as `observed`. Ranks are passed doubled so midranks are integers.
pub fn exact_p_value(doubled_ranks: &[u64], na: usize, observed_doubled: u64) -> f64 {
    let n = doubled_ranks.len();
    let max_sum: u64 = doubled_ranks.iter().sum();
    // counts[j][s]: subsets of size j with doubled rank sum s
    let mut counts = vec![vec![0u64; max_sum as usize + 1]; na + 1];
    counts[0][0] = 1;
    for &r in doubled_ranks {
        for j in (1..=na).rev() {
            for s in (r as usize..=max_sum as usize).rev() {
                counts[j][s] += counts[j - 1][s - r as usize];
            }
        }
    }
    let total: u64 = counts[na].iter().sum();
    // mean of the doubled sum is na * (n + 1)
    let mean = (na * (n + 1)) as i64;
    let dev = (observed_doubled as i64 - mean).abs();
    let extreme: u64 = counts[na]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - mean).abs() >= dev)
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / total as f64
}

/// Normal approximation with tie correction and a continuity correction of
/// one half on the rank sum.
pub fn approximate_p_value(ranks: &[f64], na: usize, rank_sum: f64) -> f64 {
    let n = ranks.len() as f64;
    let (na_f, nb_f) = (na as f64, n - na as f64);
    let mean = na_f * (n + 1.0) / 2.0;
    let ties = tie_term(ranks);
    let var = na_f * nb_f / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((rank_sum - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z)).min(1.0)
}

/// `Σ (t^3 - t)` over groups of tied ranks.
fn tie_term(ranks: &[f64]) -> f64 {
    let s = sorted(ranks);
    let mut total = 0.0;
    let mut i = 0;
    while i < s.len() {
        let mut j = i + 1;
        while j < s.len() && s[j] == s[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

/// Compares `a` against `b` (lower is better) at significance [`ALPHA`].
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> WilcoxonVerdict {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be non-empty");
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    let all_equal = pooled.iter().all(|v| *v == pooled[0]);
    if all_equal || sorted(a) == sorted(b) {
        return WilcoxonVerdict {
            verdict: Verdict::Identical,
            p_value: 1.0,
            statistic: rank_sum,
        };
    }
    let p_value = if pooled.len() <= EXACT_LIMIT {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r) as u64).collect();
        exact_p_value(&doubled, a.len(), (2.0 * rank_sum) as u64)
    } else {
        approximate_p_value(&ranks, a.len(), rank_sum)
    };
    let expected = a.len() as f64 * (pooled.len() + 1) as f64 / 2.0;
    let verdict = if p_value >= ALPHA {
        Verdict::Insignificant
    } else if rank_sum < expected {
        Verdict::Better
    } else {
        Verdict::Worse
    };
    WilcoxonVerdict {
        verdict,
        p_value,
        statistic: rank_sum,
    }
}
