//! One-sided Wilcoxon–Mann–Whitney rank-sum test.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest combined sample size evaluated by exact enumeration.
pub const EXACT_MAX_TOTAL: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankSumResult {
    /// Mann–Whitney U of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub method: Method,
    pub n_a: usize,
    pub n_b: usize,
}

/// Mid-ranks (1-based) of `values` and the tie term sum(t^3 - t).
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of `m`-subsets of ranks 1..=total with each possible U value,
/// indexed by U = rank sum - m(m+1)/2.
fn exact_u_counts(m: usize, total: usize) -> Vec<u64> {
    let max_sum = total * (total + 1) / 2;
    // dp[k][s]: number of k-subsets of the ranks seen so far with sum s
    let mut dp = vec![vec![0u64; max_sum + 1]; m + 1];
    dp[0][0] = 1;
    for rank in 1..=total {
        for k in (1..=m.min(rank)).rev() {
            for s in (rank..=max_sum).rev() {
                dp[k][s] += dp[k - 1][s - rank];
            }
        }
    }
    let offset = m * (m + 1) / 2;
    let n = total - m;
    dp[m][offset..=offset + m * n].to_vec()
}

/// Full test result for the alternative "A is stochastically greater than B".
/// Non-finite entries are dropped from both samples first.
pub fn rank_sum_greater(sample_a: &[f64], sample_b: &[f64]) -> Result<RankSumResult> {
    let a: Vec<f64> = sample_a.iter().copied().filter(|x| x.is_finite()).collect();
    let b: Vec<f64> = sample_b.iter().copied().filter(|x| x.is_finite()).collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::TestInfeasible(format!(
            "rank-sum test needs non-empty samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (m, n) = (a.len(), b.len());
    let total = m + n;
    let combined: Vec<f64> = a.iter().chain(&b).copied().collect();
    let (ranks, ties) = average_ranks(&combined);
    let rank_sum_a: f64 = ranks[..m].iter().sum();
    let u = rank_sum_a - (m * (m + 1)) as f64 / 2.0;
    let (mf, nf, tf) = (m as f64, n as f64, total as f64);

    if total <= EXACT_MAX_TOTAL && ties == 0.0 {
        let counts = exact_u_counts(m, total);
        let observed = u.round() as usize;
        let upper: u64 = counts[observed..].iter().sum();
        let all: u64 = counts.iter().sum();
        return Ok(RankSumResult {
            u,
            p_value: upper as f64 / all as f64,
            method: Method::Exact,
            n_a: m,
            n_b: n,
        });
    }

    let mean = mf * nf / 2.0;
    let variance = mf * nf / 12.0 * ((tf + 1.0) - ties / (tf * (tf - 1.0)));
    let p_value = if variance <= 0.0 {
        // every observation tied: no evidence in either direction
        0.5
    } else {
        let z = (u - mean - 0.5) / variance.sqrt();
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    };
    Ok(RankSumResult {
        u,
        p_value,
        method: Method::Normal,
        n_a: m,
        n_b: n,
    })
}

/// One-sided p-value for "A is stochastically greater than B".
pub fn mann_whitney_greater(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    rank_sum_greater(sample_a, sample_b).map(|r| r.p_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        let (r, t) = average_ranks(&[1.0, 2.0, 2.0, 4.0, 5.0, 6.0, 7.0, 7.0, 9.0, 10.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0, 5.0, 6.0, 7.5, 7.5, 9.0, 10.0]);
        assert_eq!(t, 12.0);
    }

    #[test]
    fn exact_separated_samples() {
        // only one of the C(6,3) = 20 rank assignments gives U = 9
        let r = rank_sum_greater(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.method, Method::Exact);
        assert_eq!(r.u, 9.0);
        assert_eq!(r.p_value, 1.0 / 20.0);
        // reversed: U = 0 and every assignment has U >= 0
        assert_eq!(mann_whitney_greater(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 1.0);
    }

    #[test]
    fn identical_samples_near_half() {
        let p = mann_whitney_greater(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        // ties force the normal approximation; continuity correction pulls p above 0.5
        assert!((p - 0.5).abs() < 0.1, "{p}");
        // scipy asymptotic reference for the same input
        assert!((p - 0.5902615116112394).abs() < 1e-12);
        assert_eq!(mann_whitney_greater(&[16.0; 40], &[16.0; 40]).unwrap(), 0.5);
    }

    #[test]
    fn drops_undefined_entries() {
        let p = mann_whitney_greater(&[4.0, f64::NAN, 5.0, 6.0], &[1.0, 2.0, f64::NAN, 3.0]).unwrap();
        assert_eq!(p, 0.05);
        assert!(matches!(
            mann_whitney_greater(&[f64::NAN], &[1.0]),
            Err(Error::TestInfeasible(_))
        ));
        assert!(mann_whitney_greater(&[], &[1.0]).is_err());
    }

    #[test]
    fn normal_approximation_reference() {
        // 1..=11 against 6.5..=16.5: pairs with a > b number 1+2+3+4+5 = 15,
        // no ties so the variance is m n (N + 1) / 12
        let a: Vec<f64> = (1..=11).map(f64::from).collect();
        let b: Vec<f64> = (6..=16).map(|x| f64::from(x) + 0.5).collect();
        let r = rank_sum_greater(&a, &b).unwrap();
        assert_eq!(r.method, Method::Normal);
        assert_eq!(r.u, 15.0);
        // scipy.stats.mannwhitneyu(..., alternative="greater", method="asymptotic")
        assert!((r.p_value - 0.9987385884690748).abs() < 1e-12, "{}", r.p_value);
    }

    #[test]
    fn exact_counts_sum_to_binomial() {
        let c = exact_u_counts(5, 12);
        assert_eq!(c.iter().sum::<u64>(), 792);
        assert_eq!(c.len(), 36);
        // symmetric distribution
        assert!(c.iter().zip(c.iter().rev()).all(|(x, y)| x == y));
    }
}
