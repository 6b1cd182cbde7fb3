//! Nonparametric rank statistics: Mann-Whitney U, Wilcoxon signed-rank, and
//! Spearman correlation.
//!
//! Exact two-sided p-values are computed from the conditional permutation
//! distribution of the observed (mid)ranks via dynamic programming, so ties
//! are handled exactly; larger samples use the normal approximation with
//! tie correction and no continuity correction.

use crate::analysis::AnalysisError;

/// Sample-size bound (total observations) for the exact Mann-Whitney path.
const MWU_EXACT_LIMIT: usize = 40;

/// Non-zero-difference bound for the exact Wilcoxon path.
const WILCOXON_EXACT_LIMIT: usize = 25;

/// Midranks of `values`, doubled so they are exact integers.
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut doubled = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // midrank = (i+1 + j) / 2 in rank units; doubled = i + j + 1.
        let doubled_rank = (i + j + 1) as u64;
        for &k in &order[i..j] {
            doubled[k] = doubled_rank;
        }
        i = j;
    }
    doubled
}

/// Tie-group sizes of a sorted-by-value sequence.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

/// Standard normal CDF (Abramowitz & Stegun 7.1.26 rational approximation).
fn normal_cdf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.2316419 * x.abs());
    let poly = t
        * (0.319381530
            + t * (-0.356563782 + t * (1.781477937 + t * (-1.821255978 + t * 1.330274429))));
    let tail = (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt() * poly;
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided Mann-Whitney U test. Returns `(U, p)` where `U` is the
/// statistic of the first sample.
///
/// Exact for small samples: `p = P(|U - n1*n2/2| >= |u_obs - n1*n2/2|)`
/// under the permutation distribution conditional on the observed midranks.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<(f64, f64), AnalysisError> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(AnalysisError::InsufficientStrata("both groups must be non-empty".into()));
    }
    let combined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let doubled = doubled_midranks(&combined);
    let r1_doubled: u64 = doubled[..n1].iter().sum();
    // U1 = R1 - n1(n1+1)/2; doubled to stay in integers.
    let u1_doubled = r1_doubled - (n1 * (n1 + 1)) as u64;
    let u1 = u1_doubled as f64 / 2.0;

    let p = if n1 + n2 <= MWU_EXACT_LIMIT {
        mwu_exact_p(&doubled, n1, u1_doubled)
    } else {
        let n = (n1 + n2) as f64;
        let mean = (n1 * n2) as f64 / 2.0;
        let tie_term: f64 =
            tie_groups(&combined).iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
        let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
        if var <= 0.0 {
            return Err(AnalysisError::DegenerateInput("all observations tied".into()));
        }
        let z = (u1 - mean) / var.sqrt();
        2.0 * (1.0 - normal_cdf(z.abs()))
    };
    Ok((u1, p.min(1.0)))
}

/// Exact permutation p-value: DP over which positions the first group
/// occupies, counting subsets by doubled rank sum.
fn mwu_exact_p(doubled_ranks: &[u64], n1: usize, u1_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let max_sum = total as usize;
    // dp[k][s]: subsets of size k with doubled rank sum s.
    let mut dp = vec![vec![0f64; max_sum + 1]; n1 + 1];
    dp[0][0] = 1.0;
    for &r in doubled_ranks {
        let r = r as usize;
        for k in (0..n1).rev() {
            for s in 0..=max_sum.saturating_sub(r) {
                if dp[k][s] > 0.0 {
                    dp[k + 1][s + r] += dp[k][s];
                }
            }
        }
    }
    // All quantities in doubled-U units: U_d = s_d - n1(n1+1), with mean
    // n1*n2, so deviations stay integral even with midranks.
    let offset = (n1 * (n1 + 1)) as i64;
    let mean_doubled = (n1 * (doubled_ranks.len() - n1)) as i64;
    let obs_dev = (u1_doubled as i64 - mean_doubled).abs();
    let mut favorable = 0.0;
    let mut count = 0.0;
    for (s, &ways) in dp[n1].iter().enumerate() {
        if ways == 0.0 {
            continue;
        }
        count += ways;
        let u_doubled = s as i64 - offset;
        if (u_doubled - mean_doubled).abs() >= obs_dev {
            favorable += ways;
        }
    }
    favorable / count
}

/// Two-sided Wilcoxon signed-rank test over paired samples. Returns
/// `(w_plus, p)` where `w_plus` is the positive-rank sum. Zero differences
/// are dropped; all-zero input is degenerate. Exact for up to 25 non-zero
/// differences via sign-assignment enumeration, normal approximation with
/// tie correction above.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<(f64, f64), AnalysisError> {
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(AnalysisError::DegenerateInput("all paired differences are zero".into()));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let doubled = doubled_midranks(&abs);
    let w_plus_doubled: u64 =
        doubled.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| *r).sum();
    let w_plus = w_plus_doubled as f64 / 2.0;

    let p = if n <= WILCOXON_EXACT_LIMIT {
        wilcoxon_exact_p(&doubled, w_plus_doubled)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = tie_groups(&abs).iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return Err(AnalysisError::DegenerateInput("degenerate rank variance".into()));
        }
        let z = (w_plus - mean) / var.sqrt();
        2.0 * (1.0 - normal_cdf(z.abs()))
    };
    Ok((w_plus, p.min(1.0)))
}

/// Exact sign-assignment distribution of the positive-rank sum.
fn wilcoxon_exact_p(doubled_ranks: &[u64], w_obs_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut dp = vec![0f64; total as usize + 1];
    dp[0] = 1.0;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=total as usize - r).rev() {
            if dp[s] > 0.0 {
                dp[s + r] += dp[s];
            }
        }
    }
    // Mean of W+ (doubled) is total / 2; compare doubled deviations times 2
    // to stay integral.
    let obs_dev = (2 * w_obs_doubled as i64 - total as i64).abs();
    let mut favorable = 0.0;
    let mut count = 0.0;
    for (s, &ways) in dp.iter().enumerate() {
        if ways == 0.0 {
            continue;
        }
        count += ways;
        if (2 * s as i64 - total as i64).abs() >= obs_dev {
            favorable += ways;
        }
    }
    favorable / count
}

/// Spearman rank correlation (midranks, then Pearson). `None` when either
/// side has zero rank variance.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx: Vec<f64> = doubled_midranks(x).iter().map(|&r| r as f64 / 2.0).collect();
    let ry: Vec<f64> = doubled_midranks(y).iter().map(|&r| r as f64 / 2.0).collect();
    pearson(&rx, &ry)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force U distribution over all subsets of positions.
    fn mwu_brute_force(a: &[f64], b: &[f64]) -> (f64, f64) {
        let n1 = a.len();
        let combined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let doubled = doubled_midranks(&combined);
        let n = combined.len();
        let offset = (n1 * (n1 + 1)) as i64;
        let mean2 = (n1 * (n - n1)) as i64;
        let obs: i64 = doubled[..n1].iter().map(|&r| r as i64).sum::<i64>() - offset;
        let mut favorable = 0u64;
        let mut count = 0u64;
        // Enumerate subsets of size n1 via bitmask.
        for mask in 0u32..(1 << n) {
            if (mask.count_ones() as usize) != n1 {
                continue;
            }
            let sum: i64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| doubled[i] as i64).sum();
            let u = sum - offset;
            count += 1;
            if (u - mean2).abs() >= (obs - mean2).abs() {
                favorable += 1;
            }
        }
        (obs as f64 / 2.0, favorable as f64 / count as f64)
    }

    /// Brute-force Wilcoxon over all 2^n sign assignments.
    fn wilcoxon_brute_force(pairs: &[(f64, f64)]) -> (f64, f64) {
        let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        let doubled = doubled_midranks(&abs);
        let total: i64 = doubled.iter().map(|&r| r as i64).sum();
        let w_obs: i64 =
            doubled.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| *r as i64).sum();
        let n = diffs.len();
        let mut favorable = 0u64;
        for mask in 0u64..(1 << n) {
            let w: i64 =
                (0..n).filter(|i| mask & (1 << i) != 0).map(|i| doubled[i] as i64).sum();
            if (2 * w - total).abs() >= (2 * w_obs - total).abs() {
                favorable += 1;
            }
        }
        (w_obs as f64 / 2.0, favorable as f64 / (1u64 << n) as f64)
    }

    #[test]
    fn mwu_separated_groups_example() {
        let (u, p) = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(u, 0.0);
        // P(U=0) + P(U=9) = 2/20.
        assert!((p - 0.1).abs() < 1e-12, "p {p}");
    }

    #[test]
    fn mwu_matches_enumeration_on_random_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..60 {
            let n1 = rng.gen_range(1..=10);
            let n2 = rng.gen_range(1..=10);
            // Integer-ish values so ties occur often.
            let a: Vec<f64> = (0..n1).map(|_| rng.gen_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n2).map(|_| rng.gen_range(0..6) as f64).collect();
            let (u, p) = mann_whitney_u(&a, &b).unwrap();
            let (u_bf, p_bf) = mwu_brute_force(&a, &b);
            assert_eq!(u, u_bf, "trial {trial}: statistic {a:?} {b:?}");
            assert!((p - p_bf).abs() < 1e-12, "trial {trial}: p {p} vs {p_bf}");
        }
    }

    #[test]
    fn mwu_large_samples_use_normal_approximation() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..50).map(|i| i as f64 + 30.0).collect();
        let (_, p) = mann_whitney_u(&a, &b).unwrap();
        assert!(p < 0.001);
        let c: Vec<f64> = (0..50).map(|i| i as f64 + 0.5).collect();
        let (_, p_same) = mann_whitney_u(&a, &c).unwrap();
        assert!(p_same > 0.5);
    }

    #[test]
    fn wilcoxon_identical_pairs_degenerate() {
        let pairs: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(
            wilcoxon_signed_rank(&pairs),
            Err(AnalysisError::DegenerateInput(_))
        ));
    }

    #[test]
    fn wilcoxon_eight_pair_fixture_matches_enumeration() {
        let pairs = [
            (3.0, 1.0),
            (1.0, 4.0),
            (5.0, 2.0),
            (2.0, 2.5),
            (6.0, 1.0),
            (1.5, 1.0),
            (2.2, 3.3),
            (4.4, 4.0),
        ];
        let (w, p) = wilcoxon_signed_rank(&pairs).unwrap();
        let (w_bf, p_bf) = wilcoxon_brute_force(&pairs);
        assert_eq!(w, w_bf);
        assert!((p - p_bf).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_matches_enumeration_on_random_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for trial in 0..60 {
            let n = rng.gen_range(2..=10);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(0..5) as f64, rng.gen_range(0..5) as f64))
                .collect();
            if pairs.iter().all(|(x, y)| x == y) {
                continue;
            }
            let (w, p) = wilcoxon_signed_rank(&pairs).unwrap();
            let (w_bf, p_bf) = wilcoxon_brute_force(&pairs);
            assert_eq!(w, w_bf, "trial {trial}");
            assert!((p - p_bf).abs() < 1e-12, "trial {trial}: {p} vs {p_bf} for {pairs:?}");
        }
    }

    #[test]
    fn wilcoxon_antisymmetric_fixture_has_p_one() {
        let pairs = [(1.0, 2.0), (2.0, 1.0), (3.0, 5.0), (5.0, 3.0), (0.0, 3.0), (3.0, 0.0)];
        let (_, p) = wilcoxon_signed_rank(&pairs).unwrap();
        assert!((p - 1.0).abs() < 1e-12, "p {p}");
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [10.0, 20.0, 30.0, 40.0];
        assert!((spearman_rho(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let y_rev = [40.0, 30.0, 20.0, 10.0];
        assert!((spearman_rho(&x, &y_rev).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman_rho(&x, &[5.0, 5.0, 5.0, 5.0]).is_none());
    }

    #[test]
    fn spearman_is_rank_based() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 8.0, 27.0, 64.0, 125.0]; // monotone, nonlinear
        assert!((spearman_rho(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }
}
