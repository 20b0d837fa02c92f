//! Two-sided Wilcoxon signed-rank test for paired run scores.
//!
//! Zero differences are dropped, absolute differences are ranked with
//! average ranks on ties and `W = min(W+, W-)`. Without ties and with at most
//! [`EXACT_MAX_N`] non-zero pairs the p-value comes from the exact null
//! distribution of `W+`; otherwise it uses the normal approximation with tie
//! and continuity corrections.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

/// Largest sample handled by exact enumeration.
pub const EXACT_MAX_N: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no pairs to compare")]
    Empty,
    #[error("pair {0} contains a non-finite score")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    /// Every difference was zero.
    Degenerate,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w: f64,
    pub p: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub method: WilcoxonMethod,
}

impl WilcoxonResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p < alpha
    }
}

/// Average ranks (1-based) of `values`, plus the tie group sizes.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the mean of ranks i+1..=j+1
        let rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// `P(W+ <= w)` under the null for integer ranks `1..=n`.
fn exact_lower_tail(n: usize, w: f64) -> f64 {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for rank in 1..=n {
        for s in (rank..=max).rev() {
            counts[s] += counts[s - rank];
        }
    }
    let limit = w.floor() as usize;
    let below: u64 = counts[..=limit.min(max)].iter().sum();
    below as f64 / 2f64.powi(n as i32)
}

pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(i) = pairs.iter().position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w: 0.0,
            p: 1.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            method: WilcoxonMethod::Degenerate,
        });
    }

    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = average_ranks(&magnitudes);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w_minus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).map(|(_, r)| r).sum();
    let w = w_plus.min(w_minus);

    let (p, method) = if ties.is_empty() && n <= EXACT_MAX_N {
        ((2.0 * exact_lower_tail(n, w)).min(1.0), WilcoxonMethod::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
            erfc(z / std::f64::consts::SQRT_2).min(1.0)
        };
        (p, WilcoxonMethod::Normal)
    };

    Ok(WilcoxonResult {
        w,
        p,
        w_plus,
        w_minus,
        n,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_diffs(d: &[f64]) -> Vec<(f64, f64)> {
        d.iter().map(|&x| (x, 0.0)).collect()
    }

    /// Two-sided p by enumerating all sign assignments of the ranks.
    fn enumerate_p(ranks: &[f64], w: f64) -> f64 {
        let n = ranks.len();
        let total: f64 = ranks.iter().sum();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let plus: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if plus.min(total - plus) <= w + 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn alternating_five() {
        let r = wilcoxon_signed_rank(&from_diffs(&[1.0, -2.0, 3.0, -4.0, 5.0])).unwrap();
        assert_eq!((r.w_plus, r.w_minus, r.w), (9.0, 6.0, 6.0));
        assert_eq!(r.method, WilcoxonMethod::Exact);
        let oracle = enumerate_p(&[1.0, 2.0, 3.0, 4.0, 5.0], 6.0);
        assert!((oracle - 0.8125).abs() < 1e-12);
        assert!((r.p - oracle).abs() < 1e-3, "{} vs {}", r.p, oracle);
    }

    #[test]
    fn identical_runs() {
        let r = wilcoxon_signed_rank(&[(0.5, 0.5), (0.7, 0.7)]).unwrap();
        assert_eq!((r.w, r.p, r.method), (0.0, 1.0, WilcoxonMethod::Degenerate));
        assert!(!r.significant(0.05));
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert_eq!(wilcoxon_signed_rank(&[]), Err(StatsError::Empty));
        assert_eq!(wilcoxon_signed_rank(&[(0.1, f64::NAN)]), Err(StatsError::NonFinite(0)));
    }

    #[test]
    fn exact_matches_enumeration_for_small_samples() {
        for n in 1..=10usize {
            let diffs: Vec<f64> = (1..=n).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
            let r = wilcoxon_signed_rank(&from_diffs(&diffs)).unwrap();
            let ranks: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            assert!((r.p - enumerate_p(&ranks, r.w)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn average_ranks_on_ties() {
        let (ranks, ties) = average_ranks(&[0.1, 0.2, 0.1, 0.3]);
        assert_eq!(ranks, vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(ties, vec![2]);
    }

    // Reference values from scipy.stats.wilcoxon 1.15.3 (default arguments
    // for the untied sample, method="approx", correction=True for the tied).
    #[test]
    fn agrees_with_scipy() {
        let a = [
            0.7813, 0.9037, 0.8491, 0.6013, 0.6351, 0.8931, 0.5024, 0.8696, 0.8587, 0.7106, 0.6364, 0.6253,
            0.6147, 0.7003, 0.727, 0.7491, 0.948, 0.8567, 0.78, 0.945,
        ];
        let b = [
            0.736, 0.9066, 0.8211, 0.6194, 0.6498, 0.8975, 0.4369, 0.8634, 0.8672, 0.724, 0.6005, 0.621,
            0.5953, 0.686, 0.7688, 0.7349, 0.957, 0.8932, 0.7725, 0.9516,
        ];
        let pairs: Vec<_> = a.iter().copied().zip(b.iter().copied()).collect();
        let r = wilcoxon_signed_rank(&pairs).unwrap();
        assert_eq!(r.w, 93.0);
        assert!((r.p - 0.674_222_946_166_992_2).abs() < 1e-3, "{}", r.p);

        let tied = from_diffs(&[-0.1, 0.1, -0.1, 0.1, -0.1, 0.1, -0.2, 0.1, 0.1, -0.1, 0.1, -0.1]);
        let r = wilcoxon_signed_rank(&tied).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert_eq!(r.w, 36.0);
        assert!((r.p - 0.829_638_099_719_026_7).abs() < 1e-3, "{}", r.p);
    }
}
