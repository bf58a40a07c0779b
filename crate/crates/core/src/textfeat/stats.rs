//! Hypothesis tests: 2×2 chi-square, Mann-Whitney U and Spearman's rho.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Largest combined sample size for which Mann-Whitney p-values are exact.
pub const MWU_EXACT_MAX_N: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatError {
    #[error("contingency table has a zero marginal")]
    DegenerateTable,
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("sample is empty")]
    EmptySample,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {0} observations")]
    TooFew(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatMethod {
    MannWhitneyU,
    Spearman,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: StatMethod,
}

/// Pearson chi-square for the table `[[a, b], [c, d]]`, 1 degree of freedom, no continuity correction.
pub fn chi_square_2x2(a: u64, b: u64, c: u64, d: u64) -> Result<StatResult, StatError> {
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(StatError::DegenerateTable);
    }
    let n = (r1 + r2) as f64;
    let diff = (a as i128) * (d as i128) - (b as i128) * (c as i128);
    let num = n * (diff as f64) * (diff as f64);
    let den = (r1 as f64) * (r2 as f64) * (c1 as f64) * (c2 as f64);
    let statistic = num / den;
    Ok(StatResult {
        statistic,
        p_value: chi2_sf_1df(statistic),
        method: StatMethod::ChiSquare,
    })
}

fn chi2_sf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(1.0).expect("1 degree of freedom is valid");
    dist.sf(x).clamp(0.0, 1.0)
}

/// Average (1-based) ranks with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank ((i+1) + j) / 2
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney U for `x` against `y` with a two-sided p-value.
///
/// The statistic counts pairs with x > y (ties count ½). For a combined
/// size up to [`MWU_EXACT_MAX_N`] the p-value comes from the exact
/// permutation distribution of the observed midranks; beyond that a
/// normal approximation with tie and continuity corrections is used.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<StatResult, StatError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatError::EmptySample);
    }
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let combined: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&combined);
    let rank_sum_x: f64 = ranks[..n1].iter().sum();
    let u = rank_sum_x - (n1 * (n1 + 1)) as f64 / 2.0;

    let p_value = if n <= MWU_EXACT_MAX_N {
        exact_mwu_p(&ranks, n1)
    } else {
        normal_mwu_p(u, n1, n2, &ranks)
    };
    Ok(StatResult {
        statistic: u,
        p_value,
        method: StatMethod::MannWhitneyU,
    })
}

// Count subsets of size n1 by doubled rank sum; doubled midranks are integers.
fn exact_mwu_p(ranks: &[f64], n1: usize) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled-rank sum s
    let mut ways = vec![vec![0u64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for k in (1..=n1).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let n1n2 = (n1 * (n - n1)) as i64;
    let offset = (n1 * (n1 + 1)) as i64;
    // 2U = 2R − n1(n1+1); centre of 2U is n1·n2
    let obs_sum: usize = doubled[..n1].iter().sum();
    let obs_dev = ((obs_sum as i64 - offset) - n1n2).abs();
    let mut extreme = 0u64;
    let mut total = 0u64;
    for (s, &w) in ways[n1].iter().enumerate() {
        if w == 0 {
            continue;
        }
        total += w;
        if ((s as i64 - offset) - n1n2).abs() >= obs_dev {
            extreme += w;
        }
    }
    (extreme as f64 / total as f64).min(1.0)
}

fn normal_mwu_p(u: f64, n1: usize, n2: usize, ranks: &[f64]) -> f64 {
    let n = (n1 + n2) as f64;
    let (f1, f2) = (n1 as f64, n2 as f64);
    let mu = f1 * f2 / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let dev = ((u - mu).abs() - 0.5).max(0.0);
    let z = dev / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * std_normal.sf(z)).clamp(0.0, 1.0)
}

/// Spearman's rho: Pearson correlation of midranks. Two-sided p from Student's t with n−2 df.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<StatResult, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatError::TooFew(2));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatError::ZeroVariance);
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p_value = if x.len() < 3 {
        1.0
    } else if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = n - 2.0;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
    };
    Ok(StatResult {
        statistic: rho,
        p_value,
        method: StatMethod::Spearman,
    })
}
