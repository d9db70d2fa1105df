//! Correlation, fold partitioning and rank statistics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::seeds;

/// Pearson correlation. Fails when lengths differ, fewer than two points are
/// given or either vector is constant.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!(
            "pcc: lengths {} and {} differ",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Stats("pcc: need at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats("pcc: undefined for a constant vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Shuffles `0..n` with `seed` and cuts it into `k` folds whose sizes differ
/// by at most one. The first `n % k` folds get the extra element.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Stats(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Stats(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Ranks models by descending score; rank 1 is the best. Tied scores share
/// the mean of the ranks they span.
pub fn rank_models(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::Stats("ranking needs at least two models".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Stats("cannot rank NaN scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = shared;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Column means of an `N x M` rank table.
pub fn average_ranks(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = rows
        .first()
        .ok_or_else(|| Error::Stats("empty rank table".into()))?
        .len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Stats("rank table rows differ in length".into()));
    }
    let n = rows.len() as f64;
    Ok((0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect())
}

/// Friedman statistic from average ranks over `n` datasets.
pub fn friedman_chi2(avg_ranks: &[f64], n: usize) -> Result<f64> {
    let m = avg_ranks.len();
    if m < 2 || n == 0 {
        return Err(Error::Stats(format!(
            "Friedman test needs M >= 2 and N >= 1, got M={m}, N={n}"
        )));
    }
    let (mf, nf) = (m as f64, n as f64);
    let sum_sq: f64 = avg_ranks.iter().map(|r| r * r).sum();
    Ok(12.0 * nf / (mf * (mf + 1.0)) * (sum_sq - mf * (mf + 1.0).powi(2) / 4.0))
}

/// Upper-tail probability of the chi-square distribution.
pub fn chi2_sf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::Stats("chi-square needs df >= 1".into()));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Stats(format!(
            "chi-square statistic must be >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(f64::from(df)).map_err(|e| Error::Stats(e.to_string()))?;
    Ok(dist.sf(x))
}

/// Friedman test outcome. `chi2` and `p_value` are `None` when fewer than
/// two models are compared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanTest {
    pub n: usize,
    pub m: usize,
    pub chi2: Option<f64>,
    pub df: Option<u32>,
    pub p_value: Option<f64>,
}

pub fn friedman_test(avg_ranks: &[f64], n: usize) -> Result<FriedmanTest> {
    let m = avg_ranks.len();
    if m < 2 {
        return Ok(FriedmanTest {
            n,
            m,
            chi2: None,
            df: None,
            p_value: None,
        });
    }
    let chi2 = friedman_chi2(avg_ranks, n)?;
    let df = (m - 1) as u32;
    // Average ranks are printed rounded, so the statistic can dip a hair below 0.
    let p = chi2_sf(chi2.max(0.0), df)?;
    Ok(FriedmanTest {
        n,
        m,
        chi2: Some(chi2),
        df: Some(df),
        p_value: Some(p),
    })
}

pub fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> Option<(f64, f64)> {
    let m = mean(x)?;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    Some((m, var.sqrt()))
}
