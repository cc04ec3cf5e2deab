//! Friedman rank test with Nemenyi post-hoc critical difference.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const FRIEDMAN_ALPHA: f64 = 0.05;

/// Studentized range quantiles divided by √2 at α = 0.05 for k = 2..=10
/// methods (Demšar 2006, Table 5).
const NEMENYI_Q05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];

pub fn nemenyi_q(k: usize) -> Result<f64> {
    k.checked_sub(2)
        .and_then(|i| NEMENYI_Q05.get(i).copied())
        .ok_or_else(|| Error::InvalidArgument(format!("Nemenyi constants tabulated for 2..=10 methods, got {k}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRank {
    pub method: String,
    pub mean_rank: f64,
    pub band_low: f64,
    pub band_high: f64,
    /// Mean rank within one critical difference of the best method.
    pub indistinguishable_from_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanReport {
    pub n: usize,
    pub k: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub rejected: bool,
    /// False when every row is fully tied, so ranks carry no information.
    pub discriminates: bool,
    pub critical_difference: f64,
    pub best: String,
    pub methods: Vec<MethodRank>,
}

pub const NEMENYI_CSV_HEADER: [&str; 4] = ["method", "mean_rank", "band_low", "band_high"];

impl FriedmanReport {
    pub fn method(&self, name: &str) -> Option<&MethodRank> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(NEMENYI_CSV_HEADER)?;
        for m in &self.methods {
            w.write_record([
                m.method.clone(),
                format!("{}", m.mean_rank),
                format!("{}", m.band_low),
                format!("{}", m.band_high),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<nemenyi csv>", e))?;
        Ok(())
    }
}

/// Ranks within one row, 1 for the smallest value, ties averaged.
pub fn rank_row(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && row[order[j + 1]] == row[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `errors[i][j]` is the error of method `j` on case `i`; lower is better.
/// The Friedman statistic `12n/(k(k+1)) Σ (R̄_j − (k+1)/2)²` is referred to
/// χ² with k − 1 degrees of freedom. Nemenyi bands are `R̄_j ± CD/2` with
/// `CD = q_α √(k(k+1)/(6n))`.
pub fn friedman_nemenyi(errors: &[Vec<f64>], methods: &[String]) -> Result<FriedmanReport> {
    let k = methods.len();
    let n = errors.len();
    if k < 2 {
        return Err(Error::InvalidArgument("rank tests need at least two methods".into()));
    }
    if n < 10 {
        return Err(Error::InvalidArgument("rank tests need at least ten cases".into()));
    }
    if errors.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument(
            "every error row needs one value per method".into(),
        ));
    }
    if errors.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("errors contain NaN".into()));
    }
    let q = nemenyi_q(k)?;
    let mut sums = vec![0.0; k];
    let mut discriminates = false;
    for row in errors {
        discriminates |= row.iter().any(|v| *v != row[0]);
        for (s, r) in sums.iter_mut().zip(rank_row(row)) {
            *s += r;
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    let mean_ranks: Vec<f64> = sums.iter().map(|s| s / nf).collect();
    let centre = (kf + 1.0) / 2.0;
    let statistic = 12.0 * nf / (kf * (kf + 1.0)) * mean_ranks.iter().map(|r| (r - centre).powi(2)).sum::<f64>();
    let p_value = if discriminates {
        let chi = ChiSquared::new(kf - 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
        chi.sf(statistic)
    } else {
        1.0
    };
    let cd = q * (kf * (kf + 1.0) / (6.0 * nf)).sqrt();
    let best_j = (0..k)
        .min_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]))
        .expect("k >= 2");
    let best_rank = mean_ranks[best_j];
    let best = methods[best_j].clone();
    let methods = methods
        .iter()
        .zip(&mean_ranks)
        .map(|(m, &r)| MethodRank {
            method: m.clone(),
            mean_rank: r,
            band_low: r - cd / 2.0,
            band_high: r + cd / 2.0,
            indistinguishable_from_best: r - best_rank < cd,
        })
        .collect();
    Ok(FriedmanReport {
        n,
        k,
        statistic,
        p_value,
        rejected: discriminates && p_value < FRIEDMAN_ALPHA,
        discriminates,
        critical_difference: cd,
        best,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(rank_row(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_row(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_row(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn q_table_bounds() {
        assert_eq!(nemenyi_q(2).unwrap(), 1.960);
        assert_eq!(nemenyi_q(10).unwrap(), 3.164);
        assert!(nemenyi_q(1).is_err());
        assert!(nemenyi_q(11).is_err());
    }
}
