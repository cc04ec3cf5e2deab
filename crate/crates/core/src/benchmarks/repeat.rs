//! Repeat-sales index: log growth of resold dwellings regressed on ±1 time
//! dummies.

use super::ridge::{solve_ridge, SparseDesign};
use super::series::{IndexKind, IndexSeries};
use crate::data::RepeatSalePair;
use crate::error::{Error, Result};

/// Default penalty per pair. The ±1 design only needs the penalty to pin
/// the common level, so it is kept far below the hedonic default to avoid
/// shrinking growth estimates.
pub const REPEAT_RIDGE_FACTOR: f64 = 1e-7;

/// Ridge fit of `y2 − y1 = δ_{t2} − δ_{t1} + ε` with penalty
/// `ridge_factor · n_pairs`. The index spans the first to the last sale
/// week, normalized to 1 at the first; weeks with no incident pair are
/// linearly interpolated in `δ` and listed in `interpolated`.
pub fn fit_repeat_sales(pairs: &[RepeatSalePair], ridge_factor: f64) -> Result<IndexSeries> {
    if pairs.is_empty() {
        return Err(Error::Empty("repeat-sales fit needs pairs".into()));
    }
    if !(ridge_factor > 0.0) {
        return Err(Error::InvalidArgument("ridge factor must be positive".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.t2 <= p.t1) {
        return Err(Error::InvalidArgument(format!(
            "pair {} has t2 <= t1 ({} <= {})",
            p.dwelling_id, p.t2, p.t1
        )));
    }
    let mut weeks: Vec<u32> = pairs.iter().flat_map(|p| [p.t1, p.t2]).collect();
    weeks.sort_unstable();
    weeks.dedup();
    let col = |w: u32| weeks.binary_search(&w).expect("week collected above");

    let mut x = SparseDesign::new(weeks.len());
    let mut y = Vec::with_capacity(pairs.len());
    for p in pairs {
        x.push_row([(col(p.t1), -1.0), (col(p.t2), 1.0)]);
        y.push(p.y2 - p.y1);
    }
    let lambda = ridge_factor * pairs.len() as f64;
    let sol = solve_ridge(&x, &y, &vec![lambda; weeks.len()])?;
    let base = sol.coef[0];
    let delta: Vec<f64> = sol.coef.iter().map(|d| d - base).collect();

    let first = weeks[0];
    let last = *weeks.last().expect("non-empty");
    let mut out_weeks = Vec::with_capacity((last - first + 1) as usize);
    let mut values = Vec::with_capacity(out_weeks.capacity());
    let mut interpolated = Vec::new();
    let mut j = 0;
    for w in first..=last {
        let d = if weeks[j] == w {
            delta[j]
        } else {
            // weeks[j - 1] < w < weeks[j]
            let (w0, w1) = (weeks[j - 1], weeks[j]);
            let f = f64::from(w - w0) / f64::from(w1 - w0);
            interpolated.push(w);
            delta[j - 1] + f * (delta[j] - delta[j - 1])
        };
        if weeks[j] == w {
            j += 1;
        }
        out_weeks.push(w);
        values.push(d.exp());
    }
    let mut series = IndexSeries::new(out_weeks, values, IndexKind::RepeatSales, "all")?;
    series.interpolated = interpolated;
    Ok(series)
}

/// [`fit_repeat_sales`] with the default penalty factor.
pub fn fit_repeat_sales_default(pairs: &[RepeatSalePair]) -> Result<IndexSeries> {
    fit_repeat_sales(pairs, REPEAT_RIDGE_FACTOR)
}
