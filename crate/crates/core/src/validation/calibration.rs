//! Quantile calibration, index-curve median deviation and CDF persistence.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::projection::median;
use crate::benchmarks::IndexSeries;
use crate::data::{FeatureKey, RegionIdx, RegionRegistry, RepeatSalePair, SaleRecord};
use crate::error::{Error, Result};
use crate::source::{mean_nll, DensitySource};

pub const DECILE_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub grid: Vec<f64>,
    /// Fraction of sales below the π-quantile of their density.
    pub observed: Vec<f64>,
    /// `|π̂(0.5) − 0.5|` in percentage points.
    pub delta_median: f64,
    pub n: usize,
}

pub const CALIBRATION_CSV_HEADER: [&str; 3] = ["percentile", "observed", "deviation"];

impl CalibrationReport {
    pub fn max_abs_deviation(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.observed)
            .map(|(p, o)| (o - p).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CALIBRATION_CSV_HEADER)?;
        for (p, o) in self.grid.iter().zip(&self.observed) {
            w.write_record([format!("{p}"), format!("{o}"), format!("{}", o - p)])?;
        }
        w.flush().map_err(|e| Error::io("<calibration csv>", e))?;
        Ok(())
    }
}

/// Probability integral transform `F_{key,week}(y)` of every record,
/// evaluating each distinct density once.
pub fn pit_values<S: DensitySource + ?Sized>(source: &S, records: &[SaleRecord]) -> Result<Vec<f64>> {
    let mut cells: BTreeMap<(FeatureKey, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        cells.entry((r.key(), r.week)).or_default().push(i);
    }
    let mut u = vec![0.0; records.len()];
    for ((key, week), idx) in cells {
        let m = source.density(&key, week)?;
        for i in idx {
            u[i] = m.cdf(records[i].log_price);
        }
    }
    Ok(u)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::InvalidArgument("percentile grid must lie in (0, 1)".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("percentile grid must be increasing".into()));
    }
    Ok(())
}

fn report_from_pit(u: &[f64], grid: &[f64]) -> CalibrationReport {
    let n = u.len() as f64;
    let below = |p: f64| u.iter().filter(|&&x| x < p).count() as f64 / n;
    CalibrationReport {
        grid: grid.to_vec(),
        observed: grid.iter().map(|&p| below(p)).collect(),
        delta_median: (below(0.5) - 0.5).abs() * 100.0,
        n: u.len(),
    }
}

/// `y_i < q_π ⇔ F(y_i) < π` for a strictly increasing CDF, so the observed
/// fractions are read off the transformed values.
pub fn quantile_calibration<S: DensitySource + ?Sized>(
    source: &S,
    records: &[SaleRecord],
    grid: &[f64],
) -> Result<CalibrationReport> {
    check_grid(grid)?;
    if records.is_empty() {
        return Err(Error::Empty("calibration needs sales".into()));
    }
    Ok(report_from_pit(&pit_values(source, records)?, grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalCalibration {
    pub regions: Vec<(String, CalibrationReport)>,
    /// Median over regions of the regional δ-median.
    pub median_delta_median: f64,
}

/// Calibration computed separately for each region's sales.
pub fn regional_calibration<S: DensitySource + ?Sized>(
    source: &S,
    registry: &RegionRegistry,
    records: &[SaleRecord],
    grid: &[f64],
) -> Result<RegionalCalibration> {
    check_grid(grid)?;
    let mut by_region: BTreeMap<RegionIdx, Vec<SaleRecord>> = BTreeMap::new();
    for r in records {
        by_region.entry(r.region).or_default().push(r.clone());
    }
    if by_region.is_empty() {
        return Err(Error::Empty("calibration needs sales".into()));
    }
    let regions = by_region
        .into_iter()
        .map(|(r, recs)| Ok((registry.id(r).to_string(), quantile_calibration(source, &recs, grid)?)))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = regions.iter().map(|(_, c)| c.delta_median).collect();
    Ok(RegionalCalibration {
        median_delta_median: median(&deltas),
        regions,
    })
}

/// `|fraction of sales priced below the index curve − 0.5|` in percentage
/// points, for sales in weeks the index covers.
pub fn index_median_deviation(index: &IndexSeries, records: &[SaleRecord]) -> Result<f64> {
    let mut n = 0usize;
    let mut below = 0usize;
    for r in records {
        if let Some(v) = index.value_at(r.week) {
            n += 1;
            if r.log_price < v.ln() {
                below += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Empty("no sales inside the index span".into()));
    }
    Ok((below as f64 / n as f64 - 0.5).abs() * 100.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs two equal-length samples".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("correlation of a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceResult {
    pub correlation: f64,
    pub n: usize,
}

/// Pearson correlation between each pair's CDF position at its first and
/// second sale.
pub fn cdf_persistence<S: DensitySource + ?Sized>(source: &S, pairs: &[RepeatSalePair]) -> Result<PersistenceResult> {
    if pairs.len() < 3 {
        return Err(Error::InvalidArgument(
            "CDF persistence needs at least three pairs".into(),
        ));
    }
    let mut cache: BTreeMap<(FeatureKey, u32), crate::mixture::GaussianMixture> = BTreeMap::new();
    let mut cdf = |key: FeatureKey, week: u32, y: f64| -> Result<f64> {
        if let Some(m) = cache.get(&(key, week)) {
            return Ok(m.cdf(y));
        }
        let m = source.density(&key, week)?;
        let v = m.cdf(y);
        cache.insert((key, week), m);
        Ok(v)
    };
    let mut u1 = Vec::with_capacity(pairs.len());
    let mut u2 = Vec::with_capacity(pairs.len());
    for p in pairs {
        u1.push(cdf(p.key, p.t1, p.y1)?);
        u2.push(cdf(p.key, p.t2, p.y2)?);
    }
    Ok(PersistenceResult {
        correlation: pearson(&u1, &u2)?,
        n: pairs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    pub train: f64,
    pub holdout: f64,
}

impl NllReport {
    pub fn gap(&self) -> f64 {
        (self.train - self.holdout).abs()
    }
}

/// Mean per-record NLL on the training and holdout sets.
pub fn nll_generalization<S: DensitySource + ?Sized>(
    model: &S,
    train: &[SaleRecord],
    holdout: &[SaleRecord],
) -> Result<NllReport> {
    Ok(NllReport {
        train: mean_nll(model, train)?,
        holdout: mean_nll(model, holdout)?,
    })
}
