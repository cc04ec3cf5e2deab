//! Density-derived indices: per-region and fixed-weight aggregate density
//! series, statistics read off them, and base-week normalization.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{IndexKind, IndexSeries};
use crate::data::time::week_start;
use crate::data::{FeatureKey, PopulationWeights, PropType, RegionIdx, RegionRegistry};
use crate::error::{Error, Result};
use crate::mixture::{pool, GaussianMixture};
use crate::source::DensitySource;

/// Spatial part of an aggregation scope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Area {
    All,
    Metro(String),
    Region(RegionIdx),
}

/// Which feature cells an aggregate density pools. `prop_type: None`
/// combines houses and units as distinct weighted keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    pub area: Area,
    pub prop_type: Option<PropType>,
}

impl Scope {
    pub fn all() -> Self {
        Self {
            area: Area::All,
            prop_type: None,
        }
    }

    pub fn metro(id: impl Into<String>) -> Self {
        Self {
            area: Area::Metro(id.into()),
            prop_type: None,
        }
    }

    pub fn region(region: RegionIdx) -> Self {
        Self {
            area: Area::Region(region),
            prop_type: None,
        }
    }

    pub fn with_prop_type(mut self, prop_type: Option<PropType>) -> Self {
        self.prop_type = prop_type;
        self
    }

    pub fn is_region(&self) -> bool {
        matches!(self.area, Area::Region(_))
    }

    pub fn matches(&self, key: &FeatureKey, registry: &RegionRegistry) -> bool {
        let area = match &self.area {
            Area::All => true,
            Area::Metro(m) => registry.metro(key.region) == Some(m.as_str()),
            Area::Region(r) => key.region == *r,
        };
        area && self.prop_type.is_none_or(|p| p == key.prop_type)
    }

    /// Label such as `M0`, `R03/unit` or `all`.
    pub fn label(&self, registry: &RegionRegistry) -> String {
        let area = match &self.area {
            Area::All => "all".to_string(),
            Area::Metro(m) => m.clone(),
            Area::Region(r) => registry.id(*r).to_string(),
        };
        match self.prop_type {
            Some(p) => format!("{area}/{p}"),
            None => area,
        }
    }
}

/// One mixture per week for a fixed scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySeries {
    pub scope: Scope,
    pub label: String,
    pub weeks: Vec<u32>,
    pub mixtures: Vec<GaussianMixture>,
}

impl DensitySeries {
    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn get(&self, week: u32) -> Option<&GaussianMixture> {
        self.weeks.binary_search(&week).ok().map(|i| &self.mixtures[i])
    }
}

/// Density of a single feature cell at each requested week.
pub fn region_density_series<S: DensitySource + ?Sized>(
    source: &S,
    registry: &RegionRegistry,
    key: &FeatureKey,
    weeks: &[u32],
) -> Result<DensitySeries> {
    check_weeks(weeks)?;
    if !registry.contains(key.region) {
        return Err(Error::UnknownRegion(key.region.to_string()));
    }
    let mixtures = weeks.iter().map(|&w| source.density(key, w)).collect::<Result<_>>()?;
    Ok(DensitySeries {
        scope: Scope::region(key.region).with_prop_type(Some(key.prop_type)),
        label: key.label(registry),
        weeks: weeks.to_vec(),
        mixtures,
    })
}

/// Per week, the pool of every in-scope cell density weighted by its fixed
/// population weight renormalized over the scope.
pub fn aggregate_density_series<S: DensitySource + ?Sized>(
    source: &S,
    registry: &RegionRegistry,
    weights: &PopulationWeights,
    scope: &Scope,
    weeks: &[u32],
) -> Result<DensitySeries> {
    check_weeks(weeks)?;
    let keyed = weights.restricted(|k| scope.matches(k, registry))?;
    let (keys, w): (Vec<FeatureKey>, Vec<f64>) = keyed.into_iter().unzip();
    let mut mixtures = Vec::with_capacity(weeks.len());
    let mut parts = Vec::with_capacity(keys.len());
    for &week in weeks {
        parts.clear();
        for k in &keys {
            parts.push(source.density(k, week)?);
        }
        mixtures.push(pool(&parts, &w)?);
    }
    Ok(DensitySeries {
        scope: scope.clone(),
        label: scope.label(registry),
        weeks: weeks.to_vec(),
        mixtures,
    })
}

fn check_weeks(weeks: &[u32]) -> Result<()> {
    if weeks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("weeks must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Median,
    Gmean,
    MeanPrice,
    Quantile(f64),
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Median => f.write_str("median"),
            Statistic::Gmean => f.write_str("gmean"),
            Statistic::MeanPrice => f.write_str("mean_price"),
            Statistic::Quantile(p) => write!(f, "quantile({p})"),
        }
    }
}

impl Statistic {
    pub fn evaluate(self, m: &GaussianMixture) -> Result<f64> {
        Ok(match self {
            Statistic::Median => m.quantile(0.5)?.exp(),
            Statistic::Gmean => m.mean_log().exp(),
            Statistic::MeanPrice => m.moments().mean_price,
            Statistic::Quantile(p) => m.quantile(p)?.exp(),
        })
    }
}

/// Reads a statistic off every weekly density. A median over a single
/// region is labelled as the subregion index.
pub fn index_from_density(series: &DensitySeries, statistic: Statistic) -> Result<IndexSeries> {
    if let Statistic::Quantile(p) = statistic {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {p} outside (0, 1)")));
        }
    }
    let kind = match statistic {
        Statistic::Median if series.scope.is_region() => IndexKind::DSubregion,
        Statistic::Median => IndexKind::DMedian,
        Statistic::Gmean => IndexKind::DGmean,
        Statistic::MeanPrice => IndexKind::DMeanPrice,
        Statistic::Quantile(p) => IndexKind::DQuantile(p),
    };
    let values = series
        .mixtures
        .iter()
        .map(|m| statistic.evaluate(m))
        .collect::<Result<Vec<_>>>()?;
    IndexSeries::new(series.weeks.clone(), values, kind, series.label.clone())
}

/// Divides every value by the value at `base_week`.
pub fn normalize_index(series: &IndexSeries, base_week: u32) -> Result<IndexSeries> {
    series.normalized(base_week)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDumpWeek {
    pub week: u32,
    pub date: String,
    pub median_log: f64,
    pub mean_log: f64,
    /// `(log price, density)` pairs on a uniform grid.
    pub grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityDump {
    pub scope: String,
    pub weeks: Vec<DensityDumpWeek>,
}

/// Tabulates each weekly density on `points` evenly spaced log prices
/// spanning the union of the weekly supports.
pub fn density_dump(series: &DensitySeries, points: usize) -> Result<DensityDump> {
    if points < 2 {
        return Err(Error::InvalidArgument("density grid needs at least two points".into()));
    }
    let (lo, hi) = series
        .mixtures
        .iter()
        .map(|m| m.support_envelope())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (l, h)| {
            (a.min(l), b.max(h))
        });
    let step = (hi - lo) / (points - 1) as f64;
    let weeks = series
        .weeks
        .iter()
        .zip(&series.mixtures)
        .map(|(&week, m)| {
            Ok(DensityDumpWeek {
                week,
                date: week_start(week).to_string(),
                median_log: m.quantile(0.5)?,
                mean_log: m.mean_log(),
                grid: (0..points)
                    .map(|i| {
                        let y = lo + i as f64 * step;
                        (y, m.pdf(y))
                    })
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DensityDump {
        scope: series.label.clone(),
        weeks,
    })
}
