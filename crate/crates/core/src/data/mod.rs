//! Sales records, the region registry, population weights, repeat-sale
//! pairing, outlier trimming for the linear benchmarks and the synthetic
//! market generator.

mod io;
mod outliers;
mod registry;
mod repeat;
pub mod synth;
pub mod time;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{parse_sales_csv, read_sales_csv, write_sales_csv, ParseOutcome, RowReject};
pub use outliers::{filter_outliers, IqrTrim, OutlierFilter};
pub use registry::{RegionIdx, RegionInfo, RegionRegistry};
pub use repeat::{pair_repeat_sales, RepeatSalePair};
pub use synth::{fixtures, generate_synthetic, Scenario, SynthConfig, SyntheticGroundTruth, SyntheticMarket};
pub use time::{bucket_by_month, discretize_time, mid_month_week, week_of_year};
pub use weights::{compute_population_weights, PopulationWeights};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropType {
    House,
    Unit,
}

impl PropType {
    pub const ALL: [PropType; 2] = [PropType::House, PropType::Unit];

    pub fn index(self) -> usize {
        match self {
            PropType::House => 0,
            PropType::Unit => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PropType::House => "house",
            PropType::Unit => "unit",
        }
    }
}

impl fmt::Display for PropType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PropType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "house" => Ok(PropType::House),
            "unit" => Ok(PropType::Unit),
            other => Err(Error::InvalidArgument(format!("unknown property type `{other}`"))),
        }
    }
}

/// Continuous covariates used only by the hedonic benchmark.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HedonicCovariates {
    pub bathrooms: Option<f64>,
    pub parking: Option<f64>,
    pub log_land_area: Option<f64>,
}

/// One transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaleRecord {
    pub dwelling_id: String,
    /// Natural log of the price.
    pub log_price: f64,
    /// Weeks since 1990-01-01.
    pub week: u32,
    pub week_of_year: u32,
    pub region: RegionIdx,
    pub prop_type: PropType,
    pub bedrooms: Option<u8>,
    /// Discretized log land area, see [`land_band`].
    pub land_band: Option<u8>,
    pub hedonic: HedonicCovariates,
}

impl SaleRecord {
    pub fn key(&self) -> FeatureKey {
        FeatureKey {
            region: self.region,
            prop_type: self.prop_type,
            bedrooms: self.bedrooms,
            land_band: self.land_band,
        }
    }

    pub fn price(&self) -> f64 {
        self.log_price.exp()
    }
}

/// Width of a land band in log square metres.
pub const LAND_BAND_WIDTH: f64 = 0.5;
const LAND_BAND_ORIGIN: f64 = 4.0;
const LAND_BAND_MAX: u8 = 15;

/// Discretizes a land area (square metres) into half-log-unit bands starting
/// at e^4 ≈ 55 m², clamped to `0..=15`.
pub fn land_band(land_area: f64) -> Option<u8> {
    if !(land_area > 0.0) || !land_area.is_finite() {
        return None;
    }
    let band = ((land_area.ln() - LAND_BAND_ORIGIN) / LAND_BAND_WIDTH).floor();
    Some(band.clamp(0.0, f64::from(LAND_BAND_MAX)) as u8)
}

/// The categorical cell a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub region: RegionIdx,
    pub prop_type: PropType,
    #[serde(default)]
    pub bedrooms: Option<u8>,
    #[serde(default)]
    pub land_band: Option<u8>,
}

impl FeatureKey {
    pub fn new(region: RegionIdx, prop_type: PropType) -> Self {
        Self {
            region,
            prop_type,
            bedrooms: None,
            land_band: None,
        }
    }

    /// Human-readable label such as `R3/house` or `R3/house/b2/l5`.
    pub fn label(&self, registry: &RegionRegistry) -> String {
        let mut s = format!("{}/{}", registry.id(self.region), self.prop_type);
        if let Some(b) = self.bedrooms {
            s.push_str(&format!("/b{b}"));
        }
        if let Some(l) = self.land_band {
            s.push_str(&format!("/l{l}"));
        }
        s
    }
}

/// Inclusive week interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekRange {
    pub start: u32,
    pub end: u32,
}

impl WeekRange {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!("empty week range {start}..={end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, week: u32) -> bool {
        (self.start..=self.end).contains(&week)
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weeks(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

/// An immutable collection of sales.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<SaleRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SaleRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SaleRecord> {
        self.records.iter()
    }

    pub fn week_range(&self) -> Option<WeekRange> {
        let min = self.records.iter().map(|r| r.week).min()?;
        let max = self.records.iter().map(|r| r.week).max()?;
        Some(WeekRange { start: min, end: max })
    }

    /// Distinct feature keys, sorted.
    pub fn keys(&self) -> Vec<FeatureKey> {
        let mut keys: Vec<_> = self.records.iter().map(SaleRecord::key).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    pub fn filter<F>(&self, mut keep: F) -> Dataset
    where
        F: FnMut(&SaleRecord) -> bool,
    {
        Dataset::new(self.records.iter().filter(|r| keep(r)).cloned().collect())
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a SaleRecord;
    type IntoIter = std::slice::Iter<'a, SaleRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

impl FromIterator<SaleRecord> for Dataset {
    fn from_iter<T: IntoIterator<Item = SaleRecord>>(iter: T) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}
