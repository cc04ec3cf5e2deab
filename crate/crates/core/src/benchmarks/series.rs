use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::time::{mid_month_weeks, week_start};
use crate::error::{Error, Result};

/// Largest distance, in weeks, for a nearest-sample lookup.
pub const NEAREST_SAMPLE_WEEKS: u32 = 3;

pub const INDEX_CSV_HEADER: [&str; 5] = ["week", "date", "value", "kind", "scope"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum IndexKind {
    Hedonic,
    RepeatSales,
    DMedian,
    DGmean,
    DMeanPrice,
    DSubregion,
    DQuantile(f64),
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexKind::Hedonic => f.write_str("hedonic"),
            IndexKind::RepeatSales => f.write_str("repeat_sales"),
            IndexKind::DMedian => f.write_str("d_median"),
            IndexKind::DGmean => f.write_str("d_gmean"),
            IndexKind::DMeanPrice => f.write_str("d_mean_price"),
            IndexKind::DSubregion => f.write_str("d_subregion"),
            IndexKind::DQuantile(p) => write!(f, "d_quantile_{p}"),
        }
    }
}

impl FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hedonic" => IndexKind::Hedonic,
            "repeat_sales" => IndexKind::RepeatSales,
            "d_median" => IndexKind::DMedian,
            "d_gmean" => IndexKind::DGmean,
            "d_mean_price" => IndexKind::DMeanPrice,
            "d_subregion" => IndexKind::DSubregion,
            other => {
                let p = other
                    .strip_prefix("d_quantile_")
                    .and_then(|p| p.parse::<f64>().ok())
                    .filter(|p| *p > 0.0 && *p < 1.0)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown index kind '{other}'")))?;
                IndexKind::DQuantile(p)
            }
        })
    }
}

impl From<IndexKind> for String {
    fn from(k: IndexKind) -> Self {
        k.to_string()
    }
}

impl TryFrom<String> for IndexKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Weekly index values `H(t)` for one scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries {
    pub weeks: Vec<u32>,
    pub values: Vec<f64>,
    pub kind: IndexKind,
    pub scope: String,
    /// Weeks whose value was filled in rather than estimated from data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interpolated: Vec<u32>,
}

impl IndexSeries {
    pub fn new(weeks: Vec<u32>, values: Vec<f64>, kind: IndexKind, scope: impl Into<String>) -> Result<Self> {
        if weeks.len() != values.len() {
            return Err(Error::InvalidArgument("index weeks and values differ in length".into()));
        }
        if weeks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("index weeks must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Numerical(format!("index value {v} is not positive and finite")));
        }
        Ok(Self {
            weeks,
            values,
            kind,
            scope: scope.into(),
            interpolated: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn with_scope(mut self, scope: impl Into<String>) -> Self {
        self.scope = scope.into();
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.weeks.iter().copied().zip(self.values.iter().copied())
    }

    pub fn value_at(&self, week: u32) -> Option<f64> {
        self.weeks.binary_search(&week).ok().map(|i| self.values[i])
    }

    /// Value at the closest available week no more than `max_gap` weeks
    /// away; ties resolve to the earlier week.
    pub fn nearest(&self, week: u32, max_gap: u32) -> Option<f64> {
        let i = self.weeks.partition_point(|&w| w < week);
        let after = self.weeks.get(i).map(|&w| (w - week, i));
        let before = i.checked_sub(1).map(|j| (week - self.weeks[j], j));
        let best = match (before, after) {
            (Some(b), Some(a)) => Some(if a.0 < b.0 { a } else { b }),
            (b, a) => b.or(a),
        }?;
        (best.0 <= max_gap).then(|| self.values[best.1])
    }

    /// Divides by the value at `base_week`.
    pub fn normalized(&self, base_week: u32) -> Result<Self> {
        let base = self
            .value_at(base_week)
            .ok_or_else(|| Error::InvalidArgument(format!("base week {base_week} not in index")))?;
        let mut out = self.clone();
        for v in &mut out.values {
            *v /= base;
        }
        Ok(out)
    }

    /// Samples the series at the week containing the 15th of each month,
    /// taking the nearest available week within [`NEAREST_SAMPLE_WEEKS`].
    pub fn monthly(&self) -> Self {
        let (weeks, values) = match (self.weeks.first(), self.weeks.last()) {
            (Some(&a), Some(&b)) => mid_month_weeks(a, b)
                .into_iter()
                .filter_map(|w| self.nearest(w, NEAREST_SAMPLE_WEEKS).map(|v| (w, v)))
                .unzip(),
            _ => (Vec::new(), Vec::new()),
        };
        let interpolated = self
            .interpolated
            .iter()
            .copied()
            .filter(|w| weeks.binary_search(w).is_ok())
            .collect();
        Self {
            weeks,
            values,
            kind: self.kind,
            scope: self.scope.clone(),
            interpolated,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: &mut csv::Writer<W>) -> Result<()> {
        for (w, v) in self.iter() {
            writer.write_record([
                w.to_string(),
                week_start(w).to_string(),
                format!("{v}"),
                self.kind.to_string(),
                self.scope.clone(),
            ])?;
        }
        Ok(())
    }
}

/// Writes several series into one CSV with the standard header.
pub fn write_index_csv<W: Write>(series: &[IndexSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INDEX_CSV_HEADER)?;
    for s in series {
        s.write_csv(&mut w)?;
    }
    w.flush().map_err(|e| Error::io("<index csv>", e))?;
    Ok(())
}
