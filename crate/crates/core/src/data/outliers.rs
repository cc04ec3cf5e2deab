//! Robust trimming applied before the linear benchmark fits.

use std::collections::HashMap;

use super::time::year_of_week;
use super::{Dataset, PropType, RegionRegistry, SaleRecord};

/// Minimum cell size before falling back to the metro-level cell.
pub const MIN_CELL_SIZE: usize = 20;

pub trait OutlierFilter {
    fn filter(&self, dataset: &Dataset, registry: &RegionRegistry) -> Dataset;
}

/// Drops records whose log price lies outside `median ± k·IQR` of their
/// (region, property type, year) cell.
///
/// Cells smaller than [`MIN_CELL_SIZE`] borrow the statistics of the matching
/// metro cell. When a cell's IQR is zero the standard deviation is used as
/// the spread instead; if that is zero too the whole cell is kept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqrTrim {
    pub k: f64,
}

impl Default for IqrTrim {
    fn default() -> Self {
        Self { k: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Area<'a> {
    Region(u32),
    Metro(&'a str),
}

type Cell<'a> = (Area<'a>, PropType, i32);

#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: f64,
    hi: f64,
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn cell_bounds(values: &mut [f64], k: f64) -> Option<Bounds> {
    values.sort_by(f64::total_cmp);
    let median = sorted_quantile(values, 0.5);
    let mut spread = sorted_quantile(values, 0.75) - sorted_quantile(values, 0.25);
    if spread == 0.0 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        spread = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    }
    (spread > 0.0).then_some(Bounds {
        lo: median - k * spread,
        hi: median + k * spread,
    })
}

impl OutlierFilter for IqrTrim {
    fn filter(&self, dataset: &Dataset, registry: &RegionRegistry) -> Dataset {
        let region_cell =
            |r: &SaleRecord| -> Cell<'_> { (Area::Region(r.region.0), r.prop_type, year_of_week(r.week)) };
        let metro_cell = |r: &SaleRecord| -> Option<Cell<'_>> {
            registry
                .metro(r.region)
                .map(|m| (Area::Metro(m), r.prop_type, year_of_week(r.week)))
        };

        let mut groups: HashMap<Cell<'_>, Vec<f64>> = HashMap::new();
        for r in dataset {
            groups.entry(region_cell(r)).or_default().push(r.log_price);
            if let Some(c) = metro_cell(r) {
                groups.entry(c).or_default().push(r.log_price);
            }
        }
        let sizes: HashMap<Cell<'_>, usize> = groups.iter().map(|(c, v)| (c.clone(), v.len())).collect();
        let bounds: HashMap<Cell<'_>, Option<Bounds>> = groups
            .into_iter()
            .map(|(c, mut v)| (c, cell_bounds(&mut v, self.k)))
            .collect();

        dataset.filter(|r| {
            let own = region_cell(r);
            let cell = if sizes[&own] < MIN_CELL_SIZE {
                metro_cell(r).unwrap_or(own)
            } else {
                own
            };
            match bounds[&cell] {
                None => true,
                Some(b) => r.log_price >= b.lo && r.log_price <= b.hi,
            }
        })
    }
}

pub fn filter_outliers(dataset: &Dataset, registry: &RegionRegistry, k: f64) -> Dataset {
    IqrTrim { k }.filter(dataset, registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HedonicCovariates, RegionIdx};

    fn registry() -> RegionRegistry {
        RegionRegistry::from_json_str(
            r#"{"regions": [{"id": "A", "metro": "M"}, {"id": "B", "metro": "M"}, {"id": "C"}]}"#,
        )
        .unwrap()
    }

    fn rec(i: usize, region: u32, y: f64) -> SaleRecord {
        SaleRecord {
            dwelling_id: format!("d{i}"),
            log_price: y,
            week: 1044,
            week_of_year: 1044 % 52,
            region: RegionIdx(region),
            prop_type: PropType::House,
            bedrooms: None,
            land_band: None,
            hedonic: HedonicCovariates::default(),
        }
    }

    #[test]
    fn gross_outlier_removed() {
        let mut recs: Vec<_> = (0..50).map(|i| rec(i, 0, 13.0)).collect();
        recs.push(rec(50, 0, 20.0));
        let out = filter_outliers(&Dataset::new(recs), &registry(), 3.0);
        assert_eq!(out.len(), 50);
        assert!(out.iter().all(|r| r.log_price == 13.0));
    }

    #[test]
    fn identical_cell_kept() {
        let recs: Vec<_> = (0..30).map(|i| rec(i, 0, 12.5)).collect();
        assert_eq!(filter_outliers(&Dataset::new(recs), &registry(), 3.0).len(), 30);
    }

    /// Independent oracle: quartiles by rank counting, no interpolation helper.
    fn oracle_keep(values: &[f64], k: f64) -> Vec<bool> {
        let n = values.len();
        let q = |p: f64| {
            let h = (n - 1) as f64 * p;
            let below = h.floor() as usize;
            let frac = h - below as f64;
            // the value of rank j is the element with exactly j smaller-or-tied-before elements
            let rank = |j: usize| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
                values[idx[j]]
            };
            rank(below) + frac * (rank((below + 1).min(n - 1)) - rank(below))
        };
        let (q1, med, q3) = (q(0.25), q(0.5), q(0.75));
        values
            .iter()
            .map(|v| *v >= med - k * (q3 - q1) && *v <= med + k * (q3 - q1))
            .collect()
    }

    #[test]
    fn matches_rank_oracle() {
        let values: Vec<f64> = (0..40)
            .map(|i| 12.0 + ((i * 37) % 23) as f64 * 0.05)
            .chain([9.0, 16.5, 14.3, 11.2])
            .collect();
        for k in [0.5, 1.0, 3.0] {
            let recs: Vec<_> = values.iter().enumerate().map(|(i, &y)| rec(i, 0, y)).collect();
            let kept: Vec<String> = filter_outliers(&Dataset::new(recs), &registry(), k)
                .iter()
                .map(|r| r.dwelling_id.clone())
                .collect();
            let expect: Vec<String> = oracle_keep(&values, k)
                .iter()
                .enumerate()
                .filter(|(_, keep)| **keep)
                .map(|(i, _)| format!("d{i}"))
                .collect();
            assert_eq!(kept, expect, "k = {k}");
        }
    }

    #[test]
    fn small_cell_uses_metro_statistics() {
        // region B has 3 sales, one of them far from the metro distribution
        let mut recs: Vec<_> = (0..40).map(|i| rec(i, 0, 13.0 + (i % 5) as f64 * 0.1)).collect();
        recs.push(rec(40, 1, 13.1));
        recs.push(rec(41, 1, 13.2));
        recs.push(rec(42, 1, 17.0));
        let out = filter_outliers(&Dataset::new(recs), &registry(), 3.0);
        assert!(out.iter().all(|r| r.dwelling_id != "d42"));
        assert_eq!(out.len(), 42);
    }

    #[test]
    fn small_cell_without_metro_uses_itself() {
        let recs = vec![rec(0, 2, 13.0), rec(1, 2, 13.1), rec(2, 2, 13.2)];
        assert_eq!(filter_outliers(&Dataset::new(recs), &registry(), 3.0).len(), 3);
    }
}
