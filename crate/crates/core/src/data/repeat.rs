use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKey, SaleRecord};

/// Two consecutive sales of one dwelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSalePair {
    pub dwelling_id: String,
    pub t1: u32,
    pub t2: u32,
    pub y1: f64,
    pub y2: f64,
    /// Key of the first leg; characteristics are assumed unchanged.
    pub key: FeatureKey,
}

/// Pairs each dwelling's consecutive sales. Several sales of one dwelling in
/// the same week collapse to the last of them in dataset order.
pub fn pair_repeat_sales(dataset: &Dataset) -> Vec<RepeatSalePair> {
    let mut by_dwelling: BTreeMap<&str, BTreeMap<u32, &SaleRecord>> = BTreeMap::new();
    for r in dataset {
        by_dwelling.entry(r.dwelling_id.as_str()).or_default().insert(r.week, r);
    }
    let mut pairs = Vec::new();
    for (id, sales) in by_dwelling {
        let sales: Vec<&SaleRecord> = sales.into_values().collect();
        for w in sales.windows(2) {
            pairs.push(RepeatSalePair {
                dwelling_id: id.to_string(),
                t1: w[0].week,
                t2: w[1].week,
                y1: w[0].log_price,
                y2: w[1].log_price,
                key: w[0].key(),
            });
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HedonicCovariates, PropType, RegionIdx};

    fn rec(id: &str, week: u32, y: f64) -> SaleRecord {
        SaleRecord {
            dwelling_id: id.into(),
            log_price: y,
            week,
            week_of_year: week % 52,
            region: RegionIdx(0),
            prop_type: PropType::House,
            bedrooms: None,
            land_band: None,
            hedonic: HedonicCovariates::default(),
        }
    }

    #[test]
    fn consecutive_pairs() {
        let ds: Dataset = vec![rec("a", 90, 3.0), rec("a", 10, 1.0), rec("a", 50, 2.0)]
            .into_iter()
            .collect();
        let p = pair_repeat_sales(&ds);
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].t1, p[0].t2, p[0].y1, p[0].y2), (10, 50, 1.0, 2.0));
        assert_eq!((p[1].t1, p[1].t2), (50, 90));
    }

    #[test]
    fn single_sale_has_no_pairs() {
        let ds: Dataset = vec![rec("a", 1, 1.0)].into_iter().collect();
        assert!(pair_repeat_sales(&ds).is_empty());
    }

    #[test]
    fn seven_sale_fixture() {
        // a: 3 sales -> 2 pairs, b: 2 -> 1, c: 2 -> 1
        let ds: Dataset = vec![
            rec("a", 1, 1.0),
            rec("b", 3, 1.0),
            rec("a", 7, 1.0),
            rec("c", 2, 1.0),
            rec("b", 9, 1.0),
            rec("a", 20, 1.0),
            rec("c", 30, 1.0),
        ]
        .into_iter()
        .collect();
        assert_eq!(pair_repeat_sales(&ds).len(), 4);
    }

    #[test]
    fn same_week_keeps_last() {
        let ds: Dataset = vec![rec("a", 1, 1.0), rec("a", 5, 2.0), rec("a", 5, 2.5)]
            .into_iter()
            .collect();
        let p = pair_repeat_sales(&ds);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].y2, 2.5);
    }

    proptest::proptest! {
        #[test]
        fn pair_count_matches_distinct_weeks(sales in proptest::collection::vec((0u8..8, 0u32..40), 0..120)) {
            let ds: Dataset = sales.iter().map(|(d, w)| rec(&format!("d{d}"), *w, 1.0)).collect();
            let mut distinct: BTreeMap<u8, std::collections::BTreeSet<u32>> = BTreeMap::new();
            for (d, w) in &sales {
                distinct.entry(*d).or_default().insert(*w);
            }
            let expected: usize = distinct.values().map(|s| s.len().saturating_sub(1)).sum();
            let pairs = pair_repeat_sales(&ds);
            proptest::prop_assert_eq!(pairs.len(), expected);
            proptest::prop_assert!(pairs.iter().all(|p| p.t2 > p.t1));
        }
    }
}
