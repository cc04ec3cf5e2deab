use std::collections::BTreeMap;

use densindex::data::{compute_population_weights, generate_synthetic, Scenario, WeekRange};
use densindex::indices::{
    aggregate_density_series, density_dump, index_from_density, normalize_index, region_density_series, Scope,
    Statistic,
};
use densindex::{
    DensitySource, FeatureKey, GaussianMixture, IndexKind, PopulationWeights, PropType, RegionIdx, RegionRegistry,
    Result,
};

/// Fixed normal density per region, independent of week.
struct Fixed(Vec<(f64, f64)>);

impl DensitySource for Fixed {
    fn density(&self, key: &FeatureKey, _week: u32) -> Result<GaussianMixture> {
        let (m, v) = self.0[key.region.index()];
        GaussianMixture::normal(m, v)
    }
}

fn registry(n: usize) -> RegionRegistry {
    RegionRegistry::new((0..n).map(|i| (format!("R{i}"), Some("M".to_string()), vec![]))).unwrap()
}

fn weights(ws: &[f64]) -> PopulationWeights {
    PopulationWeights {
        weights: ws
            .iter()
            .enumerate()
            .map(|(i, w)| (FeatureKey::new(RegionIdx(i as u32), PropType::House), *w))
            .collect::<BTreeMap<_, _>>(),
        period: WeekRange::new(0, 10).unwrap(),
    }
}

#[test]
fn region_series_matches_source() {
    let src = Fixed(vec![(13.0, 0.04)]);
    let reg = registry(1);
    let key = FeatureKey::new(RegionIdx(0), PropType::House);
    let s = region_density_series(&src, &reg, &key, &[5]).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s.mixtures[0], src.density(&key, 5).unwrap());
    assert!(region_density_series(&src, &reg, &key, &[]).unwrap().is_empty());
    let bad = FeatureKey::new(RegionIdx(4), PropType::House);
    assert!(region_density_series(&src, &reg, &bad, &[1]).is_err());
}

#[test]
fn symmetric_pair_has_midpoint_median() {
    let src = Fixed(vec![(12.0, 0.01), (14.0, 0.01)]);
    let reg = registry(2);
    let s = aggregate_density_series(&src, &reg, &weights(&[1.0, 1.0]), &Scope::metro("M"), &[0, 1]).unwrap();
    for m in &s.mixtures {
        assert!((m.quantile(0.5).unwrap() - 13.0).abs() < 1e-6);
    }
}

#[test]
fn single_key_scope_equals_region_series() {
    let src = Fixed(vec![(12.0, 0.02), (14.0, 0.03)]);
    let reg = registry(2);
    let key = FeatureKey::new(RegionIdx(1), PropType::House);
    let agg = aggregate_density_series(&src, &reg, &weights(&[0.3, 0.7]), &Scope::region(RegionIdx(1)), &[2]).unwrap();
    let one = region_density_series(&src, &reg, &key, &[2]).unwrap();
    for y in [13.0, 13.8, 14.1] {
        assert!((agg.mixtures[0].pdf(y) - one.mixtures[0].pdf(y)).abs() < 1e-15);
    }
    assert!(aggregate_density_series(&src, &reg, &weights(&[1.0, 0.0]), &Scope::region(RegionIdx(1)), &[2]).is_err());
}

#[test]
fn aggregate_cdf_is_weighted_sum_on_synthetic_metro() {
    let market = generate_synthetic(&Scenario::Tiny.config(), 5).unwrap();
    let reg = &market.registry;
    let range = market.truth.config.week_range();
    let w = compute_population_weights(&market.dataset, range).unwrap();
    let metro = reg.metros()[0].clone();
    let weeks = [range.start, range.start + 17, range.end];
    let s = aggregate_density_series(&market.truth, reg, &w, &Scope::metro(&metro), &weeks).unwrap();
    let keys = w.restricted(|k| reg.metro(k.region) == Some(metro.as_str())).unwrap();
    assert_eq!(keys.len(), 3);
    for (i, &week) in weeks.iter().enumerate() {
        for y in [12.4, 12.9, 13.2, 13.5, 14.0] {
            let direct: f64 = keys.iter().map(|(k, h)| h * market.truth.mixture(k, week).cdf(y)).sum();
            assert!((s.mixtures[i].cdf(y) - direct).abs() < 1e-12);
            let pdf: f64 = keys.iter().map(|(k, h)| h * market.truth.mixture(k, week).pdf(y)).sum();
            assert!((s.mixtures[i].pdf(y) - pdf).abs() < 1e-12);
        }
        let medians: Vec<f64> = keys
            .iter()
            .map(|(k, _)| market.truth.mixture(k, week).quantile(0.5).unwrap())
            .collect();
        let med = s.mixtures[i].quantile(0.5).unwrap();
        let lo = medians.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(med >= lo && med <= hi);
    }
}

#[test]
fn lognormal_statistics() {
    let src = Fixed(vec![(13.0, 0.04)]);
    let reg = registry(1);
    let key = FeatureKey::new(RegionIdx(0), PropType::House);
    let s = region_density_series(&src, &reg, &key, &[1, 2, 3]).unwrap();
    let median = index_from_density(&s, Statistic::Median).unwrap();
    let gmean = index_from_density(&s, Statistic::Gmean).unwrap();
    let mean = index_from_density(&s, Statistic::MeanPrice).unwrap();
    let q50 = index_from_density(&s, Statistic::Quantile(0.5)).unwrap();
    assert_eq!(median.kind, IndexKind::DSubregion);
    assert_eq!(gmean.kind, IndexKind::DGmean);
    for i in 0..3 {
        assert!((median.values[i] / 13f64.exp() - 1.0).abs() < 1e-9);
        assert!((gmean.values[i] / 13f64.exp() - 1.0).abs() < 1e-14);
        assert!((mean.values[i] / 13.02f64.exp() - 1.0).abs() < 1e-14);
        assert!(mean.values[i] > median.values[i]);
        assert!((q50.values[i].ln() - median.values[i].ln()).abs() < 1e-9);
    }
    assert!(index_from_density(&s, Statistic::Quantile(1.0)).is_err());
}

#[test]
fn metro_median_kind_and_quantiles_do_not_cross() {
    let market = generate_synthetic(&Scenario::Standard.config(), 2).unwrap();
    let reg = &market.registry;
    let range = market.truth.config.week_range();
    let w = compute_population_weights(&market.dataset, range).unwrap();
    let weeks: Vec<u32> = range.weeks().step_by(13).collect();
    let s = aggregate_density_series(&market.truth, reg, &w, &Scope::metro("M0"), &weeks).unwrap();
    assert_eq!(
        index_from_density(&s, Statistic::Median).unwrap().kind,
        IndexKind::DMedian
    );
    let qs: Vec<_> = [0.1, 0.2, 0.5, 0.8, 0.9]
        .iter()
        .map(|&p| index_from_density(&s, Statistic::Quantile(p)).unwrap())
        .collect();
    for pair in qs.windows(2) {
        for (a, b) in pair[0].values.iter().zip(&pair[1].values) {
            assert!(a <= b);
        }
    }
}

#[test]
fn normalization_examples() {
    let src = Fixed(vec![(13.0, 0.04)]);
    let reg = registry(1);
    let key = FeatureKey::new(RegionIdx(0), PropType::House);
    let s = region_density_series(&src, &reg, &key, &[4, 5, 6]).unwrap();
    let idx = normalize_index(&index_from_density(&s, Statistic::Gmean).unwrap(), 5).unwrap();
    assert!(idx.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    assert_eq!(idx.value_at(5), Some(1.0));
    assert!(normalize_index(&idx, 99).is_err());
}

#[test]
fn density_dump_tabulates_each_week() {
    let src = Fixed(vec![(13.0, 0.04), (13.5, 0.09)]);
    let reg = registry(2);
    let s = aggregate_density_series(&src, &reg, &weights(&[1.0, 3.0]), &Scope::all(), &[1044, 1045]).unwrap();
    let dump = density_dump(&s, 401).unwrap();
    assert_eq!(dump.scope, "all");
    assert_eq!(dump.weeks.len(), 2);
    assert_eq!(dump.weeks[0].date, "2010-01-04");
    let grid = &dump.weeks[0].grid;
    assert_eq!(grid.len(), 401);
    let h = grid[1].0 - grid[0].0;
    let integral: f64 = grid.iter().map(|(_, p)| p * h).sum();
    assert!((integral - 1.0).abs() < 1e-3);
    let json = serde_json::to_string(&dump).unwrap();
    assert!(json.contains("\"median_log\""));
}
