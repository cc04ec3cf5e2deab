//! Out-of-sample repeat-sale price projection errors under k-fold
//! partitioning of dwellings.

use std::collections::BTreeMap;
use std::io::Write;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    fit_hedonic, fit_repeat_sales, hedonic_index, HedonicSpec, IndexKind, IndexSeries, NEAREST_SAMPLE_WEEKS,
    REPEAT_RIDGE_FACTOR,
};
use crate::data::{
    compute_population_weights, filter_outliers, pair_repeat_sales, Dataset, RegionIdx, RegionRegistry, RepeatSalePair,
    WeekRange,
};
use crate::error::{Error, Result};
use crate::indices::{aggregate_density_series, index_from_density, Scope, Statistic};
use crate::mdn::{train_ensemble, EnsembleModel, TrainConfig};

/// `y1 · H(t2) / H(t1)`, reading each index value at the exact week or,
/// failing that, the nearest sample within [`NEAREST_SAMPLE_WEEKS`].
pub fn project_price(index: &IndexSeries, y1: f64, t1: u32, t2: u32) -> Result<f64> {
    let at = |t: u32| {
        index
            .value_at(t)
            .or_else(|| index.nearest(t, NEAREST_SAMPLE_WEEKS))
            .ok_or_else(|| Error::InvalidArgument(format!("week {t} outside the {} index span", index.kind)))
    };
    Ok(y1 * at(t2)? / at(t1)?)
}

/// Absolute percentage error of the projected second-sale price.
pub fn absolute_percentage_error(index: &IndexSeries, pair: &RepeatSalePair) -> Result<f64> {
    let y1 = pair.y1.exp();
    let y2 = pair.y2.exp();
    let projected = project_price(index, y1, pair.t1, pair.t2)?;
    Ok((projected - y2).abs() / y2 * 100.0)
}

/// Fold of a dwelling from a stable 64-bit FNV-1a hash of its id.
pub fn fold_of(dwelling_id: &str, folds: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in dwelling_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % folds as u64) as usize
}

/// Splits a dataset by dwelling into (complement, held-out fold).
pub fn split_by_dwelling(dataset: &Dataset, folds: usize, fold: usize) -> (Dataset, Dataset) {
    let (out, kept): (Vec<_>, Vec<_>) = dataset
        .iter()
        .cloned()
        .partition(|r| fold_of(&r.dwelling_id, folds) == fold);
    (Dataset::new(kept), Dataset::new(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldConfig {
    pub folds: usize,
    pub kinds: Vec<IndexKind>,
    /// Metro ids to evaluate; empty means every metro in the registry.
    pub scopes: Vec<String>,
    pub train: TrainConfig,
    pub ensemble: usize,
    /// Last week of the population-weight period (default: data end).
    pub weights_cutoff: Option<u32>,
    /// Only pairs with both sales inside this window are scored.
    pub window: Option<WeekRange>,
    pub outlier_k: f64,
    pub hedonic: HedonicSpec,
    pub repeat_ridge_factor: f64,
}

impl Default for KFoldConfig {
    fn default() -> Self {
        Self {
            folds: 20,
            kinds: vec![
                IndexKind::DSubregion,
                IndexKind::DGmean,
                IndexKind::Hedonic,
                IndexKind::RepeatSales,
            ],
            scopes: Vec::new(),
            train: TrainConfig::default(),
            ensemble: 8,
            weights_cutoff: None,
            window: None,
            outlier_k: 3.0,
            hedonic: HedonicSpec::default(),
            repeat_ridge_factor: REPEAT_RIDGE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub scope: String,
    pub kind: IndexKind,
    pub mdape: f64,
    pub mape: f64,
    pub n: usize,
}

/// Absolute percentage errors of every scored pair in one scope; row `i`
/// holds one error per kind, in `kinds` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeErrors {
    pub scope: String,
    pub kinds: Vec<IndexKind>,
    pub dwelling_ids: Vec<String>,
    pub folds: Vec<usize>,
    pub apes: Vec<Vec<f64>>,
}

impl ScopeErrors {
    pub fn column(&self, kind: IndexKind) -> Option<Vec<f64>> {
        let j = self.kinds.iter().position(|k| *k == kind)?;
        Some(self.apes.iter().map(|row| row[j]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionErrorReport {
    pub folds: usize,
    pub summary: Vec<ErrorSummary>,
    pub scopes: Vec<ScopeErrors>,
    /// Held-out pairs that at least one index could not project.
    pub unscored: usize,
}

pub const PROJECTION_CSV_HEADER: [&str; 5] = ["scope", "kind", "mdape", "mape", "n"];

impl ProjectionErrorReport {
    pub fn get(&self, scope: &str, kind: IndexKind) -> Option<&ErrorSummary> {
        self.summary.iter().find(|s| s.scope == scope && s.kind == kind)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(PROJECTION_CSV_HEADER)?;
        for s in &self.summary {
            w.write_record([
                s.scope.clone(),
                s.kind.to_string(),
                format!("{}", s.mdape),
                format!("{}", s.mape),
                s.n.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<projection csv>", e))?;
        Ok(())
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(scope: &str, kind: IndexKind, apes: &[f64]) -> Result<ErrorSummary> {
    if apes.is_empty() {
        return Err(Error::Empty(format!("no scored pairs for {kind} in {scope}")));
    }
    Ok(ErrorSummary {
        scope: scope.to_string(),
        kind,
        mdape: median(apes),
        mape: apes.iter().sum::<f64>() / apes.len() as f64,
        n: apes.len(),
    })
}

/// Indices fitted on one training complement.
struct FoldIndices {
    metro: BTreeMap<(String, String), IndexSeries>,
    subregion: BTreeMap<RegionIdx, IndexSeries>,
}

impl FoldIndices {
    fn lookup(&self, registry: &RegionRegistry, pair: &RepeatSalePair, kind: IndexKind) -> Option<&IndexSeries> {
        match kind {
            IndexKind::DSubregion => self.subregion.get(&pair.key.region),
            _ => {
                let metro = registry.metro(pair.key.region)?;
                self.metro.get(&(metro.to_string(), kind.to_string()))
            }
        }
    }
}

fn fit_fold_indices(
    train: &Dataset,
    registry: &RegionRegistry,
    metros: &[String],
    config: &KFoldConfig,
    ensemble: Option<&EnsembleModel>,
) -> Result<FoldIndices> {
    let range = train
        .week_range()
        .ok_or_else(|| Error::Empty("empty training fold".into()))?;
    let weeks: Vec<u32> = range.weeks().collect();
    let cutoff = config.weights_cutoff.unwrap_or(range.end).clamp(range.start, range.end);
    let mut out = FoldIndices {
        metro: BTreeMap::new(),
        subregion: BTreeMap::new(),
    };
    let needs_linear = config
        .kinds
        .iter()
        .any(|k| matches!(k, IndexKind::Hedonic | IndexKind::RepeatSales));
    let filtered = needs_linear.then(|| filter_outliers(train, registry, config.outlier_k));

    if let Some(model) = ensemble {
        let weights = compute_population_weights(train, WeekRange::new(range.start, cutoff)?)?;
        for kind in &config.kinds {
            match kind {
                IndexKind::DSubregion => {
                    for metro in metros {
                        for region in registry.regions_in_metro(metro) {
                            let scope = Scope::region(region);
                            if weights.restricted(|k| scope.matches(k, registry)).is_err() {
                                continue;
                            }
                            let s = aggregate_density_series(model, registry, &weights, &scope, &weeks)?;
                            out.subregion.insert(region, index_from_density(&s, Statistic::Median)?);
                        }
                    }
                }
                IndexKind::DGmean | IndexKind::DMedian | IndexKind::DMeanPrice | IndexKind::DQuantile(_) => {
                    let stat = match kind {
                        IndexKind::DGmean => Statistic::Gmean,
                        IndexKind::DMedian => Statistic::Median,
                        IndexKind::DMeanPrice => Statistic::MeanPrice,
                        IndexKind::DQuantile(p) => Statistic::Quantile(*p),
                        _ => unreachable!(),
                    };
                    for metro in metros {
                        let s = aggregate_density_series(model, registry, &weights, &Scope::metro(metro), &weeks)?;
                        out.metro
                            .insert((metro.clone(), kind.to_string()), index_from_density(&s, stat)?);
                    }
                }
                _ => {}
            }
        }
    }
    if let Some(filtered) = &filtered {
        for metro in metros {
            let in_metro = filtered.filter(|r| registry.metro(r.region) == Some(metro.as_str()));
            if in_metro.is_empty() {
                continue;
            }
            if config.kinds.contains(&IndexKind::Hedonic) {
                let model = fit_hedonic(&in_metro, &config.hedonic)?;
                let idx = hedonic_index(&model)?.with_scope(metro.clone()).monthly();
                out.metro.insert((metro.clone(), IndexKind::Hedonic.to_string()), idx);
            }
            if config.kinds.contains(&IndexKind::RepeatSales) {
                let pairs = pair_repeat_sales(&in_metro);
                if !pairs.is_empty() {
                    let idx = fit_repeat_sales(&pairs, config.repeat_ridge_factor)?
                        .with_scope(metro.clone())
                        .monthly();
                    out.metro
                        .insert((metro.clone(), IndexKind::RepeatSales.to_string()), idx);
                }
            }
        }
    }
    Ok(out)
}

/// For each fold, fits every requested index on the complement and scores
/// the held-out dwellings' consecutive-sale pairs. A pair is kept only if
/// all requested indices can project it, so the error columns line up.
pub fn kfold_projection_errors(
    dataset: &Dataset,
    registry: &RegionRegistry,
    config: &KFoldConfig,
) -> Result<ProjectionErrorReport> {
    if config.folds < 2 {
        return Err(Error::InvalidArgument(
            "k-fold validation needs at least two folds".into(),
        ));
    }
    if config.kinds.is_empty() {
        return Err(Error::InvalidArgument("no index kinds requested".into()));
    }
    let metros = if config.scopes.is_empty() {
        registry.metros()
    } else {
        config.scopes.clone()
    };
    for m in &metros {
        if registry.regions_in_metro(m).is_empty() {
            return Err(Error::InvalidArgument(format!("unknown metro '{m}'")));
        }
    }
    let needs_model = config.kinds.iter().any(|k| {
        matches!(
            k,
            IndexKind::DSubregion
                | IndexKind::DGmean
                | IndexKind::DMedian
                | IndexKind::DMeanPrice
                | IndexKind::DQuantile(_)
        )
    });

    let mut scopes: BTreeMap<String, ScopeErrors> = metros
        .iter()
        .map(|m| {
            (
                m.clone(),
                ScopeErrors {
                    scope: m.clone(),
                    kinds: config.kinds.clone(),
                    dwelling_ids: Vec::new(),
                    folds: Vec::new(),
                    apes: Vec::new(),
                },
            )
        })
        .collect();
    let mut unscored = 0;
    for fold in 0..config.folds {
        let (train, held) = split_by_dwelling(dataset, config.folds, fold);
        let pairs: Vec<_> = pair_repeat_sales(&held)
            .into_iter()
            .filter(|p| config.window.is_none_or(|w| w.contains(p.t1) && w.contains(p.t2)))
            .filter(|p| registry.metro(p.key.region).is_some_and(|m| scopes.contains_key(m)))
            .collect();
        if pairs.is_empty() {
            warn!("fold {fold}: no held-out pairs, skipped");
            continue;
        }
        if train.is_empty() {
            warn!("fold {fold}: empty training complement, skipped");
            continue;
        }
        info!(
            "fold {fold}/{}: {} training sales, {} held-out pairs",
            config.folds,
            train.len(),
            pairs.len()
        );
        let ensemble = if needs_model {
            let cfg = TrainConfig {
                seed: config.train.seed.wrapping_add(1000 * fold as u64),
                ..config.train.clone()
            };
            Some(train_ensemble(&train, registry, &cfg, config.ensemble)?)
        } else {
            None
        };
        let indices = fit_fold_indices(&train, registry, &metros, config, ensemble.as_ref())?;
        for pair in &pairs {
            let row: Option<Vec<f64>> = config
                .kinds
                .iter()
                .map(|&k| {
                    indices
                        .lookup(registry, pair, k)
                        .and_then(|idx| absolute_percentage_error(idx, pair).ok())
                })
                .collect();
            let Some(row) = row else {
                unscored += 1;
                continue;
            };
            let metro = registry.metro(pair.key.region).expect("filtered above");
            let s = scopes.get_mut(metro).expect("filtered above");
            s.dwelling_ids.push(pair.dwelling_id.clone());
            s.folds.push(fold);
            s.apes.push(row);
        }
    }

    let mut summary = Vec::new();
    for s in scopes.values() {
        if s.apes.is_empty() {
            warn!("scope {}: no scored pairs", s.scope);
            continue;
        }
        for &kind in &config.kinds {
            summary.push(summarize(&s.scope, kind, &s.column(kind).expect("kind present"))?);
        }
    }
    if summary.is_empty() {
        return Err(Error::Empty("no repeat-sale pairs could be scored".into()));
    }
    Ok(ProjectionErrorReport {
        folds: config.folds,
        summary,
        scopes: scopes.into_values().filter(|s| !s.apes.is_empty()).collect(),
        unscored,
    })
}
