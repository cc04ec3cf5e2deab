use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use log::{info, warn};
use serde::Serialize;

use densindex::benchmarks::{
    fit_hedonic, fit_repeat_sales_default, hedonic_index, write_index_csv, HedonicSpec, IndexSeries,
    NEAREST_SAMPLE_WEEKS,
};
use densindex::data::time::week_start;
use densindex::data::{
    bucket_by_month, compute_population_weights, discretize_time, filter_outliers, generate_synthetic,
    pair_repeat_sales, parse_sales_csv, write_sales_csv, PopulationWeights, RegionIdx, RegionRegistry, Scenario,
    WeekRange,
};
use densindex::indices::{aggregate_density_series, density_dump, index_from_density, Scope, Statistic};
use densindex::validation::{
    cdf_persistence, friedman_nemenyi, kfold_projection_errors, nll_generalization, quantile_calibration,
    regional_calibration, sparsity_experiment, split_by_dwelling, KFoldConfig, ScopeLevel, ScopedSource,
    SparsityConfig, DECILE_GRID,
};
use densindex::{mean_nll, train_ensemble, Dataset, EnsembleModel};

use crate::args::{Check, IndexArgs, InputArgs, Period, SynthArgs, TrainArgs, ValidateArgs};
use crate::UsageError;

/// Fold count of the dwelling-level split used for the NLL holdout.
const NLL_FOLDS: usize = 5;
const OUTLIER_K: f64 = 3.0;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn parse_week(flag: &str, value: &str) -> Result<u32> {
    let date = NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map_err(|_| usage(format!("--{flag}: expected YYYY-MM-DD, got `{value}`")))?;
    Ok(discretize_time(date)?)
}

/// Percent values in (0, 100), strictly increasing, as probabilities.
fn percent_grid(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
        return Err(usage("--percentiles: values must lie strictly between 0 and 100"));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--percentiles: values must be strictly increasing"));
    }
    Ok(values.iter().map(|p| p / 100.0).collect())
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_inputs(input: &InputArgs) -> Result<(Dataset, RegionRegistry)> {
    let registry = RegionRegistry::load(&input.registry)?;
    let outcome = parse_sales_csv(&input.data, &registry)?;
    if !outcome.rejects.is_empty() {
        warn!(
            "{} sales rows rejected, first: row {} ({})",
            outcome.rejects.len(),
            outcome.rejects[0].row,
            outcome.rejects[0].reason
        );
    }
    if outcome.dataset.is_empty() {
        return Err(densindex::Error::Empty(format!("{} has no sales", input.data.display())).into());
    }
    info!("loaded {} sales over {} regions", outcome.dataset.len(), registry.len());
    Ok((outcome.dataset, registry))
}

fn weights_for(data: &Dataset, cutoff: Option<&str>) -> Result<(PopulationWeights, WeekRange)> {
    let range = data.week_range().expect("non-empty dataset");
    let end = match cutoff {
        Some(s) => parse_week("weights-cutoff", s)?,
        None => range.end,
    };
    if end < range.start {
        return Err(usage("--weights-cutoff precedes the first sale"));
    }
    let period = WeekRange::new(range.start, end.min(range.end))?;
    Ok((compute_population_weights(data, period)?, range))
}

pub fn synth(out: &Path, args: &SynthArgs) -> Result<()> {
    let scenario: Scenario = args
        .scenario
        .parse()
        .map_err(|e: densindex::Error| usage(e.to_string()))?;
    let mut config = scenario.config();
    if let Some(rate) = args.sales_rate {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(usage("--sales-rate must be positive"));
        }
        config.sales_per_key_week = rate;
    }
    let market = generate_synthetic(&config, args.seed)?;
    create_out(out)?;
    let mut w = create(out, "sales.csv")?;
    write_sales_csv(&market.dataset, &market.registry, &mut w)?;
    w.flush()?;
    market.registry.save(&out.join("registry.json"))?;
    let mut w = create(out, "truth.json")?;
    w.write_all(market.truth.dump_json(&market.registry)?.as_bytes())?;
    w.flush()?;
    info!(
        "scenario {scenario}: {} sales, {} regions, written to {}",
        market.dataset.len(),
        market.registry.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MemberSummary {
    member: usize,
    seed: u64,
    final_nll: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    records: usize,
    members: Vec<MemberSummary>,
    ensemble_nll: f64,
}

pub fn train(out: &Path, args: &TrainArgs) -> Result<()> {
    let (data, registry) = load_inputs(&args.input)?;
    if args.model.ensemble == 0 {
        return Err(usage("--ensemble must be at least 1"));
    }
    let config = args.model.train_config();
    let model = train_ensemble(&data, &registry, &config, args.model.ensemble)?;
    create_out(out)?;
    model.save(&out.join("model.json"))?;

    let mut log = csv::Writer::from_writer(create(out, "train_log.csv")?);
    log.write_record(["member", "seed", "epoch", "nll"])?;
    for (i, m) in model.members().iter().enumerate() {
        for (e, nll) in m.epoch_nll.iter().enumerate() {
            log.write_record([
                i.to_string(),
                m.seed().to_string(),
                (e + 1).to_string(),
                format!("{nll}"),
            ])?;
        }
    }
    log.flush()?;
    let summary = TrainSummary {
        records: data.len(),
        members: model
            .members()
            .iter()
            .enumerate()
            .map(|(member, m)| MemberSummary {
                member,
                seed: m.seed(),
                final_nll: m.final_nll,
            })
            .collect(),
        ensemble_nll: mean_nll(&model, &data.records)?,
    };
    write_json(out, "train_summary.json", &summary)?;
    info!("ensemble of {} trained, NLL {:.4}", model.len(), summary.ensemble_nll);
    Ok(())
}

fn normalize(series: IndexSeries, base_week: u32) -> Result<IndexSeries> {
    let base = series
        .value_at(base_week)
        .or_else(|| series.nearest(base_week, NEAREST_SAMPLE_WEEKS))
        .ok_or_else(|| {
            usage(format!(
                "--base-date falls outside the {} {} series",
                series.kind, series.scope
            ))
        })?;
    let mut out = series;
    for v in &mut out.values {
        *v /= base;
    }
    Ok(out)
}

/// Drops the weeks the repeat-sales fit filled by interpolation.
fn supported_only(series: IndexSeries) -> Result<IndexSeries> {
    let (weeks, values): (Vec<u32>, Vec<f64>) = series.iter().filter(|(w, _)| !series.interpolated.contains(w)).unzip();
    Ok(IndexSeries::new(weeks, values, series.kind, series.scope)?)
}

pub fn index(out: &Path, args: &IndexArgs) -> Result<()> {
    let quantiles = percent_grid(&args.percentiles)?;
    let base_week = args
        .base_date
        .as_deref()
        .map(|s| parse_week("base-date", s))
        .transpose()?;
    let (data, registry) = load_inputs(&args.input)?;
    let model = EnsembleModel::load(&args.model)?;
    if model.registry() != &registry {
        bail!(densindex::Error::Registry(
            "model was trained against a different registry".into()
        ));
    }
    let (weights, range) = weights_for(&data, args.weights_cutoff.as_deref())?;
    let weeks: Vec<u32> = range.weeks().collect();

    let metros = registry.metros();
    let groups: Vec<(Scope, Vec<RegionIdx>)> = if metros.is_empty() {
        vec![(Scope::all(), registry.indices().collect())]
    } else {
        metros
            .iter()
            .map(|m| (Scope::metro(m.as_str()), registry.regions_in_metro(m)))
            .collect()
    };
    let filtered = filter_outliers(&data, &registry, OUTLIER_K);

    let mut series = Vec::new();
    let mut dumps = Vec::new();
    for (scope, regions) in &groups {
        if weights.restricted(|k| scope.matches(k, &registry)).is_err() {
            warn!("{}: no weighted cells, skipped", scope.label(&registry));
            continue;
        }
        let dens = aggregate_density_series(&model, &registry, &weights, scope, &weeks)?;
        for stat in [Statistic::Median, Statistic::Gmean, Statistic::MeanPrice]
            .into_iter()
            .chain(quantiles.iter().map(|&p| Statistic::Quantile(p)))
        {
            series.push(index_from_density(&dens, stat)?);
        }
        dumps.push(density_dump(&dens, args.grid_points)?);
        for &region in regions {
            let rs = Scope::region(region);
            if weights.restricted(|k| rs.matches(k, &registry)).is_err() {
                continue;
            }
            let dens = aggregate_density_series(&model, &registry, &weights, &rs, &weeks)?;
            series.push(index_from_density(&dens, Statistic::Median)?);
            dumps.push(density_dump(&dens, args.grid_points)?);
        }

        let label = scope.label(&registry);
        let mut in_scope = filtered.filter(|r| regions.contains(&r.region));
        if in_scope.is_empty() {
            continue;
        }
        if args.benchmark_period == Period::Month {
            in_scope = bucket_by_month(&in_scope);
        }
        let hedonic = fit_hedonic(&in_scope, &HedonicSpec::default())?;
        series.push(hedonic_index(&hedonic)?.with_scope(label.clone()));
        let pairs: Vec<_> = pair_repeat_sales(&in_scope)
            .into_iter()
            .filter(|p| p.t2 > p.t1)
            .collect();
        if pairs.is_empty() {
            warn!("{label}: no repeat sales, repeat-sales index skipped");
        } else {
            let rs = fit_repeat_sales_default(&pairs)?.with_scope(label);
            series.push(match args.benchmark_period {
                Period::Week => rs,
                Period::Month => supported_only(rs)?,
            });
        }
    }
    if series.is_empty() {
        return Err(densindex::Error::Empty("no index could be computed".into()).into());
    }
    if let Some(base) = base_week {
        series = series.into_iter().map(|s| normalize(s, base)).collect::<Result<_>>()?;
    }
    create_out(out)?;
    let mut w = create(out, "indices.csv")?;
    write_index_csv(&series, &mut w)?;
    w.flush()?;
    write_json(out, "densities.json", &dumps)?;
    info!("{} index series written to {}", series.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct NllSummary {
    train: f64,
    holdout: f64,
    gap: f64,
    train_records: usize,
    holdout_records: usize,
}

#[derive(Serialize)]
struct CalibrationSummary {
    grid: Vec<f64>,
    metro_delta_median: f64,
    regional_median_delta_median: f64,
    n: usize,
}

#[derive(Serialize)]
struct PersistenceSummary {
    pairs: usize,
    metro: f64,
    subregion: f64,
}

#[derive(Serialize)]
struct ScopedFriedman {
    scope: String,
    #[serde(flatten)]
    report: densindex::validation::FriedmanReport,
}

fn sparsity_region(registry: &RegionRegistry, flag: Option<&str>) -> Result<RegionIdx> {
    match flag {
        Some(id) => registry
            .resolve(id)
            .map_err(|e| usage(format!("--sparsity-region: {e}"))),
        None => registry
            .indices()
            .find(|&r| !registry.neighbors(r).is_empty())
            .or_else(|| registry.indices().next())
            .ok_or_else(|| anyhow!(densindex::Error::Empty("registry has no regions".into()))),
    }
}

pub fn validate(out: &Path, args: &ValidateArgs) -> Result<()> {
    let checks: Vec<Check> = if args.checks.is_empty() {
        Check::ALL.to_vec()
    } else {
        args.checks.clone()
    };
    let grid = if args.percentiles.is_empty() {
        DECILE_GRID.to_vec()
    } else {
        percent_grid(&args.percentiles)?
    };
    if args.model_args.ensemble == 0 {
        return Err(usage("--ensemble must be at least 1"));
    }
    if args.folds < 2 && checks.contains(&Check::Kfold) {
        return Err(usage("--folds must be at least 2"));
    }
    if !(args.sparsity_keep > 0.0 && args.sparsity_keep <= 1.0) {
        return Err(usage("--sparsity-keep must lie in (0, 1]"));
    }
    let cutoff = args
        .weights_cutoff
        .as_deref()
        .map(|s| parse_week("weights-cutoff", s))
        .transpose()?;
    let (data, registry) = load_inputs(&args.input)?;
    let sparse_region = sparsity_region(&registry, args.sparsity_region.as_deref())?;
    let config = args.model_args.train_config();
    config.validate()?;
    let members = args.model_args.ensemble;
    create_out(out)?;

    if checks.contains(&Check::Nll) {
        let (train_set, held) = split_by_dwelling(&data, NLL_FOLDS, 0);
        let model = train_ensemble(&train_set, &registry, &config, members)?;
        let r = nll_generalization(&model, &train_set.records, &held.records)?;
        info!("NLL train {:.4}, holdout {:.4}", r.train, r.holdout);
        write_json(
            out,
            "nll.json",
            &NllSummary {
                train: r.train,
                holdout: r.holdout,
                gap: r.gap(),
                train_records: train_set.len(),
                holdout_records: held.len(),
            },
        )?;
    }

    if checks.contains(&Check::Calibration) || checks.contains(&Check::Persistence) {
        let model = match &args.model {
            Some(path) => EnsembleModel::load(path)?,
            None => train_ensemble(&data, &registry, &config, members)?,
        };
        let (weights, _) = weights_for(&data, args.weights_cutoff.as_deref())?;
        let metro = ScopedSource::new(&model, &registry, &weights, ScopeLevel::Metro, false);
        let region = ScopedSource::new(&model, &registry, &weights, ScopeLevel::Region, false);
        if checks.contains(&Check::Calibration) {
            let pooled = quantile_calibration(&metro, &data.records, &grid)?;
            pooled.write_csv(create(out, "calibration_metro.csv")?)?;
            let regional = regional_calibration(&region, &registry, &data.records, &grid)?;
            let mut w = csv::Writer::from_writer(create(out, "calibration_regional.csv")?);
            w.write_record(["region", "percentile", "observed", "deviation"])?;
            for (id, rep) in &regional.regions {
                for (p, o) in rep.grid.iter().zip(&rep.observed) {
                    w.write_record([id.clone(), format!("{p}"), format!("{o}"), format!("{}", o - p)])?;
                }
            }
            w.flush()?;
            info!(
                "calibration δ-median metro {:.2} pp, regional median {:.2} pp",
                pooled.delta_median, regional.median_delta_median
            );
            write_json(
                out,
                "calibration_summary.json",
                &CalibrationSummary {
                    grid: grid.clone(),
                    metro_delta_median: pooled.delta_median,
                    regional_median_delta_median: regional.median_delta_median,
                    n: pooled.n,
                },
            )?;
        }
        if checks.contains(&Check::Persistence) {
            let pairs = pair_repeat_sales(&data);
            let by_type_metro = ScopedSource::new(&model, &registry, &weights, ScopeLevel::Metro, true);
            let by_type_region = ScopedSource::new(&model, &registry, &weights, ScopeLevel::Region, true);
            let m = cdf_persistence(&by_type_metro, &pairs)?;
            let r = cdf_persistence(&by_type_region, &pairs)?;
            info!(
                "CDF persistence metro {:.4}, subregion {:.4}",
                m.correlation, r.correlation
            );
            write_json(
                out,
                "persistence.json",
                &PersistenceSummary {
                    pairs: m.n,
                    metro: m.correlation,
                    subregion: r.correlation,
                },
            )?;
        }
    }

    if checks.contains(&Check::Kfold) {
        let kf = KFoldConfig {
            folds: args.folds,
            train: config.clone(),
            ensemble: members,
            weights_cutoff: cutoff,
            ..KFoldConfig::default()
        };
        let report = kfold_projection_errors(&data, &registry, &kf)?;
        report.write_csv(create(out, "projection_errors.csv")?)?;
        let mut ranks = Vec::new();
        for scope in &report.scopes {
            let names: Vec<String> = scope.kinds.iter().map(|k| k.to_string()).collect();
            match friedman_nemenyi(&scope.apes, &names) {
                Ok(fr) => {
                    fr.write_csv(create(out, &format!("nemenyi_{}.csv", scope.scope))?)?;
                    info!("{}: best {}, Friedman p {:.2e}", scope.scope, fr.best, fr.p_value);
                    ranks.push(ScopedFriedman {
                        scope: scope.scope.clone(),
                        report: fr,
                    });
                }
                Err(e) => warn!("{}: rank test skipped: {e}", scope.scope),
            }
        }
        write_json(out, "friedman.json", &ranks)?;
    }

    if checks.contains(&Check::Sparsity) {
        let sp = SparsityConfig {
            keep_fraction: args.sparsity_keep,
            seed: config.seed,
            train: config.clone(),
            ensemble: members,
            ..SparsityConfig::new(sparse_region)
        };
        let report = sparsity_experiment(&data, &registry, &sp)?;
        let mut w = csv::Writer::from_writer(create(out, "sparsity.csv")?);
        w.write_record(["week", "date", "control", "treatment", "departure"])?;
        for (i, (week, c)) in report.control.iter().enumerate() {
            w.write_record([
                week.to_string(),
                week_start(week).to_string(),
                format!("{c}"),
                format!("{}", report.treatment.values[i]),
                format!("{}", report.departure[i]),
            ])?;
        }
        w.flush()?;
        info!(
            "sparsity {}: kept {}/{}, max departure {:.4}",
            report.region, report.kept, report.original, report.max_departure
        );
        write_json(out, "sparsity.json", &report)?;
    }
    Ok(())
}
