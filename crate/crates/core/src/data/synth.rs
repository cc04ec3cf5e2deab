//! Seeded synthetic housing markets with known log-price densities.
//!
//! Every (key, week) has a true Gaussian mixture: a fixed per-key shape
//! shifted by a region level and a piecewise log-linear trend scaled by a
//! region multiplier. Resales keep the dwelling's normal score in its key's
//! true distribution up to Gaussian noise, which preserves the marginal
//! distribution of second sales exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::time::week_of_year;
use super::{Dataset, FeatureKey, HedonicCovariates, PropType, RegionIdx, RegionRegistry, SaleRecord, WeekRange};
use crate::error::{Error, Result};
use crate::mixture::{std_normal_cdf, Component, GaussianMixture};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentTemplate {
    pub weight: f64,
    /// Offset of the component mean from the key's level.
    pub offset: f64,
    pub var: f64,
}

impl ComponentTemplate {
    pub const fn new(weight: f64, offset: f64, var: f64) -> Self {
        Self { weight, offset, var }
    }
}

/// Piecewise-linear cumulative log-price change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec {
    /// `(fraction of span, cumulative log change)` knots, fractions increasing in `[0, 1]`.
    pub knots: Vec<(f64, f64)>,
    /// Region multipliers are spread linearly over this interval along the region order.
    pub multiplier_range: (f64, f64),
}

impl TrendSpec {
    pub fn flat() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 0.0)],
            multiplier_range: (1.0, 1.0),
        }
    }

    fn at(&self, frac: f64) -> f64 {
        let k = &self.knots;
        if frac <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if frac <= x1 {
                return y0 + (y1 - y0) * (frac - x0) / (x1 - x0);
            }
        }
        k[k.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub regions: usize,
    /// Regions are split into this many contiguous metro blocks.
    pub metros: usize,
    pub start_week: u32,
    pub weeks: u32,
    pub prop_types: Vec<PropType>,
    /// Poisson mean of first sales per key per week.
    pub sales_per_key_week: f64,
    /// Optional per-region multipliers on the sales rate.
    #[serde(default)]
    pub region_intensity: Vec<f64>,
    /// Shape of every key's density, relative to its level.
    pub components: Vec<ComponentTemplate>,
    pub base_level: f64,
    /// Region levels are drawn uniformly within `base_level ± spread/2`.
    pub region_level_spread: f64,
    pub unit_offset: f64,
    pub trend: TrendSpec,
    /// Probability that a sale is followed by a resale of the same dwelling.
    pub repeat_fraction: f64,
    pub repeat_gap: (u32, u32),
    /// Standard deviation of the normal-score perturbation between sales.
    pub repeat_noise: f64,
    /// Link consecutive regions of each metro as neighbours.
    pub adjacency: bool,
}

/// Named presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// One region, one key, constant N(13, 0.04), about 10k sales.
    Constant,
    Standard,
    /// Regional trends that diverge strongly within one metro.
    DivergentTrends,
    /// Standard market with large resale noise.
    RegionNoise,
    /// Right-skewed log prices so the median sits below the mean log price.
    Skewed,
    Flat,
    /// Small market for smoke tests.
    Tiny,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Constant,
        Scenario::Standard,
        Scenario::DivergentTrends,
        Scenario::RegionNoise,
        Scenario::Skewed,
        Scenario::Flat,
        Scenario::Tiny,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Constant => "constant",
            Scenario::Standard => "standard",
            Scenario::DivergentTrends => "divergent-trends",
            Scenario::RegionNoise => "region-noise",
            Scenario::Skewed => "skewed",
            Scenario::Flat => "flat",
            Scenario::Tiny => "tiny",
        }
    }

    pub fn config(self) -> SynthConfig {
        let two_comp = vec![
            ComponentTemplate::new(0.7, -0.1, 0.03),
            ComponentTemplate::new(0.3, 0.233_333_333_333_333_3, 0.06),
        ];
        let standard = SynthConfig {
            regions: 6,
            metros: 1,
            start_week: 1044,
            weeks: 156,
            prop_types: vec![PropType::House, PropType::Unit],
            sales_per_key_week: 10.0,
            region_intensity: Vec::new(),
            components: two_comp,
            base_level: 13.2,
            region_level_spread: 0.8,
            unit_offset: -0.35,
            trend: TrendSpec {
                knots: vec![(0.0, 0.0), (0.4, 0.12), (0.7, 0.08), (1.0, 0.25)],
                multiplier_range: (0.6, 1.4),
            },
            repeat_fraction: 0.3,
            repeat_gap: (8, 100),
            repeat_noise: 0.3,
            adjacency: true,
        };
        match self {
            Scenario::Standard => standard,
            Scenario::Constant => SynthConfig {
                regions: 1,
                prop_types: vec![PropType::House],
                weeks: 100,
                sales_per_key_week: 100.0,
                components: vec![ComponentTemplate::new(1.0, 0.0, 0.04)],
                base_level: 13.0,
                region_level_spread: 0.0,
                trend: TrendSpec::flat(),
                repeat_fraction: 0.0,
                ..standard
            },
            Scenario::DivergentTrends => SynthConfig {
                trend: TrendSpec {
                    knots: vec![(0.0, 0.0), (0.5, 0.2), (1.0, 0.4)],
                    multiplier_range: (-0.5, 2.0),
                },
                repeat_fraction: 0.4,
                repeat_gap: (12, 120),
                repeat_noise: 0.25,
                ..standard
            },
            Scenario::RegionNoise => SynthConfig {
                repeat_fraction: 0.4,
                repeat_noise: 0.6,
                ..standard
            },
            Scenario::Skewed => SynthConfig {
                regions: 4,
                components: vec![
                    ComponentTemplate::new(0.72, -0.12, 0.015),
                    ComponentTemplate::new(0.28, 0.308_571_428_571_428_6, 0.1),
                ],
                sales_per_key_week: 12.0,
                ..standard
            },
            Scenario::Flat => SynthConfig {
                trend: TrendSpec::flat(),
                ..standard
            },
            Scenario::Tiny => SynthConfig {
                regions: 3,
                weeks: 40,
                sales_per_key_week: 4.0,
                prop_types: vec![PropType::House],
                repeat_gap: (4, 30),
                ..standard
            },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario `{s}`")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic config: {m}")));
        if self.regions == 0 || self.metros == 0 || self.metros > self.regions {
            return bad("need 1 <= metros <= regions");
        }
        if self.weeks == 0 {
            return bad("weeks must be positive");
        }
        if self.prop_types.is_empty() {
            return bad("no property types");
        }
        if !(self.sales_per_key_week > 0.0) {
            return bad("sales rate must be positive");
        }
        if !self.region_intensity.is_empty() && self.region_intensity.len() != self.regions {
            return bad("region_intensity length differs from region count");
        }
        if self.region_intensity.iter().any(|v| !(*v >= 0.0)) {
            return bad("negative region intensity");
        }
        if self.components.is_empty() {
            return bad("no components");
        }
        let wsum: f64 = self.components.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 || self.components.iter().any(|c| c.weight < 0.0 || c.var <= 0.0) {
            return bad("component weights must sum to one and variances be positive");
        }
        if self.trend.knots.len() < 2 {
            return bad("trend needs at least two knots");
        }
        if !(0.0..=1.0).contains(&self.repeat_fraction)
            || self.repeat_gap.0 == 0
            || self.repeat_gap.0 > self.repeat_gap.1
        {
            return bad("invalid repeat-sale settings");
        }
        if !(self.repeat_noise >= 0.0) {
            return bad("negative repeat noise");
        }
        Ok(())
    }

    pub fn week_range(&self) -> WeekRange {
        WeekRange {
            start: self.start_week,
            end: self.start_week + self.weeks - 1,
        }
    }

    fn metro_of(&self, region: usize) -> usize {
        region * self.metros / self.regions
    }

    pub fn registry(&self) -> RegionRegistry {
        let entries = (0..self.regions).map(|r| {
            let metro = self.metro_of(r);
            let mut neighbors = Vec::new();
            if self.adjacency {
                if r > 0 && self.metro_of(r - 1) == metro {
                    neighbors.push(region_name(r - 1));
                }
                if r + 1 < self.regions && self.metro_of(r + 1) == metro {
                    neighbors.push(region_name(r + 1));
                }
            }
            (region_name(r), Some(format!("M{metro}")), neighbors)
        });
        RegionRegistry::new(entries).expect("generated registry is valid")
    }
}

fn region_name(r: usize) -> String {
    format!("R{r:02}")
}

/// Exact generating densities of a synthetic market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub seed: u64,
    pub config: SynthConfig,
    pub region_levels: Vec<f64>,
    pub region_multipliers: Vec<f64>,
}

impl SyntheticGroundTruth {
    /// Cumulative log trend of a region at a week (clamped to the span).
    pub fn trend(&self, region: RegionIdx, week: u32) -> f64 {
        let span = self.config.week_range();
        let w = week.clamp(span.start, span.end);
        let frac = if self.config.weeks <= 1 {
            0.0
        } else {
            f64::from(w - span.start) / f64::from(self.config.weeks - 1)
        };
        self.region_multipliers[region.index()] * self.config.trend.at(frac)
    }

    /// Level of a key's density before the trend is applied.
    pub fn level(&self, key: &FeatureKey) -> f64 {
        let unit = if key.prop_type == PropType::Unit {
            self.config.unit_offset
        } else {
            0.0
        };
        self.region_levels[key.region.index()] + unit
    }

    pub fn mixture(&self, key: &FeatureKey, week: u32) -> GaussianMixture {
        let shift = self.level(key) + self.trend(key.region, week);
        GaussianMixture::from_valid(
            self.config
                .components
                .iter()
                .map(|c| Component::new(c.weight, shift + c.offset, c.var))
                .collect(),
        )
    }

    pub fn keys(&self) -> Vec<FeatureKey> {
        let mut keys = Vec::new();
        for r in 0..self.config.regions {
            for &p in &self.config.prop_types {
                keys.push(FeatureKey::new(RegionIdx(r as u32), p));
            }
        }
        keys.sort();
        keys
    }

    /// JSON dump of every (key, week) mixture.
    pub fn dump_json(&self, registry: &RegionRegistry) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            region: &'a str,
            prop_type: PropType,
            week: u32,
            components: Vec<Component>,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            seed: u64,
            config: &'a SynthConfig,
            region_levels: &'a [f64],
            region_multipliers: &'a [f64],
            densities: Vec<Entry<'a>>,
        }
        let mut densities = Vec::new();
        for key in self.keys() {
            for week in self.config.week_range().weeks() {
                densities.push(Entry {
                    region: registry.id(key.region),
                    prop_type: key.prop_type,
                    week,
                    components: self.mixture(&key, week).components().to_vec(),
                });
            }
        }
        Ok(serde_json::to_string(&Dump {
            seed: self.seed,
            config: &self.config,
            region_levels: &self.region_levels,
            region_multipliers: &self.region_multipliers,
            densities,
        })?)
    }

    /// Reads back the parameters from a [`dump_json`](Self::dump_json) file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub dataset: Dataset,
    pub truth: SyntheticGroundTruth,
    pub registry: RegionRegistry,
}

struct PendingResale {
    dwelling: u64,
    key: FeatureKey,
    score: f64,
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SyntheticMarket> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let registry = config.registry();

    let (m_lo, m_hi) = config.trend.multiplier_range;
    let region_multipliers: Vec<f64> = (0..config.regions)
        .map(|r| {
            if config.regions == 1 {
                0.5 * (m_lo + m_hi)
            } else {
                m_lo + (m_hi - m_lo) * r as f64 / (config.regions - 1) as f64
            }
        })
        .collect();
    let region_levels: Vec<f64> = (0..config.regions)
        .map(|_| config.base_level + config.region_level_spread * (rng.random::<f64>() - 0.5))
        .collect();
    let truth = SyntheticGroundTruth {
        seed,
        config: config.clone(),
        region_levels,
        region_multipliers,
    };

    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let keys = truth.keys();
    let span = config.week_range();
    let mut pending: BTreeMap<u32, Vec<PendingResale>> = BTreeMap::new();
    let mut next_dwelling = 0u64;
    let mut records = Vec::new();
    let shrink = 1.0 / (1.0 + config.repeat_noise * config.repeat_noise).sqrt();

    let push = |records: &mut Vec<SaleRecord>, dwelling: u64, key: FeatureKey, week: u32, y: f64| {
        records.push(SaleRecord {
            dwelling_id: format!("d{dwelling:07}"),
            log_price: y,
            week,
            week_of_year: week_of_year(week),
            region: key.region,
            prop_type: key.prop_type,
            bedrooms: None,
            land_band: None,
            hedonic: HedonicCovariates::default(),
        });
    };
    let maybe_schedule = |rng: &mut ChaCha8Rng,
                          pending: &mut BTreeMap<u32, Vec<PendingResale>>,
                          dwelling: u64,
                          key: FeatureKey,
                          week: u32,
                          score: f64| {
        if config.repeat_fraction > 0.0 && rng.random::<f64>() < config.repeat_fraction {
            let gap = rng.random_range(config.repeat_gap.0..=config.repeat_gap.1);
            if week + gap <= span.end {
                pending
                    .entry(week + gap)
                    .or_default()
                    .push(PendingResale { dwelling, key, score });
            }
        }
    };

    for week in span.weeks() {
        for resale in pending.remove(&week).unwrap_or_default() {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let score = (resale.score + config.repeat_noise * eps) * shrink;
            let u = std_normal_cdf(score).clamp(1e-12, 1.0 - 1e-12);
            let y = truth.mixture(&resale.key, week).quantile(u)?;
            push(&mut records, resale.dwelling, resale.key, week, y);
            maybe_schedule(&mut rng, &mut pending, resale.dwelling, resale.key, week, score);
        }
        for key in &keys {
            let intensity = config.region_intensity.get(key.region.index()).copied().unwrap_or(1.0);
            let rate = config.sales_per_key_week * intensity;
            if rate <= 0.0 {
                continue;
            }
            let n = Poisson::new(rate)
                .map_err(|e| Error::InvalidArgument(format!("sales rate: {e}")))?
                .sample(&mut rng) as usize;
            let density = truth.mixture(key, week);
            for _ in 0..n {
                let y = density.sample(&mut rng);
                let dwelling = next_dwelling;
                next_dwelling += 1;
                push(&mut records, dwelling, *key, week, y);
                if config.repeat_fraction > 0.0 {
                    let u = density.cdf(y).clamp(1e-12, 1.0 - 1e-12);
                    let score = std_normal.inverse_cdf(u);
                    maybe_schedule(&mut rng, &mut pending, dwelling, *key, week, score);
                }
            }
        }
    }

    Ok(SyntheticMarket {
        dataset: Dataset::new(records),
        truth,
        registry,
    })
}

/// Small generative fixtures for the linear benchmarks.
pub mod fixtures {
    use super::*;
    use crate::data::RepeatSalePair;

    /// Data drawn exactly from a time-dummy hedonic model.
    pub struct HedonicFixture {
        pub dataset: Dataset,
        pub registry: RegionRegistry,
        /// True time effects indexed by `week - first_week`.
        pub delta: Vec<f64>,
        pub first_week: u32,
    }

    pub const HEDONIC_BETA: [f64; 4] = [0.08, 0.05, 0.03, 0.2];

    pub fn true_delta_path(weeks: usize) -> Vec<f64> {
        (0..weeks)
            .map(|t| {
                let t = t as f64;
                0.003 * t + 0.08 * (t / 9.0).sin()
            })
            .collect()
    }

    pub fn hedonic_fixture(seed: u64, weeks: usize, sales_per_week: usize, noise_sd: f64) -> HedonicFixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let registry = RegionRegistry::new((0..4).map(|r| (region_name(r), Some("M0".to_string()), Vec::new())))
            .expect("valid registry");
        let region_effect = [0.0, 0.3, -0.2, 0.55];
        let delta = true_delta_path(weeks);
        let first_week = 1044;
        let mut records = Vec::with_capacity(weeks * sales_per_week);
        for (t, d) in delta.iter().enumerate() {
            for i in 0..sales_per_week {
                let bedrooms: u8 = rng.random_range(1..=5);
                let bathrooms = f64::from(rng.random_range(1..=3u8));
                let parking = f64::from(rng.random_range(0..=2u8));
                let lla: f64 = 6.3 + 0.3 * rng.sample::<f64, _>(StandardNormal);
                let region = rng.random_range(0..4usize);
                let eps: f64 = rng.sample(StandardNormal);
                let y = 11.5
                    + HEDONIC_BETA[0] * f64::from(bedrooms)
                    + HEDONIC_BETA[1] * bathrooms
                    + HEDONIC_BETA[2] * parking
                    + HEDONIC_BETA[3] * lla
                    + region_effect[region]
                    + d
                    + noise_sd * eps;
                let week = first_week + t as u32;
                records.push(SaleRecord {
                    dwelling_id: format!("h{t}-{i}"),
                    log_price: y,
                    week,
                    week_of_year: week_of_year(week),
                    region: RegionIdx(region as u32),
                    prop_type: PropType::House,
                    bedrooms: Some(bedrooms),
                    land_band: None,
                    hedonic: HedonicCovariates {
                        bathrooms: Some(bathrooms),
                        parking: Some(parking),
                        log_land_area: Some(lla),
                    },
                });
            }
        }
        HedonicFixture {
            dataset: Dataset::new(records),
            registry,
            delta,
            first_week,
        }
    }

    /// Repeat-sale pairs whose log growth follows a known path plus noise.
    pub fn repeat_sales_fixture(
        seed: u64,
        pairs: usize,
        weeks: usize,
        noise_sd: f64,
    ) -> (Vec<RepeatSalePair>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delta = true_delta_path(weeks);
        let out = (0..pairs)
            .map(|i| {
                let a = rng.random_range(0..weeks);
                let mut b = rng.random_range(0..weeks);
                while b == a {
                    b = rng.random_range(0..weeks);
                }
                let (t1, t2) = (a.min(b), a.max(b));
                let y1 = 13.0 + 0.3 * rng.sample::<f64, _>(StandardNormal);
                let y2 = y1 + delta[t2] - delta[t1] + noise_sd * rng.sample::<f64, _>(StandardNormal);
                RepeatSalePair {
                    dwelling_id: format!("p{i}"),
                    t1: t1 as u32,
                    t2: t2 as u32,
                    y1,
                    y2,
                    key: FeatureKey::new(RegionIdx(0), PropType::House),
                }
            })
            .collect();
        (out, delta)
    }
}
