use std::collections::BTreeMap;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{DensityModel, EnsembleModel};
use super::network::{Cell, InputSchema, Layout, NetworkParams, TargetScale, Workspace};
use crate::data::{Dataset, RegionIdx, RegionRegistry, SaleRecord};
use crate::error::{Error, Result};
use crate::source::mean_nll;

const JITTER_STREAM: u64 = 0x6a69_7474_6572;
const MIN_TARGET_SD: f64 = 1e-3;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to `floor` times the base rate.
    Cosine {
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub components: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub epochs: usize,
    /// Target number of records per minibatch; batches are assembled from
    /// whole (cell, week) groups so they may run slightly over.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub weight_decay: f64,
    /// Standard deviation, in weeks, of the per-epoch week perturbation.
    pub jitter_sd: f64,
    pub use_bedrooms: bool,
    pub use_land_band: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            components: 8,
            hidden: 64,
            embed_dim: 10,
            epochs: 60,
            batch_size: 512,
            learning_rate: 3e-3,
            schedule: LrSchedule::Cosine { floor: 0.05 },
            weight_decay: 1e-5,
            jitter_sd: 2.0,
            use_bedrooms: false,
            use_land_band: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("components", self.components),
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight decay must be non-negative".into()));
        }
        if !(self.jitter_sd >= 0.0 && self.jitter_sd.is_finite()) {
            return Err(Error::InvalidArgument("jitter sd must be non-negative".into()));
        }
        if let LrSchedule::Cosine { floor } = self.schedule {
            if !(0.0..=1.0).contains(&floor) {
                return Err(Error::InvalidArgument("cosine floor must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    fn rate(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { floor } => {
                let progress = step as f64 / total.max(1) as f64;
                let c = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
                self.learning_rate * (floor + (1.0 - floor) * c)
            }
        }
    }
}

type CellGroups = BTreeMap<Cell, (RegionIdx, Vec<f64>)>;

fn group_cells<'a, I>(params: &NetworkParams, records: I) -> CellGroups
where
    I: IntoIterator<Item = (&'a SaleRecord, u32)>,
{
    let mut cells = CellGroups::new();
    for (r, week) in records {
        let key = r.key();
        cells
            .entry(params.cell(&key, week))
            .or_insert_with(|| (key.region, Vec::new()))
            .1
            .push(r.log_price);
    }
    cells
}

fn check_regions(params: &NetworkParams, registry: &RegionRegistry, records: &[SaleRecord]) -> Result<()> {
    for r in records {
        if r.region.index() >= params.layout.schema.regions || !registry.contains(r.region) {
            return Err(Error::UnknownRegion(r.region.to_string()));
        }
    }
    Ok(())
}

/// Accumulates `scale · Σ -ln f` and its gradient over the groups.
fn accumulate(
    params: &NetworkParams,
    registry: &RegionRegistry,
    groups: &[(&Cell, &(RegionIdx, Vec<f64>))],
    scale: f64,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> f64 {
    let mut loss = 0.0;
    for (cell, (region, ys)) in groups {
        let neighbors = registry.neighbors(*region);
        params.forward_cell(cell, neighbors, ws);
        loss += params.cell_loss(ys, scale, ws);
        params.backward_cell(cell, neighbors, ws, grad);
    }
    loss
}

/// Mean negative log-likelihood of the batch, each record evaluated at its
/// own cell and week, and its exact gradient with respect to
/// `params.values`.
pub fn nll_loss(params: &NetworkParams, registry: &RegionRegistry, batch: &[SaleRecord]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    check_regions(params, registry, batch)?;
    let cells = group_cells(params, batch.iter().map(|r| (r, r.week)));
    let groups: Vec<_> = cells.iter().collect();
    let n = batch.len() as f64;
    let mut grad = vec![0.0; params.values.len()];
    let mut ws = Workspace::new(&params.layout);
    let loss = accumulate(params, registry, &groups, 1.0 / n, &mut ws, &mut grad);
    Ok((loss / n, grad))
}

fn schema_for(dataset: &Dataset, registry: &RegionRegistry, config: &TrainConfig) -> Result<InputSchema> {
    let range = dataset
        .week_range()
        .ok_or_else(|| Error::Empty("training dataset is empty".into()))?;
    let categories =
        |f: &dyn Fn(&SaleRecord) -> Option<u8>| dataset.iter().filter_map(f).max().map(|m| usize::from(m) + 2);
    Ok(InputSchema {
        week_min: range.start,
        week_count: range.len(),
        regions: registry.len(),
        bedroom_categories: if config.use_bedrooms {
            categories(&|r| r.bedrooms)
        } else {
            None
        },
        land_categories: if config.use_land_band {
            categories(&|r| r.land_band)
        } else {
            None
        },
    })
}

fn target_scale(dataset: &Dataset) -> TargetScale {
    let n = dataset.len() as f64;
    let mean = dataset.iter().map(|r| r.log_price).sum::<f64>() / n;
    let var = dataset.iter().map(|r| (r.log_price - mean).powi(2)).sum::<f64>() / n;
    TargetScale {
        shift: mean,
        scale: var.sqrt().max(MIN_TARGET_SD),
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * ((*m / c1) / ((*v / c2).sqrt() + ADAM_EPS) + weight_decay * *p);
        }
    }
}

/// Trains one network by minibatch Adam on the mean NLL. Each epoch every
/// record's week input is moved by a rounded Gaussian draw and clamped to
/// the observed week range.
pub fn train(dataset: &Dataset, registry: &RegionRegistry, config: &TrainConfig) -> Result<DensityModel> {
    config.validate()?;
    let schema = schema_for(dataset, registry, config)?;
    let layout = Layout::new(schema, config.embed_dim, config.hidden, config.components);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(config.seed);
    jitter_rng.set_stream(JITTER_STREAM);
    let mut params = NetworkParams::init(layout, target_scale(dataset), &mut rng);
    check_regions(&params, registry, &dataset.records)?;

    let jitter = if config.jitter_sd > 0.0 {
        Some(Normal::new(0.0, config.jitter_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let (lo, hi) = (i64::from(schema.week_min), i64::from(schema.week_max()));
    let n = dataset.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = config.epochs * batches_per_epoch;

    let mut adam = Adam::new(layout.len());
    let mut grad = vec![0.0; layout.len()];
    let mut ws = Workspace::new(&layout);
    let mut epoch_nll = Vec::with_capacity(config.epochs);
    let mut step = 0;
    let mut weeks = vec![0u32; n];

    for epoch in 0..config.epochs {
        for (w, r) in weeks.iter_mut().zip(dataset.iter()) {
            *w = match &jitter {
                Some(d) => {
                    let shifted = (f64::from(r.week) + d.sample(&mut jitter_rng)).round() as i64;
                    shifted.clamp(lo, hi) as u32
                }
                None => r.week,
            };
        }
        let cells = group_cells(&params, dataset.iter().zip(weeks.iter().copied()));
        let mut order: Vec<_> = cells.iter().collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut count = 0;
            while end < order.len() && count < config.batch_size {
                count += order[end].1 .1.len();
                end += 1;
            }
            grad.fill(0.0);
            let batch_loss = accumulate(
                &params,
                registry,
                &order[start..end],
                1.0 / count as f64,
                &mut ws,
                &mut grad,
            );
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {step} (seed {})",
                    config.seed
                )));
            }
            epoch_loss += batch_loss;
            adam.step(
                &mut params.values,
                &grad,
                config.rate(step, total_steps),
                config.weight_decay,
            );
            step += 1;
            start = end;
        }
        let mean = epoch_loss / n as f64;
        debug!("seed {} epoch {epoch}: nll {mean:.6}", config.seed);
        epoch_nll.push(mean);
    }

    let mut model = DensityModel::new(params, registry.clone(), config.clone(), epoch_nll);
    let final_nll = mean_nll(&model, &dataset.records)?;
    if !final_nll.is_finite() {
        return Err(Error::Numerical(format!("non-finite final NLL (seed {})", config.seed)));
    }
    model.final_nll = final_nll;
    Ok(model)
}

/// Trains `members` networks with seeds `config.seed + i`.
pub fn train_ensemble(
    dataset: &Dataset,
    registry: &RegionRegistry,
    config: &TrainConfig,
    members: usize,
) -> Result<EnsembleModel> {
    if members == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
    }
    let models = (0..members as u64)
        .map(|i| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(i),
                ..config.clone()
            };
            train(dataset, registry, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(models)
}
