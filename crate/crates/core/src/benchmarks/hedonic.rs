//! Fixed-coefficient time-dummy hedonic regression.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ridge::{solve_ridge, SparseDesign};
use super::series::{IndexKind, IndexSeries};
use crate::data::{Dataset, PropType, SaleRecord};
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE_FACTOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Bedrooms,
    Bathrooms,
    Parking,
    LogLandArea,
}

impl Covariate {
    pub const ALL: [Covariate; 4] = [
        Covariate::Bedrooms,
        Covariate::Bathrooms,
        Covariate::Parking,
        Covariate::LogLandArea,
    ];

    pub fn value(self, r: &SaleRecord) -> Option<f64> {
        match self {
            Covariate::Bedrooms => r.bedrooms.map(f64::from),
            Covariate::Bathrooms => r.hedonic.bathrooms,
            Covariate::Parking => r.hedonic.parking,
            Covariate::LogLandArea => r.hedonic.log_land_area,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedonicSpec {
    /// Candidate continuous covariates; those never observed are dropped.
    pub covariates: Vec<Covariate>,
    pub region_dummies: bool,
    pub prop_type_dummy: bool,
    /// Ridge penalty as a multiple of the number of sales.
    pub ridge_factor: f64,
}

impl Default for HedonicSpec {
    fn default() -> Self {
        Self {
            covariates: Covariate::ALL.to_vec(),
            region_dummies: true,
            prop_type_dummy: true,
            ridge_factor: DEFAULT_RIDGE_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedonicModel {
    pub intercept: f64,
    /// Covariates kept in the fit, with the mean used to center them and to
    /// fill missing values.
    pub covariates: Vec<(Covariate, f64)>,
    /// Coefficients: continuous covariates, then region dummies, then the
    /// unit dummy, in that order, for the terms present.
    pub beta: Vec<f64>,
    pub region_effects: BTreeMap<u32, f64>,
    pub unit_effect: Option<f64>,
    /// Weeks that had at least one sale, with their time effects.
    pub weeks: Vec<u32>,
    pub delta: Vec<f64>,
    pub lambda: f64,
    /// Mean of the fitted non-time part over the training set.
    pub c: f64,
}

/// Ridge fit of `y = a + β'x + δ_t + ε` with the intercept unpenalized and
/// one dummy per observed week.
pub fn fit_hedonic(dataset: &Dataset, spec: &HedonicSpec) -> Result<HedonicModel> {
    if dataset.is_empty() {
        return Err(Error::Empty("hedonic fit needs sales".into()));
    }
    if !(spec.ridge_factor > 0.0) {
        return Err(Error::InvalidArgument("ridge factor must be positive".into()));
    }
    let n = dataset.len();
    let covariates: Vec<(Covariate, f64)> = spec
        .covariates
        .iter()
        .filter_map(|&c| {
            let (sum, count) = dataset
                .iter()
                .filter_map(|r| c.value(r))
                .fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
            (count > 0).then(|| (c, sum / count as f64))
        })
        .collect();
    let regions: Vec<u32> = if spec.region_dummies {
        let mut r: Vec<u32> = dataset.iter().map(|r| r.region.0).collect();
        r.sort_unstable();
        r.dedup();
        r
    } else {
        Vec::new()
    };
    let has_units = spec.prop_type_dummy && dataset.iter().any(|r| r.prop_type == PropType::Unit);
    let mut weeks: Vec<u32> = dataset.iter().map(|r| r.week).collect();
    weeks.sort_unstable();
    weeks.dedup();

    let n_cov = covariates.len();
    let region_col = 1 + n_cov;
    let unit_col = region_col + regions.len();
    let week_col = unit_col + usize::from(has_units);
    let cols = week_col + weeks.len();

    let mut x = SparseDesign::new(cols);
    let mut y = Vec::with_capacity(n);
    for r in dataset.iter() {
        let mut row = vec![(0, 1.0)];
        for (j, (c, mean)) in covariates.iter().enumerate() {
            let v = c.value(r).unwrap_or(*mean) - mean;
            if v != 0.0 {
                row.push((1 + j, v));
            }
        }
        if let Ok(i) = regions.binary_search(&r.region.0) {
            row.push((region_col + i, 1.0));
        }
        if has_units && r.prop_type == PropType::Unit {
            row.push((unit_col, 1.0));
        }
        let t = weeks.binary_search(&r.week).expect("week collected above");
        row.push((week_col + t, 1.0));
        x.push_row(row);
        y.push(r.log_price);
    }
    let lambda = spec.ridge_factor * n as f64;
    let mut penalty = vec![lambda; cols];
    penalty[0] = 0.0;
    let sol = solve_ridge(&x, &y, &penalty)?;
    let theta = sol.coef;

    let mut fitted = vec![0.0; n];
    let mut no_time = theta.clone();
    no_time[week_col..].fill(0.0);
    x.mul(&no_time, &mut fitted);
    let c = fitted.iter().sum::<f64>() / n as f64;

    Ok(HedonicModel {
        intercept: theta[0],
        covariates,
        beta: theta[1..week_col].to_vec(),
        region_effects: regions
            .iter()
            .enumerate()
            .map(|(i, &r)| (r, theta[region_col + i]))
            .collect(),
        unit_effect: has_units.then(|| theta[unit_col]),
        weeks,
        delta: theta[week_col..].to_vec(),
        lambda,
        c,
    })
}

/// `H(t) = exp(δ_t + C)` at every week with sales.
pub fn hedonic_index(model: &HedonicModel) -> Result<IndexSeries> {
    let values = model.delta.iter().map(|d| (d + model.c).exp()).collect();
    IndexSeries::new(model.weeks.clone(), values, IndexKind::Hedonic, "all")
}
