use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{forward, NetworkParams, Workspace};
use super::train::TrainConfig;
use crate::data::{FeatureKey, RegionRegistry};
use crate::error::{Error, Result};
use crate::mixture::{pool_equal, GaussianMixture};
use crate::source::DensitySource;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A trained network together with the registry it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub params: NetworkParams,
    pub registry: RegionRegistry,
    pub config: TrainConfig,
    pub epoch_nll: Vec<f64>,
    /// Mean NLL of the full training set under the final parameters.
    pub final_nll: f64,
}

impl DensityModel {
    pub(crate) fn new(
        params: NetworkParams,
        registry: RegionRegistry,
        config: TrainConfig,
        epoch_nll: Vec<f64>,
    ) -> Self {
        Self {
            params,
            registry,
            config,
            epoch_nll,
            final_nll: f64::NAN,
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn components(&self) -> usize {
        self.params.layout.components
    }

    pub fn forward(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
        forward(&self.params, &self.registry, key, week)
    }
}

impl DensitySource for DensityModel {
    fn density(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
        self.forward(key, week)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MemberFile {
    config: TrainConfig,
    final_nll: f64,
    epoch_nll: Vec<f64>,
    params: NetworkParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleFile {
    version: u32,
    registry: RegionRegistry,
    members: Vec<MemberFile>,
}

/// Independently seeded networks whose outputs are pooled with equal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    members: Vec<DensityModel>,
}

impl EnsembleModel {
    pub fn new(members: Vec<DensityModel>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one member".into()))?;
        for m in &members[1..] {
            if m.components() != first.components() || m.registry != first.registry {
                return Err(Error::InvalidArgument(
                    "ensemble members must share component count and registry".into(),
                ));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[DensityModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn registry(&self) -> &RegionRegistry {
        &self.members[0].registry
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = EnsembleFile {
            version: MODEL_FORMAT_VERSION,
            registry: self.registry().clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberFile {
                    config: m.config.clone(),
                    final_nll: m.final_nll,
                    epoch_nll: m.epoch_nll.clone(),
                    params: m.params.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: EnsembleFile = serde_json::from_str(s)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        let members = file
            .members
            .into_iter()
            .map(|m| {
                if m.params.values.len() != m.params.layout.len() {
                    return Err(Error::InvalidArgument("parameter count does not match layout".into()));
                }
                if m.params.layout.schema.regions != file.registry.len() {
                    return Err(Error::InvalidArgument(
                        "model region count does not match registry".into(),
                    ));
                }
                Ok(DensityModel {
                    params: m.params,
                    registry: file.registry.clone(),
                    config: m.config,
                    epoch_nll: m.epoch_nll,
                    final_nll: m.final_nll,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }
}

impl From<DensityModel> for EnsembleModel {
    fn from(m: DensityModel) -> Self {
        Self { members: vec![m] }
    }
}

/// Equal-weight pool of the member mixtures (`M·K` components).
pub fn predict_density(ensemble: &EnsembleModel, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
    let first = &ensemble.members[0];
    if !first.registry.contains(key.region) || key.region.index() >= first.params.layout.schema.regions {
        return Err(Error::UnknownRegion(key.region.to_string()));
    }
    let neighbors = first.registry.neighbors(key.region);
    let mixtures: Vec<_> = ensemble
        .members
        .iter()
        .map(|m| {
            let mut ws = Workspace::new(&m.params.layout);
            let cell = m.params.cell(key, week);
            m.params.forward_cell(&cell, neighbors, &mut ws);
            m.params.mixture_from(&ws)
        })
        .collect();
    pool_equal(&mixtures)
}

impl DensitySource for EnsembleModel {
    fn density(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
        predict_density(self, key, week)
    }
}
