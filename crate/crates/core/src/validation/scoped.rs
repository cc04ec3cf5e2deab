use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{FeatureKey, PopulationWeights, RegionRegistry};
use crate::error::{Error, Result};
use crate::indices::Scope;
use crate::mixture::{pool, GaussianMixture};
use crate::source::DensitySource;

/// Spatial resolution at which a record's density is looked up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeLevel {
    Metro,
    Region,
}

impl ScopeLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeLevel::Metro => "metro",
            ScopeLevel::Region => "subregion",
        }
    }
}

/// Maps each feature cell to the aggregate density of its metro or region,
/// pooled with fixed population weights. Aggregates are cached per scope
/// and week.
pub struct ScopedSource<'a, S: ?Sized> {
    source: &'a S,
    registry: &'a RegionRegistry,
    weights: &'a PopulationWeights,
    level: ScopeLevel,
    /// Pool only the record's own property type instead of houses and
    /// units together.
    by_prop_type: bool,
    cache: RefCell<HashMap<(String, u32), GaussianMixture>>,
}

impl<'a, S: DensitySource + ?Sized> ScopedSource<'a, S> {
    pub fn new(
        source: &'a S,
        registry: &'a RegionRegistry,
        weights: &'a PopulationWeights,
        level: ScopeLevel,
        by_prop_type: bool,
    ) -> Self {
        Self {
            source,
            registry,
            weights,
            level,
            by_prop_type,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn scope_of(&self, key: &FeatureKey) -> Result<Scope> {
        let scope = match self.level {
            ScopeLevel::Metro => {
                let metro = self.registry.metro(key.region).ok_or_else(|| {
                    Error::InvalidArgument(format!("region {} has no metro", self.registry.id(key.region)))
                })?;
                Scope::metro(metro)
            }
            ScopeLevel::Region => Scope::region(key.region),
        };
        Ok(scope.with_prop_type(self.by_prop_type.then_some(key.prop_type)))
    }
}

impl<S: DensitySource + ?Sized> DensitySource for ScopedSource<'_, S> {
    fn density(&self, key: &FeatureKey, week: u32) -> Result<GaussianMixture> {
        if !self.registry.contains(key.region) {
            return Err(Error::UnknownRegion(key.region.to_string()));
        }
        let scope = self.scope_of(key)?;
        let id = (scope.label(self.registry), week);
        if let Some(m) = self.cache.borrow().get(&id) {
            return Ok(m.clone());
        }
        let keyed = self.weights.restricted(|k| scope.matches(k, self.registry))?;
        let parts = keyed
            .iter()
            .map(|(k, _)| self.source.density(k, week))
            .collect::<Result<Vec<_>>>()?;
        let w: Vec<f64> = keyed.iter().map(|(_, w)| *w).collect();
        let m = pool(&parts, &w)?;
        self.cache.borrow_mut().insert(id, m.clone());
        Ok(m)
    }
}
