//! Region registry: ordered region ids, symmetric adjacency, metro membership.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a region inside a [`RegionRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionIdx(pub u32);

impl RegionIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for RegionIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionEntry {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metro: Option<String>,
    #[serde(default)]
    neighbors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegistryFile {
    regions: Vec<RegionEntry>,
}

impl TryFrom<RegistryFile> for RegionRegistry {
    type Error = Error;

    fn try_from(file: RegistryFile) -> Result<Self> {
        Self::from_entries(file.regions)
    }
}

impl From<RegionRegistry> for RegistryFile {
    fn from(r: RegionRegistry) -> Self {
        r.to_file()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionInfo {
    pub id: String,
    pub metro: Option<String>,
    pub neighbors: Vec<RegionIdx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegistryFile", into = "RegistryFile")]
pub struct RegionRegistry {
    regions: Vec<RegionInfo>,
    lookup: HashMap<String, RegionIdx>,
}

impl RegionRegistry {
    /// Builds a registry from `(id, metro, neighbor ids)` triples.
    pub fn new<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Option<String>, Vec<String>)>,
    {
        let entries: Vec<RegionEntry> = entries
            .into_iter()
            .map(|(id, metro, neighbors)| RegionEntry { id, metro, neighbors })
            .collect();
        Self::from_entries(entries)
    }

    fn from_entries(entries: Vec<RegionEntry>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::Registry(format!("region {i} has an empty id")));
            }
            if lookup.insert(e.id.clone(), RegionIdx(i as u32)).is_some() {
                return Err(Error::Registry(format!("duplicate region id `{}`", e.id)));
            }
            if matches!(&e.metro, Some(m) if m.is_empty()) {
                return Err(Error::Registry(format!("region `{}` has an empty metro id", e.id)));
            }
        }
        let mut regions = Vec::with_capacity(entries.len());
        for e in &entries {
            let mut neighbors = BTreeSet::new();
            for n in &e.neighbors {
                let idx = *lookup
                    .get(n)
                    .ok_or_else(|| Error::Registry(format!("region `{}` lists unknown neighbor `{n}`", e.id)))?;
                if n == &e.id {
                    return Err(Error::Registry(format!("region `{}` lists itself as neighbor", e.id)));
                }
                neighbors.insert(idx);
            }
            regions.push(RegionInfo {
                id: e.id.clone(),
                metro: e.metro.clone(),
                neighbors: neighbors.into_iter().collect(),
            });
        }
        for (i, r) in regions.iter().enumerate() {
            for n in &r.neighbors {
                if !regions[n.index()].neighbors.contains(&RegionIdx(i as u32)) {
                    return Err(Error::Registry(format!(
                        "adjacency not symmetric: `{}` -> `{}`",
                        r.id,
                        regions[n.index()].id
                    )));
                }
            }
        }
        Ok(Self { regions, lookup })
    }

    fn to_file(&self) -> RegistryFile {
        RegistryFile {
            regions: self
                .regions
                .iter()
                .map(|r| RegionEntry {
                    id: r.id.clone(),
                    metro: r.metro.clone(),
                    neighbors: r.neighbors.iter().map(|n| self.regions[n.index()].id.clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: RegistryFile = serde_json::from_str(s)?;
        Self::from_entries(file.regions)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn resolve(&self, id: &str) -> Result<RegionIdx> {
        self.lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownRegion(id.to_string()))
    }

    pub fn info(&self, idx: RegionIdx) -> Result<&RegionInfo> {
        self.regions
            .get(idx.index())
            .ok_or_else(|| Error::UnknownRegion(idx.to_string()))
    }

    pub fn contains(&self, idx: RegionIdx) -> bool {
        idx.index() < self.regions.len()
    }

    pub fn id(&self, idx: RegionIdx) -> &str {
        &self.regions[idx.index()].id
    }

    pub fn neighbors(&self, idx: RegionIdx) -> &[RegionIdx] {
        &self.regions[idx.index()].neighbors
    }

    pub fn metro(&self, idx: RegionIdx) -> Option<&str> {
        self.regions[idx.index()].metro.as_deref()
    }

    pub fn indices(&self) -> impl Iterator<Item = RegionIdx> + '_ {
        (0..self.regions.len() as u32).map(RegionIdx)
    }

    /// Distinct metro ids in first-appearance order.
    pub fn metros(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for r in &self.regions {
            if let Some(m) = &r.metro {
                if !seen.contains(m) {
                    seen.push(m.clone());
                }
            }
        }
        seen
    }

    pub fn regions_in_metro(&self, metro: &str) -> Vec<RegionIdx> {
        self.indices().filter(|&r| self.metro(r) == Some(metro)).collect()
    }

    /// Same regions and metros with every adjacency edge dropped.
    pub fn without_adjacency(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.regions {
            r.neighbors.clear();
        }
        out
    }
}
