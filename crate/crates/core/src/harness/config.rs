//! Sweep configuration and corpus manifests, both read from TOML.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::harness::pipeline::{MetricOptions, Representation};
use crate::mesh::TriangleMesh;
use crate::mesh_io::load_mesh;

/// Map size `H x W`. Spherical maps need `W = 2H`; nested stacks use `H x H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub fn equirect(height: usize) -> Resolution {
        Resolution { height, width: 2 * height }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("resolution {s:?} is not HxW"));
        let (h, w) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let height: usize = h.parse().map_err(|_| bad())?;
        let width: usize = w.parse().map_err(|_| bad())?;
        if height == 0 || width != 2 * height {
            return Err(Error::Config(format!("resolution {s}: width must be twice a positive height")));
        }
        Ok(Resolution { height, width })
    }
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub resolutions: Vec<Resolution>,
    pub layers: Vec<usize>,
    pub representations: Vec<Representation>,
    pub seed: u64,
    pub metrics: MetricOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            resolutions: [32, 64, 128, 256].into_iter().map(Resolution::equirect).collect(),
            layers: vec![1, 2, 3, 4],
            representations: vec![Representation::Sp, Representation::Nested],
            seed: 0,
            metrics: MetricOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<SweepConfig> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<SweepConfig> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        SweepConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() || self.layers.is_empty() || self.representations.is_empty() {
            return Err(Error::Config("resolutions, layers and representations must be non-empty".into()));
        }
        if let Some(r) = self.resolutions.iter().find(|r| r.height == 0 || r.width != 2 * r.height) {
            return Err(Error::Config(format!("resolution {r}: width must be twice a positive height")));
        }
        if self.layers.contains(&0) {
            return Err(Error::Config("layer counts must be positive".into()));
        }
        let m = &self.metrics;
        if m.samples == 0 || m.iou_resolution == 0 || m.supersample == 0 || m.voxels == Some(0) {
            return Err(Error::Config("sample, voxel and supersample counts must be positive".into()));
        }
        if !(m.tau > 0.0) || !(m.coverage_tol > 0.0) {
            return Err(Error::Config("tau and coverage_tol must be positive".into()));
        }
        m.quality.validate()
    }

    /// Metric options carrying the sweep seed.
    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            seed: self.seed,
            ..self.metrics.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub watertight: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default)]
    pub notes: String,
    #[serde(default, rename = "mesh")]
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn from_toml(text: &str, root: &Path) -> Result<CorpusManifest> {
        let mut m: CorpusManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.root = root.to_path_buf();
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<CorpusManifest> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        let root = path.parent().unwrap_or(Path::new("."));
        CorpusManifest::from_toml(&std::fs::read_to_string(path)?, root)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            if e.id.is_empty() || !ids.insert(e.id.as_str()) {
                return Err(Error::Config(format!("duplicate or empty mesh id {:?}", e.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }
}

/// A corpus member ready to be loaded.
#[derive(Debug, Clone)]
pub enum CorpusItem {
    File { id: String, path: PathBuf, watertight: bool },
    Builtin(fixtures::Fixture),
}

impl CorpusItem {
    pub fn id(&self) -> &str {
        match self {
            CorpusItem::File { id, .. } => id,
            CorpusItem::Builtin(f) => f.id,
        }
    }

    pub fn watertight(&self) -> bool {
        match self {
            CorpusItem::File { watertight, .. } => *watertight,
            CorpusItem::Builtin(f) => f.watertight,
        }
    }

    /// The mesh as stored, before normalization.
    pub fn load(&self) -> Result<TriangleMesh> {
        match self {
            CorpusItem::File { path, .. } => Ok(load_mesh(path)?.mesh),
            CorpusItem::Builtin(f) => Ok(f.mesh.clone()),
        }
    }
}

pub fn manifest_items(m: &CorpusManifest) -> Vec<CorpusItem> {
    m.entries
        .iter()
        .map(|e| CorpusItem::File {
            id: e.id.clone(),
            path: m.resolve(e),
            watertight: e.watertight,
        })
        .collect()
}

/// The built-in fixture corpus.
pub fn fixture_items() -> Vec<CorpusItem> {
    fixtures::desk_corpus().into_iter().map(CorpusItem::Builtin).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_survives_toml() {
        let cfg = SweepConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(SweepConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = SweepConfig::from_toml("resolutions = [\"16x32\"]\nlayers = [2]\n[metrics]\nsamples = 500\n").unwrap();
        assert_eq!(cfg.resolutions, vec![Resolution::equirect(16)]);
        assert_eq!(cfg.metrics.samples, 500);
        assert_eq!(cfg.metrics.tau, MetricOptions::default().tau);
        assert_eq!(cfg.representations.len(), 2);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in [
            "resolutions = [\"32x32\"]",
            "layers = []",
            "layers = [0]",
            "colour = 3",
            "[metrics]\ntau = -1.0",
            "[metrics.quality]\nmu = 2.0",
        ] {
            assert!(SweepConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn resolution_text() {
        assert_eq!("64x128".parse::<Resolution>().unwrap(), Resolution::equirect(64));
        assert!("64".parse::<Resolution>().is_err());
        assert!("64x100".parse::<Resolution>().is_err());
    }

    #[test]
    fn manifest_ids_are_unique() {
        let text = "[[mesh]]\nid = \"a\"\npath = \"a.obj\"\n[[mesh]]\nid = \"a\"\npath = \"b.obj\"\n";
        assert!(CorpusManifest::from_toml(text, Path::new(".")).is_err());
        let ok = "notes = \"x\"\n[[mesh]]\nid = \"a\"\npath = \"a.obj\"\nwatertight = false\n";
        let m = CorpusManifest::from_toml(ok, Path::new("/data")).unwrap();
        assert_eq!(m.resolve(&m.entries[0]), PathBuf::from("/data/a.obj"));
        assert!(!m.entries[0].watertight);
    }
}
