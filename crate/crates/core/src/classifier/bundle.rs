use std::fs;
use std::path::Path;

use crate::dataset::FeatureStats;
use crate::error::{Error, Result};
use crate::immune::{config_hash, CsaimConfig};
use crate::memory::MemoryStore;
use crate::rbm::RbmParams;
use crate::textio;

use super::{BaselineModel, HybridModel, Mode, RbmConfig, SoftmaxHead};

pub const MANIFEST: &str = "bundle.txt";
const CSAIM_CFG: &str = "csaim.cfg";
const RBM_CFG: &str = "rbm.cfg";
const RBM: &str = "rbm.txt";
const HEAD: &str = "head.txt";
const MEMORY: &str = "memstore.txt";
const STATS: &str = "stats.txt";

/// Every file name a bundle directory may contain.
pub const BUNDLE_FILES: [&str; 7] = [MANIFEST, CSAIM_CFG, RBM_CFG, RBM, HEAD, MEMORY, STATS];

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Hybrid(HybridModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn mode(&self) -> Mode {
        match self {
            Model::Hybrid(_) => Mode::Hybrid,
            Model::Baseline(_) => Mode::Baseline,
        }
    }
}

/// A model together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub model: Model,
    pub csaim: CsaimConfig,
    pub rbm: RbmConfig,
}

impl Bundle {
    pub fn config_hash(&self) -> String {
        config_hash(&format!("{}{}", self.csaim.to_text(), self.rbm.to_text()))
    }
}

fn put(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn get(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    put(dir, CSAIM_CFG, &bundle.csaim.to_text())?;
    put(dir, RBM_CFG, &bundle.rbm.to_text())?;
    match &bundle.model {
        Model::Hybrid(m) => {
            put(dir, RBM, &m.rbm.to_text())?;
            put(dir, HEAD, &m.head.to_text())?;
            put(dir, MEMORY, &m.memory.to_text())?;
            if let Some(stats) = &m.stats {
                put(dir, STATS, &stats.to_text())?;
            }
        }
        Model::Baseline(m) => put(dir, MEMORY, &m.memory.to_text())?,
    }
    put(
        dir,
        MANIFEST,
        &format!(
            "BUNDLE v1 mode={} seed={} config={}\n",
            bundle.model.mode(),
            bundle.csaim.seed,
            bundle.config_hash()
        ),
    )
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    const WHAT: &str = "bundle manifest";
    let manifest = get(dir, MANIFEST)?;
    let pairs = textio::parse_header(WHAT, manifest.trim_end(), &["BUNDLE", "v1"])?;
    let mode: Mode = textio::header_value(WHAT, &pairs, "mode")?
        .parse()
        .map_err(|e: String| Error::parse(WHAT, 1, e))?;
    let csaim = CsaimConfig::from_text(&get(dir, CSAIM_CFG)?)?;
    let rbm = RbmConfig::from_text(&get(dir, RBM_CFG)?)?;
    let memory = MemoryStore::from_text(&get(dir, MEMORY)?)?;
    let model = match mode {
        Mode::Hybrid => {
            let stats_path = dir.join(STATS);
            let stats = if stats_path.exists() {
                Some(FeatureStats::from_text(&get(dir, STATS)?)?)
            } else {
                None
            };
            Model::Hybrid(HybridModel {
                rbm: RbmParams::from_text(&get(dir, RBM)?)?,
                head: SoftmaxHead::from_text(&get(dir, HEAD)?)?,
                memory,
                stats,
                mu_theta: csaim.mu_theta,
            })
        }
        Mode::Baseline => Model::Baseline(BaselineModel {
            memory,
            mu_theta: csaim.mu_theta,
        }),
    };
    let bundle = Bundle { model, csaim, rbm };
    let recorded = textio::header_value(WHAT, &pairs, "config")?;
    if recorded != bundle.config_hash() {
        return Err(Error::parse(WHAT, 1, "config hash does not match the stored configuration"));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_dataset;
    use crate::classifier::train_pipeline;

    #[test]
    fn hybrid_bundle_round_trip() {
        let data = synth_dataset(2, 3, 16, 0.05, 1).unwrap();
        let rbm = RbmConfig {
            hidden: 5,
            epochs: 3,
            ..RbmConfig::default()
        };
        let csaim = CsaimConfig::default();
        let out = train_pipeline(&data, &csaim, &rbm, false).unwrap();
        let bundle = Bundle {
            model: Model::Hybrid(out.model),
            csaim,
            rbm,
        };
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &bundle).unwrap();
        assert_eq!(read_bundle(dir.path()).unwrap(), bundle);

        let manifest = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        assert!(manifest.starts_with("BUNDLE v1 mode=hybrid seed=0 config="));
        fs::write(dir.path().join(CSAIM_CFG), "seed=9\n").unwrap();
        assert!(read_bundle(dir.path()).is_err());
    }

    #[test]
    fn missing_bundle_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_bundle(&dir.path().join("nope")), Err(Error::Io { .. })));
    }
}
