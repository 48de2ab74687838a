//! On-disk profile store: `panel.json`, one `expert_profile_<id>.json` per
//! signal expert and one `clustering_profile_<modality>.json` per modality.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::calibration::ExpertProfile;
use crate::clustering::ClusteringProfile;
use crate::domain::{validate_identifier, Modality};
use crate::error::{Error, Result};
use crate::experts::PanelConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileStore {
    dir: PathBuf,
}

/// Everything a pipeline run reads from a store.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStore {
    pub panel: PanelConfig,
    pub expert_profiles: BTreeMap<String, ExpertProfile>,
    pub clustering_profiles: BTreeMap<Modality, ClusteringProfile>,
}

impl ProfileStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn panel_path(&self) -> PathBuf {
        self.dir.join(PanelConfig::FILE_NAME)
    }

    pub fn load_panel(&self) -> Result<PanelConfig> {
        PanelConfig::load(&self.panel_path())
    }

    pub fn load_panel_or_default(&self) -> Result<PanelConfig> {
        if self.panel_path().exists() {
            self.load_panel()
        } else {
            Ok(PanelConfig::new())
        }
    }

    pub fn save_panel(&self, panel: &PanelConfig) -> Result<()> {
        panel.validate()?;
        panel.save(&self.panel_path())
    }

    pub fn expert_profile_path(&self, expert_id: &str) -> PathBuf {
        ExpertProfile::path_in(&self.dir, expert_id)
    }

    pub fn save_expert_profile(&self, profile: &ExpertProfile) -> Result<PathBuf> {
        profile.save(&self.dir)
    }

    pub fn load_expert_profile(&self, expert_id: &str) -> Result<ExpertProfile> {
        validate_identifier("expert id", expert_id)?;
        let p = ExpertProfile::load(&self.expert_profile_path(expert_id))?;
        if p.expert_id != expert_id {
            return Err(Error::Inconsistent(format!(
                "profile file for {expert_id} holds expert {}",
                p.expert_id
            )));
        }
        p.calibration.validate()?;
        Ok(p)
    }

    /// Deletes a profile file; a missing file is not an error.
    pub fn remove_expert_profile(&self, expert_id: &str) -> Result<()> {
        validate_identifier("expert id", expert_id)?;
        let path = self.expert_profile_path(expert_id);
        match std::fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn clustering_profile_path(&self, modality: Modality) -> PathBuf {
        ClusteringProfile::path_in(&self.dir, modality)
    }

    pub fn save_clustering_profile(&self, profile: &ClusteringProfile) -> Result<PathBuf> {
        profile.save(&self.dir)
    }

    pub fn load_clustering_profile(&self, modality: Modality) -> Result<Option<ClusteringProfile>> {
        let path = self.clustering_profile_path(modality);
        if !path.exists() {
            return Ok(None);
        }
        let p = ClusteringProfile::load(&path)?;
        if p.modality != modality {
            return Err(Error::Inconsistent(format!(
                "{} holds a {} profile",
                path.display(),
                p.modality
            )));
        }
        Ok(Some(p))
    }

    pub fn clustering_profiles(&self) -> Result<BTreeMap<Modality, ClusteringProfile>> {
        let mut out = BTreeMap::new();
        for m in Modality::ALL {
            if let Some(p) = self.load_clustering_profile(m)? {
                out.insert(m, p);
            }
        }
        Ok(out)
    }

    /// Loads the panel and every profile it references, checking that they
    /// agree with each other.
    pub fn load_all(&self) -> Result<LoadedStore> {
        let panel = self.load_panel()?;
        let mut expert_profiles = BTreeMap::new();
        for id in panel.signal_ids() {
            let p = self.load_expert_profile(&id)?;
            expert_profiles.insert(id, p);
        }
        let clustering_profiles = self.clustering_profiles()?;
        for cp in clustering_profiles.values() {
            if let Some(e) = cp.expert_ids.iter().find(|e| panel.get(e).is_none()) {
                return Err(Error::Inconsistent(format!(
                    "clustering profile for {} ranks unregistered expert {e}",
                    cp.modality
                )));
            }
        }
        Ok(LoadedStore {
            panel,
            expert_profiles,
            clustering_profiles,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{AdapterSpec, ExpertRegistration};

    #[test]
    fn load_all_requires_profiles_for_the_panel() {
        let dir = tempfile::tempdir().unwrap();
        let store = ProfileStore::new(dir.path());
        let mut panel = PanelConfig::new();
        panel
            .add(ExpertRegistration::new(
                "a",
                AdapterSpec::Replay {
                    manifest: "s.jsonl".into(),
                },
                "",
            ))
            .unwrap();
        store.save_panel(&panel).unwrap();
        assert!(store.load_all().is_err());
        store
            .save_expert_profile(&ExpertProfile::template("a", "desc"))
            .unwrap();
        let loaded = store.load_all().unwrap();
        assert!(loaded.expert_profiles["a"].is_template);
        assert!(loaded.clustering_profiles.is_empty());
        store.remove_expert_profile("a").unwrap();
        store.remove_expert_profile("a").unwrap();
    }
}
