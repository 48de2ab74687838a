use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::error::StageError;

pub const BUILTIN_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidelineId {
    Semantic,
    Expert,
    Cluster,
    Report,
}

impl GuidelineId {
    pub const ALL: [GuidelineId; 4] = [
        GuidelineId::Semantic,
        GuidelineId::Expert,
        GuidelineId::Cluster,
        GuidelineId::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GuidelineId::Semantic => "semantic",
            GuidelineId::Expert => "expert",
            GuidelineId::Cluster => "cluster",
            GuidelineId::Report => "report",
        }
    }
}

impl fmt::Display for GuidelineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guideline {
    pub id: GuidelineId,
    pub text: String,
    pub version: String,
}

/// The four system prompts a pipeline needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineSet {
    pub semantic: Guideline,
    pub expert: Guideline,
    pub cluster: Guideline,
    pub report: Guideline,
}

impl GuidelineSet {
    /// The guideline texts shipped with the crate.
    pub fn builtin() -> Self {
        let g = |id, text: &str| Guideline {
            id,
            text: text.to_string(),
            version: BUILTIN_VERSION.to_string(),
        };
        Self {
            semantic: g(GuidelineId::Semantic, include_str!("../../guidelines/semantic.md")),
            expert: g(GuidelineId::Expert, include_str!("../../guidelines/expert.md")),
            cluster: g(GuidelineId::Cluster, include_str!("../../guidelines/cluster.md")),
            report: g(GuidelineId::Report, include_str!("../../guidelines/report.md")),
        }
    }

    /// Reads `<id>.md` for every guideline from `dir`. The version is the
    /// first line of an optional `VERSION` file, else `custom`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let version = match std::fs::read_to_string(dir.join("VERSION")) {
            Ok(v) => v.lines().next().unwrap_or("custom").trim().to_string(),
            Err(_) => "custom".to_string(),
        };
        let read = |id: GuidelineId| -> Result<Guideline> {
            let path = dir.join(format!("{id}.md"));
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(Guideline {
                id,
                text,
                version: version.clone(),
            })
        };
        let set = Self {
            semantic: read(GuidelineId::Semantic)?,
            expert: read(GuidelineId::Expert)?,
            cluster: read(GuidelineId::Cluster)?,
            report: read(GuidelineId::Report)?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn get(&self, id: GuidelineId) -> &Guideline {
        match id {
            GuidelineId::Semantic => &self.semantic,
            GuidelineId::Expert => &self.expert,
            GuidelineId::Cluster => &self.cluster,
            GuidelineId::Report => &self.report,
        }
    }

    /// Every guideline is present under its own id and has text.
    pub fn validate(&self) -> Result<(), StageError> {
        for id in GuidelineId::ALL {
            let g = self.get(id);
            if g.id != id || g.text.trim().is_empty() {
                return Err(StageError::MissingGuideline {
                    stage: "startup",
                    guideline: id.to_string(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set_is_complete() {
        let g = GuidelineSet::builtin();
        g.validate().unwrap();
        assert!(g.semantic.text.contains("```json"));
        assert!(g.cluster.text.contains("evidence key"));
    }

    #[test]
    fn blank_guideline_rejected() {
        let mut g = GuidelineSet::builtin();
        g.report.text = "  \n".into();
        assert!(matches!(
            g.validate(),
            Err(StageError::MissingGuideline { .. })
        ));
    }

    #[test]
    fn load_dir_reads_overrides() {
        let dir = tempfile::tempdir().unwrap();
        for id in GuidelineId::ALL {
            std::fs::write(dir.path().join(format!("{id}.md")), format!("{id} rules")).unwrap();
        }
        std::fs::write(dir.path().join("VERSION"), "2.3\n").unwrap();
        let g = GuidelineSet::load_dir(dir.path()).unwrap();
        assert_eq!(g.expert.text, "expert rules");
        assert_eq!(g.expert.version, "2.3");
        std::fs::remove_file(dir.path().join("cluster.md")).unwrap();
        assert!(GuidelineSet::load_dir(dir.path()).is_err());
    }
}
