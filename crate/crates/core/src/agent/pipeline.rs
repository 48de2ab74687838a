use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ExpertProfile;
use crate::clustering::ClusteringProfile;
use crate::domain::io::FeatureTable;
use crate::domain::{Modality, Sample, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::experts::{ExpertAdapter, PanelConfig};
use crate::report::{compile_report, config_fingerprint, ForensicReport};

use super::arbitrate::{arbitrate_live, arbitrate_rule, ArbiterConfig, DEFAULT_LAMBDA};
use super::client::{LanguageModel, Stage};
use super::cluster::{stage3_cluster, ClusterReport};
use super::error::StageError;
use super::evidence::{detect_conflict, EvidenceSet};
use super::guideline::GuidelineSet;
use super::semantic::{stage1_semantic, SemanticReport};
use super::signal::{stage2_signal, SignalOptions, SignalReport};

/// Knobs that shape a run. All of them enter the configuration fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Calibrate scores and weight experts by their profiles.
    pub use_expert_profiles: bool,
    /// Consult clustering profiles when the stages conflict.
    pub use_clustering_profiles: bool,
    pub lambda: f64,
    pub threshold: f64,
    pub silhouette_threshold: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            use_expert_profiles: true,
            use_clustering_profiles: true,
            lambda: DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            silhouette_threshold: crate::clustering::LOW_SEPARABILITY,
            seed: 42,
        }
    }
}

/// Inputs for [`Pipeline::new`].
pub struct PipelineParts {
    pub guidelines: GuidelineSet,
    pub panel: PanelConfig,
    /// One adapter per panel expert, in panel order.
    pub adapters: Vec<Box<dyn ExpertAdapter>>,
    pub expert_profiles: BTreeMap<String, ExpertProfile>,
    pub clustering_profiles: BTreeMap<Modality, ClusteringProfile>,
    pub features: FeatureTable,
    /// Semantic analyzer. Without one every run is signal-only.
    pub vision: Option<Box<dyn LanguageModel>>,
    /// Narration and live arbitration. Without one the templates and the
    /// rule arbiter are used.
    pub text: Option<Box<dyn LanguageModel>>,
    pub config: PipelineConfig,
}

/// Evidence collected before an unrecoverable stage error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub sample_id: String,
    pub failed_stage: Stage,
    pub error: String,
    pub semantic: Option<SemanticReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_failure: Option<String>,
    pub experts: Option<SignalReport>,
    pub cluster: Option<ClusterReport>,
}

#[derive(Debug, Error)]
#[error("sample {}: {} stage failed: {}", .diagnostic.sample_id, .diagnostic.failed_stage, .diagnostic.error)]
pub struct PipelineFailure {
    pub diagnostic: DiagnosticReport,
}

pub struct Pipeline {
    parts: PipelineParts,
    fingerprint: String,
}

impl Pipeline {
    pub fn new(parts: PipelineParts) -> Result<Self> {
        parts.guidelines.validate()?;
        let adapter_ids: Vec<String> =
            parts.adapters.iter().map(|a| a.expert_id().to_string()).collect();
        if adapter_ids != parts.panel.signal_ids() {
            return Err(Error::Inconsistent(format!(
                "adapters {adapter_ids:?} do not match panel order {:?}",
                parts.panel.signal_ids()
            )));
        }
        if parts.adapters.is_empty() {
            return Err(StageError::EmptyPanel.into());
        }
        let fingerprint = config_fingerprint(
            &parts.panel,
            &parts.expert_profiles,
            &parts.clustering_profiles,
            &parts.guidelines,
            &parts.config,
            parts.config.seed,
        )?;
        Ok(Self { parts, fingerprint })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.parts.config
    }

    /// Runs the stages for one sample. Stage 3 and arbitration run only when
    /// the semantic and signal verdicts disagree.
    pub fn run(&self, sample: &Sample) -> std::result::Result<ForensicReport, PipelineFailure> {
        let p = &self.parts;
        let cfg = p.config;
        let text = p.text.as_deref();
        let mut clock = 0u64;
        let mut ticks = BTreeMap::new();
        let mut tick = |stage: Stage, clock: &mut u64| {
            ticks.insert(stage, (*clock, *clock + 1));
            *clock += 2;
        };
        let mut diag = DiagnosticReport {
            sample_id: sample.id.clone(),
            failed_stage: Stage::Semantic,
            error: String::new(),
            semantic: None,
            semantic_failure: None,
            experts: None,
            cluster: None,
        };
        let fail = |mut diag: DiagnosticReport, stage: Stage, e: &dyn std::fmt::Display| {
            diag.failed_stage = stage;
            diag.error = e.to_string();
            PipelineFailure { diagnostic: diag }
        };

        match p.vision.as_deref() {
            Some(model) => match stage1_semantic(sample, &p.guidelines.semantic, model) {
                Ok(s) => {
                    diag.semantic = Some(s);
                    tick(Stage::Semantic, &mut clock);
                }
                Err(e) => diag.semantic_failure = Some(e.to_string()),
            },
            None => diag.semantic_failure = Some("no semantic analyzer configured".into()),
        }

        let empty = BTreeMap::new();
        let profiles = if cfg.use_expert_profiles {
            &p.expert_profiles
        } else {
            &empty
        };
        let opts = SignalOptions {
            use_profiles: cfg.use_expert_profiles,
            threshold: cfg.threshold,
        };
        let signal = match stage2_signal(sample, &p.adapters, profiles, &p.guidelines.expert, text, opts)
        {
            Ok(s) => s,
            Err(e) => return Err(fail(diag, Stage::Signal, &e)),
        };
        tick(Stage::Signal, &mut clock);
        diag.experts = Some(signal.clone());

        let conflict = diag
            .semantic
            .as_ref()
            .is_some_and(|s| detect_conflict(s, &signal));
        let mut evidence = EvidenceSet {
            semantic: diag.semantic.clone(),
            semantic_failure: diag.semantic_failure.clone(),
            experts: signal,
            cluster: None,
            arbitration: None,
        };
        if conflict {
            let features = p.features.vectors_of(&sample.id);
            let cluster = stage3_cluster(
                &sample.id,
                &features,
                cfg.use_clustering_profiles.then_some(&p.clustering_profiles),
                cfg.silhouette_threshold,
                &p.guidelines.cluster,
                text,
            );
            tick(Stage::Cluster, &mut clock);
            diag.cluster = Some(cluster.clone());
            evidence.cluster = Some(cluster);

            let acfg = ArbiterConfig {
                lambda: cfg.lambda,
                threshold: cfg.threshold,
            };
            let record = match text {
                Some(model) => {
                    match arbitrate_live(&evidence, &sample.id, &p.guidelines.report, model, acfg) {
                        Ok(r) => r,
                        Err(e) => return Err(fail(diag, Stage::Arbitration, &e)),
                    }
                }
                None => arbitrate_rule(&evidence, acfg),
            };
            tick(Stage::Arbitration, &mut clock);
            evidence.arbitration = Some(record);
        }

        let report = compile_report(
            &sample.id,
            evidence,
            &ticks,
            &p.guidelines.report,
            text,
            self.fingerprint.clone(),
            cfg.seed,
        )
        .and_then(|r| r.validate().map(|()| r));
        report.map_err(|e| fail(diag, Stage::Report, &e))
    }
}
