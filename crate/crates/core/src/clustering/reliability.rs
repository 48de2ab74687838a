use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ConfusionCounts, FeatureVector, Label, Modality};
use crate::error::{Error, Result};

use super::model::{assign_cluster, ClusterModel};

/// Local reliability of one expert inside one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertLocal {
    pub expert_id: String,
    pub f1: f64,
    pub acc: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReliability {
    pub cluster_id: usize,
    pub support: usize,
    /// False when no validation sample landed in this cluster.
    pub usable: bool,
    pub per_expert: Vec<ExpertLocal>,
    /// Expert ids, most reliable first.
    pub ranking: Vec<String>,
    pub ranking_text: String,
}

impl ClusterReliability {
    pub fn local(&self, expert_id: &str) -> Option<&ExpertLocal> {
        self.per_expert.iter().find(|e| e.expert_id == expert_id)
    }
}

/// A validation sample with per-expert calibrated scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilitySample {
    pub sample_id: String,
    pub features: FeatureVector,
    pub truth: Label,
    pub scores: BTreeMap<String, f64>,
}

/// Ranking order: F1 descending, then accuracy descending, then id ascending.
pub fn ranking_order(a: &ExpertLocal, b: &ExpertLocal) -> Ordering {
    b.f1
        .total_cmp(&a.f1)
        .then(b.acc.total_cmp(&a.acc))
        .then(a.expert_id.cmp(&b.expert_id))
}

pub fn rank_experts(locals: &[ExpertLocal]) -> Vec<String> {
    let mut sorted: Vec<&ExpertLocal> = locals.iter().collect();
    sorted.sort_by(|a, b| ranking_order(a, b));
    sorted.into_iter().map(|e| e.expert_id.clone()).collect()
}

pub fn render_ranking_text(modality: Modality, c: &ClusterReliability) -> String {
    if !c.usable {
        return format!(
            "cluster {} ({modality}): no validation support; ranking unavailable",
            c.cluster_id
        );
    }
    let parts: Vec<String> = c
        .ranking
        .iter()
        .filter_map(|id| c.local(id))
        .map(|e| format!("{} (F1={:.3}, ACC={:.3})", e.expert_id, e.f1, e.acc))
        .collect();
    format!(
        "cluster {} ({modality}, n={}): {}",
        c.cluster_id,
        c.support,
        parts.join(" > ")
    )
}

/// Per-cluster F1/accuracy of every expert on the validation samples that
/// fall in that cluster. `experts` fixes the expert set; every sample must
/// carry a score for each.
pub fn cluster_reliability(
    model: &ClusterModel,
    val: &[ReliabilitySample],
    experts: &[String],
    threshold: f64,
) -> Result<Vec<ClusterReliability>> {
    let k = model.k();
    let mut counts: Vec<BTreeMap<&str, ConfusionCounts>> = vec![BTreeMap::new(); k];
    let mut support = vec![0usize; k];
    for s in val {
        let c = assign_cluster(model, &s.features)?;
        support[c] += 1;
        for e in experts {
            let score = *s.scores.get(e).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "sample {} has no score from expert {e}",
                    s.sample_id
                ))
            })?;
            counts[c]
                .entry(e.as_str())
                .or_default()
                .record(Label::from_score(score, threshold), s.truth);
        }
    }
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        let usable = support[c] > 0;
        let per_expert: Vec<ExpertLocal> = if usable {
            experts
                .iter()
                .map(|e| {
                    let cc = counts[c].get(e.as_str()).copied().unwrap_or_default();
                    let m = cc.f1_acc();
                    ExpertLocal {
                        expert_id: e.clone(),
                        f1: m.f1,
                        acc: m.acc,
                        support: cc.total() as usize,
                    }
                })
                .collect()
        } else {
            Vec::new()
        };
        let ranking = rank_experts(&per_expert);
        let mut rel = ClusterReliability {
            cluster_id: c,
            support: support[c],
            usable,
            per_expert,
            ranking,
            ranking_text: String::new(),
        };
        rel.ranking_text = render_ranking_text(model.modality, &rel);
        out.push(rel);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::clustering::model::Standardizer;

    fn model_1d() -> ClusterModel {
        ClusterModel {
            modality: Modality::Srm,
            centroids: vec![vec![0.0], vec![10.0], vec![20.0]],
            standardizer: Standardizer::identity(1),
            seed: 0,
        }
    }

    fn sample(id: &str, x: f64, truth: Label, scores: &[(&str, f64)]) -> ReliabilitySample {
        ReliabilitySample {
            sample_id: id.into(),
            features: FeatureVector::new(Modality::Srm, vec![x]).unwrap(),
            truth,
            scores: scores.iter().map(|(e, s)| (e.to_string(), *s)).collect(),
        }
    }

    #[test]
    fn rankings_swap_between_clusters() {
        // a is right only near 0, b only near 10
        let val = vec![
            sample("1", 0.1, Label::Fake, &[("a", 0.9), ("b", 0.1)]),
            sample("2", -0.1, Label::Real, &[("a", 0.1), ("b", 0.9)]),
            sample("3", 10.1, Label::Fake, &[("a", 0.1), ("b", 0.9)]),
            sample("4", 9.9, Label::Real, &[("a", 0.9), ("b", 0.1)]),
        ];
        let experts = vec!["a".to_string(), "b".to_string()];
        let rel = cluster_reliability(&model_1d(), &val, &experts, 0.5).unwrap();
        assert_eq!(rel[0].ranking, vec!["a", "b"]);
        assert_eq!(rel[1].ranking, vec!["b", "a"]);
        let a0 = rel[0].local("a").unwrap();
        assert_eq!((a0.f1, a0.acc), (1.0, 1.0));
        let b0 = rel[0].local("b").unwrap();
        assert_eq!((b0.f1, b0.acc), (0.0, 0.0));
        assert!(!rel[2].usable);
        assert!(rel[2].ranking.is_empty());
        assert!(rel[2].ranking_text.contains("unavailable"));
    }

    #[test]
    fn perfect_expert_ranks_first_everywhere() {
        let val = vec![
            sample("1", 0.0, Label::Fake, &[("z", 0.9), ("m", 0.4)]),
            sample("2", 10.0, Label::Real, &[("z", 0.2), ("m", 0.6)]),
            sample("3", 20.0, Label::Fake, &[("z", 0.7), ("m", 0.4)]),
        ];
        let experts = vec!["m".to_string(), "z".to_string()];
        for c in cluster_reliability(&model_1d(), &val, &experts, 0.5).unwrap() {
            assert_eq!(c.ranking[0], "z");
            let z = c.local("z").unwrap();
            assert_eq!(z.acc, 1.0);
        }
    }

    #[test]
    fn missing_score_is_an_error() {
        let val = vec![sample("1", 0.0, Label::Fake, &[("a", 0.9)])];
        let experts = vec!["a".to_string(), "b".to_string()];
        assert!(cluster_reliability(&model_1d(), &val, &experts, 0.5).is_err());
    }

    fn local(id: String, f1: f64, acc: f64) -> ExpertLocal {
        ExpertLocal {
            expert_id: id,
            f1,
            acc,
            support: 1,
        }
    }

    proptest! {
        #[test]
        fn ranking_is_total_and_insertion_stable(
            metrics in prop::collection::vec((0u8..5, 0u8..5), 1..8),
            extra in (0u8..5, 0u8..5),
        ) {
            let locals: Vec<ExpertLocal> = metrics
                .iter()
                .enumerate()
                .map(|(i, (f, a))| local(format!("e{i}"), f64::from(*f) / 4.0, f64::from(*a) / 4.0))
                .collect();
            let before = rank_experts(&locals);
            let mut sorted_ids = before.clone();
            sorted_ids.sort();
            let mut ids: Vec<String> = locals.iter().map(|l| l.expert_id.clone()).collect();
            ids.sort();
            prop_assert_eq!(sorted_ids, ids);

            let mut grown = locals.clone();
            grown.push(local("new".into(), f64::from(extra.0) / 4.0, f64::from(extra.1) / 4.0));
            let after: Vec<String> = rank_experts(&grown)
                .into_iter()
                .filter(|id| id != "new")
                .collect();
            prop_assert_eq!(after, before);
        }
    }
}
