use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{Label, Sample, Verdict, VerdictBasis};

use super::client::{extract_json_block, ChatRequest, LanguageModel, Stage};
use super::error::StageError;
use super::guideline::Guideline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyCategory {
    Logical,
    Physical,
    Anatomical,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub category: AnomalyCategory,
    pub description: String,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticReport {
    pub verdict: Verdict,
    pub anomalies: Vec<Anomaly>,
    pub raw_model_text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Payload {
    verdict: String,
    confidence: f64,
    #[serde(default)]
    anomalies: Vec<Anomaly>,
}

/// Parses a semantic reply. The verdict comes from the final JSON block.
pub fn parse_semantic_reply(text: &str) -> Result<SemanticReport, String> {
    let block = extract_json_block(text).ok_or("reply has no JSON block")?;
    let p: Payload = serde_json::from_value(block).map_err(|e| e.to_string())?;
    let label: Label = p.verdict.parse().map_err(|e: crate::Error| e.to_string())?;
    let verdict =
        Verdict::new(label, p.confidence, VerdictBasis::Semantic).map_err(|e| e.to_string())?;
    for (i, a) in p.anomalies.iter().enumerate() {
        if !(a.severity.is_finite() && (0.0..=1.0).contains(&a.severity)) {
            return Err(format!("anomaly {i} has severity {} outside [0, 1]", a.severity));
        }
    }
    Ok(SemanticReport {
        verdict,
        anomalies: p.anomalies,
        raw_model_text: text.to_string(),
    })
}

pub(crate) const REPAIR_NOTE: &str = "Your previous reply could not be used";

pub(crate) fn repair_prompt(original: &str, problem: &str) -> String {
    format!(
        "{original}\n\n{REPAIR_NOTE}: {problem}. Answer again and end with exactly one fenced JSON block in the required schema."
    )
}

fn semantic_prompt(sample: &Sample) -> String {
    let image = sample.image_locator.as_deref().unwrap_or("(attached)");
    format!(
        "Image id: {}\nImage: {}\nReview the image and report anomalies with a verdict.",
        sample.id, image
    )
}

/// Stage 1: semantic anomaly analysis with one repair retry.
pub fn stage1_semantic(
    sample: &Sample,
    guideline: &Guideline,
    client: &dyn LanguageModel,
) -> Result<SemanticReport, StageError> {
    let prompt = semantic_prompt(sample);
    let mut req = ChatRequest {
        stage: Stage::Semantic,
        sample_id: &sample.id,
        attempt: 0,
        system: &guideline.text,
        user: prompt.clone(),
        image_locator: sample.image_locator.as_deref(),
    };
    let first = client.complete(&req)?;
    let problem = match parse_semantic_reply(&first) {
        Ok(r) => return Ok(r),
        Err(p) => p,
    };
    req.attempt = 1;
    req.user = repair_prompt(&prompt, &problem);
    let second = client.complete(&req)?;
    parse_semantic_reply(&second).map_err(|detail| StageError::Schema {
        stage: Stage::Semantic.as_str(),
        detail,
    })
}

/// Reply text in the stage-1 schema, for scripted transcripts.
pub fn render_semantic_reply(label: Label, confidence: f64, anomalies: &[Anomaly]) -> String {
    let block = serde_json::json!({
        "verdict": label.as_str(),
        "confidence": confidence,
        "anomalies": anomalies,
    });
    format!(
        "Semantic review complete.\n```json\n{}\n```\n",
        Value::to_string(&block)
    )
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::agent::client::{ScriptedClient, ScriptedReply};
    use crate::agent::guideline::GuidelineSet;
    use crate::domain::hash_content;

    fn sample() -> Sample {
        Sample {
            id: "img1".into(),
            source_dataset: "d".into(),
            ground_truth: Label::Fake,
            content_hash: hash_content(b"img1"),
            feature_refs: BTreeMap::new(),
            image_locator: None,
        }
    }

    fn script(replies: &[&str]) -> ScriptedClient {
        ScriptedClient::from_records(replies.iter().enumerate().map(|(i, r)| ScriptedReply {
            stage: Stage::Semantic,
            sample_id: "img1".into(),
            attempt: i as u32,
            reply: r.to_string(),
        }))
    }

    #[test]
    fn scripted_fake_verdict() {
        let anomalies = vec![
            Anomaly {
                category: AnomalyCategory::Anatomical,
                description: "six fingers on the left hand".into(),
                severity: 0.9,
            },
            Anomaly {
                category: AnomalyCategory::Physical,
                description: "shadow falls toward the lamp".into(),
                severity: 0.4,
            },
        ];
        let reply = render_semantic_reply(Label::Fake, 0.83, &anomalies);
        let c = script(&[&reply]);
        let r = stage1_semantic(&sample(), &GuidelineSet::builtin().semantic, &c).unwrap();
        assert_eq!(r.verdict.label, Label::Fake);
        assert_eq!(r.verdict.confidence, 0.83);
        assert_eq!(r.verdict.basis, VerdictBasis::Semantic);
        assert_eq!(r.anomalies, anomalies);
        assert_eq!(r.raw_model_text, reply);
    }

    #[test]
    fn repair_retry_then_success() {
        let good = render_semantic_reply(Label::Real, 0.6, &[]);
        let c = script(&["I think it is real.", &good]);
        let r = stage1_semantic(&sample(), &GuidelineSet::builtin().semantic, &c).unwrap();
        assert_eq!(r.verdict.label, Label::Real);
    }

    #[test]
    fn missing_block_twice_is_a_stage_error() {
        let c = script(&["no block", "still no block"]);
        let e = stage1_semantic(&sample(), &GuidelineSet::builtin().semantic, &c).unwrap_err();
        assert!(matches!(e, StageError::Schema { .. }), "{e}");
    }

    #[test]
    fn schema_violations() {
        assert!(parse_semantic_reply(r#"{"verdict":"maybe","confidence":0.5}"#).is_err());
        assert!(parse_semantic_reply(r#"{"verdict":"fake","confidence":1.5}"#).is_err());
        assert!(parse_semantic_reply(
            r#"{"verdict":"fake","confidence":0.5,"anomalies":[{"category":"color","description":"x","severity":0.1}]}"#
        )
        .is_err());
        assert!(parse_semantic_reply(
            r#"{"verdict":"fake","confidence":0.5,"anomalies":[{"category":"other","description":"x","severity":2}]}"#
        )
        .is_err());
        assert!(parse_semantic_reply(r#"{"verdict":"real","confidence":0.7}"#).is_ok());
    }
}
