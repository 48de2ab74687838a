//! Final forensic report: the verdict plus an ordered provenance trace over
//! the collected evidence, emitted as canonical JSON or Markdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{
    extract_json_block, ChatRequest, EvidenceSet, Guideline, LanguageModel, Stage,
};
use crate::codec::{to_canonical_line, to_canonical_pretty};
use crate::domain::{Label, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub stage: Stage,
    pub evidence_key: String,
    pub summary: String,
    /// Logical clock readings; they order events within one run.
    pub started_tick: u64,
    pub finished_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForensicReport {
    pub sample_id: String,
    pub verdict: Verdict,
    /// Evidence key of the verdict the report adopts.
    pub verdict_source: String,
    pub provenance: Vec<ProvenanceEntry>,
    pub evidence: EvidenceSet,
    pub config_fingerprint: String,
    pub seed: u64,
    pub narrative: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Parse(format!("unknown report format {other:?}"))),
        }
    }
}

/// SHA-256 over the canonical JSON of everything that shapes a run.
pub fn config_fingerprint<P: Serialize, E: Serialize, C: Serialize, G: Serialize, S: Serialize>(
    panel: &P,
    expert_profiles: &E,
    clustering_profiles: &C,
    guidelines: &G,
    settings: &S,
    seed: u64,
) -> Result<String> {
    let doc = serde_json::json!({
        "panel": crate::codec::to_canonical_value(panel)?,
        "expert_profiles": crate::codec::to_canonical_value(expert_profiles)?,
        "clustering_profiles": crate::codec::to_canonical_value(clustering_profiles)?,
        "guidelines": crate::codec::to_canonical_value(guidelines)?,
        "settings": crate::codec::to_canonical_value(settings)?,
        "seed": seed,
    });
    let line = to_canonical_line(&doc)?;
    Ok(hex::encode(Sha256::digest(line.as_bytes())))
}

fn stage_entries(evidence: &EvidenceSet) -> Vec<(Stage, String, String)> {
    let mut out = Vec::new();
    if let Some(s) = &evidence.semantic {
        out.push((
            Stage::Semantic,
            "semantic".to_string(),
            format!(
                "semantic verdict {} ({:.3}); {} anomalies",
                s.verdict.label,
                s.verdict.confidence,
                s.anomalies.len()
            ),
        ));
    }
    let sig = &evidence.experts;
    out.push((
        Stage::Signal,
        "signal".to_string(),
        format!(
            "signal verdict {} (aggregate {:.4}); {} failed",
            sig.verdict.label,
            sig.aggregate_score,
            sig.failed_experts.len()
        ),
    ));
    if let Some(c) = &evidence.cluster {
        out.push((
            Stage::Cluster,
            "cluster".to_string(),
            format!(
                "{} modalities, {} down-weighted",
                c.entries.len(),
                c.downweighted().len()
            ),
        ));
    }
    if let Some(a) = &evidence.arbitration {
        out.push((
            Stage::Arbitration,
            "arbitration".to_string(),
            format!(
                "arbitration verdict {} (score {:.4}, {} citations)",
                a.verdict.label,
                a.score,
                a.rationale.len()
            ),
        ));
    }
    out
}

fn template_narrative(evidence: &EvidenceSet, verdict: &Verdict, source: &str) -> String {
    let mut parts = Vec::new();
    match &evidence.semantic {
        Some(s) => parts.push(format!(
            "Semantic review says {} with {} anomalies.",
            s.verdict.label,
            s.anomalies.len()
        )),
        None => parts.push("Semantic review unavailable; signal evidence only.".into()),
    }
    parts.push(evidence.experts.narrative.clone());
    if let Some(a) = &evidence.arbitration {
        parts.push(format!(
            "The stages conflicted; arbitration ({:?}) settled on {}.",
            a.mode, a.verdict.label
        ));
    }
    parts.push(format!(
        "Final verdict: {} at confidence {:.3}, from {source}.",
        verdict.label, verdict.confidence
    ));
    parts.join(" ")
}

/// Assembles the report. The verdict is the arbitration verdict when one
/// exists, otherwise the shared stage verdict. A renderer only writes the
/// narrative; a verdict it states is never adopted.
pub fn compile_report(
    sample_id: &str,
    evidence: EvidenceSet,
    ticks: &BTreeMap<Stage, (u64, u64)>,
    guideline: &Guideline,
    renderer: Option<&dyn LanguageModel>,
    config_fingerprint: String,
    seed: u64,
) -> Result<ForensicReport> {
    evidence.check()?;
    let mut notes = Vec::new();
    let (verdict, source) = match (&evidence.arbitration, &evidence.semantic) {
        (Some(a), _) => (a.verdict.clone(), "arbitration"),
        (None, Some(s)) => {
            if s.verdict.label != evidence.experts.verdict.label {
                return Err(Error::Inconsistent(
                    "stage verdicts differ but no arbitration was recorded".into(),
                ));
            }
            (evidence.experts.verdict.clone(), "signal")
        }
        (None, None) => {
            notes.push(format!(
                "semantic stage failed ({}); verdict is signal-only",
                evidence.semantic_failure.as_deref().unwrap_or("no analyzer")
            ));
            (evidence.experts.verdict.clone(), "signal")
        }
    };
    let mut narrative = template_narrative(&evidence, &verdict, source);
    if let Some(model) = renderer {
        let evidence_json = to_canonical_line(&evidence)?;
        let req = ChatRequest {
            stage: Stage::Report,
            sample_id,
            attempt: 0,
            system: &guideline.text,
            user: format!(
                "Image id: {sample_id}\nVerdict: {} ({:.3}) from {source}\nEvidence: {evidence_json}\nWrite the report.",
                verdict.label, verdict.confidence
            ),
            image_locator: None,
        };
        match model.complete(&req) {
            Ok(text) => {
                let stated = extract_json_block(&text)
                    .and_then(|v| v.get("verdict").and_then(|x| x.as_str()).map(str::to_string))
                    .and_then(|s| s.parse::<Label>().ok());
                if let Some(label) = stated.filter(|l| *l != verdict.label) {
                    notes.push(format!(
                        "renderer stated verdict {label}; kept {} from {source}",
                        verdict.label
                    ));
                }
                narrative = text;
            }
            Err(e) => notes.push(format!("renderer unavailable: {e}")),
        }
    }
    let mut provenance = Vec::new();
    for (i, (stage, key, summary)) in stage_entries(&evidence).into_iter().enumerate() {
        let (started_tick, finished_tick) =
            ticks.get(&stage).copied().unwrap_or((2 * i as u64, 2 * i as u64 + 1));
        provenance.push(ProvenanceEntry {
            stage,
            evidence_key: key,
            summary,
            started_tick,
            finished_tick,
        });
    }
    Ok(ForensicReport {
        sample_id: sample_id.to_string(),
        verdict,
        verdict_source: source.to_string(),
        provenance,
        evidence,
        config_fingerprint,
        seed,
        narrative,
        notes,
    })
}

impl ForensicReport {
    /// Checks that provenance cites only evidence in the snapshot and follows
    /// stage order, and that the verdict equals the cited evidence verdict.
    pub fn validate(&self) -> Result<()> {
        self.evidence.check()?;
        let keys = self.evidence.keys();
        let mut last = None;
        for p in &self.provenance {
            if !keys.contains(&p.evidence_key) {
                return Err(Error::Inconsistent(format!(
                    "provenance cites missing evidence {}",
                    p.evidence_key
                )));
            }
            if last.is_some_and(|l| p.stage <= l) {
                return Err(Error::Inconsistent("provenance out of stage order".into()));
            }
            last = Some(p.stage);
        }
        let source = match self.verdict_source.as_str() {
            "arbitration" => self.evidence.arbitration.as_ref().map(|a| &a.verdict),
            "signal" => Some(&self.evidence.experts.verdict),
            _ => None,
        };
        if source != Some(&self.verdict) {
            return Err(Error::Inconsistent(format!(
                "report verdict does not match its source {}",
                self.verdict_source
            )));
        }
        Ok(())
    }
}

pub fn emit(report: &ForensicReport, format: ReportFormat) -> Result<Vec<u8>> {
    Ok(match format {
        ReportFormat::Json => to_canonical_pretty(report)?.into_bytes(),
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
    })
}

pub fn parse_report_json(bytes: &[u8]) -> Result<ForensicReport> {
    serde_json::from_slice(bytes).map_err(|e| Error::json("forensic report", e))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

pub fn render_markdown(r: &ForensicReport) -> String {
    let mut s = String::new();
    let ev = &r.evidence;
    let _ = writeln!(s, "# Forensic report: {}\n", r.sample_id);

    let _ = writeln!(s, "## Semantic Analysis\n");
    match &ev.semantic {
        Some(sem) => {
            let _ = writeln!(
                s,
                "Verdict: **{}** (confidence {:.3})\n",
                sem.verdict.label, sem.verdict.confidence
            );
            if sem.anomalies.is_empty() {
                let _ = writeln!(s, "No anomalies reported.\n");
            }
            for (i, a) in sem.anomalies.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "- `semantic.anomaly.{i}` {:?}, severity {:.2}: {}",
                    a.category, a.severity, a.description
                );
            }
            if !sem.anomalies.is_empty() {
                s.push('\n');
            }
        }
        None => {
            let _ = writeln!(
                s,
                "Unavailable: {}\n",
                ev.semantic_failure.as_deref().unwrap_or("no analyzer")
            );
        }
    }

    let _ = writeln!(s, "## Signal Analysis\n");
    let _ = writeln!(s, "| expert | raw | calibrated | weight | status |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for e in &ev.experts.entries {
        let status = e.failure.as_ref().map_or("ok", |f| f.kind.as_str());
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {} |",
            e.expert_id,
            fmt_opt(e.raw_score),
            fmt_opt(e.calibrated_score),
            e.weight,
            status
        );
    }
    let _ = writeln!(
        s,
        "\nAggregate {:.4}, verdict **{}**. {}\n",
        ev.experts.aggregate_score, ev.experts.verdict.label, ev.experts.narrative
    );

    if let Some(a) = &ev.arbitration {
        let _ = writeln!(s, "## Conflict Resolution\n");
        if let Some(c) = &ev.cluster {
            for e in &c.entries {
                let _ = writeln!(
                    s,
                    "- `cluster.{}` cluster {} ({}): {}",
                    e.modality,
                    e.cluster_id,
                    if e.usable { "usable" } else { "down-weighted" },
                    e.ranking_text
                );
            }
            for n in &c.notes {
                let _ = writeln!(s, "- note: {n}");
            }
        }
        let _ = writeln!(
            s,
            "\nArbitration ({:?}): score {:.4}, verdict **{}**.\n",
            a.mode, a.score, a.verdict.label
        );
        for rat in &a.rationale {
            let _ = writeln!(s, "- `{}` {}", rat.key, rat.claim);
        }
        s.push('\n');
    }

    let _ = writeln!(s, "## Verdict\n");
    let _ = writeln!(
        s,
        "**{}** (confidence {:.3}), from `{}`.\n",
        r.verdict.label.as_str().to_uppercase(),
        r.verdict.confidence,
        r.verdict_source
    );
    let _ = writeln!(s, "{}\n", r.narrative);
    for p in &r.provenance {
        let _ = writeln!(
            s,
            "{}. [{}] `{}` {}",
            p.started_tick, p.stage, p.evidence_key, p.summary
        );
    }
    for n in &r.notes {
        let _ = writeln!(s, "\nNote: {n}");
    }
    let _ = writeln!(s, "\nSeed {}; configuration {}", r.seed, r.config_fingerprint);
    s
}
