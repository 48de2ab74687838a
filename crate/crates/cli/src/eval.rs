//! Evaluation summaries over a batch of forensic reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use forensic_fusion::benchmark::ConflictVector;
use forensic_fusion::domain::{ConfusionCounts, Label, Sample};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub f1: f64,
    pub acc: f64,
    pub count: u64,
}

impl Score {
    fn of(c: &ConfusionCounts) -> Self {
        let m = c.f1_acc();
        Self {
            f1: m.f1,
            acc: m.acc,
            count: c.total(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumScore {
    pub cell_index: u64,
    /// `[e_1,..,e_j|gt]` with 1 marking an expert error.
    pub signature: String,
    pub correct_experts: usize,
    pub f1: f64,
    pub acc: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seed: u64,
    pub per_dataset: BTreeMap<String, Score>,
    pub overall: Score,
    /// Observed cells only, by cell index.
    pub strata: Vec<StratumScore>,
    /// Manifest samples without a report.
    pub missing: Vec<String>,
}

/// One evaluated sample: its manifest entry, the predicted label and, when
/// known, its conflict cell.
pub struct Outcome<'a> {
    pub sample: &'a Sample,
    pub predicted: Label,
    pub cell: Option<ConflictVector>,
}

pub fn summarize(outcomes: &[Outcome<'_>], missing: Vec<String>, seed: u64) -> EvalSummary {
    let mut per_dataset: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    let mut overall = ConfusionCounts::default();
    let mut strata: BTreeMap<u64, (ConflictVector, ConfusionCounts)> = BTreeMap::new();
    for o in outcomes {
        let truth = o.sample.ground_truth;
        per_dataset
            .entry(o.sample.source_dataset.clone())
            .or_default()
            .record(o.predicted, truth);
        overall.record(o.predicted, truth);
        if let Some(cv) = &o.cell {
            strata
                .entry(cv.cell_index())
                .or_insert_with(|| (cv.clone(), ConfusionCounts::default()))
                .1
                .record(o.predicted, truth);
        }
    }
    EvalSummary {
        seed,
        per_dataset: per_dataset.iter().map(|(k, c)| (k.clone(), Score::of(c))).collect(),
        overall: Score::of(&overall),
        strata: strata
            .into_iter()
            .map(|(idx, (cv, c))| {
                let s = Score::of(&c);
                StratumScore {
                    cell_index: idx,
                    signature: cv.render(),
                    correct_experts: cv.correct_count(),
                    f1: s.f1,
                    acc: s.acc,
                    count: s.count,
                }
            })
            .collect(),
        missing,
    }
}

/// Aligned table: one column pair (F1, ACC) per dataset, then overall.
pub fn render_table(s: &EvalSummary) -> String {
    let mut cols: Vec<(&str, &Score)> = s.per_dataset.iter().map(|(k, v)| (k.as_str(), v)).collect();
    cols.push(("Overall", &s.overall));
    let width = cols.iter().map(|(k, _)| k.len()).max().unwrap_or(7).max(13);
    let mut out = String::new();
    let _ = writeln!(out, "# seed {}", s.seed);
    let mut head = String::new();
    let mut sub = String::new();
    let mut row = String::new();
    for (name, sc) in &cols {
        let _ = write!(head, "| {name:^width$} ");
        let _ = write!(sub, "| {:^w$} {:^w$} ", "F1", "ACC", w = (width - 1) / 2);
        let _ = write!(row, "| {:^w$.4} {:^w$.4} ", sc.f1, sc.acc, w = (width - 1) / 2);
    }
    let _ = writeln!(out, "{head}|");
    let _ = writeln!(out, "{sub}|");
    let _ = writeln!(out, "{row}|");
    out
}

/// Stratum curve rows, ordered by correct-expert count descending.
pub fn render_strata_csv(s: &EvalSummary) -> String {
    let mut rows = s.strata.clone();
    rows.sort_by(|a, b| b.correct_experts.cmp(&a.correct_experts).then(a.cell_index.cmp(&b.cell_index)));
    let mut out = format!("# seed {}\ncell_index,signature,correct_experts,f1,acc,count\n", s.seed);
    for r in rows {
        let _ = writeln!(
            out,
            "{},\"{}\",{},{:.6},{:.6},{}",
            r.cell_index, r.signature, r.correct_experts, r.f1, r.acc, r.count
        );
    }
    out
}
