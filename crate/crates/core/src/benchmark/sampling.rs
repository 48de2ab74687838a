use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{read_jsonl_values, write_jsonl};
use crate::domain::{ContentHash, DatasetManifest, Sample, Split};
use crate::error::{Error, Result};

use super::conflict::{target_size, ConflictVector};

/// A candidate sample with its conflict vector under the benchmark panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub sample: Sample,
    pub conflict: ConflictVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratPlan {
    /// Number of signal experts `j`.
    pub experts: usize,
    /// Source datasets, in the order used for sampling and output.
    pub datasets: Vec<String>,
    /// Samples per (cell, dataset), `n`.
    pub per_cell: usize,
    pub threshold: f64,
}

impl StratPlan {
    pub fn cells(&self) -> u64 {
        1u64 << (self.experts + 1)
    }

    pub fn target(&self) -> Result<u64> {
        target_size(self.experts, self.datasets.len(), self.per_cell)
    }

    fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::InvalidArgument("plan has no datasets".into()));
        }
        let unique: HashSet<&String> = self.datasets.iter().collect();
        if unique.len() != self.datasets.len() {
            return Err(Error::InvalidArgument("plan lists a dataset twice".into()));
        }
        self.target().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub sample_id: String,
    pub source_dataset: String,
    pub cell_index: u64,
    pub content_hash: ContentHash,
}

/// Extra samples taken from one donor dataset to cover a cell's shortfall.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillAction {
    pub cell_index: u64,
    pub donor_dataset: String,
    pub count: usize,
    /// Total shortfall of the cell before filling.
    pub cell_deficit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkHeader {
    pub plan: StratPlan,
    pub seed: u64,
    pub target_count: u64,
    pub realized_count: u64,
    pub coverage: f64,
    pub coverage_text: String,
    pub fill_log: Vec<FillAction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkManifest {
    pub header: BenchmarkHeader,
    pub entries: Vec<BenchmarkEntry>,
}

/// Percentage with one decimal, e.g. `94.5%`.
pub fn format_coverage(realized: u64, target: u64) -> String {
    if target == 0 {
        return "n/a".into();
    }
    format!("{:.1}%", 100.0 * realized as f64 / target as f64)
}

impl BenchmarkManifest {
    pub fn coverage(&self) -> f64 {
        self.header.coverage
    }

    /// Realized count per `(cell, dataset)`.
    pub fn cell_counts(&self) -> BTreeMap<(u64, String), usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry((e.cell_index, e.source_dataset.clone())).or_insert(0) += 1;
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header =
            serde_json::to_value(&self.header).map_err(|e| Error::json("benchmark header", e))?;
        write_jsonl(path, Some(&header), &self.entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut values = read_jsonl_values(path)?.into_iter();
        let header_value = values
            .next()
            .ok_or(Error::EmptyInput("benchmark manifest"))?;
        let header: BenchmarkHeader = serde_json::from_value(header_value)
            .map_err(|e| Error::json(format!("{} header", path.display()), e))?;
        let entries = values
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value(v)
                    .map_err(|e| Error::json(format!("{} entry {}", path.display(), i + 1), e))
            })
            .collect::<Result<Vec<BenchmarkEntry>>>()?;
        if entries.len() as u64 != header.realized_count {
            return Err(Error::Parse(format!(
                "{}: header says {} entries, found {}",
                path.display(),
                header.realized_count,
                entries.len()
            )));
        }
        Ok(Self { header, entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub kept: Vec<PoolEntry>,
    /// Entries whose hash appears in an excluded manifest.
    pub removed_overlap: usize,
    /// Later copies of a hash already kept.
    pub removed_duplicate: usize,
}

/// Removes entries whose content hash is excluded or already seen.
pub fn dedup_pool(pool: Vec<PoolEntry>, exclude: &HashSet<ContentHash>) -> DedupOutcome {
    let mut seen = HashSet::new();
    let mut out = DedupOutcome {
        kept: Vec::with_capacity(pool.len()),
        removed_overlap: 0,
        removed_duplicate: 0,
    };
    for e in pool {
        let h = e.sample.content_hash;
        if exclude.contains(&h) {
            out.removed_overlap += 1;
        } else if !seen.insert(h) {
            out.removed_duplicate += 1;
        } else {
            out.kept.push(e);
        }
    }
    out
}

/// Largest-remainder apportionment of `total` in proportion to `weights`.
/// Ties in the remainder go to the earlier weight.
pub fn apportion(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 || total == 0 {
        return vec![0; weights.len()];
    }
    let mut alloc: Vec<usize> = weights
        .iter()
        .map(|w| (total as u128 * *w as u128 / sum as u128) as usize)
        .collect();
    let given: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| {
        let rem = total as u128 * weights[i] as u128 % sum as u128;
        (std::cmp::Reverse(rem), i)
    });
    for &i in order.iter().take(total - given) {
        alloc[i] += 1;
    }
    alloc
}

fn check_pool(pool: &[PoolEntry], plan: &StratPlan) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyInput("benchmark pool"));
    }
    let datasets: HashSet<&str> = plan.datasets.iter().map(String::as_str).collect();
    let mut ids = HashSet::new();
    for e in pool {
        if e.conflict.experts() != plan.experts {
            return Err(Error::DimensionMismatch {
                expected: plan.experts,
                found: e.conflict.experts(),
            });
        }
        if e.conflict.gt != e.sample.ground_truth {
            return Err(Error::Inconsistent(format!(
                "conflict vector of {} disagrees with its ground truth",
                e.sample.id
            )));
        }
        if !datasets.contains(e.sample.source_dataset.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "sample {} comes from dataset {:?} which is not in the plan",
                e.sample.id, e.sample.source_dataset
            )));
        }
        if !ids.insert(e.sample.id.as_str()) {
            return Err(Error::DuplicateId(e.sample.id.clone()));
        }
    }
    Ok(())
}

/// Draws up to `n` samples per (cell, dataset) and covers each cell's shortfall
/// from the same cell's leftovers in other datasets, apportioned by their
/// leftover counts.
pub fn stratified_sample(pool: &[PoolEntry], plan: &StratPlan, seed: u64) -> Result<BenchmarkManifest> {
    plan.validate()?;
    check_pool(pool, plan)?;
    let deduped = dedup_pool(pool.to_vec(), &HashSet::new()).kept;

    let ds_index: HashMap<&str, usize> = plan
        .datasets
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let mut groups: BTreeMap<(u64, usize), Vec<&PoolEntry>> = BTreeMap::new();
    for e in &deduped {
        let key = (e.conflict.cell_index(), ds_index[e.sample.source_dataset.as_str()]);
        groups.entry(key).or_default().push(e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = plan.per_cell;
    let d = plan.datasets.len();
    let mut entries = Vec::new();
    let mut fill_log = Vec::new();
    for cell in 0..plan.cells() {
        let mut drawn: Vec<Vec<&PoolEntry>> = vec![Vec::new(); d];
        let mut rest: Vec<Vec<&PoolEntry>> = vec![Vec::new(); d];
        for ds in 0..d {
            if let Some(g) = groups.get(&(cell, ds)) {
                let mut g = g.clone();
                g.shuffle(&mut rng);
                let take = n.min(g.len());
                rest[ds] = g.split_off(take);
                drawn[ds] = g;
            }
        }
        let deficit: usize = drawn.iter().map(|v| n - v.len()).sum();
        let leftovers: Vec<usize> = rest.iter().map(Vec::len).collect();
        let fill = deficit.min(leftovers.iter().sum());
        if fill > 0 {
            for (ds, extra) in apportion(fill, &leftovers).into_iter().enumerate() {
                if extra == 0 {
                    continue;
                }
                drawn[ds].extend(rest[ds].drain(..extra));
                fill_log.push(FillAction {
                    cell_index: cell,
                    donor_dataset: plan.datasets[ds].clone(),
                    count: extra,
                    cell_deficit: deficit,
                });
            }
        }
        for (ds, picks) in drawn.into_iter().enumerate() {
            for e in picks {
                entries.push(BenchmarkEntry {
                    sample_id: e.sample.id.clone(),
                    source_dataset: plan.datasets[ds].clone(),
                    cell_index: cell,
                    content_hash: e.sample.content_hash,
                });
            }
        }
    }
    let target = plan.target()?;
    let realized = entries.len() as u64;
    Ok(BenchmarkManifest {
        header: BenchmarkHeader {
            plan: plan.clone(),
            seed,
            target_count: target,
            realized_count: realized,
            coverage: realized as f64 / target as f64,
            coverage_text: format_coverage(realized, target),
            fill_log,
        },
        entries,
    })
}

/// Draws up to `per_cell` samples from each conflict cell (all datasets
/// together) and splits every cell into train and validation parts.
///
/// A cell with at least two samples always contributes one validation sample;
/// a single sample goes to train.
pub fn profile_split(
    pool: &[PoolEntry],
    per_cell: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if per_cell == 0 {
        return Err(Error::InvalidArgument("per_cell must be at least 1".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut cells: BTreeMap<u64, Vec<&PoolEntry>> = BTreeMap::new();
    for e in pool {
        cells.entry(e.conflict.cell_index()).or_default().push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut members) in cells {
        members.shuffle(&mut rng);
        members.truncate(per_cell);
        let count = members.len();
        let n_train = if count >= 2 {
            ((count as f64 * train_fraction).round() as usize).min(count - 1)
        } else {
            count
        };
        for (i, e) in members.into_iter().enumerate() {
            if i < n_train {
                train.push(e.sample.clone());
            } else {
                val.push(e.sample.clone());
            }
        }
    }
    Ok((
        DatasetManifest::new("profile-train", Split::Train, train)?,
        DatasetManifest::new("profile-val", Split::Val, val)?,
    ))
}
