//! In-learning calibration by sample reweighting.
//!
//! Each training sample is a (history, target) pair. A group that is more
//! common among targets than among history items gets a weight below one,
//! and each sample takes the mean weight of its target's groups.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{Sequence, Split};
use crate::grouping::GroupScheme;
use crate::metrics::{gh, GroupValues};
use crate::{Error, Id, Result};

/// Training sequences separated into histories and their targets,
/// index-aligned.
#[derive(Debug, Clone)]
pub struct TrainingSplit<'a> {
    pub refs: Vec<&'a str>,
    pub histories: Vec<&'a [Id]>,
    pub targets: Vec<&'a Id>,
}

pub fn split_tr_ta(sequences: &[Sequence]) -> Result<TrainingSplit<'_>> {
    if sequences.is_empty() {
        return Err(Error::InvalidConfig("no training sequences to reweight".into()));
    }
    if let Some(s) = sequences.iter().find(|s| s.split != Split::Train) {
        return Err(Error::NotTraining {
            id: s.id.clone(),
            split: s.split.to_string(),
        });
    }
    Ok(TrainingSplit {
        refs: sequences.iter().map(|s| s.id.as_str()).collect(),
        histories: sequences.iter().map(|s| s.history.as_slice()).collect(),
        targets: sequences.iter().map(|s| &s.target).collect(),
    })
}

/// `W_G = GH_tr(G) / GH_ta(G)`. Groups absent from the targets get 1, which
/// no sample ever reads; a warning is recorded for each.
pub fn group_weights(gh_tr: &GroupValues, gh_ta: &GroupValues) -> Result<(GroupValues, Vec<String>)> {
    if gh_tr.len() != gh_ta.len() || gh_tr.keys().any(|g| !gh_ta.contains_key(g)) {
        return Err(Error::GroupMismatch("history and target group sets differ".into()));
    }
    let mut warnings = Vec::new();
    let weights = gh_tr
        .iter()
        .map(|(g, &tr)| {
            let ta = gh_ta[g];
            let w = if ta > 0.0 {
                tr / ta
            } else {
                warnings.push(format!("group `{g}` has no targets; weight set to 1"));
                1.0
            };
            (g.clone(), w)
        })
        .collect();
    Ok((weights, warnings))
}

/// Mean group weight over each target's groups. Targets in no group keep a
/// neutral weight of 1 and produce a warning.
pub fn sample_weights(
    refs: &[&str],
    targets: &[&Id],
    scheme: &GroupScheme,
    group_weights: &GroupValues,
) -> (IndexMap<Id, f64>, Vec<String>) {
    let by_index: Vec<f64> = scheme
        .groups()
        .iter()
        .map(|g| group_weights.get(g).copied().unwrap_or(1.0))
        .collect();
    let mut warnings = Vec::new();
    let weights = refs
        .iter()
        .zip(targets)
        .map(|(r, t)| {
            let groups = scheme.groups_of(t);
            let w = if groups.is_empty() {
                warnings.push(format!("target `{t}` of `{r}` has no group; weight set to 1"));
                1.0
            } else {
                groups.iter().map(|&g| by_index[g]).sum::<f64>() / groups.len() as f64
            };
            (r.to_string(), w)
        })
        .collect();
    (weights, warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub scheme: String,
    pub gh_tr: GroupValues,
    pub gh_ta: GroupValues,
    pub group_weights: GroupValues,
    pub sample_weights: IndexMap<Id, f64>,
    pub warnings: Vec<String>,
}

impl WeightTable {
    pub fn build(sequences: &[Sequence], scheme: &GroupScheme) -> Result<Self> {
        let split = split_tr_ta(sequences)?;
        let gh_tr = gh(split.histories.iter().copied(), scheme)?;
        let gh_ta = gh(split.targets.iter().map(|t| std::slice::from_ref(*t)), scheme)?;
        let (group_weights, mut warnings) = group_weights(&gh_tr, &gh_ta)?;
        let (sample_weights, w2) = sample_weights(&split.refs, &split.targets, scheme, &group_weights);
        warnings.extend(w2);
        Ok(Self {
            scheme: scheme.name().to_string(),
            gh_tr,
            gh_ta,
            group_weights,
            sample_weights,
            warnings,
        })
    }

    pub fn get(&self, sequence_ref: &str) -> Option<f64> {
        self.sample_weights.get(sequence_ref).copied()
    }

    /// TSV with `#` comment lines carrying the scheme, group weights and
    /// seed, followed by `sequence_ref\tweight` rows.
    pub fn to_tsv(&self, seed: u64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# scheme: {}", self.scheme);
        let _ = writeln!(out, "# seed: {seed}");
        let _ = writeln!(
            out,
            "# loss: sum_i weight_i * loss_i; divide by the number of samples for the mean convention"
        );
        for (g, w) in &self.group_weights {
            let _ = writeln!(
                out,
                "# group_weight\t{g}\t{w}\tgh_tr={}\tgh_ta={}",
                self.gh_tr[g], self.gh_ta[g]
            );
        }
        out.push_str("sequence_ref\tweight\n");
        for (r, w) in &self.sample_weights {
            let _ = writeln!(out, "{r}\t{w}");
        }
        out
    }

    pub fn write_tsv(&self, path: &Path, seed: u64) -> Result<()> {
        fs::write(path, self.to_tsv(seed)).map_err(|e| Error::io(path, e))
    }
}

/// Reads the `sequence_ref\tweight` rows of a weights file.
pub fn read_weights(path: &Path) -> Result<IndexMap<Id, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = IndexMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() || line == "sequence_ref\tweight" {
            continue;
        }
        let (r, w) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
            file: path.to_path_buf(),
            line: i + 1,
            field: "row".into(),
            reason: "expected `sequence_ref\\tweight`".into(),
        })?;
        let w = w.parse::<f64>().map_err(|e| Error::MalformedRow {
            file: path.to_path_buf(),
            line: i + 1,
            field: "weight".into(),
            reason: e.to_string(),
        })?;
        out.insert(r.to_string(), w);
    }
    Ok(out)
}

/// `sum_i W_i * loss_i` over the given per-sample losses.
pub fn weighted_loss(per_sample_losses: &HashMap<Id, f64>, weights: &WeightTable) -> Result<f64> {
    let mut keys: Vec<&Id> = per_sample_losses.keys().collect();
    // fixed summation order keeps the result independent of hash order
    keys.sort();
    keys.into_iter().try_fold(0.0, |acc, k| {
        let w = weights.get(k).ok_or_else(|| Error::MissingWeight(k.clone()))?;
        Ok(acc + w * per_sample_losses[k])
    })
}
