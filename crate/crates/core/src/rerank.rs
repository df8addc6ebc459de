//! Post-learning calibration by punishment-based reranking.
//!
//! Validation GU at several cutoffs is folded into one punishment per group
//! (weighted by `K / sum(K)`), scaled into [-1, 1], averaged per item and
//! finally applied to grounding distances as `D / (1 - U_i)^alpha`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grounding::{top_k_rows, Distances, EmbeddingTable, OracleEmbedding};
use crate::grouping::GroupScheme;
use crate::metrics::{self, FairnessReport, GroupValues, Slate};
use crate::{Error, Id, Result};

pub const DEFAULT_K_SET: [usize; 4] = [1, 5, 10, 20];
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Relative NDCG@5 drop tolerated when picking an alpha from a sweep.
pub const ACCURACY_DROP_BOUND: f64 = 0.05;
pub const SELECTION_NDCG_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub k_set: Vec<usize>,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            k_set: DEFAULT_K_SET.to_vec(),
            alpha: 0.05,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_set.is_empty() {
            return Err(Error::InvalidConfig("K set is empty".into()));
        }
        if self.k_set[0] == 0 || self.k_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "K set must be positive and strictly increasing, got {:?}",
                self.k_set
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        self.k_set.last().copied().unwrap_or(0)
    }

    /// `(K, gamma_K)` with `gamma_K = K / sum(K')`.
    pub fn gammas(&self) -> Vec<(usize, f64)> {
        let total: usize = self.k_set.iter().sum();
        self.k_set.iter().map(|&k| (k, k as f64 / total as f64)).collect()
    }

    /// The cutoffs reports are produced at: the K set plus the cutoff used
    /// for the accuracy guard in alpha selection.
    pub fn report_ks(&self) -> Vec<usize> {
        let mut ks = self.k_set.clone();
        if !ks.contains(&SELECTION_NDCG_K) {
            ks.push(SELECTION_NDCG_K);
            ks.sort_unstable();
        }
        ks
    }
}

/// `U_G = sum_K gamma_K * GU(G)@K`. Cutoffs outside the K set are ignored.
pub fn punishment_raw(gu_at_k: &BTreeMap<usize, GroupValues>, config: &RerankConfig) -> Result<GroupValues> {
    let gammas = config.gammas();
    for (k, _) in &gammas {
        if !gu_at_k.contains_key(k) {
            return Err(Error::MissingK(*k));
        }
    }
    let first = &gu_at_k[&gammas[0].0];
    let mut raw: GroupValues = first.keys().map(|g| (g.clone(), 0.0)).collect();
    for (k, gamma) in gammas {
        let gu = &gu_at_k[&k];
        if gu.len() != raw.len() || gu.keys().any(|g| !raw.contains_key(g)) {
            return Err(Error::GroupMismatch(format!("GU@{k} has a different group set")));
        }
        for (g, v) in gu {
            raw[g.as_str()] += gamma * v;
        }
    }
    Ok(raw)
}

/// Divides by the largest absolute punishment; an all-zero input stays zero.
pub fn punishment_normalize(raw: &GroupValues) -> GroupValues {
    let max = raw.values().fold(0.0f64, |m, v| m.max(v.abs()));
    raw.iter()
        .map(|(g, &v)| (g.clone(), if max > 0.0 { v / max } else { 0.0 }))
        .collect()
}

/// Mean normalized punishment over each grouped item's groups, keyed by
/// item id in ascending order. Items in no group are implicitly 0.
pub fn punishment_items(normalized: &GroupValues, scheme: &GroupScheme) -> IndexMap<Id, f64> {
    let by_index: Vec<f64> = scheme
        .groups()
        .iter()
        .map(|g| normalized.get(g).copied().unwrap_or(0.0))
        .collect();
    let mut items: Vec<(Id, f64)> = scheme
        .members()
        .into_values()
        .flatten()
        .map(|item| {
            let gs = scheme.groups_of(&item);
            let u = gs.iter().map(|&g| by_index[g]).sum::<f64>() / gs.len() as f64;
            (item, u)
        })
        .collect();
    items.sort_by(|a, b| a.0.cmp(&b.0));
    items.dedup_by(|a, b| a.0 == b.0);
    items.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunishmentTable {
    pub raw: GroupValues,
    pub normalized: GroupValues,
    pub per_item: IndexMap<Id, f64>,
    pub k_set: Vec<usize>,
    pub source: String,
}

impl PunishmentTable {
    pub fn build(gu_at_k: &BTreeMap<usize, GroupValues>, scheme: &GroupScheme, config: &RerankConfig) -> Result<Self> {
        config.validate()?;
        let raw = punishment_raw(gu_at_k, config)?;
        let normalized = punishment_normalize(&raw);
        let per_item = punishment_items(&normalized, scheme);
        Ok(Self {
            raw,
            normalized,
            per_item,
            k_set: config.k_set.clone(),
            source: "validation".into(),
        })
    }

    /// Builds the table from uncalibrated validation slates.
    pub fn from_validation<'a>(
        slates: &[Slate],
        histories: impl IntoIterator<Item = &'a [Id]>,
        scheme: &GroupScheme,
        config: &RerankConfig,
    ) -> Result<Self> {
        let gh = metrics::gh(histories, scheme)?;
        let mut gu_at_k = BTreeMap::new();
        for &k in &config.k_set {
            let gp = metrics::gp(slates, scheme, k)?;
            gu_at_k.insert(k, metrics::group_unfairness(&gh, &gp)?);
        }
        Self::build(&gu_at_k, scheme, config)
    }

    pub fn item(&self, id: &str) -> f64 {
        self.per_item.get(id).copied().unwrap_or(0.0)
    }

    /// Squared distance multipliers `(1 - min(U_i, 1 - eps))^(-2 alpha)` in
    /// embedding-table row order.
    pub fn squared_factors(&self, table: &EmbeddingTable, alpha: f64, epsilon: f64) -> Vec<f64> {
        table
            .ids()
            .iter()
            .map(|id| squared_factor(self.item(id), alpha, epsilon))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn squared_factor(u: f64, alpha: f64, epsilon: f64) -> f64 {
    let u = u.min(1.0 - epsilon);
    (1.0 - u).powf(-2.0 * alpha)
}

/// `D_i / (1 - min(U_i, 1 - eps))^alpha` for every item, in table order.
pub fn reranked_distances(distances: &Distances<'_>, table: &PunishmentTable, config: &RerankConfig) -> Vec<f64> {
    distances
        .iter()
        .map(|(id, d)| {
            let u = table.item(id).min(1.0 - config.epsilon);
            d / (1.0 - u).powf(config.alpha)
        })
        .collect()
}

fn rerank_rows(squared: &[f64], factors: &[f64], k: usize) -> Vec<usize> {
    let scores: Vec<f64> = squared.iter().zip(factors).map(|(d, f)| d * f).collect();
    top_k_rows(&scores, k)
}

/// Top-`k` items by punished distance, ties by item id.
///
/// Rankings compare squared punished distances, so with `alpha = 0` or a
/// neutral table the result is exactly the grounding slate.
pub fn rerank(distances: &Distances<'_>, table: &PunishmentTable, config: &RerankConfig, k: usize) -> Slate {
    let emb = distances.table();
    let factors = table.squared_factors(emb, config.alpha, config.epsilon);
    let items = rerank_rows(distances.squared(), &factors, k)
        .into_iter()
        .map(|i| emb.ids()[i].clone())
        .collect();
    Slate::new(distances.sequence_ref(), items)
}

/// Grounds and reranks every oracle; output order follows input order.
pub fn rerank_batch(
    emb: &EmbeddingTable,
    oracles: &[OracleEmbedding],
    table: &PunishmentTable,
    config: &RerankConfig,
    k: usize,
) -> Result<Vec<Slate>> {
    if k == 0 || k > emb.len() {
        return Err(Error::KTooLarge { k, catalog: emb.len() });
    }
    let factors = table.squared_factors(emb, config.alpha, config.epsilon);
    let one = |(index, o): (usize, &OracleEmbedding)| -> Result<Slate> {
        let sq = emb.squared_distances(o).map_err(|e| Error::Batch {
            index,
            source: Box::new(e),
        })?;
        let items = rerank_rows(&sq, &factors, k)
            .into_iter()
            .map(|i| emb.ids()[i].clone())
            .collect();
        Ok(Slate::new(o.sequence_ref.clone(), items))
    };
    #[cfg(feature = "parallel")]
    let out = oracles.par_iter().enumerate().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let out = oracles.iter().enumerate().map(one).collect();
    out
}

/// Oracles with their targets and histories, index-aligned.
#[derive(Debug, Clone)]
pub struct EvalSet<'a> {
    pub oracles: &'a [OracleEmbedding],
    pub targets: Vec<&'a Id>,
    pub histories: Vec<&'a [Id]>,
}

impl EvalSet<'_> {
    fn check(&self) -> Result<()> {
        if self.oracles.len() != self.targets.len() || self.targets.len() != self.histories.len() {
            return Err(Error::LengthMismatch {
                left: self.oracles.len(),
                right: self.targets.len(),
            });
        }
        Ok(())
    }

    fn owned_targets(&self) -> Vec<Id> {
        self.targets.iter().map(|t| (*t).clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub reports: Vec<FairnessReport>,
}

impl SweepRow {
    pub fn at(&self, k: usize) -> Option<&FairnessReport> {
        self.reports.iter().find(|r| r.k == k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub punishment: PunishmentTable,
    /// Uncalibrated grounding.
    pub baseline: SweepRow,
    /// One row per requested alpha, in request order.
    pub rows: Vec<SweepRow>,
    /// Alpha with the lowest MGU at the largest K among rows whose NDCG@5
    /// stays within the accuracy bound of the baseline.
    pub selected_alpha: Option<f64>,
}

impl SweepResult {
    pub fn csv(&self) -> String {
        let ks: Vec<usize> = self.baseline.reports.iter().map(|r| r.k).collect();
        let mut out = String::from("alpha");
        for metric in ["mgu", "dgu", "ndcg", "hr"] {
            for k in &ks {
                let _ = write!(out, ",{metric}@{k}");
            }
        }
        out.push_str(",selected\n");
        for row in &self.rows {
            let _ = write!(out, "{}", row.alpha);
            for pick in [
                |r: &FairnessReport| r.mgu,
                |r: &FairnessReport| r.dgu,
                |r: &FairnessReport| r.ndcg,
                |r: &FairnessReport| r.hr,
            ] {
                for r in &row.reports {
                    let _ = write!(out, ",{}", pick(r));
                }
            }
            let selected = self.selected_alpha == Some(row.alpha);
            let _ = writeln!(out, ",{}", u8::from(selected));
        }
        out
    }
}

/// Builds the punishment table once from uncalibrated validation slates and
/// evaluates reranking at every alpha.
///
/// Distances are computed once per oracle and reused for every alpha.
pub fn sweep_alpha(
    emb: &EmbeddingTable,
    eval: &EvalSet<'_>,
    scheme: &GroupScheme,
    config: &RerankConfig,
    alphas: &[f64],
) -> Result<SweepResult> {
    config.validate()?;
    eval.check()?;
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("no alphas to sweep".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {a}")));
    }
    let report_ks = config.report_ks();
    let k_max = *report_ks.last().unwrap();
    if k_max > emb.len() {
        return Err(Error::KTooLarge {
            k: k_max,
            catalog: emb.len(),
        });
    }

    let squared: Vec<Vec<f64>> = {
        let one = |(index, o): (usize, &OracleEmbedding)| {
            emb.squared_distances(o).map_err(|e| Error::Batch {
                index,
                source: Box::new(e),
            })
        };
        #[cfg(feature = "parallel")]
        let v: Result<Vec<_>> = eval.oracles.par_iter().enumerate().map(one).collect();
        #[cfg(not(feature = "parallel"))]
        let v: Result<Vec<_>> = eval.oracles.iter().enumerate().map(one).collect();
        v?
    };

    let to_slates = |rows: Vec<Vec<usize>>| -> Vec<Slate> {
        rows.into_iter()
            .zip(eval.oracles)
            .map(|(r, o)| {
                Slate::new(
                    o.sequence_ref.clone(),
                    r.into_iter().map(|i| emb.ids()[i].clone()).collect(),
                )
            })
            .collect()
    };
    let gh = metrics::gh(eval.histories.iter().copied(), scheme)?;
    let targets = eval.owned_targets();
    let evaluate = |alpha: f64, slates: &[Slate]| -> Result<SweepRow> {
        let reports = report_ks
            .iter()
            .map(|&k| metrics::evaluate_with_gh(slates, &gh, &targets, scheme, k))
            .collect::<Result<_>>()?;
        Ok(SweepRow { alpha, reports })
    };

    let base_rows: Vec<Vec<usize>> = squared.iter().map(|sq| top_k_rows(sq, k_max)).collect();
    let base_slates = to_slates(base_rows);
    let punishment = PunishmentTable::from_validation(&base_slates, eval.histories.iter().copied(), scheme, config)?;
    let baseline = evaluate(0.0, &base_slates)?;
    drop(base_slates);

    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let factors = punishment.squared_factors(emb, alpha, config.epsilon);
        #[cfg(feature = "parallel")]
        let ranked: Vec<Vec<usize>> = squared.par_iter().map(|sq| rerank_rows(sq, &factors, k_max)).collect();
        #[cfg(not(feature = "parallel"))]
        let ranked: Vec<Vec<usize>> = squared.iter().map(|sq| rerank_rows(sq, &factors, k_max)).collect();
        rows.push(evaluate(alpha, &to_slates(ranked))?);
    }

    let selected_alpha = select_alpha(&baseline, &rows, config.max_k());
    Ok(SweepResult {
        punishment,
        baseline,
        rows,
        selected_alpha,
    })
}

/// Lowest MGU@`k_fair` among rows whose NDCG@5 is within
/// [`ACCURACY_DROP_BOUND`] (relative) of the baseline. Ties go to the
/// earlier row.
pub fn select_alpha(baseline: &SweepRow, rows: &[SweepRow], k_fair: usize) -> Option<f64> {
    let base_ndcg = baseline.at(SELECTION_NDCG_K)?.ndcg;
    let mut best: Option<(f64, f64)> = None;
    for row in rows {
        let (Some(acc), Some(fair)) = (row.at(SELECTION_NDCG_K), row.at(k_fair)) else {
            continue;
        };
        if (acc.ndcg - base_ndcg).abs() > ACCURACY_DROP_BOUND * base_ndcg {
            continue;
        }
        if best.is_none_or(|(_, m)| fair.mgu < m) {
            best = Some((row.alpha, fair.mgu));
        }
    }
    best.map(|(a, _)| a)
}
