//! End-to-end runs over simulated data: generation, split, grouping,
//! grounding, evaluation and both calibration strategies.

use crate::dataset::{build_sequences, split_periods, InteractionLog, Sequence, Split, DEFAULT_MAX_HISTORY};
use crate::grounding::{ground_batch, EmbeddingTable, OracleEmbedding};
use crate::grouping::{popularity_scheme, GroupScheme, PopularityBasis, DEFAULT_POPULARITY_GROUPS};
use crate::metrics::{evaluate, FairnessReport, Slate};
use crate::rerank::{rerank_batch, sweep_alpha, EvalSet, PunishmentTable, RerankConfig, SweepResult};
use crate::reweight::WeightTable;
use crate::simulator::{generate_embeddings, generate_log, generate_oracles, SimConfig};
use crate::{Id, Result};

/// Alphas from 0 to 0.1 in steps of 0.01.
pub fn default_alphas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 100.0).collect()
}

/// Everything a simulated pipeline produces before calibration.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub config: SimConfig,
    pub log: InteractionLog,
    pub sequences: Vec<Sequence>,
    pub scheme: GroupScheme,
    pub embeddings: EmbeddingTable,
    /// Oracles for validation and test sequences, keyed by sequence order.
    oracles: Vec<OracleEmbedding>,
    /// Indices into `sequences` aligned with `oracles`.
    oracle_seq: Vec<usize>,
}

impl SimulationRun {
    pub fn generate(config: &SimConfig) -> Result<Self> {
        let log = generate_log(config)?;
        let split = split_periods(&log)?;
        let sequences = build_sequences(&split, DEFAULT_MAX_HISTORY);
        let scheme = popularity_scheme(&log, PopularityBasis::Train, DEFAULT_POPULARITY_GROUPS)?;
        let embeddings = generate_embeddings(&log, config)?;
        let oracle_seq: Vec<usize> = sequences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split != Split::Train)
            .map(|(i, _)| i)
            .collect();
        let eval_sequences: Vec<Sequence> = oracle_seq.iter().map(|&i| sequences[i].clone()).collect();
        let oracles = generate_oracles(&eval_sequences, &embeddings, config)?;
        Ok(Self {
            config: config.clone(),
            log,
            sequences,
            scheme,
            embeddings,
            oracles,
            oracle_seq,
        })
    }

    pub fn sequences_in(&self, split: Split) -> impl Iterator<Item = &Sequence> {
        self.sequences.iter().filter(move |s| s.split == split)
    }

    /// Oracles with their sequences for validation or test.
    pub fn oracles_in(&self, split: Split) -> (Vec<OracleEmbedding>, Vec<&Sequence>) {
        self.oracles
            .iter()
            .zip(&self.oracle_seq)
            .filter(|(_, &i)| self.sequences[i].split == split)
            .map(|(o, &i)| (o.clone(), &self.sequences[i]))
            .unzip()
    }

    pub fn all_oracles(&self) -> &[OracleEmbedding] {
        &self.oracles
    }

    /// Uncalibrated grounding reports on `split` at each cutoff.
    pub fn baseline(&self, split: Split, ks: &[usize]) -> Result<Vec<FairnessReport>> {
        let (oracles, seqs) = self.oracles_in(split);
        let k_max = ks.iter().copied().max().unwrap_or(1);
        let slates = ground_batch(&self.embeddings, &oracles, k_max)?;
        evaluate_sequences(&slates, &seqs, &self.scheme, ks)
    }

    /// Alpha sweep on the validation split.
    pub fn sweep(&self, config: &RerankConfig, alphas: &[f64]) -> Result<SweepResult> {
        let (oracles, seqs) = self.oracles_in(Split::Validation);
        let eval = EvalSet {
            oracles: &oracles,
            targets: seqs.iter().map(|s| &s.target).collect(),
            histories: seqs.iter().map(|s| s.history.as_slice()).collect(),
        };
        sweep_alpha(&self.embeddings, &eval, &self.scheme, config, alphas)
    }

    /// Test-split reports after reranking with `table` at `config.alpha`.
    pub fn reranked(
        &self,
        split: Split,
        table: &PunishmentTable,
        config: &RerankConfig,
    ) -> Result<Vec<FairnessReport>> {
        let (oracles, seqs) = self.oracles_in(split);
        let ks = config.report_ks();
        let slates = rerank_batch(&self.embeddings, &oracles, table, config, *ks.last().unwrap())?;
        evaluate_sequences(&slates, &seqs, &self.scheme, &ks)
    }

    pub fn reweight(&self) -> Result<WeightTable> {
        let train: Vec<Sequence> = self.sequences_in(Split::Train).cloned().collect();
        WeightTable::build(&train, &self.scheme)
    }
}

/// Evaluates slates against the sequences they were produced for.
pub fn evaluate_sequences(
    slates: &[Slate],
    sequences: &[&Sequence],
    scheme: &GroupScheme,
    ks: &[usize],
) -> Result<Vec<FairnessReport>> {
    let targets: Vec<Id> = sequences.iter().map(|s| s.target.clone()).collect();
    evaluate(
        slates,
        sequences.iter().map(|s| s.history.as_slice()),
        &targets,
        scheme,
        ks,
    )
}
