use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::dataset::{
    build_sequences, draw_training_sample, filter_rare_genres, ingest as ingest_tsv, ingest_movielens, read_sequences,
    split_periods, write_sequences, InteractionLog, Sequence, Split,
};
use crate::grounding::{ground_batch, load_oracles, save_oracles, EmbeddingTable, OracleEmbedding};
use crate::grouping::{genre_scheme, popularity_scheme, GroupScheme};
use crate::metrics::{evaluate as evaluate_reports, read_slates, write_slates, FairnessReport, Slate};
use crate::rerank::{rerank_batch, sweep_alpha, EvalSet, PunishmentTable};
use crate::reweight::WeightTable;
use crate::simulator::{generate_embeddings, generate_log, generate_oracles, SimConfig};

use super::config::{SchemeChoice, Settings};
use super::manifest::ManifestBuilder;
use super::{CliError, StageContext};

pub(super) fn require(stage: &str, path: &Path) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::missing(stage, path, "no such file"))
    }
}

fn write_text(stage: &str, path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::internal(stage, format!("{}: {e}", path.display())))
}

fn write_json(stage: &str, path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(stage, e.to_string()))?;
    write_text(stage, path, &(text + "\n"))
}

pub(super) fn simulate(s: &Settings, sim: &SimConfig) -> Result<(), CliError> {
    const STAGE: &str = "simulate";
    let sim = SimConfig {
        seed: s.seed,
        ..sim.clone()
    };
    sim.validate().stage(STAGE)?;
    let log = generate_log(&sim).stage(STAGE)?;
    let (inter, items) = (s.path("raw_interactions.tsv"), s.path("raw_items.tsv"));
    log.write_tsv(&inter, &items).stage(STAGE)?;

    let table = generate_embeddings(&log, &sim).stage(STAGE)?;
    let emb_path = s.path("embeddings.bin");
    table.save(&emb_path).stage(STAGE)?;

    let split = split_periods(&log).stage(STAGE)?;
    let eval: Vec<Sequence> = build_sequences(&split, s.max_len)
        .into_iter()
        .filter(|q| q.split != Split::Train)
        .collect();
    let oracles = generate_oracles(&eval, &table, &sim).stage(STAGE)?;
    let oracle_path = s.path("oracles.bin");
    save_oracles(&oracle_path, &oracles).stage(STAGE)?;

    let cfg_path = s.path("sim_config.json");
    write_json(STAGE, &cfg_path, &sim)?;

    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    m.param("sim", &sim).param("max_len", s.max_len);
    for p in [&inter, &items, &emb_path, &oracle_path, &cfg_path] {
        m.output(p)?;
    }
    m.write()?;
    println!(
        "simulated {} items, {} events, {} oracles",
        log.num_items(),
        log.num_events(),
        oracles.len()
    );
    Ok(())
}

pub(super) fn ingest(
    s: &Settings,
    interactions: Option<&Path>,
    items: Option<&Path>,
    movielens: bool,
    min_genre_interactions: u64,
) -> Result<(), CliError> {
    const STAGE: &str = "ingest";
    let inter_in = interactions
        .map(Path::to_path_buf)
        .or_else(|| s.interactions.clone())
        .unwrap_or_else(|| s.path("raw_interactions.tsv"));
    let items_in = items
        .map(Path::to_path_buf)
        .or_else(|| s.items.clone())
        .unwrap_or_else(|| s.path("raw_items.tsv"));
    require(STAGE, &inter_in)?;
    require(STAGE, &items_in)?;
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    m.input(&inter_in)?.input(&items_in)?;

    let raw = if movielens {
        ingest_movielens(&inter_in, &items_in)
    } else {
        ingest_tsv(&inter_in, &items_in)
    }
    .stage(STAGE)?;
    let log = filter_rare_genres(&raw, min_genre_interactions);

    let (inter_out, items_out) = (s.path("interactions.tsv"), s.path("items.tsv"));
    log.write_tsv(&inter_out, &items_out).stage(STAGE)?;
    let stats_path = s.path("ingest_stats.json");
    write_json(
        STAGE,
        &stats_path,
        &json!({
            "raw_items": raw.num_items(),
            "raw_events": raw.num_events(),
            "items": log.num_items(),
            "events": log.num_events(),
            "users": log.num_users(),
            "min_genre_interactions": min_genre_interactions,
        }),
    )?;
    m.param("movielens", movielens)
        .param("min_genre_interactions", min_genre_interactions);
    m.output(&inter_out)?.output(&items_out)?.output(&stats_path)?;
    m.write()?;
    println!("ingested {} items, {} events", log.num_items(), log.num_events());
    Ok(())
}

fn load_log(stage: &str, s: &Settings, m: &mut ManifestBuilder<'_>) -> Result<InteractionLog, CliError> {
    let inter = require(stage, &s.path("interactions.tsv"))?;
    let items = require(stage, &s.path("items.tsv"))?;
    m.input(&inter)?.input(&items)?;
    ingest_tsv(&inter, &items).stage(stage)
}

pub(super) fn split(s: &Settings) -> Result<(), CliError> {
    const STAGE: &str = "split";
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let log = load_log(STAGE, s, &mut m)?;
    let periods = split_periods(&log).stage(STAGE)?;
    let sequences = build_sequences(&periods, s.max_len);
    let train: Vec<Sequence> = sequences.iter().filter(|q| q.split == Split::Train).cloned().collect();
    let draw = draw_training_sample(&train, s.sample_size, s.seed);

    let seq_path = s.path("sequences.jsonl");
    write_sequences(&seq_path, &sequences).stage(STAGE)?;
    let sample_path = s.path("train_sample.jsonl");
    write_sequences(&sample_path, &draw.sequences).stage(STAGE)?;

    let count = |sp: Split| sequences.iter().filter(|q| q.split == sp).count();
    let stats_path = s.path("split_stats.json");
    write_json(
        STAGE,
        &stats_path,
        &json!({
            "events": {
                "train": periods.count(Split::Train),
                "validation": periods.count(Split::Validation),
                "test": periods.count(Split::Test),
            },
            "period_sizes": periods.periods().iter().map(Vec::len).collect::<Vec<_>>(),
            "sequences": {
                "train": count(Split::Train),
                "validation": count(Split::Validation),
                "test": count(Split::Test),
            },
            "train_sample": draw.sequences.len(),
        }),
    )?;
    m.param("max_len", s.max_len).param("sample_size", s.sample_size);
    m.output(&seq_path)?.output(&sample_path)?.output(&stats_path)?;
    m.write()?;
    println!(
        "{} sequences, training sample of {}",
        sequences.len(),
        draw.sequences.len()
    );
    Ok(())
}

pub(super) fn group(s: &Settings) -> Result<(), CliError> {
    const STAGE: &str = "group";
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let scheme = match &s.scheme {
        SchemeChoice::Popularity => {
            let log = load_log(STAGE, s, &mut m)?;
            popularity_scheme(&log, s.popularity_basis, s.popularity_groups).stage(STAGE)?
        }
        SchemeChoice::Genre => genre_scheme(&load_log(STAGE, s, &mut m)?),
        SchemeChoice::Custom(path) => {
            require(STAGE, path)?;
            m.input(path)?;
            GroupScheme::load(path).stage(STAGE)?
        }
    };
    let out = s.path("scheme.json");
    scheme.save(&out).stage(STAGE)?;
    m.param("scheme", s.scheme.label())
        .param("popularity_basis", s.popularity_basis)
        .param("popularity_groups", s.popularity_groups);
    m.output(&out)?;
    m.write()?;
    println!("scheme `{}` with {} groups", scheme.name(), scheme.num_groups());
    Ok(())
}

fn embeddings_path(s: &Settings) -> PathBuf {
    s.embeddings.clone().unwrap_or_else(|| s.path("embeddings.bin"))
}

fn oracles_path(s: &Settings) -> PathBuf {
    s.oracles.clone().unwrap_or_else(|| s.path("oracles.bin"))
}

fn load_vectors(
    stage: &str,
    s: &Settings,
    m: &mut ManifestBuilder<'_>,
) -> Result<(EmbeddingTable, Vec<OracleEmbedding>), CliError> {
    let emb = require(stage, &embeddings_path(s))?;
    let orc = require(stage, &oracles_path(s))?;
    m.input(&emb)?.input(&orc)?;
    Ok((
        EmbeddingTable::load(&emb).stage(stage)?,
        load_oracles(&orc).stage(stage)?,
    ))
}

pub(super) fn ground(s: &Settings) -> Result<(), CliError> {
    const STAGE: &str = "ground";
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let (table, oracles) = load_vectors(STAGE, s, &mut m)?;
    let slates = ground_batch(&table, &oracles, s.max_k()).stage(STAGE)?;
    let out = s.path("slates.jsonl");
    write_slates(&out, &slates).stage(STAGE)?;
    m.param("k", s.max_k());
    m.output(&out)?;
    m.write()?;
    println!("grounded {} oracles at k = {}", slates.len(), s.max_k());
    Ok(())
}

fn load_sequences(stage: &str, s: &Settings, m: &mut ManifestBuilder<'_>) -> Result<Vec<Sequence>, CliError> {
    let p = require(stage, &s.path("sequences.jsonl"))?;
    m.input(&p)?;
    read_sequences(&p).stage(stage)
}

fn load_scheme(stage: &str, s: &Settings, m: &mut ManifestBuilder<'_>) -> Result<GroupScheme, CliError> {
    let p = require(stage, &s.path("scheme.json"))?;
    m.input(&p)?;
    GroupScheme::load(&p).stage(stage)
}

/// Checks the algebraic invariants every report must satisfy.
pub(super) fn check_report(stage: &str, r: &FairnessReport) -> Result<(), CliError> {
    let sum: f64 = r.gu.values().sum();
    let n = r.gu.len() as f64;
    let tol = 1e-9;
    let ordered = r.mgu >= 0.0 && r.mgu <= r.dgu + tol && (r.gu.len() < 2 || r.dgu <= n * r.mgu + tol);
    if sum.abs() > tol || !ordered {
        return Err(CliError::internal(
            stage,
            format!(
                "report at k = {} breaks GU invariants (sum {sum:e}, mgu {}, dgu {})",
                r.k, r.mgu, r.dgu
            ),
        ));
    }
    Ok(())
}

pub(super) fn evaluate(s: &Settings, slates: Option<&Path>, method: &str, split: &str) -> Result<(), CliError> {
    const STAGE: &str = "evaluate";
    let which: Split = split.parse().stage(STAGE)?;
    if method.is_empty()
        || !method
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        return Err(CliError::validation(
            STAGE,
            format!("method `{method}` must be alphanumeric"),
        ));
    }
    let mut m = ManifestBuilder::new(&format!("{STAGE}_{method}"), s.seed, &s.out_dir);
    let slate_path = require(
        STAGE,
        &slates.map(Path::to_path_buf).unwrap_or_else(|| s.path("slates.jsonl")),
    )?;
    m.input(&slate_path)?;
    let all_slates = read_slates(&slate_path).stage(STAGE)?;
    let sequences = load_sequences(STAGE, s, &mut m)?;
    let scheme = load_scheme(STAGE, s, &mut m)?;

    let by_id: HashMap<&str, &Sequence> = sequences.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut picked: Vec<Slate> = Vec::new();
    let mut seqs: Vec<&Sequence> = Vec::new();
    for slate in all_slates {
        let Some(q) = by_id.get(slate.sequence_ref.as_str()) else {
            return Err(CliError::validation(
                STAGE,
                format!("slate for unknown sequence `{}`", slate.sequence_ref),
            ));
        };
        if q.split == which {
            seqs.push(q);
            picked.push(slate);
        }
    }
    if picked.is_empty() {
        return Err(CliError::validation(STAGE, format!("no slates for the {which} split")));
    }
    let targets: Vec<String> = seqs.iter().map(|q| q.target.clone()).collect();
    let reports = evaluate_reports(
        &picked,
        seqs.iter().map(|q| q.history.as_slice()),
        &targets,
        &scheme,
        &s.ks,
    )
    .stage(STAGE)?;
    for r in &reports {
        check_report(STAGE, r)?;
    }

    let json_path = s.path(&format!("eval_{method}.json"));
    write_json(
        STAGE,
        &json_path,
        &json!({ "method": method, "split": which, "reports": reports }),
    )?;
    let mut csv = String::new();
    for (i, r) in reports.iter().enumerate() {
        let body = r.csv();
        csv.push_str(if i == 0 {
            &body
        } else {
            body.split_once('\n').map_or("", |(_, rest)| rest)
        });
    }
    let csv_path = s.path(&format!("eval_{method}.csv"));
    write_text(STAGE, &csv_path, &csv)?;
    m.param("method", method).param("split", which).param("k", &s.ks);
    m.output(&json_path)?.output(&csv_path)?;
    m.write()?;
    for r in &reports {
        println!(
            "{method} k={:<3} MGU={:.4} DGU={:.4} NDCG={:.4} HR={:.4}",
            r.k, r.mgu, r.dgu, r.ndcg, r.hr
        );
    }
    Ok(())
}

pub(super) fn reweight(s: &Settings) -> Result<(), CliError> {
    const STAGE: &str = "reweight";
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let p = require(STAGE, &s.path("train_sample.jsonl"))?;
    m.input(&p)?;
    let sample = read_sequences(&p).stage(STAGE)?;
    let scheme = load_scheme(STAGE, s, &mut m)?;
    let table = WeightTable::build(&sample, &scheme).stage(STAGE)?;
    if let Some((r, w)) = table.sample_weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(CliError::internal(STAGE, format!("weight for `{r}` is {w}")));
    }
    let out = s.path("weights.tsv");
    table.write_tsv(&out, s.seed).stage(STAGE)?;
    m.output(&out)?;
    m.write()?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    for (g, w) in &table.group_weights {
        println!("group {g}: weight {w:.4}");
    }
    Ok(())
}

/// Oracles of `split` with their sequences, in oracle-file order.
fn oracles_for<'a>(
    stage: &str,
    oracles: &[OracleEmbedding],
    by_id: &HashMap<&str, &'a Sequence>,
    split: Split,
) -> Result<(Vec<OracleEmbedding>, Vec<&'a Sequence>), CliError> {
    let mut picked = Vec::new();
    let mut seqs = Vec::new();
    for o in oracles {
        let q = by_id
            .get(o.sequence_ref.as_str())
            .ok_or_else(|| CliError::validation(stage, format!("oracle for unknown sequence `{}`", o.sequence_ref)))?;
        if q.split == split {
            picked.push(o.clone());
            seqs.push(*q);
        }
    }
    if picked.is_empty() {
        return Err(CliError::validation(stage, format!("no oracles for the {split} split")));
    }
    Ok((picked, seqs))
}

pub(super) fn rerank(s: &Settings) -> Result<(), CliError> {
    const STAGE: &str = "rerank";
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let (table, oracles) = load_vectors(STAGE, s, &mut m)?;
    let sequences = load_sequences(STAGE, s, &mut m)?;
    let scheme = load_scheme(STAGE, s, &mut m)?;
    let by_id: HashMap<&str, &Sequence> = sequences.iter().map(|q| (q.id.as_str(), q)).collect();

    let (val_oracles, val_seqs) = oracles_for(STAGE, &oracles, &by_id, Split::Validation)?;
    let val_slates = ground_batch(&table, &val_oracles, s.rerank.max_k()).stage(STAGE)?;
    let punishment = PunishmentTable::from_validation(
        &val_slates,
        val_seqs.iter().map(|q| q.history.as_slice()),
        &scheme,
        &s.rerank,
    )
    .stage(STAGE)?;
    if punishment.normalized.values().any(|u| !(-1.0..=1.0).contains(u)) {
        return Err(CliError::internal(STAGE, "normalized punishment outside [-1, 1]"));
    }
    let k = s.max_k().max(s.rerank.max_k());
    let slates = rerank_batch(&table, &oracles, &punishment, &s.rerank, k).stage(STAGE)?;

    let table_path = s.path("punishment.json");
    punishment.save(&table_path).stage(STAGE)?;
    let slate_path = s.path("slates_rerank.jsonl");
    write_slates(&slate_path, &slates).stage(STAGE)?;
    m.param("alpha", s.rerank.alpha)
        .param("k_set", &s.rerank.k_set)
        .param("epsilon", s.rerank.epsilon)
        .param("k", k);
    m.output(&table_path)?.output(&slate_path)?;
    m.write()?;
    println!("reranked {} oracles at alpha = {}", slates.len(), s.rerank.alpha);
    Ok(())
}

pub(super) fn sweep(s: &Settings) -> Result<(), CliError> {
    const STAGE: &str = "sweep";
    let mut m = ManifestBuilder::new(STAGE, s.seed, &s.out_dir);
    let (table, oracles) = load_vectors(STAGE, s, &mut m)?;
    let sequences = load_sequences(STAGE, s, &mut m)?;
    let scheme = load_scheme(STAGE, s, &mut m)?;
    let by_id: HashMap<&str, &Sequence> = sequences.iter().map(|q| (q.id.as_str(), q)).collect();
    let (val_oracles, val_seqs) = oracles_for(STAGE, &oracles, &by_id, Split::Validation)?;
    let eval = EvalSet {
        oracles: &val_oracles,
        targets: val_seqs.iter().map(|q| &q.target).collect(),
        histories: val_seqs.iter().map(|q| q.history.as_slice()).collect(),
    };
    let result = sweep_alpha(&table, &eval, &scheme, &s.rerank, &s.alphas).stage(STAGE)?;
    for row in std::iter::once(&result.baseline).chain(&result.rows) {
        for r in &row.reports {
            check_report(STAGE, r)?;
        }
    }
    let csv_path = s.path("sweep.csv");
    write_text(STAGE, &csv_path, &result.csv())?;
    let json_path = s.path("sweep.json");
    write_json(STAGE, &json_path, &result)?;
    m.param("alphas", &s.alphas).param("k_set", &s.rerank.k_set);
    m.output(&csv_path)?.output(&json_path)?;
    m.write()?;
    let k_max = s.rerank.max_k();
    for row in &result.rows {
        if let Some(r) = row.at(k_max) {
            println!("alpha={:<5} MGU@{k_max}={:.4}", row.alpha, r.mgu);
        }
    }
    match result.selected_alpha {
        Some(a) => println!("selected alpha = {a}"),
        None => println!("no alpha satisfies the accuracy bound"),
    }
    Ok(())
}
