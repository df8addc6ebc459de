#![allow(dead_code)]

use indexmap::IndexMap;
use itemfair::grounding::{EmbeddingTable, OracleEmbedding};
use itemfair::grouping::GroupScheme;
use itemfair::metrics::Slate;
use itemfair::Id;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn item(i: usize) -> Id {
    format!("it{i:03}")
}

/// A random metric instance: membership matrix, histories and slates.
#[derive(Debug, Clone)]
pub struct MetricCase {
    pub n_items: usize,
    pub labels: Vec<String>,
    /// `member[i][g]` is true when item `i` belongs to group `g`.
    pub member: Vec<Vec<bool>>,
    pub histories: Vec<Vec<Id>>,
    pub slates: Vec<Slate>,
    pub k: usize,
}

impl MetricCase {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let n_items = r.random_range(1..=20);
        let n_groups = r.random_range(1..=4);
        let labels: Vec<String> = (0..n_groups).map(|g| format!("G{g}")).collect();
        let member: Vec<Vec<bool>> = (0..n_items)
            .map(|_| (0..n_groups).map(|_| r.random_bool(0.45)).collect())
            .collect();
        let list = |r: &mut ChaCha8Rng, len: usize| -> Vec<Id> {
            (0..len).map(|_| item(r.random_range(0..n_items))).collect()
        };
        let histories = (0..r.random_range(1..=10))
            .map(|_| {
                let len = r.random_range(1..=10);
                list(r, len)
            })
            .collect();
        let k = r.random_range(1..=8);
        let slates = (0..r.random_range(1..=10))
            .map(|s| {
                let len = r.random_range(1..=k);
                Slate::new(format!("s{s}"), list(r, len))
            })
            .collect();
        Self {
            n_items,
            labels,
            member,
            histories,
            slates,
            k,
        }
    }

    pub fn scheme(&self) -> GroupScheme {
        let mut members: IndexMap<String, Vec<Id>> = IndexMap::new();
        for (g, label) in self.labels.iter().enumerate() {
            let ids = (0..self.n_items).filter(|&i| self.member[i][g]).map(item).collect();
            members.insert(label.clone(), ids);
        }
        GroupScheme::from_members("case", members)
    }

    fn index(id: &str) -> usize {
        id[2..].parse().expect("generated id")
    }

    fn counts<'a>(&self, lists: impl Iterator<Item = &'a [Id]>) -> Vec<i64> {
        let mut c = vec![0i64; self.labels.len()];
        for list in lists {
            for id in list {
                for (g, slot) in c.iter_mut().enumerate() {
                    if self.member[Self::index(id)][g] {
                        *slot += 1;
                    }
                }
            }
        }
        c
    }

    /// Exact proportions by direct counting, `None` when nothing is grouped.
    pub fn naive_gh(&self) -> Option<Vec<Ratio<i64>>> {
        proportions(self.counts(self.histories.iter().map(Vec::as_slice)))
    }

    pub fn naive_gp(&self, k: usize) -> Option<Vec<Ratio<i64>>> {
        proportions(self.counts(self.slates.iter().map(|s| &s.items[..k.min(s.items.len())])))
    }
}

fn proportions(counts: Vec<i64>) -> Option<Vec<Ratio<i64>>> {
    let total: i64 = counts.iter().sum();
    (total > 0).then(|| counts.into_iter().map(|c| Ratio::new(c, total)).collect())
}

pub fn naive_mgu(gu: &[Ratio<i64>]) -> Ratio<i64> {
    let n = gu.len() as i64;
    gu.iter()
        .map(|v| if *v < Ratio::from_integer(0) { -v } else { *v })
        .sum::<Ratio<i64>>()
        / n
}

pub fn naive_dgu(gu: &[Ratio<i64>]) -> Ratio<i64> {
    let max = gu.iter().max().copied().unwrap_or_default();
    let min = gu.iter().min().copied().unwrap_or_default();
    max - min
}

pub fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Random table whose vectors come from a small integer lattice so exact
/// ties are common, plus explicit duplicated rows.
pub fn lattice_table(r: &mut ChaCha8Rng, min_items: usize, max_items: usize, max_dim: usize) -> EmbeddingTable {
    let n = r.random_range(min_items..=max_items);
    let dim = r.random_range(1..=max_dim);
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(n);
    for _ in 0..n {
        if !rows.is_empty() && r.random_bool(0.2) {
            let j = r.random_range(0..rows.len());
            rows.push(rows[j].clone());
        } else {
            rows.push((0..dim).map(|_| r.random_range(-3i32..=3) as f32).collect());
        }
    }
    let mut ids: Vec<usize> = (0..n).collect();
    // shuffle which id gets which row so duplicates are not adjacent by id
    for i in (1..n).rev() {
        ids.swap(i, r.random_range(0..=i));
    }
    let entries = ids
        .into_iter()
        .zip(rows)
        .map(|(i, v)| (format!("e{i:04}"), v))
        .collect();
    EmbeddingTable::new(dim, entries).expect("valid table")
}

pub fn lattice_oracle(r: &mut ChaCha8Rng, dim: usize) -> OracleEmbedding {
    let v = (0..dim).map(|_| r.random_range(-6i32..=6) as f32 * 0.5).collect();
    OracleEmbedding::new("q", v)
}

/// Brute force: distances from a plain loop, full stable sort by
/// (distance, id).
pub fn brute_force(table: &EmbeddingTable, oracle: &OracleEmbedding, k: usize) -> Vec<Id> {
    let mut scored: Vec<(f64, &Id)> = table
        .entries()
        .map(|(id, v)| {
            let mut d = 0.0f64;
            for (a, b) in v.iter().zip(&oracle.vector) {
                let x = f64::from(*a) - f64::from(*b);
                d += x * x;
            }
            (d, id)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.clone()).collect()
}

pub fn itemfair(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_itemfair"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env_remove("ITEMFAIR_SEED")
        .env_remove("ITEMFAIR_CONFIG")
        .output()
        .expect("binary runs")
}

/// Every stage on a small simulated dataset, panicking on a nonzero exit.
pub fn run_pipeline(dir: &std::path::Path, seed: &str) {
    let sim = ["simulate", "--n-items", "300", "--n-users", "80", "--n-events", "6000"];
    let stages: Vec<Vec<&str>> = vec![
        sim.to_vec(),
        vec!["ingest"],
        vec!["split"],
        vec!["group"],
        vec!["ground"],
        vec!["evaluate"],
        vec!["reweight"],
        vec!["rerank"],
        vec!["evaluate", "--method", "rerank", "--slates", "SLATES"],
        vec!["sweep"],
        vec!["report"],
    ];
    let rerank_slates = dir.join("slates_rerank.jsonl");
    for stage in stages {
        let mut args: Vec<&str> = vec!["--seed", seed];
        args.extend(stage.iter().map(|a| {
            if *a == "SLATES" {
                rerank_slates.to_str().unwrap()
            } else {
                a
            }
        }));
        let out = itemfair(dir, &args);
        assert!(
            out.status.success(),
            "{stage:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
