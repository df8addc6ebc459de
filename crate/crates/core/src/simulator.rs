//! Synthetic interaction logs, item embeddings and popularity-biased oracle
//! embeddings.
//!
//! The biased oracle stands in for a generative recommender that drifts
//! toward popular items: with probability `oracle_bias` it lands next to an
//! item drawn by popularity instead of next to the true target.

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Event, InteractionLog, ItemMeta, Sequence};
use crate::grounding::{EmbeddingTable, OracleEmbedding};
use crate::{Error, Id, Result};

const STREAM_POPULARITY: u64 = 0x706f_7075;
const STREAM_LOG: u64 = 0x6c6f_6773;
const STREAM_EMBED: u64 = 0x656d_6264;
const STREAM_ORACLE: u64 = 0x6f72_636c;

/// Probability that an item carries a second genre.
const SECOND_GENRE_P: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_items: usize,
    pub n_users: usize,
    pub n_events: usize,
    pub n_genres: usize,
    pub embed_dim: usize,
    /// Item draw weight is `rank^(-popularity_exponent)`.
    pub popularity_exponent: f64,
    /// Probability an oracle lands on a popularity-drawn item.
    pub oracle_bias: f64,
    /// Per-component Gaussian noise around genre centroids.
    pub noise_sigma: f64,
    /// Per-component Gaussian noise added to every oracle.
    pub oracle_noise: f64,
    /// Biased draws use `weight^bias_sharpness`; values above 1 concentrate
    /// them on the head of the popularity curve.
    pub bias_sharpness: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_items: 5_000,
            n_users: 5_000,
            n_events: 250_000,
            n_genres: 18,
            embed_dim: 16,
            popularity_exponent: 1.0,
            oracle_bias: 0.8,
            noise_sigma: 0.3,
            oracle_noise: 0.02,
            bias_sharpness: 2.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_items", self.n_items),
            ("n_users", self.n_users),
            ("n_events", self.n_events),
            ("n_genres", self.n_genres),
            ("embed_dim", self.embed_dim),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        let non_negative = [
            ("popularity_exponent", self.popularity_exponent),
            ("noise_sigma", self.noise_sigma),
            ("oracle_noise", self.oracle_noise),
            ("bias_sharpness", self.bias_sharpness),
        ];
        if let Some((name, v)) = non_negative.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
        }
        if !(0.0..=1.0).contains(&self.oracle_bias) {
            return Err(Error::InvalidConfig(format!(
                "oracle_bias must be in [0, 1], got {}",
                self.oracle_bias
            )));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

pub fn item_id(i: usize) -> Id {
    format!("i{i:06}")
}

pub fn user_id(u: usize) -> Id {
    format!("u{u:06}")
}

pub fn genre_label(g: usize) -> String {
    format!("g{g:02}")
}

/// Draw weight per item index. Popularity ranks are a seeded permutation
/// of the items, so id order says nothing about popularity.
pub fn popularity_weights(config: &SimConfig) -> Vec<f64> {
    let mut rng = config.rng(STREAM_POPULARITY);
    let mut ranks: Vec<usize> = (1..=config.n_items).collect();
    ranks.shuffle(&mut rng);
    ranks
        .into_iter()
        .map(|r| (r as f64).powf(-config.popularity_exponent))
        .collect()
}

/// Items with one or two genres, users interacting with popularity-drawn
/// items at strictly increasing timestamps.
pub fn generate_log(config: &SimConfig) -> Result<InteractionLog> {
    config.validate()?;
    let mut rng = config.rng(STREAM_LOG);

    let mut items = IndexMap::with_capacity(config.n_items);
    for i in 0..config.n_items {
        let first = rng.random_range(0..config.n_genres);
        let mut genres = vec![genre_label(first)];
        if config.n_genres > 1 && rng.random_bool(SECOND_GENRE_P) {
            let mut second = rng.random_range(0..config.n_genres - 1);
            if second >= first {
                second += 1;
            }
            genres.push(genre_label(second));
        }
        items.insert(item_id(i), ItemMeta::new(format!("Item {i}"), genres));
    }

    let weights = popularity_weights(config);
    let draw = WeightedIndex::new(&weights).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let events = (0..config.n_events)
        .map(|e| Event {
            user: user_id(rng.random_range(0..config.n_users)),
            item: item_id(draw.sample(&mut rng)),
            timestamp: e as u64 * 60,
        })
        .collect();
    InteractionLog::new(events, items)
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative")
}

/// One random unit centroid per genre; each item sits at the mean of its
/// genres' centroids plus isotropic noise.
pub fn generate_embeddings(log: &InteractionLog, config: &SimConfig) -> Result<EmbeddingTable> {
    config.validate()?;
    let mut rng = config.rng(STREAM_EMBED);
    let unit = gaussian(1.0);

    let mut labels: Vec<&str> = log
        .items()
        .values()
        .flat_map(|m| m.genres.iter().map(String::as_str))
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let centroids: IndexMap<&str, Vec<f64>> = labels
        .into_iter()
        .map(|g| {
            let mut v: Vec<f64> = (0..config.embed_dim).map(|_| unit.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|x| *x /= norm);
            (g, v)
        })
        .collect();

    let noise = gaussian(config.noise_sigma);
    let entries = log
        .items()
        .iter()
        .map(|(id, meta)| {
            let mut v = vec![0.0f64; config.embed_dim];
            for g in &meta.genres {
                for (x, c) in v.iter_mut().zip(&centroids[g.as_str()]) {
                    *x += c;
                }
            }
            let n = meta.genres.len().max(1) as f64;
            let v: Vec<f32> = v.into_iter().map(|x| (x / n + noise.sample(&mut rng)) as f32).collect();
            (id.clone(), v)
        })
        .collect();
    EmbeddingTable::new(config.embed_dim, entries)
}

/// One oracle per sequence, in input order.
pub fn generate_oracles(
    sequences: &[Sequence],
    table: &EmbeddingTable,
    config: &SimConfig,
) -> Result<Vec<OracleEmbedding>> {
    config.validate()?;
    if table.dim() != config.embed_dim {
        return Err(Error::InvalidConfig(format!(
            "table dim {} differs from embed_dim {}",
            table.dim(),
            config.embed_dim
        )));
    }
    let mut rng = config.rng(STREAM_ORACLE);
    let biased: Vec<f64> = popularity_weights(config)
        .into_iter()
        .map(|w| w.powf(config.bias_sharpness))
        .collect();
    let draw = WeightedIndex::new(&biased).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let noise = gaussian(config.oracle_noise);

    sequences
        .iter()
        .map(|s| {
            let anchor = if rng.random_bool(config.oracle_bias) {
                let id = item_id(draw.sample(&mut rng));
                table.get(&id).ok_or(Error::MissingEmbedding(id))?
            } else {
                table
                    .get(&s.target)
                    .ok_or_else(|| Error::MissingEmbedding(s.target.clone()))?
            };
            let v = anchor
                .iter()
                .map(|&x| (f64::from(x) + noise.sample(&mut rng)) as f32)
                .collect();
            Ok(OracleEmbedding::new(s.id.clone(), v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small() -> SimConfig {
        SimConfig {
            n_items: 50,
            n_users: 20,
            n_events: 2_000,
            n_genres: 4,
            embed_dim: 8,
            ..SimConfig::default()
        }
    }

    #[test]
    fn log_is_deterministic_and_well_formed() {
        let c = small();
        let a = generate_log(&c).unwrap();
        assert_eq!(a, generate_log(&c).unwrap());
        assert_eq!(a.num_items(), 50);
        assert_eq!(a.num_events(), 2_000);
        assert!(a.items().values().all(|m| (1..=2).contains(&m.genres.len())));
        assert!(a.events().windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn single_genre() {
        let c = SimConfig { n_genres: 1, ..small() };
        let log = generate_log(&c).unwrap();
        assert!(log.items().values().all(|m| m.genres == vec!["g00".to_string()]));
    }

    #[test]
    fn uniform_popularity_gives_uniform_frequencies() {
        let c = SimConfig {
            n_items: 20,
            n_events: 100_000,
            popularity_exponent: 0.0,
            ..small()
        };
        let log = generate_log(&c).unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in log.events() {
            *counts.entry(e.item.as_str()).or_default() += 1;
        }
        let p: f64 = 1.0 / 20.0;
        let n = 100_000.0;
        let se = (n * p * (1.0 - p)).sqrt();
        assert_eq!(counts.len(), 20);
        for (item, c) in counts {
            assert!((c as f64 - n * p).abs() <= 3.0 * se, "{item}: {c}");
        }
    }

    #[test]
    fn zero_noise_shares_vectors_within_genre() {
        let c = SimConfig {
            noise_sigma: 0.0,
            ..small()
        };
        let log = generate_log(&c).unwrap();
        let t = generate_embeddings(&log, &c).unwrap();
        let mut by_genre: HashMap<&str, &[f32]> = HashMap::new();
        for (id, meta) in log.items() {
            if meta.genres.len() == 1 {
                let v = t.get(id).unwrap();
                let prev = by_genre.entry(meta.genres[0].as_str()).or_insert(v);
                assert_eq!(*prev, v);
            }
        }
        assert!(t.entries().all(|(_, v)| v.len() == c.embed_dim));
    }

    #[test]
    fn seeds_change_tables() {
        let c = small();
        let log = generate_log(&c).unwrap();
        let a = generate_embeddings(&log, &c).unwrap();
        let b = generate_embeddings(&log, &SimConfig { seed: 7, ..c.clone() }).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, generate_embeddings(&log, &c).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { n_items: 0, ..small() }.validate().is_err());
        assert!(SimConfig {
            oracle_bias: 1.5,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            noise_sigma: -1.0,
            ..small()
        }
        .validate()
        .is_err());
    }
}
