use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{DEFAULT_MAX_HISTORY, DEFAULT_SAMPLE_SIZE};
use crate::grouping::{PopularityBasis, DEFAULT_POPULARITY_GROUPS};
use crate::pipeline::default_alphas;
use crate::rerank::{RerankConfig, DEFAULT_EPSILON, DEFAULT_K_SET};
use crate::simulator::SimConfig;

use super::{CliError, GlobalArgs};

/// Optional settings read from `--config` (TOML or JSON). Command-line
/// flags and `ITEMFAIR_*` variables take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub oracles: Option<PathBuf>,
    pub scheme: Option<String>,
    pub k: Option<Vec<usize>>,
    pub k_set: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub reweight: Option<bool>,
    pub sample_size: Option<usize>,
    pub max_len: Option<usize>,
    pub min_genre_interactions: Option<u64>,
    pub popularity_basis: Option<PopularityBasis>,
    pub popularity_groups: Option<usize>,
    pub sim: Option<SimConfig>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::missing("config", path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::validation("config", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemeChoice {
    Popularity,
    Genre,
    Custom(PathBuf),
}

impl SchemeChoice {
    fn parse(s: &str) -> Self {
        match s {
            "popularity" => SchemeChoice::Popularity,
            "genre" => SchemeChoice::Genre,
            path => SchemeChoice::Custom(PathBuf::from(path)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchemeChoice::Popularity => "popularity".into(),
            SchemeChoice::Genre => "genre".into(),
            SchemeChoice::Custom(p) => p.display().to_string(),
        }
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub interactions: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub oracles: Option<PathBuf>,
    pub scheme: SchemeChoice,
    pub ks: Vec<usize>,
    pub rerank: RerankConfig,
    pub alphas: Vec<f64>,
    pub reweight: bool,
    pub sample_size: usize,
    pub max_len: usize,
    pub min_genre_interactions: u64,
    pub popularity_basis: PopularityBasis,
    pub popularity_groups: usize,
    pub sim: SimConfig,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let seed = args.seed.or(file.seed).unwrap_or(42);
        let mut sim = file.sim.unwrap_or_default();
        if args.seed.is_some() || file.seed.is_some() {
            sim.seed = seed;
        }
        let settings = Settings {
            seed,
            out_dir: args
                .out_dir
                .clone()
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            interactions: file.interactions,
            items: file.items,
            embeddings: file.embeddings,
            oracles: file.oracles,
            scheme: SchemeChoice::parse(
                args.scheme
                    .as_deref()
                    .or(file.scheme.as_deref())
                    .unwrap_or("popularity"),
            ),
            ks: args.k.clone().or(file.k).unwrap_or_else(|| DEFAULT_K_SET.to_vec()),
            rerank: RerankConfig {
                k_set: args
                    .k_set
                    .clone()
                    .or(file.k_set)
                    .unwrap_or_else(|| DEFAULT_K_SET.to_vec()),
                alpha: args.alpha.or(file.alpha).unwrap_or(RerankConfig::default().alpha),
                epsilon: file.epsilon.unwrap_or(DEFAULT_EPSILON),
            },
            alphas: file.alphas.unwrap_or_else(default_alphas),
            reweight: file.reweight.unwrap_or(true),
            sample_size: file.sample_size.unwrap_or(DEFAULT_SAMPLE_SIZE),
            max_len: file.max_len.unwrap_or(DEFAULT_MAX_HISTORY),
            min_genre_interactions: file.min_genre_interactions.unwrap_or(0),
            popularity_basis: file.popularity_basis.unwrap_or_default(),
            popularity_groups: file.popularity_groups.unwrap_or(DEFAULT_POPULARITY_GROUPS),
            sim,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(CliError::validation("config", "k list must be nonempty and positive"));
        }
        self.rerank
            .validate()
            .map_err(|e| CliError::validation("config", e.to_string()))?;
        if self.max_len == 0 || self.sample_size == 0 {
            return Err(CliError::validation("config", "max_len and sample_size must be >= 1"));
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn max_k(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(1)
    }
}
