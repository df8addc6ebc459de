//! Browser demo over a small simulated catalog: how oracle bias shows up in
//! per-group unfairness, what reranking does to it, and the alpha sweep.
//!
//! [`DemoSession`] is plain Rust; [`Demo`] wraps it for JavaScript and
//! returns JSON strings.

use itemfair::dataset::Split;
use itemfair::grounding::ground_batch;
use itemfair::metrics::FairnessReport;
use itemfair::pipeline::{default_alphas, SimulationRun};
use itemfair::rerank::{PunishmentTable, RerankConfig};
use itemfair::simulator::SimConfig;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const PROFILE_KS: [usize; 4] = [1, 5, 10, 20];

pub fn demo_config(seed: u64, beta: f64) -> SimConfig {
    SimConfig {
        n_items: 1_000,
        n_users: 1_000,
        n_events: 40_000,
        oracle_bias: beta,
        seed,
        ..SimConfig::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupRow {
    pub k: usize,
    pub gu: Vec<f64>,
    pub mgu: f64,
    pub dgu: f64,
    pub ndcg: f64,
}

impl From<&FairnessReport> for GroupRow {
    fn from(r: &FairnessReport) -> Self {
        Self {
            k: r.k,
            gu: r.gu.values().copied().collect(),
            mgu: r.mgu,
            dgu: r.dgu,
            ndcg: r.ndcg,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasProfile {
    pub beta: f64,
    pub groups: Vec<String>,
    pub rows: Vec<GroupRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RerankView {
    pub alpha: f64,
    pub groups: Vec<String>,
    pub punishment: Vec<f64>,
    pub gh: Vec<f64>,
    pub gp_before: Vec<f64>,
    pub gp_after: Vec<f64>,
    pub before: Vec<GroupRow>,
    pub after: Vec<GroupRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub mgu: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepView {
    pub k: usize,
    pub points: Vec<SweepPoint>,
    pub selected: Option<f64>,
}

pub struct DemoSession {
    run: SimulationRun,
    punishment: Option<PunishmentTable>,
}

impl DemoSession {
    pub fn new(seed: u64, beta: f64) -> itemfair::Result<Self> {
        Ok(Self {
            run: SimulationRun::generate(&demo_config(seed, beta))?,
            punishment: None,
        })
    }

    pub fn beta(&self) -> f64 {
        self.run.config.oracle_bias
    }

    fn groups(&self) -> Vec<String> {
        self.run.scheme.groups().to_vec()
    }

    pub fn bias_profile(&self) -> itemfair::Result<BiasProfile> {
        let reports = self.run.baseline(Split::Test, &PROFILE_KS)?;
        Ok(BiasProfile {
            beta: self.beta(),
            groups: self.groups(),
            rows: reports.iter().map(GroupRow::from).collect(),
        })
    }

    fn punishment(&mut self) -> itemfair::Result<&PunishmentTable> {
        if self.punishment.is_none() {
            let cfg = RerankConfig::default();
            let (oracles, seqs) = self.run.oracles_in(Split::Validation);
            let slates = ground_batch(&self.run.embeddings, &oracles, cfg.max_k())?;
            let table = PunishmentTable::from_validation(
                &slates,
                seqs.iter().map(|s| s.history.as_slice()),
                &self.run.scheme,
                &cfg,
            )?;
            self.punishment = Some(table);
        }
        Ok(self.punishment.as_ref().expect("just built"))
    }

    pub fn rerank(&mut self, alpha: f64) -> itemfair::Result<RerankView> {
        let cfg = RerankConfig {
            alpha,
            ..RerankConfig::default()
        };
        cfg.validate()?;
        let table = self.punishment()?.clone();
        let before = self.run.baseline(Split::Test, &cfg.report_ks())?;
        let after = self.run.reranked(Split::Test, &table, &cfg)?;
        let k = cfg.max_k();
        let at = |rs: &[FairnessReport]| rs.iter().find(|r| r.k == k).cloned().expect("max k reported");
        let (b, a) = (at(&before), at(&after));
        Ok(RerankView {
            alpha,
            groups: self.groups(),
            punishment: table.normalized.values().copied().collect(),
            gh: b.gh.values().copied().collect(),
            gp_before: b.gp.values().copied().collect(),
            gp_after: a.gp.values().copied().collect(),
            before: before.iter().map(GroupRow::from).collect(),
            after: after.iter().map(GroupRow::from).collect(),
        })
    }

    pub fn sweep(&self) -> itemfair::Result<SweepView> {
        let cfg = RerankConfig::default();
        let result = self.run.sweep(&cfg, &default_alphas())?;
        let k = cfg.max_k();
        let points = result
            .rows
            .iter()
            .filter_map(|row| {
                Some(SweepPoint {
                    alpha: row.alpha,
                    mgu: row.at(k)?.mgu,
                    ndcg: row.at(5)?.ndcg,
                })
            })
            .collect();
        Ok(SweepView {
            k,
            points,
            selected: result.selected_alpha,
        })
    }
}

fn to_js<T: Serialize>(r: itemfair::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    inner: DemoSession,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, beta: f64) -> Result<Demo, JsError> {
        let inner = DemoSession::new(u64::from(seed), beta).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo { inner })
    }

    #[wasm_bindgen(js_name = biasProfile)]
    pub fn bias_profile(&self) -> Result<String, JsError> {
        to_js(self.inner.bias_profile())
    }

    pub fn rerank(&mut self, alpha: f64) -> Result<String, JsError> {
        to_js(self.inner.rerank(alpha))
    }

    pub fn sweep(&self) -> Result<String, JsError> {
        to_js(self.inner.sweep())
    }
}
