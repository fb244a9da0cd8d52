//! Steady-state genetic programming over the record-machine node set.

mod evolve;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{decode, decode_windows, AllocationPlan, BoundedVector};
use crate::dataset::{Dataset, SlotIndex};
use crate::par::{self, Exec};
use crate::simulator::{fitness, Model, Scratch, SimError, Simulator};

pub use evolve::{crossover, evolve_pir, mutate, ramped_population, random_tree, record_plan, PirStats};
pub use tree::{
    eval_tree, genotype_to_vector, EvalState, GpNode, GpTree, NodeKind, TraceStep, TreeError, DIVIDE_GUARD,
    ZERO_RECORD_VALUE,
};

pub const DEFAULT_W_C: f64 = 0.65;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("population must be at least 4, got {0}")]
    Population(usize),
    #[error("budget must be positive")]
    Budget,
    #[error("{0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Partial,
    Full,
}

/// Search and experiment parameters. Every field has a default, so a config
/// file only needs the values it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population: usize,
    /// Offspring per run, seeding phase included.
    pub budget: u64,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub kill_tournament_size: usize,
    pub max_tree_size: usize,
    pub init_depth: usize,
    pub mutation_depth: usize,
    /// Vector length every member must reach before real fitness is used.
    pub seeding_target: Option<usize>,
    pub w_c: f64,
    pub model: ModelKind,
    pub s: u32,
    pub q: u32,
    /// Age-group priors such as `"20=0.01;40=0.03"`; the dataset's own
    /// priors are used when absent.
    pub priors: Option<String>,
    pub pirs: usize,
    /// One seed per run; missing seeds are derived from `base_seed`.
    pub seeds: Vec<u64>,
    pub base_seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population: 200,
            budget: 20_000,
            crossover_rate: 0.8,
            tournament_size: 4,
            kill_tournament_size: 2,
            max_tree_size: 2000,
            init_depth: 6,
            mutation_depth: 4,
            seeding_target: None,
            w_c: DEFAULT_W_C,
            model: ModelKind::Partial,
            s: 4,
            q: 5,
            priors: None,
            pirs: 4,
            seeds: Vec::new(),
            base_seed: 1,
        }
    }
}

impl GpConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: GpConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.population < 4 {
            return Err(ConfigError::Population(self.population));
        }
        if self.budget == 0 {
            return Err(ConfigError::Budget);
        }
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must lie in [0, 1]");
        }
        if self.tournament_size == 0 || self.kill_tournament_size == 0 {
            return bad("tournament sizes must be positive");
        }
        if self.kill_tournament_size >= self.population {
            return bad("kill tournament must be smaller than the population");
        }
        if self.max_tree_size == 0 || self.init_depth == 0 || self.mutation_depth == 0 {
            return bad("tree limits must be positive");
        }
        if !(0.0..=1.0).contains(&self.w_c) {
            return bad("w_c must lie in [0, 1]");
        }
        if self.model == ModelKind::Partial && self.s < 2 {
            return bad("s must be at least 2");
        }
        if self.model == ModelKind::Full && self.q < 1 {
            return bad("q must be at least 1");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        Ok(())
    }

    /// `pirs` seeds: the explicit list first, then `base_seed, base_seed+1, …`
    /// skipping values already used.
    pub fn run_seeds(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.seeds.iter().copied().take(self.pirs).collect();
        let mut next = self.base_seed;
        while out.len() < self.pirs {
            if !out.contains(&next) {
                out.push(next);
            }
            next = next.wrapping_add(1);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n_h: u32,
    pub n_d: u32,
    pub fitness: f64,
}

/// Per-thread buffers for scoring.
#[derive(Default)]
pub struct Workspace {
    pub(crate) machine: EvalState,
    scratch: Scratch,
    slots: Vec<SlotIndex>,
}

/// Scores solution vectors against one dataset and model.
pub struct Evaluator<'a> {
    sim: Simulator<'a>,
    w_c: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(ds: &'a Dataset, model: &Model, w_c: f64) -> Result<Self, SimError> {
        Ok(Evaluator {
            sim: Simulator::new(ds, model)?,
            w_c,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.sim.dataset()
    }

    pub fn simulator(&self) -> &Simulator<'a> {
        &self.sim
    }

    pub fn w_c(&self) -> f64 {
        self.w_c
    }

    pub fn score(&self, vector: &[f64], ws: &mut Workspace) -> Score {
        decode_windows(vector, self.sim.windows(), &mut ws.slots);
        let (n_h, n_d) = self.sim.evaluate(&ws.slots, &mut ws.scratch);
        Score {
            n_h,
            n_d,
            fitness: fitness(n_h, n_d, self.w_c),
        }
    }

    pub fn score_plan(&self, plan: &AllocationPlan) -> Result<Score, SimError> {
        plan.validate(self.dataset())?;
        let (n_h, n_d) = self.sim.evaluate(plan.slots(), &mut Scratch::default());
        Ok(Score {
            n_h,
            n_d,
            fitness: fitness(n_h, n_d, self.w_c),
        })
    }
}

/// An improved solution found by one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub pir_id: usize,
    pub seed: u64,
    /// Offspring produced by the run when this record was found.
    pub offspring: u64,
    pub fitness: f64,
    pub n_h: u32,
    pub n_d: u32,
    pub plan_digest: String,
    pub tree_size: usize,
    pub tree: String,
    pub vector: BoundedVector,
}

impl SolutionRecord {
    fn new(
        eval: &Evaluator<'_>,
        vector: BoundedVector,
        score: Score,
        tree: &GpTree,
        pir_id: usize,
        seed: u64,
        offspring: u64,
    ) -> Self {
        SolutionRecord {
            pir_id,
            seed,
            offspring,
            fitness: score.fitness,
            n_h: score.n_h,
            n_d: score.n_d,
            plan_digest: decode(&vector, eval.dataset()).digest(),
            tree_size: tree.len(),
            tree: tree.to_string(),
            vector,
        }
    }

    pub fn plan(&self, ds: &Dataset) -> AllocationPlan {
        decode(&self.vector, ds)
    }

    /// True if `self` is no worse on both counts and better on one.
    pub fn dominates(&self, other: &SolutionRecord) -> bool {
        self.n_d <= other.n_d && self.n_h <= other.n_h && (self.n_d < other.n_d || self.n_h < other.n_h)
    }
}

/// Every record from every run, best first, plus the non-dominated set over
/// `(N_D, N_H)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Archive {
    pub ranked: Vec<SolutionRecord>,
    pub pareto: Vec<SolutionRecord>,
    pub stats: Vec<PirStats>,
}

impl Archive {
    pub fn from_records(mut records: Vec<SolutionRecord>) -> Self {
        records.sort_by(|a, b| {
            b.fitness
                .total_cmp(&a.fitness)
                .then(a.n_d.cmp(&b.n_d))
                .then(a.pir_id.cmp(&b.pir_id))
                .then(a.offspring.cmp(&b.offspring))
        });
        let pareto = records
            .iter()
            .filter(|r| !records.iter().any(|o| o.dominates(r)))
            .cloned()
            .collect();
        Archive {
            ranked: records,
            pareto,
            stats: Vec::new(),
        }
    }

    pub fn best(&self) -> Option<&SolutionRecord> {
        self.ranked.first()
    }
}

/// Independent runs, one per seed, merged into one archive. The archive
/// does not depend on `exec` or on scheduling.
pub fn run_pirs(eval: &Evaluator<'_>, config: &GpConfig, seeds: &[u64], exec: Exec) -> Result<Archive, ConfigError> {
    config.validate()?;
    let ids: Vec<(usize, u64)> = seeds.iter().copied().enumerate().collect();
    let runs = par::map_slice(exec, &ids, |&(pir, seed)| {
        let mut records = Vec::new();
        evolve_pir(eval, config, pir, seed, &mut |r| records.push(r)).map(|(_, stats)| (records, stats))
    });
    let mut all = Vec::new();
    let mut stats = Vec::new();
    for run in runs {
        let (records, s) = run?;
        all.extend(records);
        stats.push(s);
    }
    let mut archive = Archive::from_records(all);
    archive.stats = stats;
    Ok(archive)
}
