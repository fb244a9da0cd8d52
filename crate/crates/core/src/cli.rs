//! Command-line front end and report writer.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{round_robin, AllocationError, AllocationPlan, Baseline};
use crate::dataset::{
    generate_dataset, mark_apriori_infection, parse_dataset, serialize_dataset, Dataset, DatasetError,
    Priors, SlotIndex, PopulationProfile,
};
use crate::full_infection::{build_pn_table, PnTable, TableError, DEFAULT_ITERATIONS};
use crate::gp::{run_pirs, Archive, ConfigError, Evaluator, GpConfig, ModelKind, SolutionRecord};
use crate::par::Exec;
use crate::simulator::{fitness, Model, SimError, SimOutcome};

/// Fraction of persons marked infected before a standard-model run on a
/// generated dataset (15 of 282).
pub const DEFAULT_INFECTED_FRACTION: f64 = 0.053;
/// Fraction marked immune (6 of 282).
pub const DEFAULT_IMMUNE_FRACTION: f64 = 6.0 / 282.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset digests differ: {0} vs {1}")]
    DigestMismatch(String, String),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `-f` without producing negative zero.
fn neg(f: f64) -> f64 {
    0.0 - f
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, data).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    File(PathBuf),
    Generate(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Apriori {
    pub infected: f64,
    pub immune: f64,
    pub seed: u64,
}

/// Everything needed to reproduce a run. Written to `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    pub apriori: Option<Apriori>,
    pub pn_iterations: u64,
    pub pn_seed: u64,
    pub baselines: Vec<Baseline>,
    /// GP solutions (best first) that get a detail directory.
    pub details: usize,
    /// Search and model parameters; `seeds` holds one entry per run.
    pub gp: GpConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        self.gp.validate()?;
        if self.gp.seeds.len() != self.gp.pirs {
            return Err(CliError::Invalid(format!(
                "{} seeds given for {} runs",
                self.gp.seeds.len(),
                self.gp.pirs
            )));
        }
        if self.gp.model == ModelKind::Full && self.pn_iterations == 0 {
            return Err(CliError::Invalid("pn_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Dataset with a-priori marks and prior overrides applied.
    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let mut ds = match &self.dataset {
            DatasetSource::File(path) => parse_dataset(&read(path)?)?,
            DatasetSource::Generate(seed) => generate_dataset(*seed, &PopulationProfile::canonical())?,
        };
        if let Some(a) = self.apriori {
            ds = mark_apriori_infection(&ds, a.infected, a.immune, a.seed)?;
        }
        if let Some(p) = &self.gp.priors {
            ds.priors = p.parse::<Priors>()?;
        }
        Ok(ds)
    }

    pub fn model(&self, exec: Exec, table_cache: Option<&Path>) -> Result<Model, CliError> {
        Ok(match self.gp.model {
            ModelKind::Partial => Model::Partial { s: self.gp.s },
            ModelKind::Full => {
                let (q, it, seed) = (self.gp.q, self.pn_iterations, self.pn_seed);
                Model::Full(match table_cache {
                    Some(dir) => PnTable::load_or_build(dir, q, it, seed, exec)?,
                    None => build_pn_table(q, it, seed, exec)?,
                })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_digest: String,
    pub spec: ExperimentSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub variant: Baseline,
    pub n_h: u32,
    pub n_d: u32,
    pub neg_fitness: f64,
    pub plan_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub pir_id: usize,
    pub seed: u64,
    pub n_h: u32,
    pub n_d: u32,
    pub neg_fitness: f64,
    pub vector_len: usize,
    pub plan_digest: String,
}

impl From<&SolutionRecord> for SolutionSummary {
    fn from(r: &SolutionRecord) -> Self {
        SolutionSummary {
            pir_id: r.pir_id,
            seed: r.seed,
            n_h: r.n_h,
            n_d: r.n_d,
            neg_fitness: neg(r.fitness),
            vector_len: r.vector.len(),
            plan_digest: r.plan_digest.clone(),
        }
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset_digest: String,
    pub model: ModelKind,
    pub s: Option<u32>,
    pub q: Option<u32>,
    pub w_c: f64,
    pub priors: String,
    pub baselines: Vec<BaselineRow>,
    pub best: Option<SolutionSummary>,
    pub pareto: Vec<SolutionSummary>,
    pub solutions: usize,
    pub offspring_per_run: Vec<u64>,
}

pub struct Detail {
    pub name: String,
    pub plan: AllocationPlan,
    pub outcome: SimOutcome,
}

pub struct Report {
    pub manifest: Manifest,
    pub dataset: Dataset,
    pub summary: Summary,
    pub archive: Archive,
    pub details: Vec<Detail>,
}

/// Runs baselines and GP for `spec`. Output does not depend on `exec`.
pub fn run_experiment(spec: &ExperimentSpec, exec: Exec, table_cache: Option<&Path>) -> Result<Report, CliError> {
    spec.validate()?;
    let ds = spec.load_dataset()?;
    let model = spec.model(exec, table_cache)?;
    let eval = Evaluator::new(&ds, &model, spec.gp.w_c)?;
    let sim = eval.simulator();

    let mut baselines = Vec::new();
    let mut details = Vec::new();
    for &variant in &spec.baselines {
        let plan = round_robin(&ds, variant);
        let outcome = sim.simulate(&plan)?;
        baselines.push(BaselineRow {
            variant,
            n_h: outcome.n_hospitalized,
            n_d: outcome.n_dead,
            neg_fitness: neg(fitness(outcome.n_hospitalized, outcome.n_dead, spec.gp.w_c)),
            plan_digest: plan.digest(),
        });
        details.push(Detail {
            name: variant.to_string(),
            plan,
            outcome,
        });
    }

    let archive = if spec.gp.pirs > 0 {
        run_pirs(&eval, &spec.gp, &spec.gp.seeds, exec)?
    } else {
        Archive::default()
    };
    for (rank, rec) in archive.ranked.iter().take(spec.details).enumerate() {
        let plan = rec.plan(&ds);
        let outcome = sim.simulate(&plan)?;
        details.push(Detail {
            name: format!("gp_rank{}", rank + 1),
            plan,
            outcome,
        });
    }

    let digest = ds.digest();
    let summary = Summary {
        dataset_digest: digest.clone(),
        model: spec.gp.model,
        s: (spec.gp.model == ModelKind::Partial).then_some(spec.gp.s),
        q: (spec.gp.model == ModelKind::Full).then_some(spec.gp.q),
        w_c: spec.gp.w_c,
        priors: ds.priors.to_string(),
        baselines,
        best: archive.best().map(SolutionSummary::from),
        pareto: archive.pareto.iter().map(SolutionSummary::from).collect(),
        solutions: archive.ranked.len(),
        offspring_per_run: archive.stats.iter().map(|s| s.offspring).collect(),
    };
    Ok(Report {
        manifest: Manifest {
            dataset_digest: digest,
            spec: spec.clone(),
        },
        dataset: ds,
        summary,
        archive,
        details,
    })
}

fn json_pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn solutions_csv(records: &[SolutionRecord]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank", "pir", "seed", "offspring", "n_h", "n_d", "neg_fitness", "vector_len", "tree_size", "plan_digest",
        "vector",
    ])?;
    for (i, r) in records.iter().enumerate() {
        let vector: Vec<String> = r.vector.values().iter().map(f64::to_string).collect();
        w.write_record([
            (i + 1).to_string(),
            r.pir_id.to_string(),
            r.seed.to_string(),
            r.offspring.to_string(),
            r.n_h.to_string(),
            r.n_d.to_string(),
            neg(r.fitness).to_string(),
            r.vector.len().to_string(),
            r.tree_size.to_string(),
            r.plan_digest.clone(),
            vector.join(" "),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_detail(dir: &Path, ds: &Dataset, d: &Detail) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut alloc = Vec::new();
    d.plan.write_csv(ds, &mut alloc)?;
    write(&dir.join("allocations.csv"), alloc)?;

    let o = &d.outcome;
    let occupancy = csv_bytes(
        &[
            "day", "slot", "hours", "establishment", "name", "participants", "infected", "newly_infected", "pressure",
        ],
        |w| {
            for e in &o.encounters {
                let name = establishment_name(e.establishment);
                let hours = SlotIndex::new(e.slot).map(|s| s.clock_label()).unwrap_or_default();
                w.write_record([
                    (e.day + 1).to_string(),
                    (e.slot + 1).to_string(),
                    hours,
                    (e.establishment + 1).to_string(),
                    name,
                    e.participants.to_string(),
                    e.infected.to_string(),
                    e.newly_infected.to_string(),
                    e.pressure.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    write(&dir.join("occupancy.csv"), occupancy)?;

    let daily = csv_bytes(&["day", "visits", "occupied", "newly_infected", "isolated"], |w| {
        for (day, isolated) in o.isolated_by_day.iter().enumerate() {
            let es = o.encounters.iter().filter(|e| e.day == day);
            let visits: usize = es.clone().map(|e| e.participants).sum();
            let newly: usize = es.clone().map(|e| e.newly_infected).sum();
            w.write_record([
                (day + 1).to_string(),
                visits.to_string(),
                es.count().to_string(),
                newly.to_string(),
                isolated.len().to_string(),
            ])?;
        }
        Ok(())
    })?;
    write(&dir.join("daily.csv"), daily)?;

    if !o.trajectory.is_empty() {
        let traj = csv_bytes(&["day", "hour", "young", "middle", "elderly"], |w| {
            for t in &o.trajectory {
                w.write_record([
                    (t.day + 1).to_string(),
                    t.hour.to_string(),
                    t.cohorts[0].to_string(),
                    t.cohorts[1].to_string(),
                    t.cohorts[2].to_string(),
                ])?;
            }
            Ok(())
        })?;
        write(&dir.join("trajectory.csv"), traj)?;
    }

    let persons = csv_bytes(
        &["id", "age", "health", "infection", "status", "infected_on", "isolated_on", "outcome"],
        |w| {
            for p in &o.persons {
                w.write_record([
                    p.id.to_string(),
                    p.age.to_string(),
                    p.health.to_string(),
                    p.infection.to_string(),
                    opt(p.status.map(status_name)),
                    opt(p.infected_on.map(|d| d + 1)),
                    opt(p.isolated_on.map(|d| d + 1)),
                    opt(p.outcome.map(outcome_name)),
                ])?;
            }
            Ok(())
        },
    )?;
    write(&dir.join("persons.csv"), persons)?;

    let rosters = csv_bytes(&["roster", "id", "age", "health", "infection"], |w| {
        let mut rows: Vec<(String, &crate::simulator::PersonFinal)> = Vec::new();
        for p in &o.persons {
            if let Some(d) = p.isolated_on {
                rows.push((format!("isolated_day{}", d + 1), p));
            }
        }
        for p in &o.persons {
            match p.outcome {
                Some(crate::simulator::Outcome::IcuRecovered) => rows.push(("icu".into(), p)),
                Some(crate::simulator::Outcome::Death) => rows.push(("death".into(), p)),
                Some(crate::simulator::Outcome::Immune) => rows.push(("recovered".into(), p)),
                None => {}
            }
        }
        for (roster, p) in rows {
            w.write_record([
                roster,
                p.id.to_string(),
                p.age.to_string(),
                p.health.to_string(),
                p.infection.to_string(),
            ])?;
        }
        Ok(())
    })?;
    write(&dir.join("rosters.csv"), rosters)?;
    Ok(())
}

fn establishment_name(est: usize) -> String {
    use crate::dataset::EstablishmentKind;
    let kind = EstablishmentKind::ALL[est / 2];
    format!("{} {}", kind.name(), est % 2 + 1)
}

fn status_name(s: crate::full_infection::Status) -> &'static str {
    use crate::full_infection::Status;
    match s {
        Status::Susceptible => "susceptible",
        Status::Infected => "infected",
        Status::Immune => "immune",
    }
}

fn outcome_name(o: crate::simulator::Outcome) -> &'static str {
    use crate::simulator::Outcome;
    match o {
        Outcome::Immune => "recovered",
        Outcome::IcuRecovered => "icu",
        Outcome::Death => "death",
    }
}

/// Writes every report file under `out`. Existing files are overwritten.
pub fn write_report(report: &Report, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join("manifest.json"), json_pretty(&report.manifest)?)?;
    write(&out.join("summary.json"), json_pretty(&report.summary)?)?;

    let base = csv_bytes(&["variant", "n_h", "n_d", "neg_fitness", "plan_digest"], |w| {
        for b in &report.summary.baselines {
            w.write_record([
                b.variant.to_string(),
                b.n_h.to_string(),
                b.n_d.to_string(),
                b.neg_fitness.to_string(),
                b.plan_digest.clone(),
            ])?;
        }
        Ok(())
    })?;
    write(&out.join("baselines.csv"), base)?;
    write(&out.join("solutions.csv"), solutions_csv(&report.archive.ranked)?)?;
    write(&out.join("pareto.csv"), solutions_csv(&report.archive.pareto)?)?;

    for d in &report.details {
        write_detail(&out.join("detail").join(&d.name), &report.dataset, d)?;
    }
    Ok(())
}

/// Headline numbers of one report: its best GP solution, or its best
/// baseline when it has no GP results.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Headline {
    pub source: String,
    pub n_h: u32,
    pub n_d: u32,
    pub neg_fitness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub dataset_digest: String,
    pub a: Headline,
    pub b: Headline,
    /// `b`'s −F over `a`'s; how many times better `a` is. `None` when only
    /// `a` is perfect.
    pub ratio: Option<f64>,
    /// `b`'s baselines against `a`'s headline.
    pub baseline_ratios: Vec<(Baseline, Option<f64>)>,
    /// Points of `b` dominated by some point of `a`, and the converse.
    pub a_dominates: usize,
    pub b_dominates: usize,
}

fn headline(s: &Summary) -> Result<Headline, CliError> {
    if let Some(b) = &s.best {
        return Ok(Headline {
            source: format!("gp pir {}", b.pir_id),
            n_h: b.n_h,
            n_d: b.n_d,
            neg_fitness: b.neg_fitness,
        });
    }
    s.baselines
        .iter()
        .min_by(|x, y| x.neg_fitness.total_cmp(&y.neg_fitness))
        .map(|b| Headline {
            source: b.variant.to_string(),
            n_h: b.n_h,
            n_d: b.n_d,
            neg_fitness: b.neg_fitness,
        })
        .ok_or_else(|| CliError::Invalid("report has neither GP results nor baselines".into()))
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    match (num == 0.0, den == 0.0) {
        (true, true) => Some(1.0),
        (_, true) => None,
        _ => Some(num / den),
    }
}

fn points(s: &Summary) -> Vec<(u32, u32)> {
    s.baselines
        .iter()
        .map(|b| (b.n_d, b.n_h))
        .chain(s.pareto.iter().map(|p| (p.n_d, p.n_h)))
        .collect()
}

fn dominated_count(by: &[(u32, u32)], of: &[(u32, u32)]) -> usize {
    of.iter()
        .filter(|&&(d, h)| by.iter().any(|&(bd, bh)| bd <= d && bh <= h && (bd < d || bh < h)))
        .count()
}

pub fn compare(a: &Summary, b: &Summary) -> Result<Comparison, CliError> {
    if a.dataset_digest != b.dataset_digest {
        return Err(CliError::DigestMismatch(a.dataset_digest.clone(), b.dataset_digest.clone()));
    }
    let (ha, hb) = (headline(a)?, headline(b)?);
    let (pa, pb) = (points(a), points(b));
    Ok(Comparison {
        dataset_digest: a.dataset_digest.clone(),
        ratio: ratio(hb.neg_fitness, ha.neg_fitness),
        baseline_ratios: b
            .baselines
            .iter()
            .map(|row| (row.variant, ratio(row.neg_fitness, ha.neg_fitness)))
            .collect(),
        a_dominates: dominated_count(&pa, &pb),
        b_dominates: dominated_count(&pb, &pa),
        a: ha,
        b: hb,
    })
}

pub fn read_summary(dir: &Path) -> Result<Summary, CliError> {
    let path = if dir.is_dir() { dir.join("summary.json") } else { dir.to_path_buf() };
    Ok(serde_json::from_str(&read(&path)?)?)
}

#[derive(Parser, Debug)]
#[command(name = "visitslot", version, about = "Evolve visit-slot allocations that minimise ICU use and deaths")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run baselines and GP on one dataset and write reports.
    Run(Box<RunArgs>),
    /// Compare two report directories built from the same dataset.
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
    /// Generate a synthetic dataset matching the canonical group statistics.
    Generate(GenerateArgs),
    /// Build the standard-model p_n table.
    PnTable(PnTableArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelArg {
    Partial,
    Full,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Dataset file.
    #[arg(conflicts_with_all = ["generate", "manifest"])]
    pub dataset: Option<PathBuf>,
    /// Generate the canonical synthetic dataset from this seed.
    #[arg(long, conflicts_with = "manifest")]
    pub generate: Option<u64>,
    /// Replay the run recorded in a manifest.json; other options are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// TOML file with GP and model settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Sub-locations per establishment (partial model).
    #[arg(long)]
    pub s: Option<u32>,
    /// Monte Carlo trials per contact check (standard model).
    #[arg(long)]
    pub q: Option<u32>,
    /// Prior infection by age group, e.g. "20=0.03;30=0.01".
    #[arg(long)]
    pub priors: Option<String>,
    /// Weight of deaths in the fitness.
    #[arg(long)]
    pub wc: Option<f64>,
    /// Comma-separated baselines, or "none".
    #[arg(long, default_value = "comp1,comp2,comp3")]
    pub baselines: String,
    /// Independent GP runs
    #[arg(long)]
    pub pirs: Option<usize>,
    /// Population size
    #[arg(long)]
    pub pop: Option<usize>,
    /// Offspring per run.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Comma-separated seeds, one per run.
    #[arg(long)]
    pub seed_list: Option<String>,
    /// Fraction marked infected before a standard-model run.
    #[arg(long)]
    pub infected_fraction: Option<f64>,
    /// Fraction marked immune before a standard-model run
    #[arg(long)]
    pub immune_fraction: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub apriori_seed: u64,
    /// Monte Carlo iterations for the p_n table.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub pn_iterations: u64,
    #[arg(long, default_value_t = 1)]
    pub pn_seed: u64,
    /// Directory for cached p_n tables.
    #[arg(long)]
    pub table_cache: Option<PathBuf>,
    /// Number of top GP solutions written in detail.
    #[arg(long, default_value_t = 3)]
    pub details: usize,
    /// Disable the thread pool.
    #[arg(long)]
    pub sequential: bool,
    /// Report directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub infected_fraction: Option<f64>,
    #[arg(long)]
    pub immune_fraction: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub apriori_seed: u64,
    #[arg(long)]
    pub priors: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PnTableArgs {
    #[arg(long)]
    pub q: u32,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| CliError::Invalid(format!("bad {what} {x:?}"))))
        .collect()
}

/// Builds the experiment spec from flags, config file and defaults.
pub fn spec_from_args(args: &RunArgs) -> Result<ExperimentSpec, CliError> {
    let mut gp = match &args.config {
        Some(path) => GpConfig::load(path)?,
        None => GpConfig::default(),
    };
    if let Some(m) = args.model {
        gp.model = match m {
            ModelArg::Partial => ModelKind::Partial,
            ModelArg::Full => ModelKind::Full,
        };
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag.clone() { gp.$field = v; })*
        };
    }
    set!(s => s, q => q, wc => w_c, pirs => pirs, pop => population, budget => budget);
    if let Some(p) = &args.priors {
        gp.priors = Some(p.clone());
    }
    if let Some(list) = &args.seed_list {
        gp.seeds = parse_list(list, "seed")?;
        if args.pirs.is_none() {
            gp.pirs = gp.seeds.len();
        }
    }
    gp.seeds = gp.run_seeds();

    let dataset = match (&args.dataset, args.generate) {
        (Some(path), None) => DatasetSource::File(path.clone()),
        (None, Some(seed)) => DatasetSource::Generate(seed),
        _ => return Err(CliError::Invalid("give a dataset file or --generate SEED".into())),
    };
    let generated = matches!(dataset, DatasetSource::Generate(_));
    let apriori = match (args.infected_fraction, args.immune_fraction) {
        (None, None) if gp.model == ModelKind::Full && generated => Some(Apriori {
            infected: DEFAULT_INFECTED_FRACTION,
            immune: DEFAULT_IMMUNE_FRACTION,
            seed: args.apriori_seed,
        }),
        (None, None) => None,
        (i, m) => Some(Apriori {
            infected: i.unwrap_or(0.0),
            immune: m.unwrap_or(0.0),
            seed: args.apriori_seed,
        }),
    };
    let baselines = if args.baselines.trim() == "none" {
        Vec::new()
    } else {
        parse_list(&args.baselines, "baseline")?
    };
    let spec = ExperimentSpec {
        dataset,
        apriori,
        pn_iterations: args.pn_iterations,
        pn_seed: args.pn_seed,
        baselines,
        details: args.details,
        gp,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn exec_for(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let exec = exec_for(args.sequential);
    let (spec, expected) = match &args.manifest {
        Some(path) => {
            let m = load_manifest(path)?;
            (m.spec, Some(m.dataset_digest))
        }
        None => (spec_from_args(args)?, None),
    };
    let report = run_experiment(&spec, exec, args.table_cache.as_deref())?;
    if let Some(d) = expected {
        if d != report.manifest.dataset_digest {
            return Err(CliError::DigestMismatch(d, report.manifest.dataset_digest));
        }
    }
    write_report(&report, &args.out)?;
    let mut out = std::io::stdout().lock();
    for b in &report.summary.baselines {
        let _ = writeln!(out, "{:<6} N_H={:<4} N_D={:<4} -F={}", b.variant, b.n_h, b.n_d, b.neg_fitness);
    }
    if let Some(b) = &report.summary.best {
        let _ = writeln!(out, "gp     N_H={:<4} N_D={:<4} -F={}", b.n_h, b.n_d, b.neg_fitness);
    }
    let _ = writeln!(out, "reports written to {}", args.out.display());
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut ds = generate_dataset(args.seed, &PopulationProfile::canonical())?;
    if args.infected_fraction.is_some() || args.immune_fraction.is_some() {
        ds = mark_apriori_infection(
            &ds,
            args.infected_fraction.unwrap_or(0.0),
            args.immune_fraction.unwrap_or(0.0),
            args.apriori_seed,
        )?;
    }
    if let Some(p) = &args.priors {
        ds.priors = p.parse()?;
    }
    let text = serialize_dataset(&ds);
    match &args.out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_pn_table(args: &PnTableArgs) -> Result<(), CliError> {
    let table = build_pn_table(args.q, args.iterations, args.seed, exec_for(args.sequential))?;
    match &args.out {
        Some(path) => write(path, table.to_text()),
        None => {
            print!("{}", table.to_text());
            Ok(())
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare { a, b } => {
            let c = compare(&read_summary(a)?, &read_summary(b)?)?;
            print!("{}", json_pretty(&c)?);
            Ok(())
        }
        Command::Generate(args) => cmd_generate(args),
        Command::PnTable(args) => cmd_pn_table(args),
    }
}
