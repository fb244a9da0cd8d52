//! Three-day simulation of an allocation plan.
//!
//! Days run Monday to Wednesday, slots morning to night, and within each
//! slot the twelve establishments in order. Everyone assigned to the same
//! (day, slot, establishment) who is not self-isolating forms one encounter.
//! Isolation is decided at the end of each day; outcomes at the end of the
//! run.

pub mod rules;

use serde::Serialize;
use thiserror::Error;

use crate::allocation::{AllocationError, AllocationPlan};
use crate::dataset::{
    AgeGroup, Cohort, Dataset, Immunity, Person, PersonId, SlotIndex, Window, DAYS, ESTABLISHMENTS,
    SLOTS_PER_DAY,
};
use crate::full_infection::{InfectionStatus, PnTable, Status};
use crate::partial_infection::{PartialState, PressureModel};

pub use rules::{FullRule, HealthBands, Outcome, PartialRule, RuleTable};

const BUCKETS: usize = DAYS * SLOTS_PER_DAY * ESTABLISHMENTS;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] AllocationError),
    #[error("invalid model: {0}")]
    Model(String),
}

/// Infection model and its parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    /// Partial infection with `s` sub-locations per establishment.
    Partial { s: u32 },
    /// Standard model driven by a `p_n` table.
    Full(PnTable),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Partial { .. } => "partial",
            Model::Full(_) => "full",
        }
    }
}

/// Darwinian fitness `-[(1 - w_c)·N_H + w_c·N_D]`; zero is perfect.
///
/// Evaluated in hundredths so that two-decimal weights give results that
/// print exactly, e.g. `fitness(9, 7, 0.65) == -7.7`.
pub fn fitness(n_hospitalized: u32, n_dead: u32, w_c: f64) -> f64 {
    let wd = 100.0 * w_c;
    let wh = 100.0 - wd;
    0.0 - (f64::from(n_hospitalized) * wh + f64::from(n_dead) * wd) / 100.0
}

/// Per-person state under either model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PersonState {
    Partial(PartialState),
    Full(InfectionStatus),
}

/// End-of-day self-isolation decision.
pub fn check_isolation(person: &Person, state: PersonState, rules: &RuleTable) -> bool {
    match state {
        PersonState::Partial(st) => {
            rules.partial_isolates(person.age_group, st.infection(), person.health)
        }
        PersonState::Full(st) => {
            st.status == Status::Infected
                && rules.full_isolates(person.age_group, st.days_infected, person.health)
        }
    }
}

/// Outcome of one person at the end of the run, if any.
pub fn person_outcome(person: &Person, state: PersonState, rules: &RuleTable) -> Option<Outcome> {
    match state {
        PersonState::Partial(st) => rules.partial_outcome(person.age_group, st.infection(), person.health),
        PersonState::Full(st) => (st.status == Status::Infected)
            .then(|| rules.full_outcome(person.age_group, person.health)),
    }
}

/// `(N_H, N_D)`: ICU survivors and deaths.
pub fn evaluate_outcomes(persons: &[Person], states: &[PersonState], rules: &RuleTable) -> (u32, u32) {
    let mut counts = (0, 0);
    for (p, &st) in persons.iter().zip(states) {
        match person_outcome(p, st, rules) {
            Some(Outcome::IcuRecovered) => counts.0 += 1,
            Some(Outcome::Death) => counts.1 += 1,
            _ => {}
        }
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub day: usize,
    /// Clock hour at which the averages were taken.
    pub hour: u8,
    /// Mean infection of young, middle-aged and elderly.
    pub cohorts: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncounterRecord {
    pub day: usize,
    pub slot: u8,
    pub establishment: usize,
    pub participants: usize,
    /// Participants with any infection before the encounter.
    pub infected: usize,
    pub newly_infected: usize,
    /// Pressure (partial) or `p_n` (full) applied.
    pub pressure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PersonFinal {
    pub id: PersonId,
    pub age: AgeGroup,
    pub health: f64,
    /// Final `I` (partial) or 1/0 for infected/not (full).
    pub infection: f64,
    pub status: Option<Status>,
    pub infected_on: Option<usize>,
    pub isolated_on: Option<usize>,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimOutcome {
    pub model: &'static str,
    pub n_hospitalized: u32,
    pub n_dead: u32,
    pub isolated_by_day: [Vec<PersonId>; DAYS],
    pub trajectory: Vec<TrajectoryPoint>,
    pub encounters: Vec<EncounterRecord>,
    pub persons: Vec<PersonFinal>,
}

impl SimOutcome {
    pub fn fitness(&self, w_c: f64) -> f64 {
        fitness(self.n_hospitalized, self.n_dead, w_c)
    }
}

enum Engine {
    Partial(PressureModel),
    Full(PnTable),
}

/// Reusable buffers for repeated evaluation on one thread.
#[derive(Default)]
pub struct Scratch {
    starts: Vec<u32>,
    members: Vec<u32>,
    levels: Vec<f64>,
    statuses: Vec<InfectionStatus>,
    isolated: Vec<Option<u8>>,
    infected_on: Vec<Option<u8>>,
    group_idx: Vec<u32>,
    group: Vec<(PersonId, PartialState)>,
    sort: Vec<(f64, PersonId)>,
    susceptible: Vec<u32>,
}

trait Tracer {
    fn encounter(&mut self, _rec: EncounterRecord) {}
    fn start(&mut self, _levels: &[f64]) {}
    fn checkpoint(&mut self, _day: usize, _slot: usize, _levels: &[f64]) {}
    fn isolated(&mut self, _day: usize, _person: usize) {}
    const DETAILED: bool;
}

struct Quiet;
impl Tracer for Quiet {
    const DETAILED: bool = false;
}

struct Detail<'a> {
    ages: &'a [AgeGroup],
    ids: &'a [PersonId],
    trajectory: Vec<TrajectoryPoint>,
    encounters: Vec<EncounterRecord>,
    isolated_by_day: [Vec<PersonId>; DAYS],
}

impl Detail<'_> {
    fn cohort_means(&self, levels: &[f64]) -> [f64; 3] {
        let mut sum = [0.0; 3];
        let mut n = [0usize; 3];
        for (age, &l) in self.ages.iter().zip(levels) {
            let c = age.cohort().index();
            sum[c] += l;
            n[c] += 1;
        }
        let mut out = [0.0; 3];
        for c in Cohort::ALL {
            let i = c.index();
            out[i] = if n[i] == 0 { 0.0 } else { sum[i] / n[i] as f64 };
        }
        out
    }
}

impl Tracer for Detail<'_> {
    const DETAILED: bool = true;

    fn encounter(&mut self, rec: EncounterRecord) {
        self.encounters.push(rec);
    }

    fn start(&mut self, levels: &[f64]) {
        let point = TrajectoryPoint {
            day: 0,
            hour: 8,
            cohorts: self.cohort_means(levels),
        };
        self.trajectory.push(point);
    }

    fn checkpoint(&mut self, day: usize, slot: usize, levels: &[f64]) {
        let point = TrajectoryPoint {
            day,
            hour: 8 + 2 * (slot as u8 + 1),
            cohorts: self.cohort_means(levels),
        };
        self.trajectory.push(point);
    }

    fn isolated(&mut self, day: usize, person: usize) {
        self.isolated_by_day[day].push(self.ids[person]);
    }
}

/// Prepared simulation of one dataset under one model.
pub struct Simulator<'a> {
    ds: &'a Dataset,
    engine: Engine,
    rules: RuleTable,
    request_base: Vec<u16>,
    request_person: Vec<u32>,
    windows: Vec<Window>,
    ids: Vec<PersonId>,
    ages: Vec<AgeGroup>,
    health: Vec<f64>,
    initial_levels: Vec<f64>,
    initial_status: Vec<InfectionStatus>,
}

impl<'a> Simulator<'a> {
    pub fn new(ds: &'a Dataset, model: &Model) -> Result<Self, SimError> {
        Self::with_rules(ds, model, RuleTable::standard())
    }

    pub fn with_rules(ds: &'a Dataset, model: &Model, rules: RuleTable) -> Result<Self, SimError> {
        let engine = match model {
            Model::Partial { s } if *s < 2 => {
                return Err(SimError::Model(format!("s must be at least 2, got {s}")))
            }
            Model::Partial { s } => Engine::Partial(PressureModel::new(*s, ds.persons.len())),
            Model::Full(table) if table.q == 0 => {
                return Err(SimError::Model("q must be at least 1".into()))
            }
            Model::Full(table) => Engine::Full(table.clone()),
        };
        let mut request_base = Vec::with_capacity(ds.request_count());
        let mut request_person = Vec::with_capacity(ds.request_count());
        let mut windows = Vec::with_capacity(ds.request_count());
        for r in ds.requests() {
            request_base.push((r.day * SLOTS_PER_DAY * ESTABLISHMENTS + r.request.establishment()) as u16);
            request_person.push(r.person_index as u32);
            windows.push(r.request.window);
        }
        Ok(Simulator {
            ds,
            engine,
            rules,
            request_base,
            request_person,
            windows,
            ids: ds.persons.iter().map(|p| p.id).collect(),
            ages: ds.persons.iter().map(|p| p.age_group).collect(),
            health: ds.persons.iter().map(|p| p.health).collect(),
            initial_levels: ds.persons.iter().map(|p| ds.priors.get(p.age_group)).collect(),
            initial_status: ds
                .persons
                .iter()
                .map(|p| match p.immunity {
                    Immunity::Susceptible => InfectionStatus::SUSCEPTIBLE,
                    Immunity::Infected => InfectionStatus::INFECTED,
                    Immunity::Immune => InfectionStatus::IMMUNE,
                })
                .collect(),
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    /// Window of every request in canonical order.
    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    /// `(N_H, N_D)` for a slot sequence already known to match the dataset.
    pub fn evaluate(&self, slots: &[SlotIndex], scratch: &mut Scratch) -> (u32, u32) {
        debug_assert_eq!(slots.len(), self.request_base.len());
        self.run(slots, scratch, &mut Quiet)
    }

    /// Full simulation with per-encounter records, trajectory and rosters.
    pub fn simulate(&self, plan: &AllocationPlan) -> Result<SimOutcome, SimError> {
        plan.validate(self.ds)?;
        let mut scratch = Scratch::default();
        let mut detail = Detail {
            ages: &self.ages,
            ids: &self.ids,
            trajectory: Vec::new(),
            encounters: Vec::new(),
            isolated_by_day: Default::default(),
        };
        let (n_h, n_d) = self.run(plan.slots(), &mut scratch, &mut detail);

        let persons = self
            .ds
            .persons
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let state = self.final_state(&scratch, i);
                let (infection, status) = match state {
                    PersonState::Partial(st) => (st.infection(), None),
                    PersonState::Full(st) => (
                        f64::from(u8::from(st.status == Status::Infected)),
                        Some(st.status),
                    ),
                };
                PersonFinal {
                    id: p.id,
                    age: p.age_group,
                    health: p.health,
                    infection,
                    status,
                    infected_on: scratch.infected_on[i].map(usize::from),
                    isolated_on: scratch.isolated[i].map(usize::from),
                    outcome: person_outcome(p, state, &self.rules),
                }
            })
            .collect();
        let partial = matches!(self.engine, Engine::Partial(_));
        Ok(SimOutcome {
            model: if partial { "partial" } else { "full" },
            n_hospitalized: n_h,
            n_dead: n_d,
            isolated_by_day: detail.isolated_by_day,
            trajectory: if partial { detail.trajectory } else { Vec::new() },
            encounters: detail.encounters,
            persons,
        })
    }

    fn final_state(&self, sc: &Scratch, i: usize) -> PersonState {
        match self.engine {
            Engine::Partial(_) => PersonState::Partial(PartialState::new(sc.levels[i])),
            Engine::Full(_) => PersonState::Full(sc.statuses[i]),
        }
    }

    fn fill_buckets(&self, slots: &[SlotIndex], sc: &mut Scratch) {
        sc.starts.clear();
        sc.starts.resize(BUCKETS + 1, 0);
        let key = |i: usize| self.request_base[i] as usize + slots[i].get() as usize * ESTABLISHMENTS;
        for i in 0..slots.len() {
            sc.starts[key(i) + 1] += 1;
        }
        for b in 0..BUCKETS {
            sc.starts[b + 1] += sc.starts[b];
        }
        sc.members.clear();
        sc.members.resize(slots.len(), 0);
        let mut cursor: Vec<u32> = sc.starts[..BUCKETS].to_vec();
        // Requests are person-major, so members stay in ascending person order.
        for i in 0..slots.len() {
            let k = key(i);
            sc.members[cursor[k] as usize] = self.request_person[i];
            cursor[k] += 1;
        }
    }

    fn run<T: Tracer>(&self, slots: &[SlotIndex], sc: &mut Scratch, tr: &mut T) -> (u32, u32) {
        let n = self.ids.len();
        self.fill_buckets(slots, sc);
        sc.levels.clear();
        sc.levels.extend_from_slice(&self.initial_levels);
        sc.statuses.clear();
        sc.statuses.extend_from_slice(&self.initial_status);
        sc.isolated.clear();
        sc.isolated.resize(n, None);
        sc.infected_on.clear();
        sc.infected_on.resize(n, None);

        if T::DETAILED && matches!(self.engine, Engine::Partial(_)) {
            tr.start(&sc.levels);
        }

        for day in 0..DAYS {
            for slot in 0..SLOTS_PER_DAY {
                for est in 0..ESTABLISHMENTS {
                    let b = (day * SLOTS_PER_DAY + slot) * ESTABLISHMENTS + est;
                    let (lo, hi) = (sc.starts[b] as usize, sc.starts[b + 1] as usize);
                    if hi - lo < 2 && !T::DETAILED {
                        continue;
                    }
                    sc.group_idx.clear();
                    let mut last = u32::MAX;
                    for &m in &sc.members[lo..hi] {
                        if m != last && sc.isolated[m as usize].is_none() {
                            sc.group_idx.push(m);
                        }
                        last = m;
                    }
                    if sc.group_idx.is_empty() {
                        continue;
                    }
                    self.encounter(day, slot, est, sc, tr);
                }
                if slot % 2 == 1 && matches!(self.engine, Engine::Partial(_)) {
                    tr.checkpoint(day, slot, &sc.levels);
                }
            }
            self.end_of_day(day, sc, tr);
        }

        let mut counts = (0, 0);
        for i in 0..n {
            let outcome = match self.engine {
                Engine::Partial(_) => self.rules.partial_outcome(self.ages[i], sc.levels[i], self.health[i]),
                Engine::Full(_) => (sc.statuses[i].status == Status::Infected)
                    .then(|| self.rules.full_outcome(self.ages[i], self.health[i])),
            };
            match outcome {
                Some(Outcome::IcuRecovered) => counts.0 += 1,
                Some(Outcome::Death) => counts.1 += 1,
                _ => {}
            }
        }
        counts
    }

    fn encounter<T: Tracer>(&self, day: usize, slot: usize, est: usize, sc: &mut Scratch, tr: &mut T) {
        let n_p = sc.group_idx.len();
        match &self.engine {
            Engine::Partial(model) => {
                sc.group.clear();
                sc.group.extend(
                    sc.group_idx
                        .iter()
                        .map(|&m| (self.ids[m as usize], PartialState::new(sc.levels[m as usize]))),
                );
                let p = model.pressure(&sc.group, &mut sc.sort);
                if p > 0.0 {
                    for &m in &sc.group_idx {
                        let m = m as usize;
                        sc.levels[m] = PartialState::new(sc.levels[m]).updated(p).infection();
                    }
                }
                if T::DETAILED {
                    tr.encounter(EncounterRecord {
                        day,
                        slot: slot as u8,
                        establishment: est,
                        participants: n_p,
                        infected: sc.group.iter().filter(|g| g.1.infection() > 0.0).count(),
                        newly_infected: 0,
                        pressure: p,
                    });
                }
            }
            Engine::Full(table) => {
                let mut infected = 0;
                sc.susceptible.clear();
                for &m in &sc.group_idx {
                    match sc.statuses[m as usize].status {
                        Status::Infected => infected += 1,
                        Status::Susceptible => sc.susceptible.push(m),
                        Status::Immune => {}
                    }
                }
                let mut newly = 0;
                let mut p = 0.0;
                if n_p >= 2 && infected > 0 && !sc.susceptible.is_empty() {
                    p = table.prob(infected);
                    newly = (p * sc.susceptible.len() as f64).floor() as usize;
                    if newly > 0 {
                        let ids = &self.ids;
                        sc.susceptible.sort_unstable_by_key(|&m| ids[m as usize]);
                        for &m in &sc.susceptible[..newly] {
                            sc.statuses[m as usize] = InfectionStatus::INFECTED;
                            sc.infected_on[m as usize] = Some(day as u8);
                        }
                    }
                }
                if T::DETAILED {
                    tr.encounter(EncounterRecord {
                        day,
                        slot: slot as u8,
                        establishment: est,
                        participants: n_p,
                        infected,
                        newly_infected: newly,
                        pressure: p,
                    });
                }
            }
        }
    }

    fn end_of_day<T: Tracer>(&self, day: usize, sc: &mut Scratch, tr: &mut T) {
        for i in 0..self.ids.len() {
            if let Engine::Full(_) = self.engine {
                if sc.statuses[i].status == Status::Infected {
                    sc.statuses[i].days_infected += 1;
                }
            }
            if sc.isolated[i].is_some() {
                continue;
            }
            let isolate = match self.engine {
                Engine::Partial(_) => self.rules.partial_isolates(self.ages[i], sc.levels[i], self.health[i]),
                Engine::Full(_) => {
                    let st = sc.statuses[i];
                    st.status == Status::Infected
                        && self.rules.full_isolates(self.ages[i], st.days_infected, self.health[i])
                }
            };
            if isolate {
                sc.isolated[i] = Some(day as u8);
                tr.isolated(day, i);
            }
        }
    }
}

/// One-shot simulation of `plan` on `ds`.
pub fn simulate(ds: &Dataset, plan: &AllocationPlan, model: &Model) -> Result<SimOutcome, SimError> {
    Simulator::new(ds, model)?.simulate(plan)
}
