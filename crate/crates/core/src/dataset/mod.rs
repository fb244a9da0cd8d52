//! Population and visit-request data model.
//!
//! A dataset file holds one person per line:
//!
//! ```text
//! # comment
//! @priors 20=0.01;40=0.03;50=0.02
//! 20 30 9.4 0 AD2:MF1 | PF2 | NS1:AC1
//! ```
//!
//! Fields are `id age health immunity` followed by three day sections
//! separated by `|`. Within a day, request keys are separated by `:`.
//! A day section may be empty.

mod generate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use generate::{generate_dataset, mark_apriori_infection, GroupProfile, Stats, PopulationProfile};

pub type PersonId = u32;

/// Number of simulated days (Monday to Wednesday).
pub const DAYS: usize = 3;
/// Two-hour slots per day, 08:00 to 24:00.
pub const SLOTS_PER_DAY: usize = 8;
/// Two establishments of each of six kinds.
pub const ESTABLISHMENTS: usize = 12;

pub const MIN_HEALTH: f64 = 1.0;
pub const MAX_HEALTH: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid request key {key:?}: {reason}")]
    Key { key: String, reason: KeyError },
    #[error("invalid priors: {0}")]
    Priors(String),
    #[error("infeasible profile: {0}")]
    Profile(String),
    #[error("invalid infection fractions: {0}")]
    Fractions(String),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum KeyError {
    #[error("key must have exactly three symbols")]
    Length,
    #[error("unknown window symbol '{0}'")]
    Window(char),
    #[error("unknown establishment symbol '{0}'")]
    Kind(char),
    #[error("establishment index must be 1 or 2, got '{0}'")]
    Index(char),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum AgeGroup {
    Twenties,
    Thirties,
    Forties,
    Fifties,
    Sixties,
    Seventies,
    Eighties,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 7] = [
        AgeGroup::Twenties,
        AgeGroup::Thirties,
        AgeGroup::Forties,
        AgeGroup::Fifties,
        AgeGroup::Sixties,
        AgeGroup::Seventies,
        AgeGroup::Eighties,
    ];

    pub fn years(self) -> u8 {
        20 + 10 * self.index() as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_years(years: u32) -> Option<Self> {
        match years {
            20 => Some(Self::Twenties),
            30 => Some(Self::Thirties),
            40 => Some(Self::Forties),
            50 => Some(Self::Fifties),
            60 => Some(Self::Sixties),
            70 => Some(Self::Seventies),
            80 => Some(Self::Eighties),
            _ => None,
        }
    }

    /// Reporting cohort: young (20-30), middle (40-60) or elderly (70-80).
    pub fn cohort(self) -> Cohort {
        match self {
            Self::Twenties | Self::Thirties => Cohort::Young,
            Self::Forties | Self::Fifties | Self::Sixties => Cohort::Middle,
            Self::Seventies | Self::Eighties => Cohort::Elderly,
        }
    }
}

impl From<AgeGroup> for u8 {
    fn from(g: AgeGroup) -> u8 {
        g.years()
    }
}

impl TryFrom<u8> for AgeGroup {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        AgeGroup::from_years(v as u32).ok_or_else(|| format!("unknown age group {v}"))
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.years())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Young,
    Middle,
    Elderly,
}

impl Cohort {
    pub const ALL: [Cohort; 3] = [Cohort::Young, Cohort::Middle, Cohort::Elderly];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Immunity {
    #[default]
    Susceptible,
    Infected,
    Immune,
}

impl Immunity {
    pub fn flag(self) -> u8 {
        match self {
            Immunity::Susceptible => 0,
            Immunity::Infected => 1,
            Immunity::Immune => 2,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Immunity::Susceptible),
            1 => Some(Immunity::Infected),
            2 => Some(Immunity::Immune),
            _ => None,
        }
    }
}

/// Coarse time-of-day constraint of a request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Window {
    Morning,
    Afternoon,
    Night,
    Any,
}

impl Window {
    pub fn symbol(self) -> char {
        match self {
            Window::Morning => 'M',
            Window::Afternoon => 'P',
            Window::Night => 'N',
            Window::Any => 'A',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'M' => Some(Window::Morning),
            'P' => Some(Window::Afternoon),
            'N' => Some(Window::Night),
            'A' => Some(Window::Any),
            _ => None,
        }
    }

    /// First slot of the window.
    pub fn first_slot(self) -> u8 {
        match self {
            Window::Morning | Window::Any => 0,
            Window::Afternoon => 2,
            Window::Night => 5,
        }
    }

    /// Number of slots in the window.
    pub fn width(self) -> u8 {
        match self {
            Window::Morning => 2,
            Window::Afternoon | Window::Night => 3,
            Window::Any => 8,
        }
    }

    pub fn contains(self, slot: SlotIndex) -> bool {
        let s = slot.get();
        s >= self.first_slot() && s < self.first_slot() + self.width()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstablishmentKind {
    Food,
    Club,
    Park,
    Doctor,
    Restaurant,
    Social,
}

impl EstablishmentKind {
    pub const ALL: [EstablishmentKind; 6] = [
        EstablishmentKind::Food,
        EstablishmentKind::Club,
        EstablishmentKind::Park,
        EstablishmentKind::Doctor,
        EstablishmentKind::Restaurant,
        EstablishmentKind::Social,
    ];

    pub fn symbol(self) -> char {
        match self {
            EstablishmentKind::Food => 'F',
            EstablishmentKind::Club => 'C',
            EstablishmentKind::Park => 'P',
            EstablishmentKind::Doctor => 'D',
            EstablishmentKind::Restaurant => 'R',
            EstablishmentKind::Social => 'S',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.symbol() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            EstablishmentKind::Food => "SUPERMARKET",
            EstablishmentKind::Club => "SPORTS CLUB",
            EstablishmentKind::Park => "PARK",
            EstablishmentKind::Doctor => "DOCTOR'S SURGERY",
            EstablishmentKind::Restaurant => "RESTAURANT",
            EstablishmentKind::Social => "SOCIAL CLUB",
        }
    }
}

/// One of the two-hour slots 08:00-10:00 (0) through 22:00-24:00 (7).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotIndex(u8);

impl SlotIndex {
    pub fn new(value: u8) -> Option<Self> {
        ((value as usize) < SLOTS_PER_DAY).then_some(SlotIndex(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn start_hour(self) -> u8 {
        8 + 2 * self.0
    }

    /// Clock label such as `10-12`.
    pub fn clock_label(self) -> String {
        format!("{}-{}", self.start_hour(), self.start_hour() + 2)
    }
}

/// A `(window, establishment)` pair, written as a three symbol key like `AD2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisitRequest {
    pub window: Window,
    pub kind: EstablishmentKind,
    pub index: u8,
}

impl VisitRequest {
    pub fn new(window: Window, kind: EstablishmentKind, index: u8) -> Self {
        debug_assert!(index == 1 || index == 2);
        VisitRequest { window, kind, index }
    }

    /// Establishment number in `0..12`.
    pub fn establishment(&self) -> usize {
        self.kind as usize * 2 + (self.index as usize - 1)
    }

    pub fn establishment_name(&self) -> String {
        format!("{} {}", self.kind.name(), self.index)
    }

    pub fn parse_key(key: &str) -> Result<Self, KeyError> {
        let mut chars = key.chars();
        let (Some(w), Some(k), Some(i), None) =
            (chars.next(), chars.next(), chars.next(), chars.next())
        else {
            return Err(KeyError::Length);
        };
        let window = Window::from_symbol(w).ok_or(KeyError::Window(w))?;
        let kind = EstablishmentKind::from_symbol(k).ok_or(KeyError::Kind(k))?;
        let index = match i {
            '1' => 1,
            '2' => 2,
            other => return Err(KeyError::Index(other)),
        };
        Ok(VisitRequest { window, kind, index })
    }
}

impl FromStr for VisitRequest {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, DatasetError> {
        VisitRequest::parse_key(s).map_err(|reason| DatasetError::Key {
            key: s.to_string(),
            reason,
        })
    }
}

impl fmt::Display for VisitRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.window.symbol(), self.kind.symbol(), self.index)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub id: PersonId,
    pub age_group: AgeGroup,
    pub health: f64,
    pub immunity: Immunity,
    pub requests: [Vec<VisitRequest>; DAYS],
}

impl Person {
    pub fn request_count(&self) -> usize {
        self.requests.iter().map(Vec::len).sum()
    }
}

/// Prior probability of infection per age group, written `20=0.03;30=0.01`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Priors(BTreeMap<AgeGroup, f64>);

impl Priors {
    pub fn new() -> Self {
        Priors::default()
    }

    pub fn with(mut self, group: AgeGroup, prob: f64) -> Self {
        self.0.insert(group, prob);
        self
    }

    pub fn get(&self, group: AgeGroup) -> f64 {
        self.0.get(&group).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgeGroup, f64)> + '_ {
        self.0.iter().map(|(g, p)| (*g, *p))
    }
}

impl FromStr for Priors {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, DatasetError> {
        let mut map = BTreeMap::new();
        for pair in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (age, prob) = pair
                .split_once('=')
                .ok_or_else(|| DatasetError::Priors(format!("expected age=prob, got {pair:?}")))?;
            let years: u32 = age
                .trim()
                .parse()
                .map_err(|_| DatasetError::Priors(format!("bad age {age:?}")))?;
            let group = AgeGroup::from_years(years)
                .ok_or_else(|| DatasetError::Priors(format!("unknown age group {years}")))?;
            let prob: f64 = prob
                .trim()
                .parse()
                .map_err(|_| DatasetError::Priors(format!("bad probability {prob:?}")))?;
            if !(0.0..=1.0).contains(&prob) {
                return Err(DatasetError::Priors(format!("probability {prob} outside [0, 1]")));
            }
            map.insert(group, prob);
        }
        Ok(Priors(map))
    }
}

impl fmt::Display for Priors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (g, p) in &self.0 {
            if !first {
                f.write_str(";")?;
            }
            first = false;
            write!(f, "{g}={p}")?;
        }
        Ok(())
    }
}

/// Position of one request in the canonical consumption order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RequestRef<'a> {
    pub person_index: usize,
    pub person: &'a Person,
    pub day: usize,
    pub ordinal: usize,
    pub request: VisitRequest,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub persons: Vec<Person>,
    pub priors: Priors,
}

impl Dataset {
    /// All requests in person order, then day order, then request order.
    pub fn requests(&self) -> impl Iterator<Item = RequestRef<'_>> + '_ {
        self.persons.iter().enumerate().flat_map(|(pi, person)| {
            person.requests.iter().enumerate().flat_map(move |(day, reqs)| {
                reqs.iter().enumerate().map(move |(ordinal, &request)| RequestRef {
                    person_index: pi,
                    person,
                    day,
                    ordinal,
                    request,
                })
            })
        })
    }

    pub fn request_count(&self) -> usize {
        self.persons.iter().map(Person::request_count).sum()
    }

    pub fn requests_per_day(&self) -> [usize; DAYS] {
        let mut out = [0; DAYS];
        for p in &self.persons {
            for (d, reqs) in p.requests.iter().enumerate() {
                out[d] += reqs.len();
            }
        }
        out
    }

    pub fn group_sizes(&self) -> [usize; 7] {
        let mut out = [0; 7];
        for p in &self.persons {
            out[p.age_group.index()] += 1;
        }
        out
    }

    /// Hex SHA-256 of the serialized dataset.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(serialize_dataset(self).as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_dataset(text: &str) -> Result<Dataset, DatasetError> {
    let mut ds = Dataset::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |msg: String| DatasetError::Parse { line: line_no, msg };
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("@priors") {
            ds.priors = rest.trim().parse().map_err(|e: DatasetError| err(e.to_string()))?;
            continue;
        }
        ds.persons.push(parse_person(line).map_err(err)?);
    }
    Ok(ds)
}

fn parse_person(line: &str) -> Result<Person, String> {
    let mut fields = line.splitn(5, char::is_whitespace);
    let mut next = |name: &str| {
        fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| format!("missing {name}"))
    };
    let id: PersonId = next("id")?.parse().map_err(|_| "bad person id".to_string())?;
    let age: u32 = next("age")?.parse().map_err(|_| "bad age".to_string())?;
    let age_group = AgeGroup::from_years(age).ok_or_else(|| format!("unknown age group {age}"))?;
    let health: f64 = next("health")?.parse().map_err(|_| "bad health".to_string())?;
    if !(MIN_HEALTH..=MAX_HEALTH).contains(&health) {
        return Err(format!("health {health} outside [1, 10]"));
    }
    let flag: u8 = next("immunity flag")?
        .parse()
        .map_err(|_| "bad immunity flag".to_string())?;
    let immunity = Immunity::from_flag(flag).ok_or_else(|| format!("unknown immunity flag {flag}"))?;
    let rest = fields.next().unwrap_or("");

    let days: Vec<&str> = rest.split('|').collect();
    if days.len() != DAYS {
        return Err(format!("expected {DAYS} day sections, found {}", days.len()));
    }
    let mut requests: [Vec<VisitRequest>; DAYS] = Default::default();
    for (d, section) in days.iter().enumerate() {
        for key in section.split(':').map(str::trim).filter(|k| !k.is_empty()) {
            let req = VisitRequest::parse_key(key).map_err(|e| format!("request {key:?}: {e}"))?;
            requests[d].push(req);
        }
    }
    Ok(Person {
        id,
        age_group,
        health,
        immunity,
        requests,
    })
}

pub fn serialize_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    if !ds.priors.is_empty() {
        out.push_str(&format!("@priors {}\n", ds.priors));
    }
    for p in &ds.persons {
        let days: Vec<String> = p
            .requests
            .iter()
            .map(|reqs| reqs.iter().map(ToString::to_string).collect::<Vec<_>>().join(":"))
            .collect();
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            p.id,
            p.age_group,
            p.health,
            p.immunity.flag(),
            days.join(" | ")
        ));
    }
    out
}
