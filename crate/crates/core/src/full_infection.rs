//! Standard probability model: people are susceptible, infected or immune,
//! and infection follows a Monte Carlo co-location table `p_n`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PersonId;
use crate::par::{self, Exec};

/// Infected population simulated by the Monte Carlo routine.
pub const TABLE_SIZE: usize = 20;
pub const DEFAULT_ITERATIONS: u64 = 100_000;

/// Raw draws span 7200 one-second ticks of a two-hour visit.
const TICKS: u32 = 7200;
const BATCH: u64 = 4096;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("q must be at least 1")]
    ZeroTrials,
    #[error("malformed table text: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Floor-plan cell for a raw tick in `0..7200`.
///
/// Ticks `0..600` cover 300 corridor cells (2 s each), `600..2100` cover 50
/// shelf cells (30 s) and `2100..7200` cover 50 popular cells (102 s).
pub fn cell_for_tick(tick: u32) -> u32 {
    debug_assert!(tick < TICKS);
    if tick < 600 {
        tick / 2
    } else if tick < 2100 {
        300 + (tick - 600) / 30
    } else {
        350 + (tick - 2100) / 102
    }
}

/// `p_1..p_20` for one value of `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PnTable {
    pub q: u32,
    pub iterations: u64,
    pub seed: u64,
    pub probs: [f64; TABLE_SIZE],
}

impl PnTable {
    /// Probability of infection with `n` infected present; 1.0 beyond 20.
    pub fn prob(&self, n: usize) -> f64 {
        match n {
            0 => 0.0,
            n if n > TABLE_SIZE => 1.0,
            n => self.probs[n - 1],
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# p_n table\n");
        let _ = writeln!(out, "q {}", self.q);
        let _ = writeln!(out, "iterations {}", self.iterations);
        let _ = writeln!(out, "seed {}", self.seed);
        for (i, p) in self.probs.iter().enumerate() {
            let _ = writeln!(out, "{} {:?}", i + 1, p);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TableError> {
        let bad = |m: &str| TableError::Format(m.to_string());
        let mut q = None;
        let mut iterations = None;
        let mut seed = None;
        let mut probs = [f64::NAN; TABLE_SIZE];
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(' ').ok_or_else(|| bad(line))?;
            let value = value.trim();
            match key {
                "q" => q = Some(value.parse().map_err(|_| bad("q"))?),
                "iterations" => iterations = Some(value.parse().map_err(|_| bad("iterations"))?),
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                n => {
                    let n: usize = n.parse().map_err(|_| bad(line))?;
                    if !(1..=TABLE_SIZE).contains(&n) {
                        return Err(bad("row index out of range"));
                    }
                    probs[n - 1] = value.parse().map_err(|_| bad(line))?;
                }
            }
        }
        if probs.iter().any(|p| p.is_nan()) {
            return Err(bad("missing rows"));
        }
        Ok(PnTable {
            q: q.ok_or_else(|| bad("missing q"))?,
            iterations: iterations.ok_or_else(|| bad("missing iterations"))?,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            probs,
        })
    }

    pub fn cache_path(dir: &Path, q: u32, iterations: u64, seed: u64) -> PathBuf {
        dir.join(format!("pn_q{q}_i{iterations}_s{seed}.txt"))
    }

    /// Reads a cached table from `dir`, building and storing it if absent.
    pub fn load_or_build(
        dir: &Path,
        q: u32,
        iterations: u64,
        seed: u64,
        exec: Exec,
    ) -> Result<Self, TableError> {
        let path = Self::cache_path(dir, q, iterations, seed);
        if let Ok(text) = fs::read_to_string(&path) {
            let table = Self::from_text(&text)?;
            if table.q == q && table.iterations == iterations && table.seed == seed {
                return Ok(table);
            }
        }
        let table = build_pn_table(q, iterations, seed, exec)?;
        fs::create_dir_all(dir)?;
        fs::write(&path, table.to_text())?;
        Ok(table)
    }
}

/// Monte Carlo estimate of `p_n`, the probability that one susceptible
/// shares a cell with at least one of the first `n` of 20 infected in at
/// least one of `q` independent trials.
///
/// Iterations are split into fixed batches, each with its own ChaCha stream,
/// so the table depends only on `(q, iterations, seed)`.
pub fn build_pn_table(q: u32, iterations: u64, seed: u64, exec: Exec) -> Result<PnTable, TableError> {
    if q == 0 {
        return Err(TableError::ZeroTrials);
    }
    let batches = iterations.div_ceil(BATCH) as usize;
    let histograms = par::map_range(exec, batches, |b| {
        let start = b as u64 * BATCH;
        let len = BATCH.min(iterations - start);
        first_meet_histogram(q, len, seed, b as u64)
    });

    // hist[m] counts iterations whose lowest-numbered infected met is m.
    let mut hist = [0u64; TABLE_SIZE + 1];
    for h in histograms {
        for (total, c) in hist.iter_mut().zip(h) {
            *total += c;
        }
    }
    let mut probs = [0.0; TABLE_SIZE];
    let mut running = 0u64;
    for n in 1..=TABLE_SIZE {
        running += hist[n];
        probs[n - 1] = running as f64 / iterations.max(1) as f64;
    }
    Ok(PnTable {
        q,
        iterations,
        seed,
        probs,
    })
}

fn first_meet_histogram(q: u32, iterations: u64, seed: u64, stream: u64) -> [u64; TABLE_SIZE + 1] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut hist = [0u64; TABLE_SIZE + 1];
    for _ in 0..iterations {
        let mut first = usize::MAX;
        for _ in 0..q {
            let susceptible = cell_for_tick(rng.random_range(0..TICKS));
            for m in 1..=TABLE_SIZE {
                let cell = cell_for_tick(rng.random_range(0..TICKS));
                if cell == susceptible && m < first {
                    first = m;
                }
            }
        }
        if first != usize::MAX {
            hist[first] += 1;
        }
    }
    hist
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Susceptible,
    Infected,
    Immune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfectionStatus {
    pub status: Status,
    /// Whole days since infection.
    pub days_infected: u32,
}

impl InfectionStatus {
    pub const SUSCEPTIBLE: Self = InfectionStatus {
        status: Status::Susceptible,
        days_infected: 0,
    };
    pub const INFECTED: Self = InfectionStatus {
        status: Status::Infected,
        days_infected: 0,
    };
    pub const IMMUNE: Self = InfectionStatus {
        status: Status::Immune,
        days_infected: 0,
    };
}

/// Persons infected by one encounter.
///
/// With `n` infected and `m` susceptible present, `⌊p_n · m⌋` susceptibles
/// become infected, taken in ascending id order. Nothing happens without at
/// least one infected and one susceptible.
pub fn transmit(encounter: &[(PersonId, InfectionStatus)], table: &PnTable) -> Vec<PersonId> {
    if encounter.len() < 2 {
        return Vec::new();
    }
    let infected = encounter
        .iter()
        .filter(|(_, st)| st.status == Status::Infected)
        .count();
    let mut susceptible: Vec<PersonId> = encounter
        .iter()
        .filter(|(_, st)| st.status == Status::Susceptible)
        .map(|(id, _)| *id)
        .collect();
    if infected == 0 || susceptible.is_empty() {
        return Vec::new();
    }
    let k = (table.prob(infected) * susceptible.len() as f64).floor() as usize;
    susceptible.sort_unstable();
    susceptible.truncate(k);
    susceptible
}
