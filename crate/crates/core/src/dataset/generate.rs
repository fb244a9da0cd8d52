//! Synthetic population matching per-age-group summary statistics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    AgeGroup, Dataset, DatasetError, EstablishmentKind, Immunity, Person, Priors, VisitRequest,
    Window, DAYS, ESTABLISHMENTS, MAX_HEALTH, MIN_HEALTH,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub variance: f64,
}

impl Stats {
    pub const fn new(mean: f64, min: f64, max: f64, variance: f64) -> Self {
        Stats { mean, min, max, variance }
    }

    fn validate(&self, what: &str) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::Profile(format!("{what}: {msg}")));
        if !(self.mean.is_finite() && self.min.is_finite() && self.max.is_finite()) {
            return bad("non-finite statistic".into());
        }
        if self.min > self.max {
            return bad(format!("min {} > max {}", self.min, self.max));
        }
        if self.mean < self.min || self.mean > self.max {
            return bad(format!("mean {} outside [{}, {}]", self.mean, self.min, self.max));
        }
        if self.variance.is_nan() || self.variance < 0.0 {
            return bad(format!("negative variance {}", self.variance));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupProfile {
    pub age: AgeGroup,
    pub count: usize,
    pub health: Stats,
    pub visits: [Stats; DAYS],
}

/// Per-age-group counts, health statistics and per-day visit statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationProfile {
    pub groups: Vec<GroupProfile>,
}

impl PopulationProfile {
    /// The reference population: 282 people, 1704 visits.
    pub fn canonical() -> Self {
        use AgeGroup::*;
        #[rustfmt::skip]
        let rows: [(AgeGroup, usize, Stats, [Stats; 3]); 7] = [
            (Twenties, 35, Stats::new(9.49, 9.0, 10.0, 0.09),
             [Stats::new(2.74, 1.0, 5.0, 0.53), Stats::new(2.57, 1.0, 4.0, 0.53), Stats::new(2.60, 1.0, 4.0, 0.47)]),
            (Thirties, 65, Stats::new(9.08, 8.1, 10.0, 0.29),
             [Stats::new(2.08, 1.0, 5.0, 0.69), Stats::new(2.06, 1.0, 5.0, 0.67), Stats::new(1.88, 1.0, 4.0, 0.54)]),
            (Forties, 49, Stats::new(8.51, 7.0, 9.9, 0.65),
             [Stats::new(2.41, 1.0, 4.0, 0.65), Stats::new(2.37, 1.0, 4.0, 0.68), Stats::new(2.06, 1.0, 3.0, 0.79)]),
            (Fifties, 43, Stats::new(7.27, 5.1, 9.9, 2.37),
             [Stats::new(2.23, 1.0, 4.0, 0.46), Stats::new(2.23, 1.0, 4.0, 0.50), Stats::new(2.12, 1.0, 3.0, 0.47)]),
            (Sixties, 27, Stats::new(7.86, 4.2, 10.0, 2.29),
             [Stats::new(2.26, 1.0, 4.0, 0.85), Stats::new(2.19, 1.0, 4.0, 0.89), Stats::new(1.85, 1.0, 4.0, 0.94)]),
            (Seventies, 43, Stats::new(5.45, 2.1, 9.0, 3.31),
             [Stats::new(1.30, 1.0, 3.0, 0.30), Stats::new(1.26, 1.0, 3.0, 0.24), Stats::new(1.30, 1.0, 3.0, 0.40)]),
            (Eighties, 20, Stats::new(4.10, 1.3, 7.0, 3.69),
             [Stats::new(1.20, 1.0, 3.0, 0.26), Stats::new(1.15, 1.0, 2.0, 0.13), Stats::new(1.75, 1.0, 4.0, 0.69)]),
        ];
        PopulationProfile {
            groups: rows
                .into_iter()
                .map(|(age, count, health, visits)| GroupProfile { age, count, health, visits })
                .collect(),
        }
    }

    pub fn person_count(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }

    /// Expected visit total per day, `Σ round(count · mean)`.
    pub fn expected_visits(&self) -> [usize; DAYS] {
        let mut out = [0; DAYS];
        for g in &self.groups {
            for (d, v) in g.visits.iter().enumerate() {
                out[d] += (g.count as f64 * v.mean).round() as usize;
            }
        }
        out
    }

    fn validate(&self) -> Result<(), DatasetError> {
        for g in &self.groups {
            let label = format!("group {}", g.age);
            if g.count == 0 {
                return Err(DatasetError::Profile(format!("{label}: empty group")));
            }
            g.health.validate(&format!("{label} health"))?;
            if g.health.min < MIN_HEALTH || g.health.max > MAX_HEALTH {
                return Err(DatasetError::Profile(format!(
                    "{label}: health range outside [1, 10]"
                )));
            }
            for (d, v) in g.visits.iter().enumerate() {
                v.validate(&format!("{label} day {d} visits"))?;
                if v.min < 0.0 || v.max > ESTABLISHMENTS as f64 {
                    return Err(DatasetError::Profile(format!(
                        "{label} day {d}: visit range must lie in [0, {ESTABLISHMENTS}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generates a population matching `profile`.
///
/// Group sizes are exact. Per-group daily visit totals equal
/// `round(count · mean)`, and visit counts are then spread to approach the
/// profile variance. Health is a clipped normal rounded to one decimal.
pub fn generate_dataset(seed: u64, profile: &PopulationProfile) -> Result<Dataset, DatasetError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut persons = Vec::with_capacity(profile.person_count());
    for g in &profile.groups {
        let health = sample_health(&mut rng, g.count, &g.health);
        let mut counts: Vec<[usize; DAYS]> = vec![[0; DAYS]; g.count];
        for (d, stats) in g.visits.iter().enumerate() {
            for (i, c) in sample_counts(&mut rng, g.count, stats).into_iter().enumerate() {
                counts[i][d] = c;
            }
        }
        for (h, day_counts) in health.into_iter().zip(counts) {
            let mut requests: [Vec<VisitRequest>; DAYS] = Default::default();
            for (d, &n) in day_counts.iter().enumerate() {
                requests[d] = sample_requests(&mut rng, g.age, n);
            }
            persons.push(Person {
                id: 0,
                age_group: g.age,
                health: h,
                immunity: Immunity::Susceptible,
                requests,
            });
        }
    }
    persons.shuffle(&mut rng);
    for (i, p) in persons.iter_mut().enumerate() {
        p.id = i as u32 + 1;
    }
    Ok(Dataset {
        persons,
        priors: Priors::new(),
    })
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

fn sample_health(rng: &mut ChaCha8Rng, n: usize, stats: &Stats) -> Vec<f64> {
    let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let (zm, zv) = mean_var(&z);
    if n > 1 && zv > 0.0 {
        let sd = zv.sqrt();
        z.iter_mut().for_each(|v| *v = (*v - zm) / sd);
    }
    let lo = round1(stats.min).max(stats.min);
    let hi = round1(stats.max).min(stats.max);
    let realize = |loc: f64, scale: f64| -> Vec<f64> {
        z.iter()
            .map(|&v| round1((loc + scale * v).clamp(stats.min, stats.max)).clamp(lo, hi))
            .collect()
    };

    // Clipping and rounding shift the moments; correct loc/scale iteratively.
    let (mut loc, mut scale) = (stats.mean, stats.variance.sqrt());
    let mut best = realize(loc, scale);
    let score = |xs: &[f64]| {
        let (m, v) = mean_var(xs);
        (m - stats.mean).abs() / stats.mean.max(1e-9)
            + (v - stats.variance).abs() / stats.variance.max(1e-9)
    };
    let mut best_score = score(&best);
    for _ in 0..80 {
        let xs = realize(loc, scale);
        let (m, v) = mean_var(&xs);
        let s = score(&xs);
        if s < best_score {
            best_score = s;
            best = xs;
        }
        loc += stats.mean - m;
        if v > 0.0 {
            scale = (scale * (stats.variance / v).sqrt()).clamp(1e-6, 10.0);
        } else {
            scale = (scale * 2.0).max(0.05);
        }
    }
    best
}

/// Maximum-entropy weights on `min..=max` with the requested mean and variance.
fn maxent_weights(min: usize, max: usize, mean: f64, var: f64) -> Vec<f64> {
    let support: Vec<f64> = (min..=max).map(|k| k as f64 - mean).collect();
    if support.len() == 1 {
        return vec![1.0];
    }
    let moments = |a: f64, b: f64| {
        let logits: Vec<f64> = support.iter().map(|&x| a * x + b * x * x).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = w.iter().sum();
        let p: Vec<f64> = w.iter().map(|x| x / z).collect();
        let e1: f64 = p.iter().zip(&support).map(|(p, x)| p * x).sum();
        let e2: f64 = p.iter().zip(&support).map(|(p, x)| p * x * x).sum();
        let e3: f64 = p.iter().zip(&support).map(|(p, x)| p * x * x * x).sum();
        let e4: f64 = p.iter().zip(&support).map(|(p, x)| p * x.powi(4)).sum();
        (p, e1, e2, e3, e4)
    };
    let (mut a, mut b) = (0.0, 0.0);
    for _ in 0..200 {
        let (_, e1, e2, e3, e4) = moments(a, b);
        let (g1, g2) = (e1, e2 - var);
        if g1.abs() < 1e-10 && g2.abs() < 1e-10 {
            break;
        }
        // Hessian of the log-partition is the covariance of (x, x²).
        let h11 = e2 - e1 * e1 + 1e-9;
        let h12 = e3 - e1 * e2;
        let h22 = e4 - e2 * e2 + 1e-9;
        let det = h11 * h22 - h12 * h12;
        if det.abs() < 1e-14 {
            break;
        }
        let da = (h22 * g1 - h12 * g2) / det;
        let db = (h11 * g2 - h12 * g1) / det;
        let step = 1.0 / (1.0 + (da.abs() + db.abs()) / 4.0);
        a -= step * da;
        b -= step * db;
    }
    moments(a, b).0
}

fn sample_counts(rng: &mut ChaCha8Rng, n: usize, stats: &Stats) -> Vec<usize> {
    let min = stats.min.round() as usize;
    let max = stats.max.round() as usize;
    let weights = maxent_weights(min, max, stats.mean, stats.variance);
    let dist = WeightedIndex::new(&weights).expect("weights are positive");
    let mut counts: Vec<usize> = (0..n).map(|_| min + dist.sample(rng)).collect();

    let target_sum = ((n as f64 * stats.mean).round() as usize).clamp(n * min, n * max);
    let mut sum: usize = counts.iter().sum();
    while sum != target_sum {
        let eligible: Vec<usize> = (0..n)
            .filter(|&i| if sum < target_sum { counts[i] < max } else { counts[i] > min })
            .collect();
        let i = eligible[rng.random_range(0..eligible.len())];
        if sum < target_sum {
            counts[i] += 1;
            sum += 1;
        } else {
            counts[i] -= 1;
            sum -= 1;
        }
    }

    // Sum-preserving unit transfers toward the target sum of squares.
    let target_ss = n as f64 * (stats.variance + (sum as f64 / n as f64).powi(2));
    let mut ss: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    for _ in 0..10_000 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in (min + 1)..=max {
            for b in min..max {
                let from_ok = counts.iter().filter(|&&c| c == a).count() > usize::from(a == b);
                if !from_ok || !counts.contains(&b) {
                    continue;
                }
                let next = ss + 2.0 * (b as f64 - a as f64) + 2.0;
                let gap = (next - target_ss).abs();
                if best.is_none_or(|(_, _, g)| gap < g) {
                    best = Some((a, b, gap));
                }
            }
        }
        let Some((a, b, gap)) = best else { break };
        if gap >= (ss - target_ss).abs() {
            break;
        }
        let from: Vec<usize> = (0..n).filter(|&i| counts[i] == a).collect();
        let i = from[rng.random_range(0..from.len())];
        let to: Vec<usize> = (0..n).filter(|&j| j != i && counts[j] == b).collect();
        let j = to[rng.random_range(0..to.len())];
        counts[i] -= 1;
        counts[j] += 1;
        ss += 2.0 * (b as f64 - a as f64) + 2.0;
    }
    counts
}

fn sample_requests(rng: &mut ChaCha8Rng, age: AgeGroup, n: usize) -> Vec<VisitRequest> {
    use crate::dataset::Cohort;
    // Weights over M, P, N, A: older people go out less at night.
    let window_w: [f64; 4] = match age.cohort() {
        Cohort::Young => [0.20, 0.30, 0.30, 0.20],
        Cohort::Middle => [0.30, 0.30, 0.20, 0.20],
        Cohort::Elderly => [0.40, 0.30, 0.10, 0.20],
    };
    // Weights over F, C, P, D, R, S.
    let kind_w: [f64; 6] = match age.cohort() {
        Cohort::Young => [0.25, 0.20, 0.15, 0.05, 0.20, 0.15],
        Cohort::Middle => [0.30, 0.10, 0.15, 0.10, 0.15, 0.20],
        Cohort::Elderly => [0.30, 0.05, 0.15, 0.25, 0.10, 0.15],
    };
    let windows = WeightedIndex::new(window_w).expect("static weights");
    let kinds = WeightedIndex::new(kind_w).expect("static weights");
    let window_of = [Window::Morning, Window::Afternoon, Window::Night, Window::Any];

    let mut out: Vec<VisitRequest> = Vec::with_capacity(n);
    while out.len() < n {
        let req = VisitRequest::new(
            window_of[windows.sample(rng)],
            EstablishmentKind::ALL[kinds.sample(rng)],
            rng.random_range(1..=2),
        );
        // One visit per establishment per day.
        if out.iter().all(|r| r.establishment() != req.establishment()) {
            out.push(req);
        }
    }
    out
}

/// Marks a-priori infected and immune persons, preferring the healthiest.
///
/// Counts are `round(fraction · N)`. Persons are ranked by descending
/// health with ties broken by a seeded shuffle; infected are taken from the
/// top of the ranking and immune from the persons that follow.
pub fn mark_apriori_infection(
    ds: &Dataset,
    fraction_infected: f64,
    fraction_immune: f64,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    for (name, f) in [("infected", fraction_infected), ("immune", fraction_immune)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(DatasetError::Fractions(format!("{name} fraction {f} outside [0, 1]")));
        }
    }
    if fraction_infected + fraction_immune > 1.0 {
        return Err(DatasetError::Fractions(format!(
            "fractions sum to {} > 1",
            fraction_infected + fraction_immune
        )));
    }
    let n = ds.persons.len();
    let n_inf = (fraction_infected * n as f64).round() as usize;
    let n_imm = ((fraction_immune * n as f64).round() as usize).min(n - n_inf.min(n));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| ds.persons[b].health.total_cmp(&ds.persons[a].health));

    let mut out = ds.clone();
    for p in &mut out.persons {
        p.immunity = Immunity::Susceptible;
    }
    for &i in &order[..n_inf] {
        out.persons[i].immunity = Immunity::Infected;
    }
    for &i in &order[n_inf..n_inf + n_imm] {
        out.persons[i].immunity = Immunity::Immune;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_totals() {
        let p = PopulationProfile::canonical();
        assert_eq!(p.person_count(), 282);
        assert_eq!(p.expected_visits(), [586, 572, 546]);
    }

    #[test]
    fn maxent_matches_moments_when_feasible() {
        let w = maxent_weights(1, 5, 2.74, 0.53);
        let mean: f64 = w.iter().enumerate().map(|(i, p)| p * (i + 1) as f64).sum();
        let var: f64 = w
            .iter()
            .enumerate()
            .map(|(i, p)| p * ((i + 1) as f64 - mean).powi(2))
            .sum();
        assert!((mean - 2.74).abs() < 1e-6, "{mean}");
        assert!((var - 0.53).abs() < 1e-6, "{var}");
    }

    #[test]
    fn rejects_infeasible_profile() {
        let mut p = PopulationProfile::canonical();
        p.groups[0].health = Stats::new(9.0, 9.5, 9.0, 0.1);
        assert!(matches!(generate_dataset(1, &p), Err(DatasetError::Profile(_))));
        let mut p = PopulationProfile::canonical();
        p.groups[2].visits[1] = Stats::new(6.0, 1.0, 4.0, 0.5);
        assert!(generate_dataset(1, &p).is_err());
        let mut p = PopulationProfile::canonical();
        p.groups[3].count = 0;
        assert!(generate_dataset(1, &p).is_err());
    }

    #[test]
    fn rejects_bad_fractions() {
        let ds = generate_dataset(3, &PopulationProfile::canonical()).unwrap();
        assert!(mark_apriori_infection(&ds, 0.7, 0.4, 1).is_err());
        assert!(mark_apriori_infection(&ds, -0.1, 0.0, 1).is_err());
    }
}
