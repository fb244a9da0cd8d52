//! Self-isolation and outcome rules per age group.
//!
//! Infection bands are lower-exclusive and upper-inclusive. Health bands are
//! upper-inclusive (`3.0-7.0` means `3.0 < h <= 7.0`); the top band is
//! closed at 10.

use serde::{Deserialize, Serialize};

use crate::dataset::AgeGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Recovers without hospital care.
    Immune,
    IcuRecovered,
    Death,
}

/// Health partition of `(0, 10]` into death, ICU-recovered and immune bands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthBands {
    /// `h <= death_max` dies.
    pub death_max: f64,
    /// `death_max < h <= icu_max` recovers after ICU; above is immune.
    pub icu_max: f64,
}

impl HealthBands {
    pub fn classify(&self, health: f64) -> Outcome {
        if health <= self.death_max {
            Outcome::Death
        } else if health <= self.icu_max {
            Outcome::IcuRecovered
        } else {
            Outcome::Immune
        }
    }
}

/// Partial model rules for one age group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialRule {
    /// Isolate when `I` exceeds this.
    pub isolate_above: f64,
    /// Also isolate when `band_low < I <= isolate_above` and health is low.
    pub isolate_band_low: f64,
    pub isolate_health_max: f64,
    /// Outcomes only apply to persons with `I` above this.
    pub outcome_above: f64,
    pub bands: HealthBands,
}

/// Standard model rules for one age group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullRule {
    /// `(d, h)`: isolate when `days_infected > d` and `health < h`.
    pub isolate: [(u32, f64); 2],
    pub bands: HealthBands,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleTable {
    pub partial: [PartialRule; 7],
    pub full: [FullRule; 7],
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::standard()
    }
}

impl RuleTable {
    pub fn standard() -> Self {
        let p = |above: f64, low: f64, outcome: f64, death: f64, icu: f64| PartialRule {
            isolate_above: above,
            isolate_band_low: low,
            isolate_health_max: 7.0,
            outcome_above: outcome,
            bands: HealthBands {
                death_max: death,
                icu_max: icu,
            },
        };
        let f = |h1: f64, h2: f64, death: f64, icu: f64| FullRule {
            isolate: [(1, h1), (2, h2)],
            bands: HealthBands {
                death_max: death,
                icu_max: icu,
            },
        };
        RuleTable {
            partial: [
                p(0.97, 0.95, 0.95, 3.0, 7.0),
                p(0.95, 0.92, 0.90, 4.0, 8.0),
                p(0.92, 0.87, 0.85, 4.0, 8.0),
                p(0.85, 0.80, 0.80, 4.0, 8.0),
                p(0.75, 0.70, 0.75, 5.0, 9.0),
                p(0.65, 0.60, 0.70, 7.5, 9.5),
                p(0.65, 0.60, 0.65, 8.5, 10.0),
            ],
            full: [
                f(5.0, 5.5, 3.0, 7.0),
                f(6.0, 6.5, 3.5, 8.0),
                f(6.5, 7.0, 4.0, 8.0),
                f(7.0, 8.0, 4.0, 8.0),
                f(7.0, 8.0, 4.5, 8.5),
                f(7.0, 8.0, 7.0, 9.5),
                f(7.0, 8.0, 8.5, 10.0),
            ],
        }
    }

    pub fn partial_rule(&self, age: AgeGroup) -> &PartialRule {
        &self.partial[age.index()]
    }

    pub fn full_rule(&self, age: AgeGroup) -> &FullRule {
        &self.full[age.index()]
    }

    pub fn partial_isolates(&self, age: AgeGroup, infection: f64, health: f64) -> bool {
        let r = self.partial_rule(age);
        infection > r.isolate_above
            || (infection > r.isolate_band_low && health <= r.isolate_health_max)
    }

    pub fn full_isolates(&self, age: AgeGroup, days_infected: u32, health: f64) -> bool {
        self.full_rule(age)
            .isolate
            .iter()
            .any(|&(d, h)| days_infected > d && health < h)
    }

    pub fn partial_outcome(&self, age: AgeGroup, infection: f64, health: f64) -> Option<Outcome> {
        let r = self.partial_rule(age);
        (infection > r.outcome_above).then(|| r.bands.classify(health))
    }

    pub fn full_outcome(&self, age: AgeGroup, health: f64) -> Outcome {
        self.full_rule(age).bands.classify(health)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AgeGroup::*;

    #[test]
    fn eighty_year_olds_never_immune() {
        let t = RuleTable::standard();
        assert_eq!(t.full_outcome(Eighties, 10.0), Outcome::IcuRecovered);
        assert_eq!(t.full_outcome(Eighties, 8.5), Outcome::Death);
        assert_eq!(t.partial_outcome(Eighties, 0.70, 9.0), Some(Outcome::IcuRecovered));
        assert_eq!(t.partial_outcome(Eighties, 0.70, 8.5), Some(Outcome::Death));
    }

    #[test]
    fn documented_rows() {
        let t = RuleTable::standard();
        assert!(t.partial_isolates(Twenties, 0.98, 9.0));
        assert!(!t.partial_isolates(Twenties, 0.96, 8.0));
        assert!(t.partial_isolates(Twenties, 0.96, 7.0));
        assert!(t.full_isolates(Thirties, 2, 5.9));
        assert!(!t.full_isolates(Thirties, 1, 5.9));
        assert_eq!(t.full_outcome(Twenties, 2.5), Outcome::Death);
        assert_eq!(t.partial_outcome(Twenties, 0.95, 1.0), None);
    }
}
