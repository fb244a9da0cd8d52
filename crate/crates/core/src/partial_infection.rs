//! Partial infection model.
//!
//! Every person carries an infection level `I` in `[0, 1]` with
//! susceptibility `S = 1 - I`. An encounter of `n_p` people at an
//! establishment with `s` sub-locations produces an infection pressure from
//! the participants' levels, and every participant is then updated with
//! `I' = p·S + I`.

use thiserror::Error;

use crate::dataset::PersonId;

/// Largest encounter the enumeration oracle accepts.
pub const ORACLE_MAX_PARTICIPANTS: usize = 5;
pub const ORACLE_MAX_SUBLOCATIONS: u32 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration limited to {ORACLE_MAX_PARTICIPANTS} participants and s <= {ORACLE_MAX_SUBLOCATIONS}, got n_p={participants}, s={s}")]
    TooLarge { participants: usize, s: u32 },
    #[error("sub-location count must be at least 2, got {0}")]
    SubLocations(u32),
}

/// Infection level of one person. Susceptibility is derived, so the pair
/// always sums to one.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct PartialState(f64);

impl PartialState {
    pub const SUSCEPTIBLE: PartialState = PartialState(0.0);
    pub const INFECTED: PartialState = PartialState(1.0);

    pub fn new(infection: f64) -> Self {
        PartialState(infection.clamp(0.0, 1.0))
    }

    pub fn infection(self) -> f64 {
        self.0
    }

    pub fn susceptibility(self) -> f64 {
        1.0 - self.0
    }

    /// `I' = p·S + I`.
    pub fn updated(self, pressure: f64) -> Self {
        PartialState((self.0 + pressure * (1.0 - self.0)).min(1.0))
    }
}

/// `g_j = (1/s)·((s-1)/s)^(j-1)`.
pub fn g_factor(s: u32, j: u32) -> f64 {
    assert!(s >= 2 && j >= 1, "g_factor needs s >= 2 and j >= 1");
    let s = s as f64;
    (1.0 / s) * ((s - 1.0) / s).powi(j as i32 - 1)
}

/// Closed form `1 - ((s-1)/s)^n`: probability that a susceptible shares a
/// sub-location with at least one of `n` fully infected.
pub fn pure_encounter_probability(s: u32, n: u32) -> f64 {
    let s = s as f64;
    1.0 - ((s - 1.0) / s).powi(n as i32)
}

/// Precomputed `g_1..g_J` for one sub-location count.
#[derive(Clone, Debug, PartialEq)]
pub struct GFactors {
    s: u32,
    factors: Vec<f64>,
}

impl GFactors {
    pub fn new(s: u32, max_j: usize) -> Self {
        let factors = (1..=max_j as u32).map(|j| g_factor(s, j)).collect();
        GFactors { s, factors }
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// `g_j` for 1-based `j`; computed directly past the table end.
    pub fn get(&self, j: usize) -> f64 {
        self.factors
            .get(j - 1)
            .copied()
            .unwrap_or_else(|| g_factor(self.s, j as u32))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncounterGroup {
    pub participants: Vec<(PersonId, PartialState)>,
    pub s: u32,
}

impl EncounterGroup {
    pub fn new(s: u32, participants: Vec<(PersonId, PartialState)>) -> Self {
        EncounterGroup { participants, s }
    }

    /// Builds a group from bare levels, numbering participants from 1.
    pub fn from_levels(s: u32, levels: &[f64]) -> Self {
        let participants = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as PersonId + 1, PartialState::new(l)))
            .collect();
        EncounterGroup { participants, s }
    }
}

/// Reusable pressure evaluator holding the precomputed factors.
#[derive(Clone, Debug)]
pub struct PressureModel {
    g: GFactors,
}

impl PressureModel {
    pub fn new(s: u32, max_group: usize) -> Self {
        PressureModel {
            g: GFactors::new(s, max_group.max(1)),
        }
    }

    pub fn s(&self) -> u32 {
        self.g.s()
    }

    /// Infection pressure of one encounter. `scratch` is reused across calls.
    pub fn pressure(
        &self,
        participants: &[(PersonId, PartialState)],
        scratch: &mut Vec<(f64, PersonId)>,
    ) -> f64 {
        let n_p = participants.len();
        if n_p < 2 {
            return 0.0;
        }
        let n = participants.iter().filter(|(_, st)| st.infection() > 0.0).count();
        if n == 0 || participants.iter().all(|(_, st)| st.infection() >= 1.0) {
            return 0.0;
        }

        scratch.clear();
        let s_max = if n < n_p {
            scratch.extend(
                participants
                    .iter()
                    .filter(|(_, st)| st.infection() > 0.0)
                    .map(|&(id, st)| (st.infection(), id)),
            );
            1.0
        } else {
            // Owner of the largest S (smallest I); ties go to the lower id.
            let (owner_pos, &(_, owner)) = participants
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    a.1.infection().total_cmp(&b.1.infection()).then(a.0.cmp(&b.0))
                })
                .expect("non-empty");
            scratch.extend(
                participants
                    .iter()
                    .enumerate()
                    .filter(|&(pos, _)| pos != owner_pos)
                    .map(|(_, &(id, st))| (st.infection(), id)),
            );
            owner.susceptibility()
        };
        scratch.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let sum: f64 = scratch
            .iter()
            .enumerate()
            .map(|(j, &(i_level, _))| i_level * self.g.get(j + 1))
            .sum();
        (s_max * sum).min(1.0)
    }
}

pub fn encounter_pressure(group: &EncounterGroup) -> f64 {
    let model = PressureModel::new(group.s, group.participants.len());
    model.pressure(&group.participants, &mut Vec::new())
}

/// Applies `I' = p·S + I` to every participant.
pub fn apply_update(group: &EncounterGroup, pressure: f64) -> Vec<(PersonId, PartialState)> {
    group
        .participants
        .iter()
        .map(|&(id, st)| (id, st.updated(pressure)))
        .collect()
}

/// Role-labeling term from the location probability tree.
///
/// Everyone labeled infected contributes its `I`; for each labeled
/// susceptible `k`, every one of the `s^n_p` equally likely location
/// assignments credits the largest `I` among infected sharing `k`'s
/// sub-location. The term is the largest `S_k · E[credit]`.
pub fn role_term(group: &EncounterGroup, infected_mask: u32) -> Result<f64, OracleError> {
    check_enumerable(group)?;
    let n_p = group.participants.len();
    let s = group.s as usize;
    let levels: Vec<f64> = group.participants.iter().map(|p| p.1.infection()).collect();
    let is_infected = |j: usize| infected_mask & (1 << j) != 0;

    let total = s.pow(n_p as u32);
    let mut credit = vec![0.0f64; n_p];
    let mut loc = vec![0usize; n_p];
    for code in 0..total {
        let mut c = code;
        for l in loc.iter_mut() {
            *l = c % s;
            c /= s;
        }
        for k in (0..n_p).filter(|&k| !is_infected(k)) {
            let best = (0..n_p)
                .filter(|&j| is_infected(j) && loc[j] == loc[k])
                .map(|j| levels[j])
                .fold(0.0, f64::max);
            credit[k] += best;
        }
    }
    Ok((0..n_p)
        .filter(|&k| !is_infected(k))
        .map(|k| (1.0 - levels[k]) * credit[k] / total as f64)
        .fold(0.0, f64::max))
}

/// Enumeration oracle: the maximum role term over every labeling with at
/// least one susceptible and one infected.
pub fn brute_force_pressure(group: &EncounterGroup) -> Result<f64, OracleError> {
    check_enumerable(group)?;
    let n_p = group.participants.len();
    let full = (1u32 << n_p) - 1;
    let mut best = 0.0f64;
    for mask in 1..full {
        best = best.max(role_term(group, mask)?);
    }
    Ok(best)
}

fn check_enumerable(group: &EncounterGroup) -> Result<(), OracleError> {
    if group.s < 2 {
        return Err(OracleError::SubLocations(group.s));
    }
    if group.participants.len() > ORACLE_MAX_PARTICIPANTS || group.s > ORACLE_MAX_SUBLOCATIONS {
        return Err(OracleError::TooLarge {
            participants: group.participants.len(),
            s: group.s,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn g_factors_match_worked_examples() {
        for (j, k) in [(1, 16.0), (2, 12.0), (3, 9.0)] {
            assert_abs_diff_eq!(g_factor(4, j), k / 64.0, epsilon = 1e-15);
        }
        for (j, k) in [(1, 36.0), (2, 30.0), (3, 25.0)] {
            assert_abs_diff_eq!(g_factor(6, j), k / 216.0, epsilon = 1e-15);
        }
        let direct: f64 = (1..=3).map(|j| g_factor(4, j)).sum();
        assert_abs_diff_eq!(direct, 0.578125, epsilon = 1e-15);
        assert_abs_diff_eq!(pure_encounter_probability(4, 3), 0.578125, epsilon = 1e-15);
    }

    #[test]
    fn g_table_falls_back_past_end() {
        let g = GFactors::new(4, 3);
        assert_eq!(g.len(), 3);
        assert_abs_diff_eq!(g.get(5), g_factor(4, 5), epsilon = 0.0);
    }

    #[test]
    fn second_worked_example() {
        let mut levels = vec![0.3, 0.6, 1.0];
        levels.extend([0.0; 4]);
        let group = EncounterGroup::from_levels(6, &levels);
        let p = encounter_pressure(&group);
        assert_abs_diff_eq!(p, 61.5 / 216.0, epsilon = 1e-12);

        let updated = apply_update(&group, p);
        assert_abs_diff_eq!(updated[0].1.infection(), 0.7 * p + 0.3, epsilon = 1e-12);
        assert_eq!(updated[2].1.infection(), 1.0);
        for u in &updated[3..] {
            assert_abs_diff_eq!(u.1.infection(), p, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_worked_example_follows_formula() {
        let group = EncounterGroup::from_levels(4, &[0.01, 0.98, 0.97, 0.99]);
        let expected = 0.99 * (0.99 * 16.0 + 0.98 * 12.0 + 0.97 * 9.0) / 64.0;
        assert_abs_diff_eq!(encounter_pressure(&group), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.5620, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_groups() {
        assert_eq!(encounter_pressure(&EncounterGroup::from_levels(4, &[1.0])), 0.0);
        assert_eq!(encounter_pressure(&EncounterGroup::from_levels(4, &[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(encounter_pressure(&EncounterGroup::from_levels(4, &[1.0, 1.0])), 0.0);
        assert_eq!(encounter_pressure(&EncounterGroup::from_levels(4, &[])), 0.0);
    }

    #[test]
    fn update_with_zero_pressure_is_identity() {
        let group = EncounterGroup::from_levels(4, &[0.2, 0.0, 1.0]);
        let updated = apply_update(&group, 0.0);
        assert_eq!(updated, group.participants);
    }

    #[test]
    fn oracle_pure_cases() {
        for (n, expected) in [(1usize, 0.25), (2, 0.4375), (3, 148.0 / 256.0)] {
            let mut levels = vec![0.0];
            levels.extend(std::iter::repeat_n(1.0, n));
            let group = EncounterGroup::from_levels(4, &levels);
            assert_abs_diff_eq!(brute_force_pressure(&group).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let group = EncounterGroup::from_levels(4, &[0.1; 6]);
        assert!(matches!(brute_force_pressure(&group), Err(OracleError::TooLarge { .. })));
        let group = EncounterGroup::from_levels(7, &[0.1; 3]);
        assert!(brute_force_pressure(&group).is_err());
        let group = EncounterGroup::from_levels(1, &[0.1; 3]);
        assert_eq!(brute_force_pressure(&group), Err(OracleError::SubLocations(1)));
    }

    fn pure_group() -> impl Strategy<Value = EncounterGroup> {
        (2u32..=6, prop::collection::vec(any::<bool>(), 1..=5)).prop_map(|(s, flags)| {
            let levels: Vec<f64> = flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
            EncounterGroup::from_levels(s, &levels)
        })
    }

    fn partial_group() -> impl Strategy<Value = EncounterGroup> {
        (2u32..=8, prop::collection::vec(prop_oneof![Just(0.0), 0.0..=1.0f64], 1..=12))
            .prop_map(|(s, levels)| EncounterGroup::from_levels(s, &levels))
    }

    proptest! {
        #[test]
        fn formula_agrees_with_oracle_on_pure_groups(group in pure_group()) {
            let fast = encounter_pressure(&group);
            let oracle = brute_force_pressure(&group).unwrap();
            prop_assert!((fast - oracle).abs() < 1e-9, "{fast} vs {oracle}");
        }

        #[test]
        fn pure_groups_hit_closed_form(s in 2u32..=10, n in 1u32..=25, extra in 1usize..=4) {
            let mut levels = vec![0.0; extra];
            levels.extend(std::iter::repeat_n(1.0, n as usize));
            let p = encounter_pressure(&EncounterGroup::from_levels(s, &levels));
            prop_assert!((p - pure_encounter_probability(s, n)).abs() < 1e-12);
        }

        #[test]
        fn pressure_bounded_by_pure_case(group in partial_group()) {
            let n = group.participants.iter().filter(|p| p.1.infection() > 0.0).count() as u32;
            let p = encounter_pressure(&group);
            prop_assert!(p >= 0.0);
            prop_assert!(p <= pure_encounter_probability(group.s, n) + 1e-12);
        }

        #[test]
        fn g_sums_telescope(s in 2u32..=12, n in 1u32..=40) {
            let g = GFactors::new(s, n as usize);
            let sum: f64 = (1..=n as usize).map(|j| g.get(j)).sum();
            prop_assert!((sum - pure_encounter_probability(s, n)).abs() < 1e-12);
            for j in 1..n as usize {
                prop_assert!(g.get(j) > g.get(j + 1));
            }
        }

        #[test]
        fn update_keeps_levels_monotone(group in partial_group(), p in 0.0..=1.0f64) {
            for ((_, before), (_, after)) in group.participants.iter().zip(apply_update(&group, p)) {
                prop_assert!(after.infection() >= before.infection());
                prop_assert!((after.infection() + after.susceptibility() - 1.0).abs() < 1e-12);
                prop_assert!(after.infection() <= 1.0);
            }
        }

        // Raising an infected participant other than the S_max owner, without
        // changing which of the two formula cases applies, never lowers pressure.
        #[test]
        fn raising_an_infected_contributor_never_lowers_pressure(
            group in partial_group(),
            pick in any::<prop::sample::Index>(),
            bump in 0.0..=1.0f64,
        ) {
            let parts = &group.participants;
            let n = parts.iter().filter(|p| p.1.infection() > 0.0).count();
            let owner = parts
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.1.infection().total_cmp(&b.1.1.infection()).then(a.1.0.cmp(&b.1.0)))
                .map(|(i, _)| i);
            let idx = pick.index(parts.len());
            prop_assume!(parts[idx].1.infection() > 0.0);
            prop_assume!(n < parts.len() || Some(idx) != owner);
            let before = encounter_pressure(&group);
            let mut raised = group.clone();
            let old = raised.participants[idx].1.infection();
            raised.participants[idx].1 = PartialState::new(old + bump * (1.0 - old));
            prop_assume!(raised.participants.iter().any(|p| p.1.infection() < 1.0));
            let after = encounter_pressure(&raised);
            prop_assert!(after + 1e-12 >= before, "{before} -> {after}");
        }

        #[test]
        fn doubling_infected_less_than_doubles(s in 2u32..=50) {
            prop_assert!(pure_encounter_probability(s, 2) < 2.0 * pure_encounter_probability(s, 1));
        }
    }
}
