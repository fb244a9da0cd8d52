//! Turning real vectors and round-robin rules into slot assignments.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{Dataset, SlotIndex, Window, DAYS};

/// Longest vector a GP tree may emit.
pub const MAX_VECTOR_LEN: usize = 10_000;
/// Replacement for values whose fractional part is exactly zero.
pub const ZERO_REPLACEMENT: f64 = 0.0001;

#[derive(Debug, Error, PartialEq)]
pub enum AllocationError {
    #[error("cannot bound non-finite value {0}")]
    NonFinite(f64),
    #[error("bounded vector must not be empty")]
    Empty,
    #[error("bounded vector has {0} elements, limit is {MAX_VECTOR_LEN}")]
    TooLong(usize),
    #[error("value {0} outside (0, 1)")]
    OutOfRange(f64),
    #[error("plan has {got} assignments but dataset has {expected} requests")]
    PlanMismatch { expected: usize, got: usize },
    #[error("request {index} ({key}) assigned slot {slot} outside its window")]
    OutsideWindow { index: usize, key: String, slot: u8 },
    #[error("unknown baseline {0:?}, expected comp1, comp2 or comp3")]
    UnknownBaseline(String),
}

/// Fractional part of `|x|`, with an exact zero mapped to 0.0001.
pub fn bound_value(x: f64) -> Result<f64, AllocationError> {
    if !x.is_finite() {
        return Err(AllocationError::NonFinite(x));
    }
    Ok(bound_finite(x))
}

fn bound_finite(x: f64) -> f64 {
    let f = x.abs().fract();
    if f == 0.0 {
        ZERO_REPLACEMENT
    } else {
        f
    }
}

/// Non-empty sequence of reals in `(0, 1)`, at most [`MAX_VECTOR_LEN`] long.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BoundedVector(Vec<f64>);

impl BoundedVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AllocationError> {
        if values.is_empty() {
            return Err(AllocationError::Empty);
        }
        if values.len() > MAX_VECTOR_LEN {
            return Err(AllocationError::TooLong(values.len()));
        }
        if let Some(&bad) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(AllocationError::OutOfRange(bad));
        }
        Ok(BoundedVector(values))
    }

    /// Bounds every raw value. Non-finite values (arithmetic overflow in a
    /// tree) become 0.0001, and an empty input yields `[0.0001]`.
    pub fn from_raw(raw: &[f64]) -> Self {
        let mut values: Vec<f64> = raw
            .iter()
            .take(MAX_VECTOR_LEN)
            .map(|&x| if x.is_finite() { bound_finite(x) } else { ZERO_REPLACEMENT })
            .collect();
        if values.is_empty() {
            values.push(ZERO_REPLACEMENT);
        }
        BoundedVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl TryFrom<Vec<f64>> for BoundedVector {
    type Error = AllocationError;
    fn try_from(v: Vec<f64>) -> Result<Self, AllocationError> {
        BoundedVector::new(v)
    }
}

impl From<BoundedVector> for Vec<f64> {
    fn from(v: BoundedVector) -> Vec<f64> {
        v.0
    }
}

/// Slot chosen within `window` by a value in `(0, 1)`.
pub fn slot_for(window: Window, v: f64) -> SlotIndex {
    let width = window.width() as usize;
    let offset = ((v * width as f64).floor() as usize).min(width - 1);
    SlotIndex::new(window.first_slot() + offset as u8).expect("offset stays inside the day")
}

/// One slot per request, in the dataset's canonical request order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    slots: Vec<SlotIndex>,
}

impl AllocationPlan {
    pub fn from_slots(slots: Vec<SlotIndex>) -> Self {
        AllocationPlan { slots }
    }

    pub fn slots(&self) -> &[SlotIndex] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Slot of the `ordinal`-th request of person `person_index` on `day`.
    pub fn slot(&self, ds: &Dataset, person_index: usize, day: usize, ordinal: usize) -> Option<SlotIndex> {
        ds.requests()
            .position(|r| r.person_index == person_index && r.day == day && r.ordinal == ordinal)
            .map(|i| self.slots[i])
    }

    /// Checks coverage and window constraints against `ds`.
    pub fn validate(&self, ds: &Dataset) -> Result<(), AllocationError> {
        let expected = ds.request_count();
        if expected != self.slots.len() {
            return Err(AllocationError::PlanMismatch {
                expected,
                got: self.slots.len(),
            });
        }
        for (index, (r, &slot)) in ds.requests().zip(&self.slots).enumerate() {
            if !r.request.window.contains(slot) {
                return Err(AllocationError::OutsideWindow {
                    index,
                    key: r.request.to_string(),
                    slot: slot.get(),
                });
            }
        }
        Ok(())
    }

    /// Short hex digest of the slot sequence.
    pub fn digest(&self) -> String {
        let bytes: Vec<u8> = self.slots.iter().map(|s| s.get()).collect();
        Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `person_id,day,ordinal,request,slot,allocation` rows; day,
    /// ordinal and slot are 1-based.
    pub fn write_csv<W: io::Write>(&self, ds: &Dataset, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["person_id", "day", "ordinal", "request", "slot", "allocation"])?;
        for (r, slot) in ds.requests().zip(&self.slots) {
            w.write_record([
                r.person.id.to_string(),
                (r.day + 1).to_string(),
                (r.ordinal + 1).to_string(),
                r.request.to_string(),
                (slot.get() + 1).to_string(),
                format!("{}, {} HOURS", r.request.establishment_name(), slot.clock_label()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Consumes one value per request, cycling through `vector`.
pub fn decode(vector: &BoundedVector, ds: &Dataset) -> AllocationPlan {
    let windows: Vec<Window> = ds.requests().map(|r| r.request.window).collect();
    let mut slots = Vec::with_capacity(windows.len());
    decode_windows(vector.values(), &windows, &mut slots);
    AllocationPlan { slots }
}

/// Allocation-free decode over a precomputed window list.
pub fn decode_windows(values: &[f64], windows: &[Window], out: &mut Vec<SlotIndex>) {
    out.clear();
    out.extend(
        windows
            .iter()
            .zip(values.iter().cycle())
            .map(|(&w, &v)| slot_for(w, v)),
    );
}

/// Uninformed round-robin allocators over one, two or three slots per window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Comp1,
    Comp2,
    Comp3,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Comp1, Baseline::Comp2, Baseline::Comp3];

    /// Slot cycles for the morning-or-any, afternoon and night classes.
    fn cycles(self) -> [&'static [u8]; 3] {
        match self {
            Baseline::Comp1 => [&[0], &[2], &[5]],
            Baseline::Comp2 => [&[0, 1], &[2, 4], &[5, 7]],
            Baseline::Comp3 => [&[0, 1, 0], &[2, 3, 4], &[5, 6, 7]],
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Comp1 => "comp1",
            Baseline::Comp2 => "comp2",
            Baseline::Comp3 => "comp3",
        })
    }
}

impl FromStr for Baseline {
    type Err = AllocationError;
    fn from_str(s: &str) -> Result<Self, AllocationError> {
        match s.trim() {
            "comp1" => Ok(Baseline::Comp1),
            "comp2" => Ok(Baseline::Comp2),
            "comp3" => Ok(Baseline::Comp3),
            other => Err(AllocationError::UnknownBaseline(other.to_string())),
        }
    }
}

/// Round-robin plan. Counters run per (day, window class) in request order.
pub fn round_robin(ds: &Dataset, variant: Baseline) -> AllocationPlan {
    let cycles = variant.cycles();
    let mut counters = [[0usize; 3]; DAYS];
    let slots = ds
        .requests()
        .map(|r| {
            let class = match r.request.window {
                Window::Morning | Window::Any => 0,
                Window::Afternoon => 1,
                Window::Night => 2,
            };
            let cycle = cycles[class];
            let counter = &mut counters[r.day][class];
            let slot = cycle[*counter % cycle.len()];
            *counter += 1;
            SlotIndex::new(slot).expect("static slots are valid")
        })
        .collect();
    AllocationPlan { slots }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_dataset;
    use proptest::prelude::*;

    #[test]
    fn bounding_examples() {
        assert!((bound_value(-21.27625).unwrap() - 0.27625).abs() < 1e-12);
        assert_eq!(bound_value(29.0).unwrap(), 0.0001);
        assert_eq!(bound_value(0.0).unwrap(), 0.0001);
        assert_eq!(bound_value(0.5).unwrap(), 0.5);
        assert!(matches!(bound_value(f64::NAN), Err(AllocationError::NonFinite(_))));
        assert!(bound_value(f64::INFINITY).is_err());
    }

    #[test]
    fn slot_mapping() {
        assert_eq!(slot_for(Window::Any, 0.2763).get(), 2);
        assert_eq!(slot_for(Window::Morning, 0.9).get(), 1);
        assert_eq!(slot_for(Window::Night, 0.0001).get(), 5);
        assert_eq!(slot_for(Window::Afternoon, 0.99999).get(), 4);
    }

    #[test]
    fn decode_cycles_through_vector() {
        let ds = parse_dataset("1 20 9.0 0 AF1:AF2:AC1 | | \n").unwrap();
        let v = BoundedVector::new(vec![0.05, 0.95]).unwrap();
        let plan = decode(&v, &ds);
        let got: Vec<u8> = plan.slots().iter().map(|s| s.get()).collect();
        assert_eq!(got, vec![0, 7, 0]);
        assert_eq!(plan.slot(&ds, 0, 0, 1).map(|s| s.get()), Some(7));
    }

    #[test]
    fn bounded_vector_rejects_invalid() {
        assert_eq!(BoundedVector::new(vec![]), Err(AllocationError::Empty));
        assert!(BoundedVector::new(vec![0.0]).is_err());
        assert!(BoundedVector::new(vec![1.0]).is_err());
        assert!(BoundedVector::new(vec![0.5; MAX_VECTOR_LEN + 1]).is_err());
        assert_eq!(BoundedVector::from_raw(&[]).values(), &[0.0001]);
        assert_eq!(BoundedVector::from_raw(&[f64::NAN, 3.5]).values(), &[0.0001, 0.5]);
    }

    #[test]
    fn validate_catches_window_violation() {
        let ds = parse_dataset("1 20 9.0 0 MF1 | NF1 | \n").unwrap();
        let good = round_robin(&ds, Baseline::Comp1);
        assert!(good.validate(&ds).is_ok());
        let bad = AllocationPlan::from_slots(vec![SlotIndex::new(3).unwrap(), SlotIndex::new(5).unwrap()]);
        assert!(matches!(bad.validate(&ds), Err(AllocationError::OutsideWindow { index: 0, .. })));
        let short = AllocationPlan::from_slots(vec![SlotIndex::new(0).unwrap()]);
        assert!(matches!(short.validate(&ds), Err(AllocationError::PlanMismatch { .. })));
    }

    #[test]
    fn round_robin_counters_reset_per_day() {
        let ds = parse_dataset("1 20 9.0 0 PF1:PF2 | PC1 | \n2 20 9.0 0 PS1 | PC2 | \n").unwrap();
        let plan = round_robin(&ds, Baseline::Comp3);
        let got: Vec<u8> = plan.slots().iter().map(|s| s.get()).collect();
        // Monday: 2,3 then person 2 → 4; Tuesday: 2 then 3.
        assert_eq!(got, vec![2, 3, 2, 4, 3]);
    }

    #[test]
    fn baseline_names() {
        for b in Baseline::ALL {
            assert_eq!(b.to_string().parse::<Baseline>().unwrap(), b);
        }
        assert!("comp4".parse::<Baseline>().is_err());
    }

    #[test]
    fn csv_labels() {
        let ds = parse_dataset("20 30 9.4 0 AD2 | | \n").unwrap();
        let plan = AllocationPlan::from_slots(vec![SlotIndex::new(1).unwrap()]);
        let mut buf = Vec::new();
        plan.write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"DOCTOR'S SURGERY 2, 10-12 HOURS\""), "{text}");
    }

    proptest! {
        #[test]
        fn bound_value_lands_in_open_unit_interval(x in -1e12..1e12f64) {
            let b = bound_value(x).unwrap();
            prop_assert!(b > 0.0 && b < 1.0);
        }

        #[test]
        fn decoded_slots_respect_windows(values in prop::collection::vec(0.0001..0.9999f64, 1..20), seed in 0u64..50) {
            let ds = crate::dataset::generate_dataset(seed, &crate::dataset::PopulationProfile::canonical()).unwrap();
            let plan = decode(&BoundedVector::new(values).unwrap(), &ds);
            prop_assert!(plan.validate(&ds).is_ok());
        }
    }
}
