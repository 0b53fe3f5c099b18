//! Measurement data model: forming and write-cycle records organised in a
//! lot → wafer → chip → device hierarchy.

mod parse;
mod write;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::{parse_cycles, InputFormat, Parsed};
pub use write::{write_csv, write_jsonl, CSV_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetState {
    #[serde(rename = "HRS")]
    Hrs,
    #[serde(rename = "LRS")]
    Lrs,
}

impl TargetState {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetState::Hrs => "HRS",
            TargetState::Lrs => "LRS",
        }
    }
}

impl fmt::Display for TargetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies one die. Ordering is lexicographic over (lot, wafer, x, y).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChipKey {
    pub lot_id: String,
    pub wafer_id: String,
    pub chip_x: i32,
    pub chip_y: i32,
}

impl ChipKey {
    pub fn new(lot_id: impl Into<String>, wafer_id: impl Into<String>, chip_x: i32, chip_y: i32) -> Self {
        Self {
            lot_id: lot_id.into(),
            wafer_id: wafer_id.into(),
            chip_x,
            chip_y,
        }
    }

    pub fn wafer(&self) -> WaferKey {
        WaferKey {
            lot_id: self.lot_id.clone(),
            wafer_id: self.wafer_id.clone(),
        }
    }
}

impl fmt::Display for ChipKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/({},{})", self.lot_id, self.wafer_id, self.chip_x, self.chip_y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WaferKey {
    pub lot_id: String,
    pub wafer_id: String,
}

impl fmt::Display for WaferKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.lot_id, self.wafer_id)
    }
}

/// One measured write-cycle resistance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub lot_id: String,
    pub wafer_id: String,
    pub chip_x: i32,
    pub chip_y: i32,
    pub device_id: String,
    pub device_size_nm: u32,
    pub cycle_index: u64,
    pub target_state: TargetState,
    pub resistance_ohm: f64,
    pub read_voltage_v: f64,
    pub set_voltage_v: Option<f64>,
    pub reset_voltage_v: Option<f64>,
    pub compliance_current_ua: Option<f64>,
    pub pulse_width_us: Option<f64>,
}

/// One measured forming voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormingRecord {
    pub lot_id: String,
    pub wafer_id: String,
    pub chip_x: i32,
    pub chip_y: i32,
    pub device_id: String,
    pub device_size_nm: u32,
    pub vform_volt: f64,
}

pub const DEFAULT_READ_VOLTAGE_V: f64 = 0.1;

impl CycleRecord {
    pub fn chip_key(&self) -> ChipKey {
        ChipKey::new(&self.lot_id, &self.wafer_id, self.chip_x, self.chip_y)
    }

    fn unique_key(&self) -> (ChipKey, &str, u64, TargetState) {
        (self.chip_key(), &self.device_id, self.cycle_index, self.target_state)
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.resistance_ohm > 0.0 && self.resistance_ohm.is_finite()) {
            return Err(("resistance_ohm", format!("{} is not positive and finite", self.resistance_ohm)));
        }
        if !self.read_voltage_v.is_finite() {
            return Err(("read_voltage_v", "not finite".into()));
        }
        if self.device_size_nm == 0 {
            return Err(("device_size_nm", "must be positive".into()));
        }
        for (name, v) in [("set_voltage_v", self.set_voltage_v), ("reset_voltage_v", self.reset_voltage_v)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err((name, "not finite".into()));
            }
        }
        for (name, v) in [
            ("compliance_current_ua", self.compliance_current_ua),
            ("pulse_width_us", self.pulse_width_us),
        ] {
            if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err((name, "must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

impl FormingRecord {
    pub fn chip_key(&self) -> ChipKey {
        ChipKey::new(&self.lot_id, &self.wafer_id, self.chip_x, self.chip_y)
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.vform_volt > 0.0 && self.vform_volt.is_finite()) {
            return Err(("vform_volt", format!("{} is not positive and finite", self.vform_volt)));
        }
        if self.device_size_nm == 0 {
            return Err(("device_size_nm", "must be positive".into()));
        }
        Ok(())
    }
}

type Index = BTreeMap<String, BTreeMap<String, BTreeMap<(i32, i32), BTreeSet<String>>>>;

/// Immutable collection of ingested records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    forming: Vec<FormingRecord>,
    cycles: Vec<CycleRecord>,
    index: Index,
}

impl Dataset {
    /// Validates every record and the cycle-key uniqueness invariant.
    /// Errors report 1-based positions within the respective list.
    pub fn new(forming: Vec<FormingRecord>, cycles: Vec<CycleRecord>) -> Result<Self> {
        let forming_lines = (1..=forming.len() as u64).collect::<Vec<_>>();
        let cycle_lines = (1..=cycles.len() as u64).collect::<Vec<_>>();
        Self::with_lines(forming, &forming_lines, cycles, &cycle_lines)
    }

    pub(crate) fn with_lines(
        forming: Vec<FormingRecord>,
        forming_lines: &[u64],
        cycles: Vec<CycleRecord>,
        cycle_lines: &[u64],
    ) -> Result<Self> {
        for (rec, &line) in forming.iter().zip(forming_lines) {
            rec.validate().map_err(|(column, message)| Error::Parse {
                line,
                column: column.into(),
                message,
            })?;
        }
        let mut seen = HashSet::with_capacity(cycles.len());
        for (rec, &line) in cycles.iter().zip(cycle_lines) {
            rec.validate().map_err(|(column, message)| Error::Parse {
                line,
                column: column.into(),
                message,
            })?;
            let key = rec.unique_key();
            if !seen.insert(key) {
                return Err(Error::DuplicateKey {
                    line,
                    key: format!(
                        "{} device {} cycle {} {}",
                        rec.chip_key(),
                        rec.device_id,
                        rec.cycle_index,
                        rec.target_state
                    ),
                });
            }
        }

        let mut index = Index::new();
        let mut insert = |lot: &str, wafer: &str, x: i32, y: i32, device: &str| {
            index
                .entry(lot.to_owned())
                .or_default()
                .entry(wafer.to_owned())
                .or_default()
                .entry((x, y))
                .or_default()
                .insert(device.to_owned());
        };
        for r in &forming {
            insert(&r.lot_id, &r.wafer_id, r.chip_x, r.chip_y, &r.device_id);
        }
        for r in &cycles {
            insert(&r.lot_id, &r.wafer_id, r.chip_x, r.chip_y, &r.device_id);
        }
        Ok(Self { forming, cycles, index })
    }

    pub fn forming(&self) -> &[FormingRecord] {
        &self.forming
    }

    pub fn cycles(&self) -> &[CycleRecord] {
        &self.cycles
    }

    pub fn is_empty(&self) -> bool {
        self.forming.is_empty() && self.cycles.is_empty()
    }

    /// All chip keys in sorted order.
    pub fn chips(&self) -> Vec<ChipKey> {
        let mut out = Vec::new();
        for (lot, wafers) in &self.index {
            for (wafer, chips) in wafers {
                for &(x, y) in chips.keys() {
                    out.push(ChipKey::new(lot, wafer, x, y));
                }
            }
        }
        out
    }

    pub fn wafers(&self) -> Vec<WaferKey> {
        self.index
            .iter()
            .flat_map(|(lot, wafers)| {
                wafers.keys().map(move |w| WaferKey {
                    lot_id: lot.clone(),
                    wafer_id: w.clone(),
                })
            })
            .collect()
    }

    pub fn contains_chip(&self, chip: &ChipKey) -> bool {
        self.index
            .get(&chip.lot_id)
            .and_then(|w| w.get(&chip.wafer_id))
            .is_some_and(|c| c.contains_key(&(chip.chip_x, chip.chip_y)))
    }

    /// Device ids on a chip.
    pub fn devices(&self, chip: &ChipKey) -> Option<&BTreeSet<String>> {
        self.index
            .get(&chip.lot_id)?
            .get(&chip.wafer_id)?
            .get(&(chip.chip_x, chip.chip_y))
    }

    pub fn device_sizes(&self) -> BTreeSet<u32> {
        self.forming
            .iter()
            .map(|r| r.device_size_nm)
            .chain(self.cycles.iter().map(|r| r.device_size_nm))
            .collect()
    }

    /// Cycle series for every chip that has cycle records, sorted by chip key.
    pub fn cycle_series(&self) -> Vec<ChipCycleSeries> {
        let mut grouped: BTreeMap<ChipKey, Vec<&CycleRecord>> = BTreeMap::new();
        for r in &self.cycles {
            grouped.entry(r.chip_key()).or_default().push(r);
        }
        grouped
            .into_iter()
            .map(|(chip, recs)| ChipCycleSeries::from_records(chip, recs))
            .collect()
    }
}

/// Resistances of one chip split by target state, in cycle order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChipCycleSeries {
    pub chip: ChipKey,
    pub r_h: Vec<f64>,
    pub r_l: Vec<f64>,
}

impl ChipCycleSeries {
    fn from_records(chip: ChipKey, mut recs: Vec<&CycleRecord>) -> Self {
        // Stable: ties on cycle_index keep device order, then file order.
        recs.sort_by(|a, b| {
            a.cycle_index
                .cmp(&b.cycle_index)
                .then_with(|| a.device_id.cmp(&b.device_id))
        });
        let mut r_h = Vec::new();
        let mut r_l = Vec::new();
        for r in recs {
            match r.target_state {
                TargetState::Hrs => r_h.push(r.resistance_ohm),
                TargetState::Lrs => r_l.push(r.resistance_ohm),
            }
        }
        Self { chip, r_h, r_l }
    }
}

/// HRS and LRS resistance lists of one chip, ordered by cycle index.
pub fn split_states(d: &Dataset, chip: &ChipKey) -> Result<ChipCycleSeries> {
    if !d.contains_chip(chip) {
        return Err(Error::NotFound(chip.clone()));
    }
    let recs = d.cycles.iter().filter(|r| r.chip_key() == *chip).collect();
    Ok(ChipCycleSeries::from_records(chip.clone(), recs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedChip {
    pub chip: ChipKey,
    pub max_vform_volt: f64,
}

/// Outcome of forming-voltage screening.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Screening {
    pub threshold_volt: f64,
    pub rejected: Vec<RejectedChip>,
    /// Chips without any forming record; kept in the dataset.
    pub unscreened: Vec<ChipKey>,
    pub screened: usize,
}

pub const DEFAULT_VFORM_MAX_VOLT: f64 = 4.0;

/// Drops every chip whose forming voltage exceeds `vform_max_volt` on any
/// device, from both the forming and cycle views.
pub fn filter_defective(d: &Dataset, vform_max_volt: f64) -> (Dataset, Screening) {
    let mut max_vform: BTreeMap<ChipKey, f64> = BTreeMap::new();
    for r in &d.forming {
        let e = max_vform.entry(r.chip_key()).or_insert(f64::NEG_INFINITY);
        *e = e.max(r.vform_volt);
    }
    let rejected: Vec<RejectedChip> = max_vform
        .iter()
        .filter(|(_, &v)| v > vform_max_volt)
        .map(|(chip, &v)| RejectedChip { chip: chip.clone(), max_vform_volt: v })
        .collect();
    let unscreened = d
        .chips()
        .into_iter()
        .filter(|c| !max_vform.contains_key(c))
        .collect();

    let dropped: HashSet<&ChipKey> = rejected.iter().map(|r| &r.chip).collect();
    let filtered = if dropped.is_empty() {
        d.clone()
    } else {
        let forming = d.forming.iter().filter(|r| !dropped.contains(&r.chip_key())).cloned().collect();
        let cycles = d.cycles.iter().filter(|r| !dropped.contains(&r.chip_key())).cloned().collect();
        Dataset::new(forming, cycles).expect("subset of a valid dataset is valid")
    };
    let screening = Screening {
        threshold_volt: vform_max_volt,
        rejected,
        unscreened,
        screened: max_vform.len(),
    };
    (filtered, screening)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn cycle(chip: &ChipKey, idx: u64, state: TargetState, r: f64) -> CycleRecord {
        CycleRecord {
            lot_id: chip.lot_id.clone(),
            wafer_id: chip.wafer_id.clone(),
            chip_x: chip.chip_x,
            chip_y: chip.chip_y,
            device_id: "D0".into(),
            device_size_nm: 100,
            cycle_index: idx,
            target_state: state,
            resistance_ohm: r,
            read_voltage_v: DEFAULT_READ_VOLTAGE_V,
            set_voltage_v: Some(1.8),
            reset_voltage_v: Some(-1.5),
            compliance_current_ua: Some(100.0),
            pulse_width_us: Some(1.0),
        }
    }

    pub(crate) fn forming(chip: &ChipKey, v: f64) -> FormingRecord {
        FormingRecord {
            lot_id: chip.lot_id.clone(),
            wafer_id: chip.wafer_id.clone(),
            chip_x: chip.chip_x,
            chip_y: chip.chip_y,
            device_id: "D0".into(),
            device_size_nm: 100,
            vform_volt: v,
        }
    }

    fn wafer_of(n: i32, bad: &[(i32, f64)]) -> Dataset {
        let mut f = Vec::new();
        let mut c = Vec::new();
        for i in 0..n {
            let chip = ChipKey::new("L1", "W1", i % 6, i / 6);
            let v = bad.iter().find(|b| b.0 == i).map_or(2.5 + 0.01 * i as f64, |b| b.1);
            f.push(forming(&chip, v));
            c.push(cycle(&chip, 0, TargetState::Hrs, 1e5));
            c.push(cycle(&chip, 0, TargetState::Lrs, 1e4));
        }
        Dataset::new(f, c).unwrap()
    }

    #[test]
    fn filter_removes_one_of_twenty_four() {
        let d = wafer_of(24, &[(5, 4.2)]);
        let (kept, s) = filter_defective(&d, DEFAULT_VFORM_MAX_VOLT);
        assert_eq!(kept.chips().len(), 23);
        assert_eq!(s.rejected.len(), 1);
        assert_eq!(s.rejected[0].max_vform_volt, 4.2);
        assert_eq!(kept.cycles().len(), 46);
        assert!(!kept.contains_chip(&s.rejected[0].chip));
    }

    #[test]
    fn filter_keeps_clean_wafer() {
        let d = wafer_of(24, &[]);
        let (kept, s) = filter_defective(&d, 4.0);
        assert_eq!(kept, d);
        assert!(s.rejected.is_empty());
    }

    #[test]
    fn filter_zero_threshold_rejects_all_screened() {
        let d = wafer_of(8, &[]);
        let (kept, s) = filter_defective(&d, 0.0);
        assert_eq!(s.rejected.len(), 8);
        assert!(kept.is_empty());
    }

    #[test]
    fn filter_flags_unscreened_and_is_idempotent() {
        let mut d = wafer_of(6, &[(2, 5.0)]);
        let extra = ChipKey::new("L1", "W1", 9, 9);
        let mut cycles = d.cycles().to_vec();
        cycles.push(cycle(&extra, 0, TargetState::Hrs, 2e5));
        d = Dataset::new(d.forming().to_vec(), cycles).unwrap();

        let (once, s1) = filter_defective(&d, 4.0);
        assert_eq!(s1.unscreened, vec![extra.clone()]);
        assert!(once.contains_chip(&extra));
        assert_eq!(s1.screened, 6);
        let retained_screened = once.chips().len() - s1.unscreened.len();
        assert_eq!(retained_screened + s1.rejected.len(), s1.screened);

        let (twice, s2) = filter_defective(&once, 4.0);
        assert_eq!(twice, once);
        assert!(s2.rejected.is_empty());
    }

    #[test]
    fn split_states_sorts_by_cycle_index() {
        let chip = ChipKey::new("L", "W", 0, 0);
        // Deterministic shuffle of 0..40 (multiplier coprime to 40).
        let order: Vec<u64> = (0..40).map(|i| (i * 17 + 3) % 40).collect();
        let recs: Vec<CycleRecord> = order
            .iter()
            .map(|&i| {
                let state = if i % 2 == 0 { TargetState::Hrs } else { TargetState::Lrs };
                cycle(&chip, i, state, 1000.0 + i as f64)
            })
            .collect();
        let d = Dataset::new(vec![], recs).unwrap();
        let s = split_states(&d, &chip).unwrap();

        let mut sorted = order.clone();
        sorted.sort();
        let want_h: Vec<f64> = sorted.iter().filter(|i| *i % 2 == 0).map(|&i| 1000.0 + i as f64).collect();
        let want_l: Vec<f64> = sorted.iter().filter(|i| *i % 2 == 1).map(|&i| 1000.0 + i as f64).collect();
        assert_eq!(s.r_h, want_h);
        assert_eq!(s.r_l, want_l);
        assert_eq!(s.r_h.len(), 20);
        assert_eq!(s.r_l.len(), 20);
    }

    #[test]
    fn split_states_hrs_only_and_unknown_chip() {
        let chip = ChipKey::new("L", "W", 0, 0);
        let d = Dataset::new(vec![], vec![cycle(&chip, 0, TargetState::Hrs, 5e4)]).unwrap();
        let s = split_states(&d, &chip).unwrap();
        assert_eq!(s.r_h, vec![5e4]);
        assert!(s.r_l.is_empty());
        let other = ChipKey::new("L", "W", 1, 0);
        assert_eq!(split_states(&d, &other), Err(Error::NotFound(other)));
    }

    #[test]
    fn duplicate_cycle_key_rejected() {
        let chip = ChipKey::new("L", "W", 0, 0);
        let c = cycle(&chip, 3, TargetState::Lrs, 1e4);
        let err = Dataset::new(vec![], vec![c.clone(), c]).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { line: 2, .. }));
    }

    #[test]
    fn chip_key_ordering_is_lexicographic() {
        let mut keys = [
            ChipKey::new("L2", "W1", 0, 0),
            ChipKey::new("L1", "W2", 0, 0),
            ChipKey::new("L1", "W1", 1, 0),
            ChipKey::new("L1", "W1", 0, 5),
        ];
        keys.sort();
        assert_eq!(keys[0], ChipKey::new("L1", "W1", 0, 5));
        assert_eq!(keys[3], ChipKey::new("L2", "W1", 0, 0));
    }
}
