//! Seeded synthetic fleets and the independent oracles used to check the
//! analytic BER and variance code.

mod oracle;
pub mod rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{mc_ber_estimate, quad_normal_tail, McEstimate, MC_MIN_SAMPLES, MC_SHARDS};
pub use rng::{stream_seed, SynthRng};

use crate::data::{CycleRecord, Dataset, FormingRecord, TargetState, DEFAULT_READ_VOLTAGE_V};
use crate::error::{Error, Result};
use crate::stats::LogNormalFit;

/// Forming-voltage model for one device size: grand mean plus normal
/// lot, wafer and chip effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormingGroup {
    pub device_size_nm: u32,
    pub mean_volt: f64,
    pub sd_l2l: f64,
    pub sd_w2w: f64,
    pub sd_ctc: f64,
}

/// Closed ranges `[min, max]` from which per-chip log-normal parameters
/// are drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRange {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
}

/// Forces a chip's forming voltage, e.g. a failed forming above the
/// screening limit. Indices are 1-based, as in the generated ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpec {
    pub lot: u32,
    pub wafer: u32,
    pub chip: u32,
    pub vform_volt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingConditions {
    pub read_voltage_v: f64,
    pub set_voltage_v: f64,
    pub reset_voltage_v: f64,
    pub compliance_current_ua: f64,
    pub pulse_width_us: f64,
}

impl Default for OperatingConditions {
    fn default() -> Self {
        Self {
            read_voltage_v: DEFAULT_READ_VOLTAGE_V,
            set_voltage_v: 1.8,
            reset_voltage_v: -1.5,
            compliance_current_ua: 100.0,
            pulse_width_us: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FleetConfig {
    pub seed: u64,
    pub lots: u32,
    pub wafers_per_lot: u32,
    pub chips_per_wafer: u32,
    /// Chips per row of the wafer grid; defaults to `ceil(sqrt(chips_per_wafer))`.
    pub grid_columns: Option<u32>,
    pub forming: Vec<FormingGroup>,
    pub cycles_per_chip: u32,
    pub cycle_device_size_nm: u32,
    pub hrs: FitRange,
    pub lrs: FitRange,
    pub defects: Vec<DefectSpec>,
    pub conditions: OperatingConditions,
}

impl Default for FleetConfig {
    /// One wafer of 24 chips with 20 write cycles each and the three
    /// device-size forming models.
    fn default() -> Self {
        Self {
            seed: 1,
            lots: 1,
            wafers_per_lot: 1,
            chips_per_wafer: 24,
            grid_columns: None,
            forming: vec![
                FormingGroup { device_size_nm: 50, mean_volt: 2.78, sd_l2l: 0.04, sd_w2w: 0.08, sd_ctc: 0.14 },
                FormingGroup { device_size_nm: 100, mean_volt: 2.54, sd_l2l: 0.04, sd_w2w: 0.04, sd_ctc: 0.13 },
                FormingGroup { device_size_nm: 200, mean_volt: 2.18, sd_l2l: 0.07, sd_w2w: 0.13, sd_ctc: 0.16 },
            ],
            cycles_per_chip: 20,
            cycle_device_size_nm: 100,
            hrs: FitRange { mu: [12.2, 13.3], sigma: [0.25, 0.55] },
            lrs: FitRange { mu: [9.0, 9.4], sigma: [0.06, 0.14] },
            defects: Vec::new(),
            conditions: OperatingConditions::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_range(name: &str, r: &FitRange) -> Result<()> {
    let ok = |[lo, hi]: [f64; 2]| lo.is_finite() && hi.is_finite() && lo <= hi;
    if !ok(r.mu) || !ok(r.sigma) {
        return Err(config_err(format!("{name}: ranges must be finite with min <= max")));
    }
    if r.sigma[0] < 0.0 {
        return Err(config_err(format!("{name}: sigma must be >= 0")));
    }
    Ok(())
}

impl FleetConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn columns(&self) -> u32 {
        self.grid_columns
            .unwrap_or_else(|| (self.chips_per_wafer as f64).sqrt().ceil() as u32)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lots", self.lots),
            ("wafers_per_lot", self.wafers_per_lot),
            ("chips_per_wafer", self.chips_per_wafer),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be >= 1")));
            }
        }
        if self.grid_columns == Some(0) {
            return Err(config_err("grid_columns must be >= 1"));
        }
        if self.forming.is_empty() && self.cycles_per_chip == 0 {
            return Err(config_err("config generates no records"));
        }
        let mut sizes = std::collections::BTreeSet::new();
        for g in &self.forming {
            if g.device_size_nm == 0 || !sizes.insert(g.device_size_nm) {
                return Err(config_err(format!(
                    "forming device_size_nm {} is zero or repeated",
                    g.device_size_nm
                )));
            }
            if !(g.mean_volt > 0.0 && g.mean_volt.is_finite()) {
                return Err(config_err(format!("{}nm: mean_volt must be positive", g.device_size_nm)));
            }
            if [g.sd_l2l, g.sd_w2w, g.sd_ctc].iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(config_err(format!("{}nm: SDs must be finite and >= 0", g.device_size_nm)));
            }
        }
        if self.cycles_per_chip > 0 {
            if self.cycle_device_size_nm == 0 {
                return Err(config_err("cycle_device_size_nm must be >= 1"));
            }
            check_range("hrs", &self.hrs)?;
            check_range("lrs", &self.lrs)?;
        }
        let c = &self.conditions;
        if !c.read_voltage_v.is_finite() || !c.set_voltage_v.is_finite() || !c.reset_voltage_v.is_finite() {
            return Err(config_err("operating voltages must be finite"));
        }
        if !(c.compliance_current_ua > 0.0 && c.pulse_width_us > 0.0)
            || !c.compliance_current_ua.is_finite()
            || !c.pulse_width_us.is_finite()
        {
            return Err(config_err("compliance current and pulse width must be positive"));
        }
        for d in &self.defects {
            if !(1..=self.lots).contains(&d.lot)
                || !(1..=self.wafers_per_lot).contains(&d.wafer)
                || !(1..=self.chips_per_wafer).contains(&d.chip)
            {
                return Err(config_err(format!(
                    "defect lot {} wafer {} chip {} is outside the fleet",
                    d.lot, d.wafer, d.chip
                )));
            }
            if !(d.vform_volt > 0.0 && d.vform_volt.is_finite()) {
                return Err(config_err("defect vform_volt must be positive"));
            }
        }
        Ok(())
    }
}

/// `n` resistances `exp(mu + sigma z)` with `z` from the seeded stream.
pub fn gen_lognormal_cycles(fit: &LogNormalFit, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SynthRng::new(seed);
    (0..n).map(|_| (fit.mu + fit.sigma * rng.standard_normal()).exp()).collect()
}

pub fn lot_id(lot: u32) -> String {
    format!("LOT{lot:02}")
}

pub fn wafer_id(wafer: u32) -> String {
    format!("W{wafer:02}")
}

pub fn device_id(size_nm: u32) -> String {
    format!("D{size_nm}")
}

const STREAM_LOT: u64 = 1;
const STREAM_WAFER: u64 = 2;
const STREAM_CHIP: u64 = 3;
const STREAM_CYCLES: u64 = 4;

fn effects(rng: &mut SynthRng, sds: impl Iterator<Item = f64>) -> Vec<f64> {
    sds.map(|sd| sd * rng.standard_normal()).collect()
}

struct ChipSlot {
    lot: u32,
    wafer: u32,
    chip: u32,
    upper: Vec<f64>,
}

/// A lot/wafer/chip fleet. Each chip gets one forming record per forming
/// group and, for the cycle device, `cycles_per_chip` HRS and LRS reads
/// from log-normal parameters drawn uniformly inside the configured ranges.
pub fn gen_nested_dataset(cfg: &FleetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let cols = cfg.columns();
    let seed = cfg.seed;

    let mut slots = Vec::new();
    for lot in 1..=cfg.lots {
        let lot_fx = effects(
            &mut SynthRng::stream(seed, &[STREAM_LOT, lot.into()]),
            cfg.forming.iter().map(|g| g.sd_l2l),
        );
        for wafer in 1..=cfg.wafers_per_lot {
            let wafer_fx = effects(
                &mut SynthRng::stream(seed, &[STREAM_WAFER, lot.into(), wafer.into()]),
                cfg.forming.iter().map(|g| g.sd_w2w),
            );
            let upper = lot_fx.iter().zip(&wafer_fx).map(|(a, b)| a + b).collect();
            for chip in 1..=cfg.chips_per_wafer {
                slots.push(ChipSlot { lot, wafer, chip, upper: Vec::clone(&upper) });
            }
        }
    }

    let parts = slots
        .par_iter()
        .map(|s| gen_chip(cfg, cols, s))
        .collect::<Result<Vec<_>>>()?;
    let mut forming = Vec::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut cycles = Vec::with_capacity(parts.iter().map(|p| p.1.len()).sum());
    for (f, c) in parts {
        forming.extend(f);
        cycles.extend(c);
    }
    Dataset::new(forming, cycles)
}

fn gen_chip(cfg: &FleetConfig, cols: u32, s: &ChipSlot) -> Result<(Vec<FormingRecord>, Vec<CycleRecord>)> {
    let path = [s.lot.into(), s.wafer.into(), s.chip.into()];
    let mut rng = SynthRng::stream(cfg.seed, &[STREAM_CHIP, path[0], path[1], path[2]]);
    let chip_fx = effects(&mut rng, cfg.forming.iter().map(|g| g.sd_ctc));
    let (lot_id, wafer_id) = (lot_id(s.lot), wafer_id(s.wafer));
    let idx = s.chip - 1;
    let (x, y) = ((idx % cols) as i32, (idx / cols) as i32);
    let defect = cfg
        .defects
        .iter()
        .rev()
        .find(|d| (d.lot, d.wafer, d.chip) == (s.lot, s.wafer, s.chip));

    let mut forming = Vec::with_capacity(cfg.forming.len());
    for ((g, up), fx) in cfg.forming.iter().zip(&s.upper).zip(&chip_fx) {
        let v = match defect {
            Some(d) => d.vform_volt,
            None => g.mean_volt + up + fx,
        };
        if !(v > 0.0) {
            return Err(config_err(format!(
                "non-positive forming voltage {v} drawn for {lot_id}/{wafer_id} chip {}; effect SDs too large",
                s.chip
            )));
        }
        forming.push(FormingRecord {
            lot_id: lot_id.clone(),
            wafer_id: wafer_id.clone(),
            chip_x: x,
            chip_y: y,
            device_id: device_id(g.device_size_nm),
            device_size_nm: g.device_size_nm,
            vform_volt: v,
        });
    }

    let n = cfg.cycles_per_chip as usize;
    let mut cycles = Vec::with_capacity(2 * n);
    if n > 0 {
        let mut draw = |r: &FitRange| {
            let mu = rng.uniform(r.mu[0], r.mu[1]);
            let sigma = rng.uniform(r.sigma[0], r.sigma[1]);
            LogNormalFit::new(mu, sigma, n)
        };
        let fit_h = draw(&cfg.hrs)?;
        let fit_l = draw(&cfg.lrs)?;
        let cyc = |side: u64| stream_seed(cfg.seed, &[STREAM_CYCLES, path[0], path[1], path[2], side]);
        let r_h = gen_lognormal_cycles(&fit_h, n, cyc(0));
        let r_l = gen_lognormal_cycles(&fit_l, n, cyc(1));
        let c = &cfg.conditions;
        for (k, (rh, rl)) in r_h.into_iter().zip(r_l).enumerate() {
            for (state, r) in [(TargetState::Hrs, rh), (TargetState::Lrs, rl)] {
                let hrs = state == TargetState::Hrs;
                cycles.push(CycleRecord {
                    lot_id: lot_id.clone(),
                    wafer_id: wafer_id.clone(),
                    chip_x: x,
                    chip_y: y,
                    device_id: device_id(cfg.cycle_device_size_nm),
                    device_size_nm: cfg.cycle_device_size_nm,
                    cycle_index: k as u64,
                    target_state: state,
                    resistance_ohm: r,
                    read_voltage_v: c.read_voltage_v,
                    set_voltage_v: (!hrs).then_some(c.set_voltage_v),
                    reset_voltage_v: hrs.then_some(c.reset_voltage_v),
                    compliance_current_ua: (!hrs).then_some(c.compliance_current_ua),
                    pulse_width_us: Some(c.pulse_width_us),
                });
            }
        }
    }
    Ok((forming, cycles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mle_fit;
    use crate::varcomp::{forming_table, Level};

    fn small() -> FleetConfig {
        FleetConfig { lots: 2, wafers_per_lot: 2, chips_per_wafer: 5, cycles_per_chip: 4, ..Default::default() }
    }

    #[test]
    fn zero_sigma_gives_median() {
        let fit = LogNormalFit::new(3.0, 0.0, 1).unwrap();
        assert!(gen_lognormal_cycles(&fit, 50, 3).iter().all(|v| *v == 3.0_f64.exp()));
    }

    #[test]
    fn cycles_are_seed_determined() {
        let fit = LogNormalFit::new(9.0, 0.3, 1).unwrap();
        assert_eq!(gen_lognormal_cycles(&fit, 100, 8), gen_lognormal_cycles(&fit, 100, 8));
        assert_ne!(gen_lognormal_cycles(&fit, 100, 8), gen_lognormal_cycles(&fit, 100, 9));
    }

    #[test]
    fn mle_recovers_generator_parameters() {
        let fit = LogNormalFit::new(1.0, 0.25, 1).unwrap();
        let est = mle_fit(&gen_lognormal_cycles(&fit, 100_000, 20_240_601)).unwrap();
        assert!((est.mu - 1.0).abs() < 0.005);
        assert!((est.sigma - 0.25).abs() < 0.005);
    }

    #[test]
    fn fleet_shape_and_ids() {
        let cfg = small();
        let d = gen_nested_dataset(&cfg).unwrap();
        assert_eq!(d.chips().len(), 20);
        assert_eq!(d.forming().len(), 20 * 3);
        assert_eq!(d.cycles().len(), 20 * 4 * 2);
        let first = &d.cycles()[0];
        assert_eq!((first.lot_id.as_str(), first.wafer_id.as_str()), ("LOT01", "W01"));
        assert_eq!(first.device_id, "D100");
        assert_eq!((first.chip_x, first.chip_y), (0, 0));
        let last = d.chips().pop().unwrap();
        // 5 chips on a 3-column grid: the fifth sits at (1, 1)
        assert!(d.chips().iter().any(|c| (c.chip_x, c.chip_y) == (1, 1)));
        assert_eq!(last.lot_id, "LOT02");
        for s in d.cycle_series() {
            assert_eq!((s.r_h.len(), s.r_l.len()), (4, 4));
            assert!(s.r_h.iter().chain(&s.r_l).all(|r| *r > 0.0));
        }
    }

    #[test]
    fn fleet_is_deterministic() {
        let cfg = small();
        assert_eq!(gen_nested_dataset(&cfg).unwrap(), gen_nested_dataset(&cfg).unwrap());
        let other = FleetConfig { seed: 2, ..small() };
        assert_ne!(gen_nested_dataset(&cfg).unwrap(), gen_nested_dataset(&other).unwrap());
    }

    #[test]
    fn zero_sds_give_grand_mean() {
        let mut cfg = small();
        for g in &mut cfg.forming {
            g.sd_l2l = 0.0;
            g.sd_w2w = 0.0;
            g.sd_ctc = 0.0;
        }
        let d = gen_nested_dataset(&cfg).unwrap();
        for r in d.forming() {
            let g = cfg.forming.iter().find(|g| g.device_size_nm == r.device_size_nm).unwrap();
            assert_eq!(r.vform_volt, g.mean_volt);
        }
    }

    #[test]
    fn fit_parameters_stay_in_range() {
        let cfg = FleetConfig { cycles_per_chip: 2000, chips_per_wafer: 6, ..Default::default() };
        let d = gen_nested_dataset(&cfg).unwrap();
        for s in d.cycle_series() {
            let h = mle_fit(&s.r_h).unwrap();
            let l = mle_fit(&s.r_l).unwrap();
            assert!(h.mu > 12.2 - 0.05 && h.mu < 13.3 + 0.05);
            assert!(l.mu > 9.0 - 0.02 && l.mu < 9.4 + 0.02);
            assert!(h.sigma > 0.25 * 0.9 && h.sigma < 0.55 * 1.1);
            assert!(l.sigma > 0.06 * 0.9 && l.sigma < 0.14 * 1.1);
        }
    }

    #[test]
    fn defect_overrides_forming() {
        let mut cfg = small();
        cfg.defects.push(DefectSpec { lot: 1, wafer: 2, chip: 3, vform_volt: 4.2 });
        let d = gen_nested_dataset(&cfg).unwrap();
        let hot: Vec<_> = d.forming().iter().filter(|r| r.vform_volt == 4.2).collect();
        assert_eq!(hot.len(), 3);
        assert!(hot.iter().all(|r| r.wafer_id == "W02" && (r.chip_x, r.chip_y) == (2, 0)));
    }

    #[test]
    fn single_lot_and_wafer_not_estimable() {
        let cfg = FleetConfig { chips_per_wafer: 10, cycles_per_chip: 0, ..Default::default() };
        for vc in forming_table(&gen_nested_dataset(&cfg).unwrap(), true).unwrap() {
            assert_eq!(vc.sd_l2l, None);
            assert_eq!(vc.sd_w2w, None);
            assert!(vc.sd_ctc.is_some());
            assert!(!vc.clipped.contains(&Level::Chip));
        }
    }

    #[test]
    fn config_validation() {
        assert!(FleetConfig::default().validate().is_ok());
        let bad = [
            FleetConfig { lots: 0, ..Default::default() },
            FleetConfig { grid_columns: Some(0), ..Default::default() },
            FleetConfig { defects: vec![DefectSpec { lot: 2, wafer: 1, chip: 1, vform_volt: 4.5 }], ..Default::default() },
            FleetConfig { hrs: FitRange { mu: [13.0, 12.0], sigma: [0.2, 0.3] }, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
        let mut neg = FleetConfig::default();
        neg.forming[0].sd_ctc = -0.1;
        assert!(neg.validate().is_err());
        assert!(FleetConfig::from_json(r#"{"lots": 2, "typo": 1}"#).is_err());
        let cfg = FleetConfig::from_json(r#"{"lots": 4, "wafers_per_lot": 6, "seed": 9}"#).unwrap();
        assert_eq!((cfg.lots, cfg.wafers_per_lot, cfg.chips_per_wafer, cfg.seed), (4, 6, 24, 9));
        assert_eq!(cfg.columns(), 5);
    }
}
