//! Lot / wafer / chip variance components of a scalar parameter by nested
//! ANOVA (method of moments on expected mean squares), unbalanced designs
//! included.
//!
//! Model: `y = mean + lot + wafer(lot) + chip(wafer)`, with chip as the
//! lowest level. Replicates on one chip are averaged first.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::data::{ChipKey, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub chip: ChipKey,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Lot,
    Wafer,
    Chip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub lots: usize,
    pub wafers: usize,
    pub chips: usize,
    pub observations: usize,
}

/// Standard deviations per hierarchy level. `None` marks a level the design
/// cannot estimate (e.g. a single lot); it contributes nothing to the total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub group_label: String,
    pub mean: f64,
    pub sd_ctc: Option<f64>,
    pub sd_w2w: Option<f64>,
    pub sd_l2l: Option<f64>,
    pub sd_total: f64,
    pub counts: Counts,
    /// Levels whose moment estimate came out negative and was set to 0.
    pub clipped: Vec<Level>,
}

impl VarianceComponents {
    /// Assemble from known component SDs; the total is their root sum of squares.
    pub fn from_components(
        group_label: impl Into<String>,
        mean: f64,
        sd_ctc: Option<f64>,
        sd_w2w: Option<f64>,
        sd_l2l: Option<f64>,
    ) -> Self {
        let sq = |s: Option<f64>| s.map_or(0.0, |v| v * v);
        Self {
            group_label: group_label.into(),
            mean,
            sd_ctc,
            sd_w2w,
            sd_l2l,
            sd_total: (sq(sd_ctc) + sq(sd_w2w) + sq(sd_l2l)).sqrt(),
            counts: Counts::default(),
            clipped: Vec::new(),
        }
    }

    pub fn not_estimable(&self) -> Vec<Level> {
        let mut out = Vec::new();
        if self.sd_l2l.is_none() {
            out.push(Level::Lot);
        }
        if self.sd_w2w.is_none() {
            out.push(Level::Wafer);
        }
        if self.sd_ctc.is_none() {
            out.push(Level::Chip);
        }
        out
    }
}

/// `sd_total / mean`.
pub fn coefficient_of_variation(vc: &VarianceComponents) -> Result<f64> {
    if vc.mean == 0.0 || !vc.mean.is_finite() {
        return Err(Error::domain(format!("coefficient of variation undefined for mean {}", vc.mean)));
    }
    Ok(vc.sd_total / vc.mean)
}

/// Nested random-effects decomposition of `observations`.
pub fn variance_components(group_label: &str, observations: &[Observation]) -> Result<VarianceComponents> {
    if observations.is_empty() {
        return Err(Error::Empty("no observations"));
    }
    if let Some(o) = observations.iter().find(|o| !o.value.is_finite()) {
        return Err(Error::domain(format!("non-finite value at {}", o.chip)));
    }
    let pivot = observations[0].value;
    let mean = pivot + observations.iter().map(|o| o.value - pivot).sum::<f64>() / observations.len() as f64;

    // Chip means, centered on the raw mean to keep sums of squares well conditioned.
    let mut per_chip: BTreeMap<&ChipKey, (f64, usize)> = BTreeMap::new();
    for o in observations {
        let e = per_chip.entry(&o.chip).or_default();
        e.0 += o.value - mean;
        e.1 += 1;
    }
    let mut tree: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();
    for (chip, (sum, n)) in per_chip {
        tree.entry(&chip.lot_id)
            .or_default()
            .entry(&chip.wafer_id)
            .or_default()
            .push(sum / n as f64);
    }

    let lots = tree.len();
    let wafers: usize = tree.values().map(BTreeMap::len).sum();
    let chips: usize = tree.values().flat_map(|w| w.values()).map(Vec::len).sum();
    let n_total = chips as f64;
    let grand = tree.values().flat_map(|w| w.values()).flatten().sum::<f64>() / n_total;

    let (mut ss_lot, mut ss_wafer, mut ss_chip) = (0.0, 0.0, 0.0);
    // Coefficient sums for the expected mean squares.
    let (mut sum_nij2_over_ni, mut sum_nij2, mut sum_ni2) = (0.0, 0.0, 0.0);
    for wafers_of_lot in tree.values() {
        let n_i: usize = wafers_of_lot.values().map(Vec::len).sum();
        let lot_mean = wafers_of_lot.values().flatten().sum::<f64>() / n_i as f64;
        ss_lot += n_i as f64 * (lot_mean - grand).powi(2);
        sum_ni2 += (n_i * n_i) as f64;
        let mut lot_nij2 = 0.0;
        for values in wafers_of_lot.values() {
            let n_ij = values.len() as f64;
            let wafer_mean = values.iter().sum::<f64>() / n_ij;
            ss_wafer += n_ij * (wafer_mean - lot_mean).powi(2);
            ss_chip += values.iter().map(|v| (v - wafer_mean).powi(2)).sum::<f64>();
            lot_nij2 += n_ij * n_ij;
        }
        sum_nij2 += lot_nij2;
        sum_nij2_over_ni += lot_nij2 / n_i as f64;
    }

    let df_lot = lots - 1;
    let df_wafer = wafers - lots;
    let df_chip = chips - wafers;

    let var_chip = (df_chip > 0).then(|| ss_chip / df_chip as f64);
    let e_chip = var_chip.unwrap_or(0.0);

    let var_wafer = (df_wafer > 0).then(|| {
        let k1 = (n_total - sum_nij2_over_ni) / df_wafer as f64;
        (ss_wafer / df_wafer as f64 - e_chip) / k1
    });
    let var_lot = (df_lot > 0).then(|| {
        let k2 = (sum_nij2_over_ni - sum_nij2 / n_total) / df_lot as f64;
        let k3 = (n_total - sum_ni2 / n_total) / df_lot as f64;
        (ss_lot / df_lot as f64 - e_chip - k2 * var_wafer.unwrap_or(0.0)) / k3
    });

    let mut clipped = Vec::new();
    let mut to_sd = |v: Option<f64>, level| {
        v.map(|v| {
            if v < 0.0 {
                clipped.push(level);
                0.0
            } else {
                v.sqrt()
            }
        })
    };
    let sd_l2l = to_sd(var_lot, Level::Lot);
    let sd_w2w = to_sd(var_wafer, Level::Wafer);
    let sd_ctc = to_sd(var_chip, Level::Chip);

    let mut vc = VarianceComponents::from_components(group_label, mean, sd_ctc, sd_w2w, sd_l2l);
    vc.counts = Counts {
        lots,
        wafers,
        chips,
        observations: observations.len(),
    };
    vc.clipped = clipped;
    Ok(vc)
}

/// Forming-voltage observations, optionally restricted to one device size.
pub fn forming_observations(d: &Dataset, device_size_nm: Option<u32>) -> Vec<Observation> {
    d.forming()
        .iter()
        .filter(|r| device_size_nm.is_none_or(|s| s == r.device_size_nm))
        .map(|r| Observation {
            chip: r.chip_key(),
            value: r.vform_volt,
        })
        .collect()
}

/// One decomposition per device size (labelled `"<size>nm"`), or a single
/// `"all"` row.
pub fn forming_table(d: &Dataset, group_by_size: bool) -> Result<Vec<VarianceComponents>> {
    if d.forming().is_empty() {
        return Err(Error::Empty("no forming records"));
    }
    if !group_by_size {
        return Ok(vec![variance_components("all", &forming_observations(d, None))?]);
    }
    let sizes: BTreeSet<u32> = d.forming().iter().map(|r| r.device_size_nm).collect();
    sizes
        .into_iter()
        .map(|s| variance_components(&format!("{s}nm"), &forming_observations(d, Some(s))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(lot: usize, wafer: usize, chip: i32, value: f64) -> Observation {
        Observation {
            chip: ChipKey::new(format!("L{lot}"), format!("W{wafer}"), chip, 0),
            value,
        }
    }

    #[test]
    fn table_one_arithmetic() {
        let vc = VarianceComponents::from_components("50nm", 2.78, Some(0.14), Some(0.08), Some(0.04));
        assert!((vc.sd_total - 0.166_132_477_258_361_4).abs() < 1e-12);
        let cov = coefficient_of_variation(&vc).unwrap();
        assert!((cov - 0.0598).abs() < 1e-3);

        let vc = VarianceComponents::from_components("200nm", 2.18, Some(0.16), Some(0.13), Some(0.07));
        assert!((vc.sd_total - 0.22).abs() < 0.005);
        let cov = coefficient_of_variation(&VarianceComponents { sd_total: 0.22, ..vc }).unwrap();
        assert!((cov - 0.101).abs() < 5e-4);
    }

    #[test]
    fn cov_edge_cases() {
        let vc = VarianceComponents::from_components("x", 2.78, Some(0.0), Some(0.0), Some(0.0));
        assert_eq!(coefficient_of_variation(&vc).unwrap(), 0.0);
        let vc = VarianceComponents::from_components("x", 0.0, Some(0.1), None, None);
        assert!(coefficient_of_variation(&vc).is_err());
        let vc = VarianceComponents { sd_total: 0.17, ..VarianceComponents::from_components("x", 2.78, None, None, None) };
        assert!((coefficient_of_variation(&vc).unwrap() - 0.0612).abs() < 1e-4);
    }

    #[test]
    fn constant_observations() {
        let data: Vec<_> = (0..3)
            .flat_map(|l| (0..2).flat_map(move |w| (0..4).map(move |c| obs(l, w, c, 2.54))))
            .collect();
        let vc = variance_components("100nm", &data).unwrap();
        assert_eq!(vc.mean, 2.54);
        assert_eq!(vc.sd_ctc, Some(0.0));
        assert_eq!(vc.sd_w2w, Some(0.0));
        assert_eq!(vc.sd_l2l, Some(0.0));
        assert_eq!(vc.sd_total, 0.0);
        assert_eq!(vc.counts, Counts { lots: 3, wafers: 6, chips: 24, observations: 24 });
    }

    #[test]
    fn single_lot_and_wafer_not_estimable() {
        let data: Vec<_> = (0..5).map(|c| obs(0, 0, c, 2.0 + 0.1 * c as f64)).collect();
        let vc = variance_components("g", &data).unwrap();
        assert_eq!(vc.sd_l2l, None);
        assert_eq!(vc.sd_w2w, None);
        let sd = vc.sd_ctc.unwrap();
        // Sample SD of {2.0, 2.1, ..., 2.4}.
        assert!((sd - 0.158_113_883_008_418_98).abs() < 1e-12);
        assert_eq!(vc.sd_total, sd);
        assert_eq!(vc.not_estimable(), vec![Level::Lot, Level::Wafer]);
    }

    #[test]
    fn empty_input_errors() {
        assert!(variance_components("g", &[]).is_err());
    }

    #[test]
    fn replicates_are_averaged_per_chip() {
        let mut data = vec![obs(0, 0, 0, 1.0), obs(0, 0, 0, 3.0), obs(0, 0, 1, 4.0), obs(0, 0, 2, 6.0)];
        let vc = variance_components("g", &data).unwrap();
        // Chip means 2, 4, 6.
        assert!((vc.sd_ctc.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(vc.counts.observations, 4);
        assert_eq!(vc.counts.chips, 3);
        data.push(obs(0, 0, 0, 2.0));
        assert!((variance_components("g", &data).unwrap().sd_ctc.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_design_matches_textbook_formulas() {
        // 3 lots x 2 wafers x 3 chips, irregular values.
        let values = [
            [[2.61, 2.70, 2.55], [2.80, 2.77, 2.92]],
            [[2.40, 2.51, 2.47], [2.66, 2.58, 2.49]],
            [[2.95, 2.83, 2.88], [2.71, 2.90, 3.02]],
        ];
        let data: Vec<_> = values
            .iter()
            .enumerate()
            .flat_map(|(l, ws)| {
                ws.iter().enumerate().flat_map(move |(w, cs)| {
                    cs.iter().enumerate().map(move |(c, &v)| obs(l, w, c as i32, v))
                })
            })
            .collect();
        let vc = variance_components("g", &data).unwrap();

        // Balanced closed forms: a = 3, b = 2, n = 3.
        let (a, b, n) = (3.0, 2.0, 3.0);
        let all: Vec<f64> = values.iter().flatten().flatten().copied().collect();
        let gm = all.iter().sum::<f64>() / all.len() as f64;
        let mut ss_a = 0.0;
        let mut ss_b = 0.0;
        let mut ss_e = 0.0;
        for ws in &values {
            let lm = ws.iter().flatten().sum::<f64>() / (b * n);
            ss_a += b * n * (lm - gm).powi(2);
            for cs in ws {
                let wm = cs.iter().sum::<f64>() / n;
                ss_b += n * (wm - lm).powi(2);
                ss_e += cs.iter().map(|v| (v - wm).powi(2)).sum::<f64>();
            }
        }
        let ms_a = ss_a / (a - 1.0);
        let ms_b = ss_b / (a * (b - 1.0));
        let ms_e = ss_e / (a * b * (n - 1.0));
        let var_e = ms_e;
        let var_b = (ms_b - ms_e) / n;
        let var_a = (ms_a - ms_b) / (b * n);

        let check = |got: Option<f64>, var: f64| {
            let want = var.max(0.0).sqrt();
            assert!((got.unwrap() - want).abs() < 1e-12, "{got:?} vs {want}");
        };
        check(vc.sd_ctc, var_e);
        check(vc.sd_w2w, var_b);
        check(vc.sd_l2l, var_a);
        assert_eq!(vc.clipped.is_empty(), var_a >= 0.0 && var_b >= 0.0);
    }

    #[test]
    fn negative_estimate_is_clipped_and_flagged() {
        // Identical lot means, wafers spread within each lot: lot estimate < 0.
        let data = vec![
            obs(0, 0, 0, 1.0),
            obs(0, 0, 1, 1.2),
            obs(0, 1, 0, 3.0),
            obs(0, 1, 1, 3.2),
            obs(1, 0, 0, 3.0),
            obs(1, 0, 1, 3.2),
            obs(1, 1, 0, 1.0),
            obs(1, 1, 1, 1.2),
        ];
        let vc = variance_components("g", &data).unwrap();
        assert_eq!(vc.sd_l2l, Some(0.0));
        assert_eq!(vc.clipped, vec![Level::Lot]);
        assert!(vc.sd_w2w.unwrap() > 0.5);
        let rss = vc.sd_ctc.unwrap().powi(2) + vc.sd_w2w.unwrap().powi(2);
        assert!((vc.sd_total.powi(2) - rss).abs() < 1e-12 * rss.max(1.0));
    }

    #[test]
    fn shift_and_scale() {
        let base: Vec<_> = (0..4)
            .flat_map(|l| {
                (0..3).flat_map(move |w| {
                    (0..5).map(move |c| {
                        let v = 2.5 + 0.05 * l as f64 - 0.03 * w as f64 + 0.011 * ((c * 7 + l * 3 + w) % 5) as f64;
                        obs(l, w, c as i32, v)
                    })
                })
            })
            .collect();
        let a = variance_components("g", &base).unwrap();
        let shifted: Vec<_> = base.iter().map(|o| Observation { value: o.value + 100.0, ..o.clone() }).collect();
        let b = variance_components("g", &shifted).unwrap();
        assert!((b.mean - a.mean - 100.0).abs() < 1e-11);
        for (x, y) in [(a.sd_ctc, b.sd_ctc), (a.sd_w2w, b.sd_w2w), (a.sd_l2l, b.sd_l2l)] {
            assert!((x.unwrap() - y.unwrap()).abs() < 1e-12);
        }
        let scaled: Vec<_> = base.iter().map(|o| Observation { value: o.value * 3.0, ..o.clone() }).collect();
        let c = variance_components("g", &scaled).unwrap();
        for (x, y) in [(a.sd_ctc, c.sd_ctc), (a.sd_w2w, c.sd_w2w), (a.sd_l2l, c.sd_l2l)] {
            assert!((3.0 * x.unwrap() - y.unwrap()).abs() < 1e-12);
        }
    }
}
