use iltber_core::data::{filter_defective, parse_cycles, write_csv, write_jsonl, Dataset, InputFormat};
use iltber_core::synth::{gen_nested_dataset, DefectSpec, FleetConfig, FormingGroup};
use iltber_core::varcomp::{forming_table, variance_components, Observation};
use proptest::prelude::*;

fn reparse(text: &str, format: InputFormat) -> Dataset {
    let parsed = parse_cycles(text.as_bytes(), format).unwrap();
    assert!(parsed.unknown_columns.is_empty());
    parsed.dataset
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_fleets_round_trip(seed in any::<u64>(), lots in 1u32..3, chips in 1u32..7, cycles in 0u32..5) {
        let cfg = FleetConfig { seed, lots, wafers_per_lot: 2, chips_per_wafer: chips, cycles_per_chip: cycles, ..Default::default() };
        let d = gen_nested_dataset(&cfg).unwrap();
        let csv = write_csv(&d);
        prop_assert_eq!(&reparse(&csv, InputFormat::Csv), &d);
        prop_assert_eq!(&reparse(&write_jsonl(&d), InputFormat::Jsonl), &d);
        prop_assert_eq!(write_csv(&reparse(&csv, InputFormat::Csv)), csv);
    }
}

#[test]
fn one_defective_chip_of_twenty_four() {
    let cfg = FleetConfig {
        defects: vec![DefectSpec { lot: 1, wafer: 1, chip: 7, vform_volt: 4.3 }],
        ..Default::default()
    };
    let d = gen_nested_dataset(&cfg).unwrap();
    assert_eq!(d.chips().len(), 24);
    let (kept, screening) = filter_defective(&d, 4.0);
    assert_eq!(kept.chips().len(), 23);
    assert_eq!(screening.rejected.len(), 1);
    assert_eq!((screening.rejected[0].chip.chip_x, screening.rejected[0].chip.chip_y), (1, 1));
    assert!(kept.cycles().iter().all(|c| (c.chip_x, c.chip_y) != (1, 1)));
    assert_eq!(screening.screened, 24);
}

// Drop a seed-dependent subset of chips so the design is unbalanced, then
// check the averaged variance estimates against the generating values.
#[test]
fn unbalanced_recovery_is_close_on_average() {
    let truth = (0.05, 0.08, 0.12);
    let mut sums = (0.0, 0.0, 0.0);
    let seeds = 40u64;
    for seed in 0..seeds {
        let cfg = FleetConfig {
            seed,
            lots: 8,
            wafers_per_lot: 5,
            chips_per_wafer: 16,
            cycles_per_chip: 0,
            forming: vec![FormingGroup {
                device_size_nm: 100,
                mean_volt: 2.5,
                sd_l2l: truth.0,
                sd_w2w: truth.1,
                sd_ctc: truth.2,
            }],
            ..Default::default()
        };
        let d = gen_nested_dataset(&cfg).unwrap();
        let obs: Vec<Observation> = d
            .forming()
            .iter()
            .enumerate()
            .filter(|(i, r)| !(i + r.wafer_id.len() * seed as usize).is_multiple_of(5) || r.chip_x == 0)
            .map(|(_, r)| Observation { chip: r.chip_key(), value: r.vform_volt })
            .collect();
        let vc = variance_components("u", &obs).unwrap();
        sums.0 += vc.sd_l2l.unwrap().powi(2);
        sums.1 += vc.sd_w2w.unwrap().powi(2);
        sums.2 += vc.sd_ctc.unwrap().powi(2);
    }
    let n = seeds as f64;
    // Averaged variances: within 30% for the lot level (7 df per run), 10% below it.
    assert!((sums.0 / n / truth.0.powi(2) - 1.0).abs() < 0.3, "{}", sums.0 / n);
    assert!((sums.1 / n / truth.1.powi(2) - 1.0).abs() < 0.1, "{}", sums.1 / n);
    assert!((sums.2 / n / truth.2.powi(2) - 1.0).abs() < 0.1, "{}", sums.2 / n);
}

#[test]
fn chip_level_dominates_table() {
    let cfg = FleetConfig { lots: 4, wafers_per_lot: 6, cycles_per_chip: 0, ..Default::default() };
    let table = forming_table(&gen_nested_dataset(&cfg).unwrap(), true).unwrap();
    assert_eq!(table.iter().map(|r| r.group_label.as_str()).collect::<Vec<_>>(), ["50nm", "100nm", "200nm"]);
    for row in &table[..2] {
        let ctc = row.sd_ctc.unwrap();
        assert!(ctc > row.sd_w2w.unwrap() && ctc > row.sd_l2l.unwrap(), "{row:?}");
        assert_eq!(row.counts.chips, 4 * 6 * 24);
    }
}
