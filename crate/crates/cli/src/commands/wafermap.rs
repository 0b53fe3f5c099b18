use std::collections::BTreeMap;
use std::path::Path;

use iltber_core::data::{ChipKey, Dataset, WaferKey};
use iltber_core::numfmt::sig;

use super::emit;
use crate::analysis::{check_margin, check_min_cycles, fit_chips, load, reference_points, select_wafer, FitRun};
use crate::error::{CliError, CliResult};
use crate::wafermap::{render_csv, render_svg, render_text, CellValue, Metric, WaferMap};
use crate::{MapFormat, ScreenArgs};

fn wafer_chips(d: &Dataset, wafer: &WaferKey) -> Vec<ChipKey> {
    d.chips().into_iter().filter(|c| &c.wafer() == wafer).collect()
}

/// Size of the cycled devices, else the smallest forming device size.
fn default_size(d: &Dataset) -> Option<u32> {
    d.cycles()
        .iter()
        .map(|c| c.device_size_nm)
        .min()
        .or_else(|| d.forming().iter().map(|r| r.device_size_nm).min())
}

/// Largest forming voltage per chip for `device_size` devices; chips with
/// any forming voltage above `vform_max` are marked defective.
pub fn vform_map(d: &Dataset, wafer: &WaferKey, device_size: Option<u32>, vform_max: f64) -> CliResult<WaferMap> {
    let size = device_size.or_else(|| default_size(d));
    let mut worst: BTreeMap<ChipKey, f64> = BTreeMap::new();
    let mut sized: BTreeMap<ChipKey, f64> = BTreeMap::new();
    for r in d.forming() {
        let key = r.chip_key();
        let w = worst.entry(key.clone()).or_insert(f64::NEG_INFINITY);
        *w = w.max(r.vform_volt);
        if Some(r.device_size_nm) == size {
            let v = sized.entry(key).or_insert(f64::NEG_INFINITY);
            *v = v.max(r.vform_volt);
        }
    }
    let cells = wafer_chips(d, wafer)
        .into_iter()
        .map(|chip| {
            let value = match (worst.get(&chip), sized.get(&chip)) {
                (Some(&w), _) if w > vform_max => CellValue::Defective {
                    reason: format!("forming voltage {} V above {} V", sig(w, 4), sig(vform_max, 4)),
                },
                (_, Some(&v)) => CellValue::Value { value: v },
                _ => CellValue::Absent {
                    reason: match size {
                        Some(s) => format!("no forming record for {s}nm devices"),
                        None => "no forming record".to_owned(),
                    },
                },
            };
            (chip, value)
        })
        .collect();
    WaferMap::new(Metric::Vform, wafer.clone(), cells)
}

/// `log10_ber` at `margin` for fitted chips; rejected chips are defective
/// and skipped chips absent.
pub fn ber_map(d: &Dataset, wafer: &WaferKey, run: &FitRun, margin: f64) -> CliResult<WaferMap> {
    let mut status: BTreeMap<ChipKey, CellValue> = BTreeMap::new();
    for r in &run.screening.rejected {
        status.insert(
            r.chip.clone(),
            CellValue::Defective {
                reason: format!(
                    "forming voltage {} V above {} V",
                    sig(r.max_vform_volt, 4),
                    sig(run.screening.threshold_volt, 4)
                ),
            },
        );
    }
    for s in &run.skipped {
        status.insert(s.chip.clone(), CellValue::Absent { reason: s.reason.clone() });
    }
    let on_wafer: Vec<_> = run.fits.iter().filter(|f| &f.chip.wafer() == wafer).cloned().collect();
    for (f, p) in on_wafer.iter().zip(reference_points(&on_wafer, margin)?) {
        status.insert(f.chip.clone(), CellValue::Value { value: p.log10_ber });
    }
    let cells = wafer_chips(d, wafer)
        .into_iter()
        .map(|chip| {
            let value = status
                .remove(&chip)
                .unwrap_or_else(|| CellValue::Absent { reason: "no cycle data".to_owned() });
            (chip, value)
        })
        .collect();
    WaferMap::new(Metric::Ber, wafer.clone(), cells)
}

#[allow(clippy::too_many_arguments)]
pub(super) fn run(
    input: &Path,
    metric: &str,
    margin: f64,
    format: MapFormat,
    wafer: Option<&str>,
    device_size: Option<u32>,
    y_down: bool,
    screen: &ScreenArgs,
    out: Option<&Path>,
) -> CliResult<String> {
    let metric = Metric::parse(metric)?;
    check_margin(margin)?;
    check_min_cycles(screen.min_cycles)?;
    let loaded = load(input)?;
    let d = &loaded.dataset;
    let wafer = select_wafer(d, wafer)?;
    let map = match metric {
        Metric::Vform => vform_map(d, &wafer, device_size, screen.vform_max)?,
        Metric::Ber => ber_map(d, &wafer, &fit_chips(d, screen.vform_max, screen.min_cycles), margin)?,
    };
    if map.valued() == 0 {
        return Err(CliError::Insufficient(format!(
            "no chip on {}/{} has a {} value",
            wafer.lot_id, wafer.wafer_id, map.metric
        )));
    }
    let text = match format {
        MapFormat::Text => render_text(&map, y_down),
        MapFormat::Csv => render_csv(&map),
        MapFormat::Svg => render_svg(&map, y_down),
    };
    emit(out, text)
}
