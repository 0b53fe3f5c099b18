use std::path::Path;

use iltber_core::data::{ChipKey, RejectedChip, TargetState};
use iltber_core::stats::ConfidenceInterval;
use serde::Serialize;

use super::{emit, fits_csv, states, to_json};
use crate::analysis::{check_min_cycles, fit_chips, load, FitRun, Skipped, CONFIDENCE_LEVEL};
use crate::error::CliResult;
use crate::{ScreenArgs, TableFormat};

#[derive(Serialize)]
struct FitEntry<'a> {
    chip: &'a ChipKey,
    state: TargetState,
    mu: f64,
    sigma: f64,
    n: usize,
    sigma_ci: ConfidenceInterval,
    qq_r_squared: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    vform_max_volt: f64,
    min_cycles: usize,
    confidence_level: f64,
    fits: Vec<FitEntry<'a>>,
    skipped: &'a [Skipped],
    rejected: &'a [RejectedChip],
    unscreened: &'a [ChipKey],
}

pub fn fits_json(run: &FitRun, min_cycles: usize) -> String {
    let fits = run
        .fits
        .iter()
        .flat_map(|f| {
            states(f).map(|(state, sf)| FitEntry {
                chip: &f.chip,
                state,
                mu: sf.fit.mu,
                sigma: sf.fit.sigma,
                n: sf.fit.n,
                sigma_ci: sf.sigma_ci,
                qq_r_squared: sf.qq.r_squared,
            })
        })
        .collect();
    to_json(&FitReport {
        vform_max_volt: run.screening.threshold_volt,
        min_cycles,
        confidence_level: CONFIDENCE_LEVEL,
        fits,
        skipped: &run.skipped,
        rejected: &run.screening.rejected,
        unscreened: &run.screening.unscreened,
    })
}

pub(super) fn run(input: &Path, screen: &ScreenArgs, format: TableFormat, out: Option<&Path>) -> CliResult<String> {
    check_min_cycles(screen.min_cycles)?;
    let loaded = load(input)?;
    let run = fit_chips(&loaded.dataset, screen.vform_max, screen.min_cycles);
    run.require_fits()?;
    let text = match format {
        TableFormat::Json => fits_json(&run, screen.min_cycles),
        TableFormat::Csv => {
            for s in &run.skipped {
                eprintln!("skipped {}: {}", s.chip, s.reason);
            }
            fits_csv(&run)
        }
    };
    emit(out, text)
}
